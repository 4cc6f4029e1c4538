#include "cavi/field.hpp"

#include <cmath>

namespace cavi {

CoordinateField::CoordinateField(const Potential& p, const ProductState& state, std::size_t i)
    : unary_(&p.unaries().at(i)) {
  if (state.dim() != p.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "state dimension differs from the potential");
  }
  for (std::size_t idx : p.pairs_of(i)) {
    const PairTerm& t = p.pairs()[idx];
    const bool i_first = t.i == i;
    const GridMarginal& other = state.marginals[i_first ? t.j : t.i];
    if (t.bilinear) {
      const auto& b = *t.bilinear;
      const double own_offset = i_first ? b.offset_i : b.offset_j;
      const double other_offset = i_first ? b.offset_j : b.offset_i;
      const double weight = b.coefficient * (other.mean() - other_offset);
      slope_ += weight;
      intercept_ -= weight * own_offset;
    } else {
      generic_.push_back({&t, &other, i_first});
    }
  }
}

double CoordinateField::operator()(double x) const {
  double s = unary_->value(x) + slope_ * x + intercept_;
  for (const auto& g : generic_) {
    const auto& term = *g.term;
    if (g.i_first) {
      s += g.other->expect([&](double y) { return term.value(x, y); });
    } else {
      s += g.other->expect([&](double y) { return term.value(y, x); });
    }
  }
  return s;
}

std::vector<double> CoordinateField::on_grid(const GridSpec& spec) const {
  std::vector<double> f(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    f[k] = (*this)(spec.node(k));
    if (!std::isfinite(f[k])) {
      throw Error(ErrorCode::NonFiniteIntegrand,
                  "conditional potential is not finite at x = " + std::to_string(spec.node(k)));
    }
  }
  return f;
}

}  // namespace cavi
