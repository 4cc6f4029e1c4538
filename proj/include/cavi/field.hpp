#pragma once

#include <cstddef>
#include <vector>

#include "cavi/marginal.hpp"
#include "cavi/potential.hpp"

namespace cavi {

/// The conditional potential of one coordinate against the other marginals,
///   f_i(x) = phi_i(x) + Σ_{j≠i} ∫ g_ij(x, y) μ^j(dy),
/// whose normalized exponential exp(-f_i) is the CAVI update of block i.
///
/// Bilinear couplings collapse to a linear term in x using the neighbour's
/// mean; other couplings are integrated by trapezoid over the neighbour grid.
/// Holds references to `p` and `state`, which must outlive it.
class CoordinateField {
 public:
  CoordinateField(const Potential& p, const ProductState& state, std::size_t i);

  double operator()(double x) const;
  std::vector<double> on_grid(const GridSpec& spec) const;

 private:
  struct GenericPair {
    const PairTerm* term;
    const GridMarginal* other;
    bool i_first;
  };

  const UnaryTerm* unary_;
  double slope_ = 0.0;
  double intercept_ = 0.0;
  std::vector<GenericPair> generic_;
};

}  // namespace cavi
