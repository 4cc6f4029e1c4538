#include "cavi/cli.hpp"

int main(int argc, char** argv) { return cavi::cli::main(argc, argv); }
