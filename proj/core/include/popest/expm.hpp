#pragma once

#include "popest/types.hpp"

namespace popest {

/// Dense matrix exponential e^A by scaling-and-squaring with diagonal Pade
/// approximants (degrees 3/5/7/9/13, standard 1-norm thresholds). Throws
/// std::invalid_argument on non-square or non-finite input.
Matrix matrix_exponential(const Matrix& a);

} // namespace popest
