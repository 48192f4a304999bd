#pragma once

#include "superres/crosstalk.hpp"
#include "superres/error.hpp"
#include "superres/fisher.hpp"
#include "superres/matrix_io.hpp"
#include "superres/modes.hpp"
#include "superres/montecarlo.hpp"
#include "superres/quadrature.hpp"
#include "superres/resolution.hpp"
#include "superres/rng.hpp"

namespace superres {
inline constexpr const char* kVersion = "0.1.0";
}
