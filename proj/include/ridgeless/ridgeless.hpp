#pragma once

#include "ridgeless/bounds.hpp"
#include "ridgeless/csv.hpp"
#include "ridgeless/errors.hpp"
#include "ridgeless/estimator.hpp"
#include "ridgeless/kernel.hpp"
#include "ridgeless/linalg.hpp"
#include "ridgeless/mnist.hpp"
#include "ridgeless/rng.hpp"
#include "ridgeless/spectra.hpp"
#include "ridgeless/synthetic.hpp"

namespace ridgeless {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace ridgeless
