#pragma once

// Umbrella header for the numerical core. JSON/CSV helpers live in
// calibra/io.hpp, which additionally needs nlohmann_json.

#include "calibra/diagnostics.hpp"
#include "calibra/distributions.hpp"
#include "calibra/error.hpp"
#include "calibra/fptas.hpp"
#include "calibra/lp.hpp"
#include "calibra/numerics.hpp"
#include "calibra/prior.hpp"
#include "calibra/ratio.hpp"
#include "calibra/revenue.hpp"
#include "calibra/scheme.hpp"
#include "calibra/simulator.hpp"
