#pragma once

// Umbrella header for the btfl library.

#include "btfl/adapter.hpp"
#include "btfl/baselines.hpp"
#include "btfl/bayes.hpp"
#include "btfl/bench.hpp"
#include "btfl/config.hpp"
#include "btfl/error.hpp"
#include "btfl/feature_dle.hpp"
#include "btfl/fed_sim.hpp"
#include "btfl/information.hpp"
#include "btfl/linalg.hpp"
#include "btfl/math/quadrature.hpp"
#include "btfl/math/special.hpp"
#include "btfl/parallel.hpp"
#include "btfl/properties.hpp"
#include "btfl/random.hpp"
#include "btfl/state_io.hpp"
