#pragma once

#include "bactipot/branching.hpp"
#include "bactipot/errors.hpp"
#include "bactipot/estimators.hpp"
#include "bactipot/harness.hpp"
#include "bactipot/measurement.hpp"
#include "bactipot/rng.hpp"
#include "bactipot/stats.hpp"
