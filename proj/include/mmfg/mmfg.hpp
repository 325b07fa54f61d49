#pragma once

// Everything except the CLI layer (include mmfg/cli/run.hpp for that).

#include "mmfg/core.hpp"
#include "mmfg/grid.hpp"
#include "mmfg/linmodel.hpp"
#include "mmfg/model.hpp"
#include "mmfg/monotone.hpp"
#include "mmfg/solvers/anderson.hpp"
#include "mmfg/solvers/fixed_point.hpp"
#include "mmfg/solvers/linear.hpp"
#include "mmfg/solvers/obstacle.hpp"
#include "mmfg/solvers/stationary.hpp"
#include "mmfg/sweep.hpp"
#include "mmfg/timedep.hpp"
