#pragma once

#include "branchimm/models.hpp"
#include "branchimm/rng.hpp"
#include "branchimm/stats.hpp"
#include "branchimm/numerics.hpp"
#include "branchimm/ctmc.hpp"
#include "branchimm/analytic_gw.hpp"
#include "branchimm/scaling_limits.hpp"
#include "branchimm/spatial.hpp"
#include "branchimm/random_env.hpp"
#include "branchimm/config.hpp"
#include "branchimm/report.hpp"
#include "branchimm/acceptance.hpp"
