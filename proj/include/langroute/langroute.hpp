#pragma once

#include "langroute/calibration.hpp"
#include "langroute/core.hpp"
#include "langroute/rewards.hpp"
#include "langroute/router.hpp"
#include "langroute/synthenv.hpp"
#include "langroute/training.hpp"
