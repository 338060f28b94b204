#pragma once

#include "cgm/config.hpp"
#include "cgm/curriculum.hpp"
#include "cgm/ddpg.hpp"
#include "cgm/env.hpp"
#include "cgm/error.hpp"
#include "cgm/goal_mask.hpp"
#include "cgm/harness.hpp"
#include "cgm/metrics.hpp"
#include "cgm/nn.hpp"
#include "cgm/plots.hpp"
#include "cgm/replay.hpp"
#include "cgm/rng.hpp"
