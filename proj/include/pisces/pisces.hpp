#pragma once

#include "pisces/aggregation.hpp"
#include "pisces/analysis.hpp"
#include "pisces/cli.hpp"
#include "pisces/config.hpp"
#include "pisces/core.hpp"
#include "pisces/dbscan.hpp"
#include "pisces/engine.hpp"
#include "pisces/events.hpp"
#include "pisces/rng.hpp"
#include "pisces/scenario.hpp"
#include "pisces/selection.hpp"
#include "pisces/tasks.hpp"
