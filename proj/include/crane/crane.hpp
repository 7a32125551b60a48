#pragma once

/**
 * @file crane.hpp
 * @brief Umbrella header.
 */

#include "crane/autodiff.hpp"
#include "crane/config.hpp"
#include "crane/experiments.hpp"
#include "crane/flatness.hpp"
#include "crane/geometry.hpp"
#include "crane/jet.hpp"
#include "crane/model.hpp"
#include "crane/nlp.hpp"
#include "crane/optimizer.hpp"
#include "crane/plan.hpp"
#include "crane/seed_planner.hpp"
#include "crane/simulator.hpp"
