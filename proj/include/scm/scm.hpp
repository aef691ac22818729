#pragma once

// Umbrella header.

#include "scm/error.hpp"
#include "scm/core_model.hpp"
#include "scm/messaging.hpp"
#include "scm/planner.hpp"
#include "scm/negotiation.hpp"
#include "scm/tracking.hpp"
#include "scm/tracing.hpp"
#include "scm/metrics.hpp"
#include "scm/protocol.hpp"
#include "scm/scenario.hpp"
#include "scm/world.hpp"
#include "scm/agents.hpp"
#include "scm/engine.hpp"
