#pragma once

// Umbrella header for the merging-control library: unconstrained reference
// planning, barrier-constrained tracking QPs, the event-triggered robust
// variant, FIFO coordination, and the closed-loop simulation engines.

#include "ocbf/cbf.hpp"
#include "ocbf/coordinator.hpp"
#include "ocbf/core.hpp"
#include "ocbf/event.hpp"
#include "ocbf/io.hpp"
#include "ocbf/metrics.hpp"
#include "ocbf/qp.hpp"
#include "ocbf/random.hpp"
#include "ocbf/reference.hpp"
#include "ocbf/simulator.hpp"
