#pragma once

// Umbrella header for the treetomo library: analytic model, probe
// ensembles, pulse-train simulation, response-matrix reconstruction and
// validation analytics for a four-SPAD beam-splitter-tree photon counter.

#include "treetomo/analysis.hpp"
#include "treetomo/commands.hpp"
#include "treetomo/config.hpp"
#include "treetomo/detector.hpp"
#include "treetomo/errors.hpp"
#include "treetomo/povm.hpp"
#include "treetomo/probes.hpp"
#include "treetomo/reconstruct.hpp"
#include "treetomo/simulate.hpp"
#include "treetomo/version.hpp"
