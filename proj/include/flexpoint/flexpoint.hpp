#pragma once

#include "flexpoint/diagnostics.hpp"
#include "flexpoint/evaluation.hpp"
#include "flexpoint/event_core.hpp"
#include "flexpoint/inference/conjugate.hpp"
#include "flexpoint/inference/convergence.hpp"
#include "flexpoint/inference/hmc.hpp"
#include "flexpoint/inference/model.hpp"
#include "flexpoint/inference/posterior.hpp"
#include "flexpoint/inference/samples.hpp"
#include "flexpoint/mark_models.hpp"
#include "flexpoint/optimize.hpp"
#include "flexpoint/screening.hpp"
#include "flexpoint/simulate.hpp"
#include "flexpoint/time_model.hpp"
#include "flexpoint/zone_model.hpp"

namespace flexpoint {
inline constexpr const char* kVersion = "0.1.0";
}
