#pragma once

#include "lidsa/arbitration.hpp"
#include "lidsa/baselines.hpp"
#include "lidsa/bench.hpp"
#include "lidsa/controller.hpp"
#include "lidsa/core_model.hpp"
#include "lidsa/engine.hpp"
#include "lidsa/lidsa_controller.hpp"
#include "lidsa/llm_backend.hpp"
#include "lidsa/mat.hpp"
#include "lidsa/metrics.hpp"
#include "lidsa/runner.hpp"
#include "lidsa/scenario.hpp"
#include "lidsa/watchdog.hpp"
