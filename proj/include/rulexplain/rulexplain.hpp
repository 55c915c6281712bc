#pragma once

#include "rulexplain/error.hpp"
#include "rulexplain/series.hpp"
#include "rulexplain/rules.hpp"
#include "rulexplain/trends.hpp"
#include "rulexplain/simulators.hpp"
#include "rulexplain/external_simulator.hpp"
#include "rulexplain/optimizers.hpp"
#include "rulexplain/learner.hpp"
#include "rulexplain/context.hpp"
#include "rulexplain/mismatch.hpp"
#include "rulexplain/synthesizer.hpp"
#include "rulexplain/prompts.hpp"
#include "rulexplain/http_synthesizer.hpp"
#include "rulexplain/config.hpp"
#include "rulexplain/json_io.hpp"
#include "rulexplain/orchestrator.hpp"
