#pragma once

#include <optional>
#include <string>

#include "dualmem/agent_io.hpp"
#include "dualmem/internal_memory.hpp"
#include "dualmem/types.hpp"

namespace dualmem {

/// One executed step: what the agent saw, thought, did and summarised.
struct StepRecord {
    int step_index = 0;
    std::string thought;
    Action action;
    std::optional<Summary> summary;
    bool summary_fallback = false;  // summary synthesised by the runner
    Observation observation;
    TokenUsage token_usage;

    bool operator==(const StepRecord&) const = default;
};

}  // namespace dualmem
