#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dualmem/gateway.hpp"
#include "dualmem/insight.hpp"
#include "dualmem/step_record.hpp"
#include "dualmem/types.hpp"

namespace dualmem {

struct RunConfig {
    Mode mode = Mode::InExMem;
    int k = 5;             // observation window (Normal/ExMem)
    int i = 5;             // retrieved bank entries
    int max_steps = 60;
    std::string bank_path;
    GatewayConfig agent;
    GatewayConfig judge;
    std::string template_dir;
    int parse_retry_limit = 2;
    int summary_retry_limit = 1;
    std::size_t max_summary_chars = kDefaultMaxSummaryChars;
    std::int64_t image_cost = 1100;

    /// Throws Error on out-of-range values; Ex modes need a bank path unless
    /// `bank_supplied` says a bank was handed over directly.
    void validate(bool bank_supplied = false) const;
    bool operator==(const RunConfig&) const = default;
};

enum class TrajectoryStatus { Answered, StepLimit, Aborted };
std::string_view to_string(TrajectoryStatus s);
TrajectoryStatus parse_status(std::string_view s);

struct Trajectory {
    Query task;
    RunConfig config;
    std::vector<InsightSet> retrieved;   // external memory used for the whole task
    std::vector<StepRecord> steps;
    std::optional<std::string> final_answer;
    std::string final_location;
    TrajectoryStatus status = TrajectoryStatus::Aborted;
    std::optional<std::string> abort_reason;
    std::optional<bool> success;
    std::vector<std::int64_t> per_step_cumulative_tokens;

    bool operator==(const Trajectory&) const = default;
};

inline constexpr int kTrajectoryFormatVersion = 1;

struct FormatVersionError : Error {
    using Error::Error;
};
struct TruncationError : Error {
    using Error::Error;
};

/// Line-delimited JSON: one header record (task, config, retrieved
/// insights), one record per step, one footer (status, answer, curve).
std::string serialize_trajectory(const Trajectory& t);
void write_trajectory(const Trajectory& t, const std::filesystem::path& path);

/// A missing footer loads as status Aborted with a warning; a missing or
/// unreadable header throws TruncationError.
Trajectory parse_trajectory(std::string_view text);
Trajectory read_trajectory(const std::filesystem::path& path);

/// Text transcript (thoughts, actions, observations) for the abstractor.
std::string render_transcript(const Trajectory& t);

}  // namespace dualmem
