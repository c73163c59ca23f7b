#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dualmem/context.hpp"
#include "dualmem/environment.hpp"
#include "dualmem/gateway.hpp"
#include "dualmem/trajectory.hpp"

namespace dualmem {

enum class JudgeKind { Oracle, Model };

struct JudgeVerdict {
    bool success = false;
    std::string rationale;
    JudgeKind judge_kind = JudgeKind::Oracle;
};

/// Rule-based judge for simulator runs. Success needs an Answered status,
/// the required page visited (if any) and the answer matching the required
/// pattern (if any, case-insensitive full match).
JudgeVerdict judge_oracle(const Trajectory& traj, const GoalSpec& goal);

inline constexpr std::size_t kJudgeScreenshots = 5;

/// Judge message list: judge prompt, final answer and the last
/// min(5, n) screenshots.
std::vector<ChatMessage> judge_messages(const Trajectory& traj, const PromptSet& prompts);

/// Model judge. Fails closed: unparseable replies and gateway errors yield
/// success = false with a logged warning.
JudgeVerdict judge_model(const Trajectory& traj, ModelGateway& gateway, const PromptSet& prompts);

struct VerdictParseError : Error {
    using Error::Error;
};
/// Finds exactly one of SUCCESS / FAILURE (whole word, any case).
bool parse_verdict(std::string_view reply);

enum class GroupBy { Site, Difficulty };
GroupBy parse_group_by(std::string_view s);

struct MetricsRow {
    std::string group;
    double avg_step = 0;
    double avg_token = 0;
    double acc_pct = 0;
    std::size_t n = 0;
    std::size_t successes = 0;
};

struct GroupMismatchError : Error {
    using Error::Error;
};

inline constexpr std::string_view kOverallGroup = "Overall";

/// One row per group (sorted by key) followed by the overall row.
std::vector<MetricsRow> aggregate(const std::vector<Trajectory>& trajs,
                                  const std::vector<JudgeVerdict>& verdicts, GroupBy group_by);

/// Aligned plain-text table.
std::string format_report(const std::vector<MetricsRow>& rows);
/// `group,n,avg_step,avg_token,acc_pct`
std::string format_report_csv(const std::vector<MetricsRow>& rows);

struct CurveComparison {
    std::vector<std::int64_t> baseline;
    std::vector<std::int64_t> m2;
    std::optional<int> crossover_step;  // first step where m2 < baseline
    double reduction_pct = 0.0;         // 100 * (1 - m2_final / baseline_final)
};

/// `step,cum_tokens`
std::string token_curve_csv(const Trajectory& traj);
CurveComparison compare_curves(const std::vector<std::int64_t>& baseline,
                               const std::vector<std::int64_t>& m2);
CurveComparison token_curve(const Trajectory& baseline, const Trajectory& m2);
/// `step,cum_tokens_normal,cum_tokens_m2`; cells past a curve's end are empty.
std::string token_curve_csv(const CurveComparison& c);

}  // namespace dualmem
