#include "dualmem/evaluation.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <regex>
#include <set>

namespace dualmem {

JudgeVerdict judge_oracle(const Trajectory& traj, const GoalSpec& goal) {
    JudgeVerdict v;
    v.judge_kind = JudgeKind::Oracle;
    if (traj.status != TrajectoryStatus::Answered) {
        v.rationale = "task ended with status " + std::string(to_string(traj.status));
        return v;
    }
    if (goal.required_page) {
        bool reached = traj.final_location == *goal.required_page;
        for (const StepRecord& s : traj.steps) reached = reached || s.observation.location == *goal.required_page;
        if (!reached) {
            v.rationale = "required page '" + *goal.required_page + "' never reached";
            return v;
        }
    }
    if (goal.required_answer_pattern) {
        if (!traj.final_answer) {
            v.rationale = "no final answer";
            return v;
        }
        const std::regex re(*goal.required_answer_pattern, std::regex::ECMAScript | std::regex::icase);
        if (!std::regex_match(trim(*traj.final_answer), re)) {
            v.rationale = "answer '" + *traj.final_answer + "' does not match the goal";
            return v;
        }
    }
    v.success = true;
    v.rationale = "goal satisfied";
    return v;
}

std::vector<ChatMessage> judge_messages(const Trajectory& traj, const PromptSet& prompts) {
    const std::string answer = traj.final_answer.value_or("");
    std::vector<ChatMessage> out;
    out.push_back(ChatMessage::text(Role::System,
                                    fill_template(prompts.judge, {{"query", traj.task.text}, {"answer", answer}})));
    ChatMessage user;
    user.role = Role::User;
    user.parts.push_back({ContentPart::Kind::Text, "Final answer: " + (answer.empty() ? "(none)" : answer)});
    const std::size_t n = traj.steps.size();
    const std::size_t first = n > kJudgeScreenshots ? n - kJudgeScreenshots : 0;
    for (std::size_t i = first; i < n; ++i) {
        user.parts.push_back({ContentPart::Kind::Image, traj.steps[i].observation.screenshot});
    }
    out.push_back(std::move(user));
    return out;
}

bool parse_verdict(std::string_view reply) {
    static const std::regex word(R"(\b(success|failure)\b)", std::regex::icase);
    std::set<std::string> found;
    const std::string text(reply);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), word); it != std::sregex_iterator(); ++it) {
        found.insert(to_lower((*it)[1].str()));
    }
    if (found.size() != 1) {
        throw VerdictParseError(found.empty() ? "judge reply has no verdict" : "judge reply is ambiguous");
    }
    return *found.begin() == "success";
}

JudgeVerdict judge_model(const Trajectory& traj, ModelGateway& gateway, const PromptSet& prompts) {
    JudgeVerdict v;
    v.judge_kind = JudgeKind::Model;
    if (traj.steps.empty()) {
        v.rationale = "trajectory has no steps";
        return v;
    }
    try {
        const ModelResponse r = gateway.complete(judge_messages(traj, prompts));
        v.rationale = r.text;
        v.success = parse_verdict(r.text);
    } catch (const VerdictParseError& e) {
        spdlog::warn("task '{}': {}; counted as failure", traj.task.task_id, e.what());
        v.success = false;
    } catch (const GatewayError& e) {
        spdlog::warn("task '{}': judge call failed ({}); counted as failure", traj.task.task_id, e.what());
        v.success = false;
        v.rationale = e.what();
    }
    return v;
}

GroupBy parse_group_by(std::string_view s) {
    const std::string l = to_lower(s);
    if (l == "site") return GroupBy::Site;
    if (l == "difficulty") return GroupBy::Difficulty;
    throw Error("unknown grouping '" + std::string(s) + "' (expected site or difficulty)");
}

namespace {

struct Acc {
    std::size_t n = 0, successes = 0;
    double steps = 0, tokens = 0;

    void add(const Trajectory& t, bool ok) {
        ++n;
        successes += ok ? 1 : 0;
        steps += static_cast<double>(t.steps.size());
        tokens += t.per_step_cumulative_tokens.empty() ? 0.0 : static_cast<double>(t.per_step_cumulative_tokens.back());
    }

    MetricsRow row(std::string group) const {
        MetricsRow r;
        r.group = std::move(group);
        r.n = n;
        r.successes = successes;
        if (n > 0) {
            r.avg_step = steps / static_cast<double>(n);
            r.avg_token = tokens / static_cast<double>(n);
            r.acc_pct = 100.0 * static_cast<double>(successes) / static_cast<double>(n);
        }
        return r;
    }
};

}  // namespace

std::vector<MetricsRow> aggregate(const std::vector<Trajectory>& trajs, const std::vector<JudgeVerdict>& verdicts,
                                  GroupBy group_by) {
    if (trajs.size() != verdicts.size()) {
        throw GroupMismatchError(fmt::format("{} trajectories but {} verdicts", trajs.size(), verdicts.size()));
    }
    std::map<std::string, Acc> groups;
    Acc overall;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const Query& q = trajs[i].task;
        const auto& key = group_by == GroupBy::Site ? q.site_tag : q.difficulty;
        groups[key.value_or("(untagged)")].add(trajs[i], verdicts[i].success);
        overall.add(trajs[i], verdicts[i].success);
    }
    std::vector<MetricsRow> rows;
    for (const auto& [key, acc] : groups) rows.push_back(acc.row(key));
    rows.push_back(overall.row(std::string(kOverallGroup)));
    return rows;
}

std::string format_report(const std::vector<MetricsRow>& rows) {
    const std::vector<std::string> header = {"Group", "N", "Avg.step", "Avg.token", "Acc(%)"};
    std::vector<std::vector<std::string>> cells;
    for (const MetricsRow& r : rows) {
        cells.push_back({r.group, std::to_string(r.n), fmt::format("{:.2f}", r.avg_step),
                         fmt::format("{:.1f}", r.avg_token), fmt::format("{:.1f}", r.acc_pct)});
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& row) {
        std::string s = fmt::format("{:<{}}", row[0], width[0]);
        for (std::size_t c = 1; c < row.size(); ++c) s += fmt::format("  {:>{}}", row[c], width[c]);
        return s + "\n";
    };
    std::string out = line(header);
    std::size_t total = width[0];
    for (std::size_t c = 1; c < width.size(); ++c) total += 2 + width[c];
    out += std::string(total, '-') + "\n";
    for (const auto& row : cells) out += line(row);
    return out;
}

std::string format_report_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "group,n,avg_step,avg_token,acc_pct\n";
    for (const MetricsRow& r : rows) {
        out += fmt::format("{},{},{:.2f},{:.1f},{:.1f}\n", r.group, r.n, r.avg_step, r.avg_token, r.acc_pct);
    }
    return out;
}

std::string token_curve_csv(const Trajectory& traj) {
    std::string out = "step,cum_tokens\n";
    for (std::size_t i = 0; i < traj.per_step_cumulative_tokens.size(); ++i) {
        out += fmt::format("{},{}\n", i + 1, traj.per_step_cumulative_tokens[i]);
    }
    return out;
}

CurveComparison compare_curves(const std::vector<std::int64_t>& baseline, const std::vector<std::int64_t>& m2) {
    CurveComparison c{baseline, m2, std::nullopt, 0.0};
    const std::size_t n = std::min(baseline.size(), m2.size());
    for (std::size_t t = 0; t < n; ++t) {
        if (m2[t] < baseline[t]) {
            c.crossover_step = static_cast<int>(t + 1);
            break;
        }
    }
    if (!baseline.empty() && !m2.empty() && baseline.back() > 0) {
        c.reduction_pct = 100.0 * (1.0 - static_cast<double>(m2.back()) / static_cast<double>(baseline.back()));
    }
    return c;
}

CurveComparison token_curve(const Trajectory& baseline, const Trajectory& m2) {
    if (baseline.task.task_id != m2.task.task_id) {
        spdlog::warn("comparing curves of different tasks ('{}' vs '{}')", baseline.task.task_id, m2.task.task_id);
    }
    return compare_curves(baseline.per_step_cumulative_tokens, m2.per_step_cumulative_tokens);
}

std::string token_curve_csv(const CurveComparison& c) {
    std::string out = "step,cum_tokens_normal,cum_tokens_m2\n";
    const std::size_t n = std::max(c.baseline.size(), c.m2.size());
    for (std::size_t t = 0; t < n; ++t) {
        out += fmt::format("{},{},{}\n", t + 1, t < c.baseline.size() ? std::to_string(c.baseline[t]) : "",
                           t < c.m2.size() ? std::to_string(c.m2[t]) : "");
    }
    return out;
}

}  // namespace dualmem
