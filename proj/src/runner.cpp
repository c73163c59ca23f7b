#include "dualmem/runner.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <regex>
#include <sstream>
#include <thread>

namespace dualmem {

namespace {

struct AbortTask {
    std::string reason;
};

ContextBundle assemble_for(const PromptSet& prompts, const Query& task, const RunConfig& config,
                           const std::vector<StepRecord>& history, const InternalMemory& memory,
                           const std::vector<InsightSet>& external, const Observation& current,
                           const TokenEstimator& est) {
    switch (config.mode) {
        case Mode::Normal:
            return assemble_vanilla_context(prompts, task, history, config.k, current, est);
        case Mode::ExMem:
            return assemble_exmem_context(prompts, task, history, config.k, external, current, est);
        case Mode::InMem:
        case Mode::InExMem:
            return assemble_m2_context(prompts, task, memory, external, current, config.mode, est);
    }
    throw ModeError("unknown mode");
}

std::string repair_prompt(const OutputParseError& e) {
    std::string msg = "Your previous reply could not be used: ";
    msg += e.what();
    msg += ".\n";
    if (!e.span.empty()) msg += "Offending text: \"" + e.span + "\"\n";
    msg += "Reply again with Thought, Action Element, Action Type and Action Value sections as instructed.";
    return msg;
}

std::string summary_repair_prompt(const std::string& problem) {
    return "Your previous reply had no usable Summary section (" + problem +
           ").\nReply with one line: Summary: [state of the page] → [action you took]";
}

// Accepts a full turn, a labeled summary line, or a bare `[..] → [..]` line.
std::string extract_summary_text(const std::string& reply) {
    try {
        AgentTurn turn = parse_agent_output(reply, Mode::InMem);
        if (turn.summary_raw) return *turn.summary_raw;
    } catch (const OutputParseError&) {
    }
    static const std::regex label(R"(^\s*\**\s*summary\s*\**\s*:\s*\**(.*)$)", std::regex::icase);
    std::smatch m;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        if (std::regex_match(line, m, label)) return trim(m[1].str());
    }
    return trim(reply);
}

// Keeps the first `n` code points.
std::string utf8_prefix(const std::string& s, std::size_t n) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
            if (count == n) return s.substr(0, i);
            ++count;
        }
    }
    return s;
}

Summary fit_to_budget(Summary s, std::size_t max_chars) {
    const std::size_t frame = utf8_length(Summary{0, "", ""}.body());
    const std::size_t room = max_chars > frame ? max_chars - frame : 0;
    const std::size_t state_room = room / 3;
    if (utf8_length(s.state_part) > state_room) s.state_part = utf8_prefix(s.state_part, state_room - 1) + "…";
    const std::size_t action_room = room - utf8_length(s.state_part);
    if (utf8_length(s.action_part) > action_room) s.action_part = utf8_prefix(s.action_part, action_room - 1) + "…";
    return s;
}

class StepCaller {
public:
    StepCaller(ModelGateway& agent, TokenUsage& usage) : agent_(agent), usage_(usage) {}

    std::string call(const std::vector<ChatMessage>& messages) {
        ModelResponse r;
        try {
            r = agent_.complete(messages);
        } catch (const GatewayError& e) {
            throw AbortTask{std::string("gateway failure: ") + e.what()};
        }
        usage_ = usage_ + r.usage;
        return r.text;
    }

private:
    ModelGateway& agent_;
    TokenUsage& usage_;
};

}  // namespace

Summary fallback_summary(int step_index, const Observation& obs, const Action& action) {
    Summary s;
    s.step_index = step_index;
    s.state_part = "page " + (obs.location.empty() ? std::string("unknown") : obs.location);
    s.action_part = describe_action(action);
    return s;
}

Trajectory run_task(Environment& env, const Query& task, const RunConfig& config, RunnerDeps deps) {
    validate(task);
    config.validate(deps.bank != nullptr);
    if (uses_external_memory(config.mode) && deps.bank == nullptr) {
        throw Error("mode " + std::string(to_string(config.mode)) + " needs an insight bank");
    }

    Trajectory traj;
    traj.task = task;
    traj.config = config;

    if (uses_external_memory(config.mode)) traj.retrieved = deps.bank->retrieve(task.text, config.i);

    const bool in_mode = uses_internal_memory(config.mode);
    InternalMemory memory(config.max_summary_chars);
    std::int64_t cumulative = 0;
    bool finished = false;

    try {
        Observation obs = env.reset(task);
        traj.final_location = obs.location;
        for (int t = 1; t <= config.max_steps; ++t) {
            const ContextBundle bundle = assemble_for(deps.prompts, task, config, traj.steps, memory, traj.retrieved,
                                                      obs, deps.estimator);
            const std::vector<ChatMessage> messages = to_messages(bundle);

            StepRecord rec;
            rec.step_index = t;
            rec.observation = obs;
            StepCaller caller(deps.agent, rec.token_usage);

            std::string reply = caller.call(messages);
            std::vector<ChatMessage> convo = messages;
            AgentTurn turn;
            for (int attempt = 0;; ++attempt) {
                try {
                    turn = parse_agent_output(reply, Mode::Normal);
                    break;
                } catch (const OutputParseError& e) {
                    if (attempt >= config.parse_retry_limit) {
                        throw AbortTask{"step " + std::to_string(t) + ": parse retries exhausted: " + e.what()};
                    }
                    spdlog::warn("task '{}' step {}: {}; asking again", task.task_id, t, e.what());
                    convo.push_back(ChatMessage::text(Role::Assistant, reply));
                    convo.push_back(ChatMessage::text(Role::User, repair_prompt(e)));
                    reply = caller.call(convo);
                }
            }
            rec.thought = turn.thought;
            rec.action = turn.action;

            StepOutcome outcome;
            try {
                outcome = env.step(turn.action);
            } catch (const EnvError& e) {
                throw AbortTask{std::string("environment error: ") + e.what()};
            }

            if (in_mode && !outcome.terminal) {
                std::optional<std::string> raw = turn.summary_raw;
                for (int attempt = 0;; ++attempt) {
                    std::string problem = "section missing";
                    if (raw) {
                        try {
                            Summary s = validate_summary(*raw, t, config.max_summary_chars);
                            memory = memory.append(s);
                            rec.summary = s;
                            break;
                        } catch (const SummaryFormatError& e) {
                            problem = e.what();
                        }
                    }
                    if (attempt >= config.summary_retry_limit) {
                        Summary s = fit_to_budget(fallback_summary(t, obs, turn.action), config.max_summary_chars);
                        spdlog::warn("task '{}' step {}: summary unusable ({}), substituting '{}'", task.task_id, t,
                                     problem, s.body());
                        memory = memory.append(s);
                        rec.summary = s;
                        rec.summary_fallback = true;
                        break;
                    }
                    convo.push_back(ChatMessage::text(Role::Assistant, reply));
                    convo.push_back(ChatMessage::text(Role::User, summary_repair_prompt(problem)));
                    reply = caller.call(convo);
                    raw = extract_summary_text(reply);
                }
            } else if (in_mode && turn.summary_raw) {
                try {
                    rec.summary = validate_summary(*turn.summary_raw, t, config.max_summary_chars);
                } catch (const SummaryFormatError&) {
                }
            }

            cumulative += rec.token_usage.total();
            traj.per_step_cumulative_tokens.push_back(cumulative);
            spdlog::debug("task '{}' step {}: {} ({} tokens)", task.task_id, t, describe_action(rec.action),
                          rec.token_usage.total());
            traj.steps.push_back(std::move(rec));
            traj.final_location = outcome.observation.location;

            if (outcome.terminal) {
                finished = true;
                switch (outcome.termination_reason) {
                    case TerminationReason::Answered:
                        traj.status = TrajectoryStatus::Answered;
                        traj.final_answer = turn.action.value;
                        break;
                    case TerminationReason::StepLimit:
                        traj.status = TrajectoryStatus::StepLimit;
                        break;
                    default:
                        traj.status = TrajectoryStatus::Aborted;
                        traj.abort_reason = "environment terminated the task";
                        break;
                }
                break;
            }
            obs = outcome.observation;
        }
        if (!finished) traj.status = TrajectoryStatus::StepLimit;
    } catch (const AbortTask& a) {
        traj.status = TrajectoryStatus::Aborted;
        traj.abort_reason = a.reason;
        spdlog::warn("task '{}' aborted: {}", task.task_id, a.reason);
    }

    spdlog::info("task '{}' [{}]: {} after {} steps, {} tokens", task.task_id, to_string(config.mode),
                 to_string(traj.status), traj.steps.size(), cumulative);
    return traj;
}

std::vector<ContextBundle> replay_prompts(const Trajectory& traj, const PromptSet& prompts, const TokenEstimator& est) {
    std::vector<ContextBundle> out;
    InternalMemory memory(traj.config.max_summary_chars);
    std::vector<StepRecord> history;
    for (const StepRecord& s : traj.steps) {
        out.push_back(assemble_for(prompts, traj.task, traj.config, history, memory, traj.retrieved, s.observation, est));
        if (uses_internal_memory(traj.config.mode)) {
            Summary sum = s.summary ? *s.summary
                                    : fit_to_budget(fallback_summary(s.step_index, s.observation, s.action),
                                                    traj.config.max_summary_chars);
            sum.step_index = s.step_index;
            memory = memory.append(sum);
        }
        history.push_back(s);
    }
    return out;
}

std::vector<Trajectory> run_parallel(std::size_t jobs, std::size_t workers,
                                     const std::function<Trajectory(std::size_t)>& job) {
    std::vector<Trajectory> results(jobs);
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs; i = next++) {
            try {
                results[i] = job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(workers, jobs));
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < n; ++w) threads.emplace_back(worker);
    worker();
    for (auto& th : threads) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

}  // namespace dualmem
