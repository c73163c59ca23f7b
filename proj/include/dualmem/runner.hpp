#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dualmem/context.hpp"
#include "dualmem/environment.hpp"
#include "dualmem/gateway.hpp"
#include "dualmem/insight_bank.hpp"
#include "dualmem/trajectory.hpp"

namespace dualmem {

struct RunnerDeps {
    ModelGateway& agent;
    const PromptSet& prompts;
    const BankRetriever* bank = nullptr;  // required for Ex modes
    TokenEstimator estimator{};
};

/// Runs one task to completion.
///
/// Insights are retrieved once, before the first step, keyed on the task
/// query. Each step assembles the mode's context, queries the agent, parses
/// the turn (re-prompting up to parse_retry_limit times with the parse error
/// quoted), executes the action and, in memory modes, appends the step's
/// summary. A missing or invalid summary is re-requested summary_retry_limit
/// times, then replaced by `[page <location>] → [<action>]`.
///
/// Gateway failures and exhausted parse retries end the task as Aborted;
/// nothing is thrown past this function for them.
Trajectory run_task(Environment& env, const Query& task, const RunConfig& config, RunnerDeps deps);

/// Re-renders the prompt of every step from a recorded trajectory without
/// calling a model.
std::vector<ContextBundle> replay_prompts(const Trajectory& traj, const PromptSet& prompts,
                                          const TokenEstimator& est = {});

/// Fallback summary for a step whose model summary could not be used.
Summary fallback_summary(int step_index, const Observation& obs, const Action& action);

/// Runs `jobs` tasks on at most `workers` threads; results keep input order.
std::vector<Trajectory> run_parallel(std::size_t jobs, std::size_t workers,
                                     const std::function<Trajectory(std::size_t)>& job);

}  // namespace dualmem
