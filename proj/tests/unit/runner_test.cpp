#include <gtest/gtest.h>

#include <thread>

#include "dualmem/evaluation.hpp"
#include "dualmem/runner.hpp"
#include "support.hpp"

using namespace dualmem;

namespace {

struct Harness {
    test::FixtureTask task;
    InsightBank bank = load_bank(test::fixture("banks/bank.jsonl"));
    HashingEmbedder embedder;
    BankRetriever retriever{bank, embedder};

    explicit Harness(const std::string& id) : task(test::load_fixture_task(id)) {}

    Trajectory run(Mode mode, ScriptedGateway& gw, RunConfig config = {}) {
        config.mode = mode;
        SimulatedEnvironment env(task.site, config.max_steps);
        return run_task(env, task.file.query, config,
                        RunnerDeps{gw, test::prompts(), uses_external_memory(mode) ? &retriever : nullptr});
    }

    std::vector<std::string> script(Mode mode) const { return load_script(task.file.script_for(mode).value()); }
};

const std::string kGood =
    "Thought: look\nAction Element: <point>(20,780)</point>\nAction Type: LEFT_CLICK\n"
    "Summary: [home] → [clicked the footer]";
const std::string kAnswer = "Thought: done\nAction Type: ANSWER\nAction Value: 600 g\nSummary: [x] → [y]";

}  // namespace

TEST(Runner, InExMemAnswersWithSummaryChain) {
    Harness h("t01");
    ScriptedGateway gw(h.script(Mode::InExMem));
    const Trajectory t = h.run(Mode::InExMem, gw);
    EXPECT_EQ(t.status, TrajectoryStatus::Answered);
    ASSERT_EQ(t.steps.size(), 6u);
    EXPECT_EQ(t.final_answer, "600g");
    EXPECT_EQ(t.final_location, "specs");
    EXPECT_TRUE(judge_oracle(t, h.task.goal).success);
    EXPECT_EQ(h.retriever.calls(), 1u);
    EXPECT_EQ(t.retrieved.size(), 5u);

    // The last prompt carries the five finished steps' summaries.
    const std::string last = render_messages(gw.captured().back());
    for (int i = 1; i <= 5; ++i) EXPECT_NE(last.find("Step " + std::to_string(i) + ": ["), std::string::npos);
    EXPECT_EQ(last.find("Step 6: ["), std::string::npos);
    EXPECT_EQ(gw.captured().back()[1].images().size(), 1u);
    for (std::size_t i = 0; i + 1 < t.steps.size(); ++i) EXPECT_TRUE(t.steps[i].summary.has_value());
}

TEST(Runner, NormalModeWindowsObservations) {
    Harness h("t01");
    ScriptedGateway gw(h.script(Mode::Normal));
    RunConfig cfg;
    cfg.k = 5;
    const Trajectory t = h.run(Mode::Normal, gw, cfg);
    EXPECT_EQ(t.status, TrajectoryStatus::Answered);
    ASSERT_EQ(gw.captured().size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(gw.captured()[i][1].images().size(), i + 1);
    EXPECT_EQ(h.retriever.calls(), 0u);
    EXPECT_TRUE(t.retrieved.empty());
}

TEST(Runner, CumulativeTokensAreMonotone) {
    Harness h("t08");
    ScriptedGateway gw(h.script(Mode::InMem));
    const Trajectory t = h.run(Mode::InMem, gw);
    ASSERT_EQ(t.per_step_cumulative_tokens.size(), t.steps.size());
    std::int64_t running = 0;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        running += t.steps[i].token_usage.total();
        EXPECT_EQ(t.per_step_cumulative_tokens[i], running);
    }
}

TEST(Runner, LoopingAgentHitsStepLimit) {
    Harness h("t01");
    ScriptedGateway gw(load_script(test::fixture("scripts/loop.txt")));
    const Trajectory t = h.run(Mode::Normal, gw);
    EXPECT_EQ(t.status, TrajectoryStatus::StepLimit);
    EXPECT_EQ(t.steps.size(), 60u);
    EXPECT_FALSE(judge_oracle(t, h.task.goal).success);
}

TEST(Runner, RepairsUnparseableTurns) {
    Harness h("t01");
    ScriptedGateway gw({"I think I should click somewhere", kAnswer});
    const Trajectory t = h.run(Mode::Normal, gw);
    EXPECT_EQ(t.status, TrajectoryStatus::Answered);
    ASSERT_EQ(gw.captured().size(), 2u);
    const auto& repair = gw.captured()[1];
    ASSERT_EQ(repair.size(), 4u);
    EXPECT_EQ(repair[2].role, Role::Assistant);
    EXPECT_NE(repair[3].joined_text().find("Action Type"), std::string::npos);
    // Both calls of the step are billed to it.
    EXPECT_GT(t.steps[0].token_usage.prompt_tokens, 2 * estimate_prompt_tokens(gw.captured()[0]));
}

TEST(Runner, AbortsAfterParseRetriesRunOut) {
    Harness h("t01");
    ScriptedGateway gw({"nonsense", "still nonsense", "more nonsense", kAnswer});
    RunConfig cfg;
    cfg.parse_retry_limit = 2;
    const Trajectory t = h.run(Mode::Normal, gw, cfg);
    EXPECT_EQ(t.status, TrajectoryStatus::Aborted);
    EXPECT_TRUE(t.abort_reason.has_value());
    EXPECT_EQ(gw.calls(), 3u);
}

TEST(Runner, SummaryRetryThenFallback) {
    Harness h("t01");
    const std::string no_summary =
        "Thought: look\nAction Element: <point>(20,780)</point>\nAction Type: LEFT_CLICK";
    ScriptedGateway gw({no_summary, "Summary: not in the right shape", kAnswer});
    RunConfig cfg;
    cfg.summary_retry_limit = 1;
    const Trajectory t = h.run(Mode::InMem, gw, cfg);
    EXPECT_EQ(t.status, TrajectoryStatus::Answered);
    ASSERT_EQ(t.steps.size(), 2u);
    ASSERT_TRUE(t.steps[0].summary.has_value());
    EXPECT_TRUE(t.steps[0].summary_fallback);
    EXPECT_EQ(t.steps[0].summary->state_part, "page home");
    EXPECT_EQ(t.steps[0].summary->action_part, "LEFT_CLICK <point>(20,780)</point>");
    const std::string last = render_messages(gw.captured().back());
    EXPECT_NE(last.find("Step 1: [page home] → [LEFT_CLICK <point>(20,780)</point>]"), std::string::npos);
}

TEST(Runner, SummaryRetryRecovers) {
    Harness h("t01");
    const std::string no_summary =
        "Thought: look\nAction Element: <point>(20,780)</point>\nAction Type: LEFT_CLICK";
    ScriptedGateway gw({no_summary, "Summary: [home page] → [clicked footer]", kAnswer});
    const Trajectory t = h.run(Mode::InMem, gw);
    ASSERT_EQ(t.steps.size(), 2u);
    EXPECT_FALSE(t.steps[0].summary_fallback);
    EXPECT_EQ(t.steps[0].summary->body(), "[home page] → [clicked footer]");
}

TEST(Runner, FallbackFitsTheBudget) {
    Observation o;
    o.location = std::string(300, 'p');
    const Action a = make_action(ActionType::TYPE, Coord{1, 1}, std::string(300, 'v'));
    const Summary s = fallback_summary(1, o, a);
    EXPECT_EQ(s.state_part, "page " + o.location);
    Harness h("t01");
    ScriptedGateway gw({"Thought: t\nAction Element: <point>(640,80)</point>\nAction Type: TYPE\nAction Value: " +
                            std::string(500, 'x'),
                        kAnswer});
    RunConfig cfg;
    cfg.summary_retry_limit = 0;
    cfg.max_summary_chars = 80;
    const Trajectory t = h.run(Mode::InMem, gw, cfg);
    ASSERT_EQ(t.status, TrajectoryStatus::Answered);
    EXPECT_LE(utf8_length(t.steps[0].summary->body()), 80u);
}

TEST(Runner, GatewayFailureAborts) {
    Harness h("t01");
    ScriptedGateway gw({kGood});
    const Trajectory t = h.run(Mode::InMem, gw);
    EXPECT_EQ(t.status, TrajectoryStatus::Aborted);
    EXPECT_EQ(t.steps.size(), 1u);
    ASSERT_TRUE(t.abort_reason.has_value());
    EXPECT_FALSE(judge_oracle(t, h.task.goal).success);
}

TEST(Runner, ExModesNeedABank) {
    Harness h("t01");
    ScriptedGateway gw({kAnswer});
    SimulatedEnvironment env(h.task.site);
    RunConfig cfg;
    cfg.mode = Mode::ExMem;
    EXPECT_THROW(run_task(env, Query{"q", "t", {}, {}}, cfg, RunnerDeps{gw, test::prompts(), nullptr}), Error);
}

TEST(Runner, ReplayMatchesCapturedPrompts) {
    for (Mode mode : {Mode::Normal, Mode::InMem, Mode::ExMem, Mode::InExMem}) {
        Harness h("t08");
        ScriptedGateway gw(h.script(mode));
        RunConfig cfg;
        cfg.k = 2;
        const Trajectory t = h.run(mode, gw, cfg);
        ASSERT_EQ(t.status, TrajectoryStatus::Answered) << to_string(mode);
        const auto bundles = replay_prompts(parse_trajectory(serialize_trajectory(t)), test::prompts());
        ASSERT_EQ(bundles.size(), gw.captured().size());
        for (std::size_t i = 0; i < bundles.size(); ++i) {
            EXPECT_EQ(render_bundle(bundles[i]), render_messages(gw.captured()[i])) << to_string(mode) << " " << i;
        }
    }
}

TEST(Runner, ParallelKeepsInputOrder) {
    const auto out = run_parallel(20, 4, [](std::size_t i) {
        std::this_thread::sleep_for(std::chrono::milliseconds((20 - i) % 7));
        Trajectory t;
        t.task.task_id = std::to_string(i);
        return t;
    });
    ASSERT_EQ(out.size(), 20u);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(out[i].task.task_id, std::to_string(i));
    EXPECT_THROW(run_parallel(3, 2, [](std::size_t i) -> Trajectory {
                     if (i == 1) throw Error("boom");
                     return {};
                 }),
                 Error);
}
