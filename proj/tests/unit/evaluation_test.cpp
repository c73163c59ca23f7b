#include <gtest/gtest.h>

#include "dualmem/evaluation.hpp"
#include "support.hpp"

using namespace dualmem;

namespace {

Trajectory traj(int steps, TrajectoryStatus status, std::optional<std::string> answer, std::string final_page,
                std::optional<std::string> site = std::nullopt, std::int64_t per_step = 100) {
    Trajectory t;
    t.task = Query{"find the weight", "t", site, std::nullopt};
    for (int i = 1; i <= steps; ++i) {
        StepRecord s;
        s.step_index = i;
        s.observation.step_index = i;
        s.observation.location = "p" + std::to_string(i);
        s.observation.screenshot = "placeholder:p" + std::to_string(i);
        t.steps.push_back(s);
        t.per_step_cumulative_tokens.push_back(per_step * i);
    }
    t.status = status;
    t.final_answer = std::move(answer);
    t.final_location = std::move(final_page);
    return t;
}

const GoalSpec kGoal{"specs", R"(600\s?g)"};

std::vector<JudgeVerdict> verdicts(std::initializer_list<bool> ok) {
    std::vector<JudgeVerdict> v;
    for (bool b : ok) v.push_back(JudgeVerdict{b, "", JudgeKind::Oracle});
    return v;
}

}  // namespace

TEST(OracleJudge, AcceptsMatchingAnswerOnRequiredPage) {
    EXPECT_TRUE(judge_oracle(traj(3, TrajectoryStatus::Answered, "600 g", "specs"), kGoal).success);
    EXPECT_TRUE(judge_oracle(traj(3, TrajectoryStatus::Answered, " 600G ", "specs"), kGoal).success);
    EXPECT_FALSE(judge_oracle(traj(3, TrajectoryStatus::Answered, "about 600 g", "specs"), kGoal).success);
    EXPECT_FALSE(judge_oracle(traj(3, TrajectoryStatus::Answered, "600 g", "cart"), kGoal).success);
    EXPECT_FALSE(judge_oracle(traj(3, TrajectoryStatus::Answered, std::nullopt, "specs"), kGoal).success);
}

TEST(OracleJudge, RequiredPageMayBeVisitedEarlier) {
    auto t = traj(3, TrajectoryStatus::Answered, "600g", "cart");
    t.steps[1].observation.location = "specs";
    EXPECT_TRUE(judge_oracle(t, kGoal).success);
}

TEST(OracleJudge, NonAnsweredRunsFail) {
    EXPECT_FALSE(judge_oracle(traj(60, TrajectoryStatus::StepLimit, std::nullopt, "home"), GoalSpec{}).success);
    EXPECT_FALSE(judge_oracle(traj(2, TrajectoryStatus::Aborted, "600 g", "specs"), kGoal).success);
    EXPECT_TRUE(judge_oracle(traj(2, TrajectoryStatus::Answered, "anything", "x"), GoalSpec{}).success);
}

TEST(ModelJudge, SendsLastFiveScreenshots) {
    const auto t = traj(8, TrajectoryStatus::Answered, "600 g", "p8");
    const auto msgs = judge_messages(t, test::prompts());
    ASSERT_EQ(msgs.size(), 2u);
    EXPECT_NE(msgs[0].joined_text().find("find the weight"), std::string::npos);
    EXPECT_EQ(msgs[0].joined_text().find("{answer}"), std::string::npos);
    EXPECT_EQ(msgs[1].images(),
              (std::vector<std::string>{"placeholder:p4", "placeholder:p5", "placeholder:p6", "placeholder:p7",
                                        "placeholder:p8"}));
    EXPECT_EQ(judge_messages(traj(3, TrajectoryStatus::Answered, "x", "p3"), test::prompts())[1].images().size(), 3u);
}

TEST(ModelJudge, ParsesVerdicts) {
    ScriptedGateway gw({"The answer is right. SUCCESS", "FAILURE", "I am not sure", "success or failure"});
    const auto t = traj(3, TrajectoryStatus::Answered, "600 g", "p3");
    const auto v1 = judge_model(t, gw, test::prompts());
    EXPECT_TRUE(v1.success);
    EXPECT_EQ(v1.judge_kind, JudgeKind::Model);
    EXPECT_EQ(gw.captured()[0][1].images().size(), 3u);
    EXPECT_FALSE(judge_model(t, gw, test::prompts()).success);
    EXPECT_FALSE(judge_model(t, gw, test::prompts()).success);
    EXPECT_FALSE(judge_model(t, gw, test::prompts()).success);
    EXPECT_FALSE(judge_model(t, gw, test::prompts()).success);  // script exhausted
}

TEST(ModelJudge, VerdictParsing) {
    EXPECT_TRUE(parse_verdict("success"));
    EXPECT_FALSE(parse_verdict("Verdict: Failure."));
    EXPECT_THROW(parse_verdict("successful"), VerdictParseError);
    EXPECT_THROW(parse_verdict("SUCCESS? FAILURE!"), VerdictParseError);
    EXPECT_TRUE(parse_verdict("SUCCESS ... success"));
}

TEST(Aggregate, OverallAccuracy) {
    std::vector<Trajectory> ts;
    for (int i = 0; i < 4; ++i) ts.push_back(traj(2 + i, TrajectoryStatus::Answered, "x", "x"));
    const auto rows = aggregate(ts, verdicts({true, true, true, false}), GroupBy::Site);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].group, "(untagged)");
    EXPECT_EQ(rows[1].group, "Overall");
    EXPECT_DOUBLE_EQ(rows[1].acc_pct, 75.0);
    EXPECT_DOUBLE_EQ(rows[1].avg_step, 3.5);
    EXPECT_DOUBLE_EQ(rows[1].avg_token, 350.0);
}

TEST(Aggregate, GroupsBySite) {
    std::vector<Trajectory> ts = {traj(2, TrajectoryStatus::Answered, "x", "x", "shop"),
                                  traj(4, TrajectoryStatus::Answered, "x", "x", "maps"),
                                  traj(6, TrajectoryStatus::Answered, "x", "x", "shop"),
                                  traj(8, TrajectoryStatus::Answered, "x", "x", "maps")};
    const auto rows = aggregate(ts, verdicts({true, false, true, false}), GroupBy::Site);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].group, "maps");
    EXPECT_DOUBLE_EQ(rows[0].acc_pct, 0.0);
    EXPECT_DOUBLE_EQ(rows[0].avg_step, 6.0);
    EXPECT_EQ(rows[1].group, "shop");
    EXPECT_DOUBLE_EQ(rows[1].acc_pct, 100.0);
    EXPECT_DOUBLE_EQ(rows[2].acc_pct, 50.0);
    EXPECT_EQ(rows[2].n, 4u);
    EXPECT_THROW(aggregate(ts, verdicts({true}), GroupBy::Site), GroupMismatchError);
    EXPECT_EQ(parse_group_by("difficulty"), GroupBy::Difficulty);
    EXPECT_THROW(parse_group_by("colour"), Error);
}

TEST(Aggregate, ReportFormats) {
    std::vector<Trajectory> ts = {traj(2, TrajectoryStatus::Answered, "x", "x", "shop", 333),
                                  traj(3, TrajectoryStatus::Answered, "x", "x", "maps", 10)};
    const auto rows = aggregate(ts, verdicts({true, false}), GroupBy::Site);
    EXPECT_EQ(format_report(rows),
              "Group    N  Avg.step  Avg.token  Acc(%)\n"
              "---------------------------------------\n"
              "maps     1      3.00       30.0     0.0\n"
              "shop     1      2.00      666.0   100.0\n"
              "Overall  2      2.50      348.0    50.0\n");
    EXPECT_EQ(format_report_csv(rows),
              "group,n,avg_step,avg_token,acc_pct\n"
              "maps,1,3.00,30.0,0.0\n"
              "shop,1,2.00,666.0,100.0\n"
              "Overall,2,2.50,348.0,50.0\n");
}

TEST(Curves, CsvAndCrossover) {
    const auto t = traj(3, TrajectoryStatus::Answered, "x", "x", std::nullopt, 50);
    EXPECT_EQ(token_curve_csv(t), "step,cum_tokens\n1,50\n2,100\n3,150\n");
    const auto c = compare_curves({100, 250, 450, 700}, {200, 300, 400});
    EXPECT_EQ(c.crossover_step, 3);
    EXPECT_NEAR(c.reduction_pct, 100.0 * (1.0 - 400.0 / 700.0), 1e-9);
    EXPECT_EQ(token_curve_csv(c), "step,cum_tokens_normal,cum_tokens_m2\n1,100,200\n2,250,300\n3,450,400\n4,700,\n");
    EXPECT_FALSE(compare_curves({1, 2}, {5, 6}).crossover_step.has_value());
}

TEST(Curves, FromTrajectories) {
    const auto base = traj(4, TrajectoryStatus::Answered, "x", "x", std::nullopt, 100);
    const auto m2 = traj(4, TrajectoryStatus::Answered, "x", "x", std::nullopt, 60);
    const auto c = token_curve(base, m2);
    EXPECT_EQ(c.crossover_step, 1);
    EXPECT_NEAR(c.reduction_pct, 40.0, 1e-9);
    for (std::size_t i = 1; i < c.baseline.size(); ++i) EXPECT_GE(c.baseline[i], c.baseline[i - 1]);
}
