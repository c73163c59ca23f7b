#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <set>

#include "dualmem/agent_io.hpp"
#include "generators.hpp"
#include "support.hpp"

using namespace dualmem;

namespace {

const char* kSample =
    "Some preamble the model added.\n"
    "**Thought:** The search box is at the top.\n"
    "Action Element: <point>( 640 , 80 )</point>\n"
    "ACTION TYPE: type\n"
    "action value: hiking tent\n"
    "Summary: [Home page] → [typed query]\n";

}  // namespace

TEST(AgentIo, ParsesLabeledSectionsCaseInsensitively) {
    const AgentTurn t = parse_agent_output(kSample, Mode::InExMem);
    EXPECT_EQ(t.thought, "The search box is at the top.");
    EXPECT_EQ(t.action.type, ActionType::TYPE);
    ASSERT_TRUE(t.action.element);
    EXPECT_EQ(*t.action.element, (Coord{640, 80}));
    EXPECT_EQ(t.action.value, "hiking tent");
    EXPECT_EQ(t.summary_raw, "[Home page] → [typed query]");
}

TEST(AgentIo, SectionsMayComeInAnyOrder) {
    const AgentTurn t = parse_agent_output("Action Type: GO_BACK\nThought: wrong page", Mode::Normal);
    EXPECT_EQ(t.action.type, ActionType::GO_BACK);
    EXPECT_EQ(t.thought, "wrong page");
}

TEST(AgentIo, MultiLineThoughtIsKept) {
    const AgentTurn t = parse_agent_output("Thought: line one\nline two\nAction Type: WAIT\nAction Value: 2", Mode::Normal);
    EXPECT_EQ(t.thought, "line one\nline two");
}

TEST(AgentIo, SummaryOptionalOutsideMemoryModes) {
    EXPECT_NO_THROW(parse_agent_output("Thought: t\nAction Type: GO_BACK", Mode::Normal));
    EXPECT_NO_THROW(parse_agent_output("Thought: t\nAction Type: GO_BACK", Mode::ExMem));
    EXPECT_THROW(parse_agent_output("Thought: t\nAction Type: GO_BACK", Mode::InMem), MissingSectionError);
}

TEST(AgentIo, MissingSectionNamesTheLabel) {
    try {
        parse_agent_output("Thought: only a thought", Mode::Normal);
        FAIL();
    } catch (const MissingSectionError& e) {
        EXPECT_EQ(e.label, "Action Type");
    }
}

TEST(AgentIo, DuplicateSectionCarriesOffendingLine) {
    try {
        parse_agent_output("Thought: a\nThought: b\nAction Type: GO_BACK", Mode::Normal);
        FAIL();
    } catch (const DuplicateSectionError& e) {
        EXPECT_EQ(e.span, "Thought: b");
    }
}

TEST(AgentIo, ArityTableIsExhaustive) {
    // Independent restatement of the action grammar.
    const std::map<ActionType, std::pair<Requirement, Requirement>> expected = {
        {ActionType::HOVER, {Requirement::Required, Requirement::Forbidden}},
        {ActionType::LEFT_CLICK, {Requirement::Required, Requirement::Forbidden}},
        {ActionType::DRAG, {Requirement::Required, Requirement::Required}},
        {ActionType::TYPE, {Requirement::Required, Requirement::Required}},
        {ActionType::PRESS_KEY, {Requirement::Forbidden, Requirement::Required}},
        {ActionType::SCROLL, {Requirement::Optional, Requirement::Required}},
        {ActionType::WAIT, {Requirement::Forbidden, Requirement::Required}},
        {ActionType::GO_BACK, {Requirement::Forbidden, Requirement::Forbidden}},
        {ActionType::GO_FORWARD, {Requirement::Forbidden, Requirement::Forbidden}},
        {ActionType::ANSWER, {Requirement::Forbidden, Requirement::Required}},
    };
    ASSERT_EQ(kAllActionTypes.size(), expected.size());
    for (ActionType t : kAllActionTypes) {
        const ArityRule r = arity(t);
        EXPECT_EQ(r.element, expected.at(t).first) << to_string(t);
        EXPECT_EQ(r.value, expected.at(t).second) << to_string(t);
        EXPECT_EQ(action_type_from_string(to_string(t)), t);
    }
}

TEST(AgentIo, EveryArityCombinationIsEnforced) {
    for (ActionType t : kAllActionTypes) {
        const ArityRule r = arity(t);
        for (bool has_el : {false, true}) {
            for (bool has_val : {false, true}) {
                std::optional<Coord> el = has_el ? std::optional<Coord>(Coord{1, 2}) : std::nullopt;
                std::optional<std::string> val;
                if (has_val) {
                    val = t == ActionType::DRAG ? "(3,4)" : t == ActionType::SCROLL ? "up" : t == ActionType::WAIT ? "1" : "x";
                }
                const bool el_ok = r.element == Requirement::Optional || (r.element == Requirement::Required) == has_el;
                const bool val_ok = r.value == Requirement::Optional || (r.value == Requirement::Required) == has_val;
                if (el_ok && val_ok) {
                    EXPECT_NO_THROW(make_action(t, el, val)) << to_string(t);
                } else {
                    EXPECT_THROW(make_action(t, el, val), ArityViolationError) << to_string(t) << has_el << has_val;
                }
            }
        }
    }
}

TEST(AgentIo, DragAndScrollValuesAreCanonicalised) {
    EXPECT_EQ(make_action(ActionType::DRAG, Coord{1, 1}, " ( 10 ,  20 ) ").value, "(10,20)");
    EXPECT_EQ(make_action(ActionType::SCROLL, std::nullopt, "DOWN").value, "down");
    EXPECT_THROW(make_action(ActionType::DRAG, Coord{1, 1}, "10,20"), PointSyntaxError);
}

TEST(AgentIo, PointParsing) {
    EXPECT_EQ(parse_point("<point>(3,4)</point>"), (Coord{3, 4}));
    EXPECT_EQ(parse_point("  <point>( -3 , 4 )</point> "), (Coord{-3, 4}));
    EXPECT_THROW(parse_point("(3,4)"), PointSyntaxError);
    EXPECT_THROW(parse_point("<point>(3;4)</point>"), PointSyntaxError);
    EXPECT_THROW(parse_point("<point>(99999999999,4)</point>"), PointSyntaxError);
}

TEST(AgentIo, AnswerSerialisesWithoutElementSection) {
    AgentTurn t{"done", make_action(ActionType::ANSWER, std::nullopt, "The weight is 600g"), std::nullopt};
    const std::string s = serialize_turn(t);
    EXPECT_EQ(s.find("Action Element"), std::string::npos);
    EXPECT_NE(s.find("Action Value: The weight is 600g"), std::string::npos);
    EXPECT_EQ(parse_agent_output(s, Mode::Normal), t);
}

TEST(AgentIo, DescribeAction) {
    EXPECT_EQ(describe_action(make_action(ActionType::LEFT_CLICK, Coord{3, 4}, std::nullopt)),
              "LEFT_CLICK <point>(3,4)</point>");
    EXPECT_EQ(describe_action(make_action(ActionType::TYPE, Coord{1, 2}, "shoes")), "TYPE <point>(1,2)</point> \"shoes\"");
    EXPECT_EQ(describe_action(make_action(ActionType::GO_BACK, std::nullopt, std::nullopt)), "GO_BACK");
}

TEST(AgentIo, RoundTripProperty) {
    test::TurnGenerator gen(7);
    for (int i = 0; i < 2000; ++i) {
        const bool in_mode = i % 2 == 0;
        const AgentTurn t = gen.next(in_mode);
        const std::string s = serialize_turn(t);
        const AgentTurn back = parse_agent_output(s, in_mode ? Mode::InExMem : Mode::Normal);
        ASSERT_EQ(back, t) << s;
    }
}

TEST(AgentIo, MalformedCorpusYieldsTypedErrors) {
    std::ifstream in(test::fixture("agent_io/malformed.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        const std::string expected = j["error"];
        std::string got = "none";
        try {
            parse_agent_output(j["raw"].get<std::string>(), parse_mode(j["mode"].get<std::string>()));
        } catch (const MissingSectionError&) {
            got = "MissingSection";
        } catch (const DuplicateSectionError&) {
            got = "DuplicateSection";
        } catch (const PointSyntaxError&) {
            got = "PointSyntax";
        } catch (const UnknownActionError&) {
            got = "UnknownAction";
        } catch (const ArityViolationError&) {
            got = "ArityViolation";
        }
        EXPECT_EQ(got, expected) << j["name"];
        ++n;
    }
    EXPECT_EQ(n, 25);
}
