#pragma once

// Wire format between model completions and the runner: a labeled-section
// text block (Thought / Action Element / Action Type / Action Value, plus
// Summary when the run keeps internal memory).

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "dualmem/types.hpp"

namespace dualmem {

enum class ActionType {
    HOVER,
    LEFT_CLICK,
    DRAG,
    TYPE,
    PRESS_KEY,
    SCROLL,
    WAIT,
    GO_BACK,
    GO_FORWARD,
    ANSWER,
};

inline constexpr std::array<ActionType, 10> kAllActionTypes = {
    ActionType::HOVER,   ActionType::LEFT_CLICK, ActionType::DRAG,    ActionType::TYPE,
    ActionType::PRESS_KEY, ActionType::SCROLL,   ActionType::WAIT,    ActionType::GO_BACK,
    ActionType::GO_FORWARD, ActionType::ANSWER,
};

std::string_view to_string(ActionType t);
std::optional<ActionType> action_type_from_string(std::string_view verb);

struct Coord {
    int x = 0;
    int y = 0;

    bool operator==(const Coord&) const = default;
};

enum class Requirement { Required, Optional, Forbidden };

struct ArityRule {
    Requirement element;
    Requirement value;
};

/// Which of element/value each action type takes.
ArityRule arity(ActionType t);

struct Action {
    ActionType type = ActionType::WAIT;
    std::optional<Coord> element;
    std::optional<std::string> value;

    bool operator==(const Action&) const = default;
};

struct AgentTurn {
    std::string thought;
    Action action;
    std::optional<std::string> summary_raw;

    bool operator==(const AgentTurn&) const = default;
};

// Parse failures carry the offending text so a repair prompt can quote it.
struct OutputParseError : Error {
    OutputParseError(const std::string& message, std::string span_)
        : Error(message), span(std::move(span_)) {}
    std::string span;
};

struct MissingSectionError : OutputParseError {
    MissingSectionError(std::string label_, std::string span_)
        : OutputParseError("missing section '" + label_ + "'", std::move(span_)),
          label(std::move(label_)) {}
    std::string label;
};

struct DuplicateSectionError : OutputParseError {
    using OutputParseError::OutputParseError;
};

struct PointSyntaxError : OutputParseError {
    using OutputParseError::OutputParseError;
};

struct UnknownActionError : OutputParseError {
    using OutputParseError::OutputParseError;
};

struct ArityViolationError : OutputParseError {
    using OutputParseError::OutputParseError;
};

/// Parses `<point>(x,y)</point>`; whitespace inside the parentheses is allowed.
Coord parse_point(std::string_view s);

/// Checks element/value presence and value syntax for the action type.
/// DRAG targets are canonicalised to "(x,y)", SCROLL directions to lower case.
Action make_action(ActionType type, std::optional<Coord> element, std::optional<std::string> value);

/// Parses a completion into a turn. Labels are case-insensitive and may come
/// in any order; text before the first label is ignored. In InMem/InExMem the
/// Summary section is required.
AgentTurn parse_agent_output(std::string_view raw, Mode mode);

/// Canonical labeled text. Absent element/value sections are omitted.
std::string serialize_turn(const AgentTurn& turn);

/// One-line form used in history text and fallback summaries,
/// e.g. `LEFT_CLICK <point>(3,4)</point>` or `TYPE <point>(1,2)</point> "shoes"`.
std::string describe_action(const Action& a);

std::string format_point(const Coord& c);

}  // namespace dualmem
