#include "dualmem/agent_io.hpp"

#include <charconv>
#include <map>
#include <regex>
#include <sstream>

namespace dualmem {

namespace {

constexpr std::string_view kThought = "Thought";
constexpr std::string_view kElement = "Action Element";
constexpr std::string_view kType = "Action Type";
constexpr std::string_view kValue = "Action Value";
constexpr std::string_view kSummary = "Summary";

const std::regex& label_regex() {
    static const std::regex re(
        R"(^\s*\**\s*(thought|action[ \t]*element|action[ \t]*type|action[ \t]*value|summary)\s*\**\s*:\s*\**(.*)$)",
        std::regex::icase);
    return re;
}

std::string canonical_label(std::string_view matched) {
    std::string l = to_lower(matched);
    if (l == "thought") return std::string(kThought);
    if (l == "summary") return std::string(kSummary);
    if (l.find("element") != std::string::npos) return std::string(kElement);
    if (l.find("type") != std::string::npos) return std::string(kType);
    return std::string(kValue);
}

std::vector<std::string> split_lines(std::string_view raw) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : raw) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty() && cur.back() == '\r') cur.pop_back();
    lines.push_back(std::move(cur));
    return lines;
}

std::optional<int> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// "(x,y)" with optional inner whitespace.
std::optional<Coord> parse_pair(std::string_view s) {
    std::string t = trim(s);
    if (t.size() < 5 || t.front() != '(' || t.back() != ')') return std::nullopt;
    std::string inner = t.substr(1, t.size() - 2);
    auto comma = inner.find(',');
    if (comma == std::string::npos) return std::nullopt;
    auto x = parse_int(trim(std::string_view(inner).substr(0, comma)));
    auto y = parse_int(trim(std::string_view(inner).substr(comma + 1)));
    if (!x || !y) return std::nullopt;
    return Coord{*x, *y};
}

bool is_number(std::string_view s) {
    static const std::regex re(R"(^\d+(\.\d+)?$)");
    return std::regex_match(s.begin(), s.end(), re);
}

}  // namespace

std::string_view to_string(ActionType t) {
    switch (t) {
        case ActionType::HOVER: return "HOVER";
        case ActionType::LEFT_CLICK: return "LEFT_CLICK";
        case ActionType::DRAG: return "DRAG";
        case ActionType::TYPE: return "TYPE";
        case ActionType::PRESS_KEY: return "PRESS_KEY";
        case ActionType::SCROLL: return "SCROLL";
        case ActionType::WAIT: return "WAIT";
        case ActionType::GO_BACK: return "GO_BACK";
        case ActionType::GO_FORWARD: return "GO_FORWARD";
        case ActionType::ANSWER: return "ANSWER";
    }
    return "WAIT";
}

std::optional<ActionType> action_type_from_string(std::string_view verb) {
    std::string v = trim(verb);
    for (auto& c : v) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    for (ActionType t : kAllActionTypes) {
        if (to_string(t) == v) return t;
    }
    return std::nullopt;
}

ArityRule arity(ActionType t) {
    using R = Requirement;
    switch (t) {
        case ActionType::HOVER: return {R::Required, R::Forbidden};
        case ActionType::LEFT_CLICK: return {R::Required, R::Forbidden};
        case ActionType::DRAG: return {R::Required, R::Required};
        case ActionType::TYPE: return {R::Required, R::Required};
        case ActionType::PRESS_KEY: return {R::Forbidden, R::Required};
        case ActionType::SCROLL: return {R::Optional, R::Required};
        case ActionType::WAIT: return {R::Forbidden, R::Required};
        case ActionType::GO_BACK: return {R::Forbidden, R::Forbidden};
        case ActionType::GO_FORWARD: return {R::Forbidden, R::Forbidden};
        case ActionType::ANSWER: return {R::Forbidden, R::Required};
    }
    return {R::Forbidden, R::Forbidden};
}

Coord parse_point(std::string_view s) {
    static const std::regex re(R"(^<point>\s*\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\s*</point>$)",
                               std::regex::icase);
    const std::string t = trim(s);
    std::smatch m;
    if (!std::regex_match(t, m, re)) {
        throw PointSyntaxError("expected <point>(x,y)</point> with integer coordinates", t);
    }
    auto x = parse_int(m[1].str());
    auto y = parse_int(m[2].str());
    if (!x || !y) throw PointSyntaxError("coordinate out of range", t);
    return Coord{*x, *y};
}

std::string format_point(const Coord& c) {
    return "<point>(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")</point>";
}

Action make_action(ActionType type, std::optional<Coord> element, std::optional<std::string> value) {
    const ArityRule rule = arity(type);
    const std::string verb(to_string(type));
    if (rule.element == Requirement::Required && !element) {
        throw ArityViolationError(verb + " requires an Action Element", verb);
    }
    if (rule.element == Requirement::Forbidden && element) {
        throw ArityViolationError(verb + " takes no Action Element", format_point(*element));
    }
    if (value && value->empty()) value.reset();
    if (rule.value == Requirement::Required && !value) {
        throw ArityViolationError(verb + " requires an Action Value", verb);
    }
    if (rule.value == Requirement::Forbidden && value) {
        throw ArityViolationError(verb + " takes no Action Value", *value);
    }

    if (value) {
        switch (type) {
            case ActionType::DRAG: {
                auto target = parse_pair(*value);
                if (!target) throw PointSyntaxError("DRAG value must be a target coordinate (x,y)", *value);
                value = "(" + std::to_string(target->x) + "," + std::to_string(target->y) + ")";
                break;
            }
            case ActionType::SCROLL: {
                std::string dir = to_lower(*value);
                if (dir != "up" && dir != "down" && dir != "left" && dir != "right") {
                    throw ArityViolationError("SCROLL direction must be up, down, left or right", *value);
                }
                value = dir;
                break;
            }
            case ActionType::WAIT:
                if (!is_number(*value)) throw ArityViolationError("WAIT value must be a number of seconds", *value);
                break;
            default: break;
        }
    }
    return Action{type, element, std::move(value)};
}

AgentTurn parse_agent_output(std::string_view raw, Mode mode) {
    std::map<std::string, std::string> sections;
    std::string current;
    for (const std::string& line : split_lines(raw)) {
        std::smatch m;
        if (std::regex_match(line, m, label_regex())) {
            current = canonical_label(m[1].str());
            if (sections.count(current)) {
                throw DuplicateSectionError("section '" + current + "' appears more than once", line);
            }
            sections[current] = m[2].str();
        } else if (!current.empty()) {
            sections[current] += "\n" + line;
        }
    }
    for (auto& [label, body] : sections) body = trim(body);

    auto get = [&](std::string_view label) -> std::optional<std::string> {
        auto it = sections.find(std::string(label));
        if (it == sections.end() || it->second.empty()) return std::nullopt;
        return it->second;
    };

    const std::string excerpt = trim(raw.substr(0, std::min<std::size_t>(raw.size(), 200)));

    AgentTurn turn;
    auto thought = get(kThought);
    if (!thought) throw MissingSectionError(std::string(kThought), excerpt);
    turn.thought = *thought;

    auto verb = get(kType);
    if (!verb) throw MissingSectionError(std::string(kType), excerpt);
    auto type = action_type_from_string(*verb);
    if (!type) throw UnknownActionError("unknown action type '" + *verb + "'", *verb);

    std::optional<Coord> element;
    if (auto el = get(kElement)) element = parse_point(*el);

    turn.action = make_action(*type, element, get(kValue));
    turn.summary_raw = get(kSummary);
    if (uses_internal_memory(mode) && !turn.summary_raw) {
        throw MissingSectionError(std::string(kSummary), excerpt);
    }
    return turn;
}

std::string serialize_turn(const AgentTurn& turn) {
    std::ostringstream os;
    os << kThought << ": " << turn.thought << "\n";
    if (turn.action.element) os << kElement << ": " << format_point(*turn.action.element) << "\n";
    os << kType << ": " << to_string(turn.action.type) << "\n";
    if (turn.action.value) os << kValue << ": " << *turn.action.value << "\n";
    if (turn.summary_raw) os << kSummary << ": " << *turn.summary_raw << "\n";
    return os.str();
}

std::string describe_action(const Action& a) {
    std::string out(to_string(a.type));
    if (a.element) out += " " + format_point(*a.element);
    if (a.value) out += " \"" + *a.value + "\"";
    return out;
}

}  // namespace dualmem
