#pragma once

// Execution environment for agent actions. The simulator models a website as
// a finite state machine loaded from a SitePack: pages with hit regions that
// fire on a given action type and move to another page and/or write form
// fields. Anything that misses every region leaves the page unchanged.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dualmem/agent_io.hpp"
#include "dualmem/types.hpp"

namespace dualmem {

struct FixtureError : Error {
    using Error::Error;
};
struct EnvError : Error {
    using Error::Error;
};

struct Rect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool contains(const Coord& c) const { return c.x >= x0 && c.x < x1 && c.y >= y0 && c.y < y1; }
    bool operator==(const Rect&) const = default;
};

struct Region {
    std::optional<Rect> rect;               // absent: page-level trigger (e.g. PRESS_KEY)
    ActionType on = ActionType::LEFT_CLICK;
    std::optional<std::string> requires_value_pattern;  // case-insensitive full match
    std::optional<std::string> go_to;
    std::map<std::string, std::string> sets;  // "$value" is replaced by the action value
};

struct Page {
    std::string id;
    std::string semantic_text;
    std::optional<std::string> screenshot;     // path relative to the pack
    std::vector<std::string> scroll_slices;    // optional text pages selected by SCROLL
    std::vector<Region> regions;
};

struct GoalSpec {
    std::optional<std::string> required_page;
    std::optional<std::string> required_answer_pattern;

    bool operator==(const GoalSpec&) const = default;
};

struct SitePack {
    std::string name;
    std::filesystem::path root;
    Viewport viewport;
    std::string start_page;
    GoalSpec goal;
    std::map<std::string, Page> pages;
    std::vector<std::string> page_order;  // declaration order
    std::vector<std::string> warnings;    // filled by validation

    const Page& page(const std::string& id) const;
};

/// Structural checks: start page and goto targets exist, rects lie inside
/// the viewport. Unreachable pages and overlapping same-trigger regions are
/// reported as warnings. Throws FixtureError.
void validate(SitePack& pack);

/// Loads `<dir>/site.jsonl` (or a manifest file path) and validates it.
SitePack validate_sitepack(const std::filesystem::path& path);

/// Parses manifest text; `root` resolves screenshot paths.
SitePack parse_sitepack(std::string_view manifest, const std::filesystem::path& root);

enum class TerminationReason { None, Answered, StepLimit, EnvError };
std::string_view to_string(TerminationReason r);

struct EnvState {
    std::string page_id;
    int step_count = 0;
    std::map<std::string, std::string> form_values;
    bool terminal = false;
    int max_steps = 60;
    std::size_t scroll_offset = 0;
    std::vector<std::string> back_stack;
    std::vector<std::string> forward_stack;
    std::optional<std::string> answer;

    bool operator==(const EnvState&) const = default;
};

struct StepOutcome {
    Observation observation;
    bool terminal = false;
    TerminationReason termination_reason = TerminationReason::None;
    bool transitioned = false;  // a region fired
};

std::pair<EnvState, Observation> reset(const SitePack& site, const Query& task, int max_steps = 60);

/// Executes one action. Each call counts as a step; the call after
/// `max_steps` executed steps returns a terminal StepLimit outcome without
/// acting. Throws EnvError if `state` is already terminal.
std::pair<EnvState, StepOutcome> step(const SitePack& site, const EnvState& state, const Action& action);

Observation observe(const SitePack& site, const EnvState& state);

/// Driver interface. A real browser implements the same two calls.
class Environment {
public:
    virtual ~Environment() = default;
    virtual Observation reset(const Query& task) = 0;
    virtual StepOutcome step(const Action& action) = 0;
};

class SimulatedEnvironment final : public Environment {
public:
    explicit SimulatedEnvironment(SitePack site, int max_steps = 60);

    Observation reset(const Query& task) override;
    StepOutcome step(const Action& action) override;

    const EnvState& state() const { return state_; }
    const SitePack& site() const { return site_; }

private:
    SitePack site_;
    int max_steps_;
    EnvState state_;
};

}  // namespace dualmem
