#include "dualmem/environment.hpp"

#include <spdlog/spdlog.h>

#include <deque>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>
#include <set>
#include <sstream>

namespace dualmem {

using nlohmann::json;

namespace {

bool overlaps(const Rect& a, const Rect& b) {
    return a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1;
}

bool value_matches(const std::string& pattern, const std::string& value) {
    const std::regex re(pattern, std::regex::ECMAScript | std::regex::icase);
    return std::regex_match(value, re);
}

Region parse_region(const json& j, const std::string& page_id) {
    Region r;
    if (j.contains("rect")) {
        const auto& a = j.at("rect");
        if (!a.is_array() || a.size() != 4) throw FixtureError("page '" + page_id + "': rect needs 4 integers");
        r.rect = Rect{a[0].get<int>(), a[1].get<int>(), a[2].get<int>(), a[3].get<int>()};
    }
    const std::string on = j.at("on").get<std::string>();
    auto type = action_type_from_string(on);
    if (!type) throw FixtureError("page '" + page_id + "': unknown trigger '" + on + "'");
    r.on = *type;
    if (j.contains("value")) r.requires_value_pattern = j.at("value").get<std::string>();
    if (j.contains("goto")) r.go_to = j.at("goto").get<std::string>();
    if (j.contains("sets")) r.sets = j.at("sets").get<std::map<std::string, std::string>>();
    return r;
}

}  // namespace

const Page& SitePack::page(const std::string& id) const {
    auto it = pages.find(id);
    if (it == pages.end()) throw EnvError("site '" + name + "' has no page '" + id + "'");
    return it->second;
}

SitePack parse_sitepack(std::string_view manifest, const std::filesystem::path& root) {
    SitePack pack;
    pack.root = root;
    bool have_header = false;
    std::istringstream in{std::string(manifest)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FixtureError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
        try {
            const std::string type = j.at("type").get<std::string>();
            if (type == "site") {
                if (j.value("version", 1) != 1) throw FixtureError("unsupported site manifest version");
                pack.name = j.at("name").get<std::string>();
                pack.start_page = j.at("start_page").get<std::string>();
                if (j.contains("viewport")) {
                    pack.viewport = Viewport{j["viewport"].at(0).get<int>(), j["viewport"].at(1).get<int>()};
                }
                if (j.contains("goal")) {
                    const auto& g = j["goal"];
                    if (g.contains("required_page")) pack.goal.required_page = g["required_page"].get<std::string>();
                    if (g.contains("required_answer_pattern")) {
                        pack.goal.required_answer_pattern = g["required_answer_pattern"].get<std::string>();
                    }
                }
                have_header = true;
            } else if (type == "page") {
                Page p;
                p.id = j.at("id").get<std::string>();
                p.semantic_text = j.value("text", "");
                if (j.contains("screenshot")) p.screenshot = j["screenshot"].get<std::string>();
                if (j.contains("slices")) p.scroll_slices = j["slices"].get<std::vector<std::string>>();
                for (const auto& r : j.value("regions", json::array())) p.regions.push_back(parse_region(r, p.id));
                if (pack.pages.count(p.id)) throw FixtureError("duplicate page '" + p.id + "'");
                pack.page_order.push_back(p.id);
                pack.pages.emplace(p.id, std::move(p));
            } else {
                throw FixtureError("manifest line " + std::to_string(lineno) + ": unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw FixtureError("manifest line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) throw FixtureError("manifest has no site record");
    validate(pack);
    return pack;
}

void validate(SitePack& pack) {
    pack.warnings.clear();
    if (pack.name.empty()) throw FixtureError("site has no name");
    if (pack.viewport.width <= 0 || pack.viewport.height <= 0) throw FixtureError("viewport must be positive");
    if (!pack.pages.count(pack.start_page)) throw FixtureError("start page '" + pack.start_page + "' does not exist");

    for (const std::string& id : pack.page_order) {
        const Page& page = pack.pages.at(id);
        for (std::size_t i = 0; i < page.regions.size(); ++i) {
            const Region& r = page.regions[i];
            const std::string where = "page '" + id + "' region " + std::to_string(i);
            if (r.go_to && !pack.pages.count(*r.go_to)) {
                throw FixtureError(where + ": goto target '" + *r.go_to + "' does not exist");
            }
            if (r.rect) {
                const Rect& rc = *r.rect;
                if (rc.x0 < 0 || rc.y0 < 0 || rc.x0 >= rc.x1 || rc.y0 >= rc.y1 || rc.x1 > pack.viewport.width ||
                    rc.y1 > pack.viewport.height) {
                    throw FixtureError(where + ": rect lies outside the viewport or is empty");
                }
                if (arity(r.on).element == Requirement::Forbidden) {
                    pack.warnings.push_back(where + ": " + std::string(to_string(r.on)) +
                                            " carries no coordinate, rect is never hit");
                }
            }
            if (r.requires_value_pattern) {
                try {
                    std::regex(*r.requires_value_pattern);
                } catch (const std::regex_error&) {
                    throw FixtureError(where + ": invalid value pattern");
                }
            }
            for (std::size_t j = 0; j < i; ++j) {
                const Region& earlier = page.regions[j];
                if (earlier.on == r.on && earlier.rect && r.rect && overlaps(*earlier.rect, *r.rect)) {
                    pack.warnings.push_back(where + " overlaps region " + std::to_string(j) +
                                            " with the same trigger; the earlier region wins");
                }
            }
        }
    }

    std::set<std::string> seen{pack.start_page};
    std::deque<std::string> queue{pack.start_page};
    while (!queue.empty()) {
        const Page& p = pack.pages.at(queue.front());
        queue.pop_front();
        for (const Region& r : p.regions) {
            if (r.go_to && seen.insert(*r.go_to).second) queue.push_back(*r.go_to);
        }
    }
    for (const std::string& id : pack.page_order) {
        if (!seen.count(id)) pack.warnings.push_back("page '" + id + "' is unreachable from the start page");
    }
}

SitePack validate_sitepack(const std::filesystem::path& path) {
    std::filesystem::path manifest = std::filesystem::is_directory(path) ? path / "site.jsonl" : path;
    std::ifstream in(manifest);
    if (!in) throw FixtureError("cannot read site manifest " + manifest.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    SitePack pack = parse_sitepack(ss.str(), manifest.parent_path());
    for (const auto& w : pack.warnings) spdlog::warn("{}: {}", pack.name, w);
    return pack;
}

std::string_view to_string(TerminationReason r) {
    switch (r) {
        case TerminationReason::None: return "none";
        case TerminationReason::Answered: return "answered";
        case TerminationReason::StepLimit: return "step_limit";
        case TerminationReason::EnvError: return "env_error";
    }
    return "none";
}

Observation observe(const SitePack& site, const EnvState& state) {
    const Page& page = site.page(state.page_id);
    Observation o;
    o.step_index = state.step_count + 1;
    o.viewport = site.viewport;
    o.location = page.id;
    o.screenshot = page.screenshot ? (site.root / *page.screenshot).string() : "placeholder:" + page.id;
    o.semantic_text = page.semantic_text;
    if (!page.scroll_slices.empty()) {
        o.semantic_text += "\n" + page.scroll_slices[std::min(state.scroll_offset, page.scroll_slices.size() - 1)];
    }
    for (const auto& [field, value] : state.form_values) o.semantic_text += "\nField " + field + ": " + value;
    return o;
}

std::pair<EnvState, Observation> reset(const SitePack& site, const Query& task, int max_steps) {
    validate(task);
    if (!site.pages.count(site.start_page)) throw FixtureError("start page missing");
    EnvState s;
    s.page_id = site.start_page;
    s.max_steps = max_steps;
    Observation o = observe(site, s);
    return {std::move(s), std::move(o)};
}

std::pair<EnvState, StepOutcome> step(const SitePack& site, const EnvState& state, const Action& action) {
    if (state.terminal) throw EnvError("step called on a terminal state");
    EnvState next = state;
    StepOutcome out;

    if (next.step_count >= next.max_steps) {
        next.terminal = true;
        out.terminal = true;
        out.termination_reason = TerminationReason::StepLimit;
        out.observation = observe(site, next);
        return {std::move(next), std::move(out)};
    }
    ++next.step_count;

    auto move_to = [&](const std::string& target) {
        next.page_id = target;
        next.scroll_offset = 0;
        out.transitioned = true;
    };

    switch (action.type) {
        case ActionType::ANSWER:
            next.answer = action.value;
            next.terminal = true;
            out.terminal = true;
            out.termination_reason = TerminationReason::Answered;
            break;
        case ActionType::GO_BACK:
            if (!next.back_stack.empty()) {
                next.forward_stack.push_back(next.page_id);
                std::string target = next.back_stack.back();
                next.back_stack.pop_back();
                move_to(target);
            }
            break;
        case ActionType::GO_FORWARD:
            if (!next.forward_stack.empty()) {
                next.back_stack.push_back(next.page_id);
                std::string target = next.forward_stack.back();
                next.forward_stack.pop_back();
                move_to(target);
            }
            break;
        default: {
            const Page& page = site.page(next.page_id);
            const Region* hit = nullptr;
            for (const Region& r : page.regions) {
                if (r.on != action.type) continue;
                if (r.rect && !(action.element && r.rect->contains(*action.element))) continue;
                if (r.requires_value_pattern && !(action.value && value_matches(*r.requires_value_pattern, *action.value))) {
                    continue;
                }
                hit = &r;
                break;
            }
            if (hit) {
                for (const auto& [field, value] : hit->sets) {
                    next.form_values[field] = value == "$value" ? action.value.value_or("") : value;
                }
                out.transitioned = !hit->sets.empty();
                if (hit->go_to) {
                    if (!site.pages.count(*hit->go_to)) throw EnvError("dangling goto '" + *hit->go_to + "'");
                    next.back_stack.push_back(next.page_id);
                    next.forward_stack.clear();
                    move_to(*hit->go_to);
                }
            } else if (action.type == ActionType::SCROLL && !page.scroll_slices.empty()) {
                const std::string dir = action.value.value_or("down");
                if (dir == "down" || dir == "right") {
                    next.scroll_offset = std::min(next.scroll_offset + 1, page.scroll_slices.size() - 1);
                } else if (next.scroll_offset > 0) {
                    --next.scroll_offset;
                }
            }
        }
    }

    out.observation = observe(site, next);
    return {std::move(next), std::move(out)};
}

SimulatedEnvironment::SimulatedEnvironment(SitePack site, int max_steps)
    : site_(std::move(site)), max_steps_(max_steps) {}

Observation SimulatedEnvironment::reset(const Query& task) {
    auto [s, o] = dualmem::reset(site_, task, max_steps_);
    state_ = std::move(s);
    return o;
}

StepOutcome SimulatedEnvironment::step(const Action& action) {
    auto [s, out] = dualmem::step(site_, state_, action);
    state_ = std::move(s);
    return out;
}

}  // namespace dualmem
