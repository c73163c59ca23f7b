#include "dualmem/trajectory.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dualmem {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "dualmem-trajectory";

template <typename T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<T>();
}

json gateway_json(const GatewayConfig& g) {
    json backoff = json::array();
    for (auto ms : g.backoff) backoff.push_back(ms.count());
    return {{"endpoint", g.endpoint},       {"model_id", g.model_id},     {"api_key_env", g.api_key_env},
            {"timeout_s", g.timeout_s},     {"max_retries", g.max_retries}, {"backoff_ms", backoff},
            {"image_cost", g.image_cost}};
}

GatewayConfig gateway_from(const json& j) {
    GatewayConfig g;
    g.endpoint = j.value("endpoint", "");
    g.model_id = j.value("model_id", "");
    g.api_key_env = j.value("api_key_env", g.api_key_env);
    g.timeout_s = j.value("timeout_s", g.timeout_s);
    g.max_retries = j.value("max_retries", g.max_retries);
    if (j.contains("backoff_ms")) {
        g.backoff.clear();
        for (const auto& v : j["backoff_ms"]) g.backoff.emplace_back(v.get<std::int64_t>());
    }
    g.image_cost = j.value("image_cost", g.image_cost);
    return g;
}

json config_json(const RunConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"k", c.k},
            {"i", c.i},
            {"max_steps", c.max_steps},
            {"bank_path", c.bank_path},
            {"agent", gateway_json(c.agent)},
            {"judge", gateway_json(c.judge)},
            {"template_dir", c.template_dir},
            {"parse_retry_limit", c.parse_retry_limit},
            {"summary_retry_limit", c.summary_retry_limit},
            {"max_summary_chars", c.max_summary_chars},
            {"image_cost", c.image_cost}};
}

RunConfig config_from(const json& j) {
    RunConfig c;
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.k = j.value("k", c.k);
    c.i = j.value("i", c.i);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.bank_path = j.value("bank_path", "");
    if (j.contains("agent")) c.agent = gateway_from(j["agent"]);
    if (j.contains("judge")) c.judge = gateway_from(j["judge"]);
    c.template_dir = j.value("template_dir", "");
    c.parse_retry_limit = j.value("parse_retry_limit", c.parse_retry_limit);
    c.summary_retry_limit = j.value("summary_retry_limit", c.summary_retry_limit);
    c.max_summary_chars = j.value("max_summary_chars", c.max_summary_chars);
    c.image_cost = j.value("image_cost", c.image_cost);
    return c;
}

json insights_json(const std::vector<Insight>& insights) {
    json arr = json::array();
    for (const Insight& i : insights) arr.push_back({{"tag", to_string(i.tag)}, {"text", i.text}});
    return arr;
}

std::vector<Insight> insights_from(const json& arr) {
    std::vector<Insight> out;
    for (const auto& j : arr) {
        const std::string tag = j.at("tag").get<std::string>();
        auto t = topic_tag_from_string(tag);
        if (!t) throw Error("unknown insight tag '" + tag + "'");
        out.push_back(Insight{*t, j.at("text").get<std::string>()});
    }
    return out;
}

json action_json(const Action& a) {
    json j{{"type", to_string(a.type)}};
    j["element"] = a.element ? json::array({a.element->x, a.element->y}) : json(nullptr);
    j["value"] = opt(a.value);
    return j;
}

Action action_from(const json& j) {
    const std::string verb = j.at("type").get<std::string>();
    auto type = action_type_from_string(verb);
    if (!type) throw Error("unknown action type '" + verb + "' in trajectory");
    std::optional<Coord> el;
    if (j.contains("element") && !j["element"].is_null()) el = Coord{j["element"][0].get<int>(), j["element"][1].get<int>()};
    return Action{*type, el, get_opt<std::string>(j, "value")};
}

json observation_json(const Observation& o) {
    return {{"step", o.step_index},
            {"screenshot", o.screenshot},
            {"text", o.semantic_text},
            {"viewport", json::array({o.viewport.width, o.viewport.height})},
            {"location", o.location}};
}

Observation observation_from(const json& j) {
    Observation o;
    o.step_index = j.at("step").get<int>();
    o.screenshot = j.value("screenshot", "");
    o.semantic_text = j.value("text", "");
    o.viewport = Viewport{j.at("viewport").at(0).get<int>(), j.at("viewport").at(1).get<int>()};
    o.location = j.value("location", "");
    return o;
}

}  // namespace

void RunConfig::validate(bool bank_supplied) const {
    if (k < 1) throw Error("k must be >= 1");
    if (i < 1) throw Error("insight count must be >= 1");
    if (max_steps < 1) throw Error("max_steps must be >= 1");
    if (parse_retry_limit < 0 || summary_retry_limit < 0) throw Error("retry limits must be >= 0");
    if (image_cost < 0) throw Error("image cost must be >= 0");
    if (max_summary_chars < 64) throw Error("max_summary_chars must be >= 64");
    if (uses_external_memory(mode) && bank_path.empty() && !bank_supplied) {
        throw Error(std::string("mode ") + std::string(to_string(mode)) + " requires an insight bank");
    }
}

std::string_view to_string(TrajectoryStatus s) {
    switch (s) {
        case TrajectoryStatus::Answered: return "answered";
        case TrajectoryStatus::StepLimit: return "step_limit";
        case TrajectoryStatus::Aborted: return "aborted";
    }
    return "aborted";
}

TrajectoryStatus parse_status(std::string_view s) {
    if (s == "answered") return TrajectoryStatus::Answered;
    if (s == "step_limit") return TrajectoryStatus::StepLimit;
    if (s == "aborted") return TrajectoryStatus::Aborted;
    throw Error("unknown trajectory status '" + std::string(s) + "'");
}

std::string serialize_trajectory(const Trajectory& t) {
    std::string out;
    json retrieved = json::array();
    for (const InsightSet& s : t.retrieved) {
        retrieved.push_back({{"entry", s.entry_ref}, {"similarity", s.similarity}, {"insights", insights_json(s.insights)}});
    }
    json header{{"type", "header"},
                {"format", kFormat},
                {"version", kTrajectoryFormatVersion},
                {"task",
                 {{"task_id", t.task.task_id},
                  {"text", t.task.text},
                  {"site_tag", opt(t.task.site_tag)},
                  {"difficulty", opt(t.task.difficulty)}}},
                {"config", config_json(t.config)},
                {"retrieved", retrieved}};
    out += header.dump() + "\n";

    for (const StepRecord& s : t.steps) {
        json summary = nullptr;
        if (s.summary) summary = {{"step", s.summary->step_index}, {"state", s.summary->state_part}, {"action", s.summary->action_part}};
        json rec{{"type", "step"},
                 {"step", s.step_index},
                 {"thought", s.thought},
                 {"action", action_json(s.action)},
                 {"summary", summary},
                 {"summary_fallback", s.summary_fallback},
                 {"observation", observation_json(s.observation)},
                 {"usage",
                  {{"prompt", s.token_usage.prompt_tokens},
                   {"completion", s.token_usage.completion_tokens},
                   {"source", to_string(s.token_usage.source)}}}};
        out += rec.dump() + "\n";
    }

    json footer{{"type", "footer"},
                {"status", to_string(t.status)},
                {"answer", opt(t.final_answer)},
                {"final_location", t.final_location},
                {"abort_reason", opt(t.abort_reason)},
                {"success", opt(t.success)},
                {"cumulative_tokens", t.per_step_cumulative_tokens}};
    out += footer.dump() + "\n";
    return out;
}

void write_trajectory(const Trajectory& t, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write trajectory " + path.string());
    out << serialize_trajectory(t);
}

Trajectory parse_trajectory(std::string_view text) {
    Trajectory t;
    bool have_header = false, have_footer = false;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            // A torn last line is a truncated write; anything earlier is corruption.
            if (!have_header) throw TruncationError("trajectory header is unreadable");
            spdlog::warn("trajectory line {} is unreadable, treating the file as truncated", lineno);
            break;
        }
        const std::string type = j.value("type", "");
        try {
            if (type == "header") {
                if (j.value("format", "") != kFormat) throw FormatVersionError("not a trajectory file");
                const int version = j.value("version", -1);
                if (version != kTrajectoryFormatVersion) {
                    throw FormatVersionError("unsupported trajectory version " + std::to_string(version));
                }
                const auto& task = j.at("task");
                t.task.task_id = task.value("task_id", "");
                t.task.text = task.at("text").get<std::string>();
                t.task.site_tag = get_opt<std::string>(task, "site_tag");
                t.task.difficulty = get_opt<std::string>(task, "difficulty");
                t.config = config_from(j.at("config"));
                for (const auto& r : j.value("retrieved", json::array())) {
                    t.retrieved.push_back(InsightSet{r.at("entry").get<std::size_t>(), r.at("similarity").get<double>(),
                                                     insights_from(r.at("insights"))});
                }
                have_header = true;
            } else if (!have_header) {
                throw TruncationError("trajectory has no header");
            } else if (type == "step") {
                StepRecord s;
                s.step_index = j.at("step").get<int>();
                s.thought = j.value("thought", "");
                s.action = action_from(j.at("action"));
                if (!j["summary"].is_null()) {
                    const auto& sj = j["summary"];
                    s.summary = Summary{sj.at("step").get<int>(), sj.at("state").get<std::string>(),
                                        sj.at("action").get<std::string>()};
                }
                s.summary_fallback = j.value("summary_fallback", false);
                s.observation = observation_from(j.at("observation"));
                const auto& u = j.at("usage");
                s.token_usage = TokenUsage{u.at("prompt").get<std::int64_t>(), u.at("completion").get<std::int64_t>(),
                                           parse_usage_source(u.at("source").get<std::string>())};
                t.steps.push_back(std::move(s));
            } else if (type == "footer") {
                t.status = parse_status(j.at("status").get<std::string>());
                t.final_answer = get_opt<std::string>(j, "answer");
                t.final_location = j.value("final_location", "");
                t.abort_reason = get_opt<std::string>(j, "abort_reason");
                t.success = get_opt<bool>(j, "success");
                t.per_step_cumulative_tokens = j.at("cumulative_tokens").get<std::vector<std::int64_t>>();
                have_footer = true;
            } else {
                throw Error("unknown trajectory record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw Error("trajectory line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) throw TruncationError("trajectory has no header");
    if (!have_footer) {
        spdlog::warn("trajectory for task '{}' has no footer; loading as aborted", t.task.task_id);
        t.status = TrajectoryStatus::Aborted;
        t.abort_reason = "truncated log";
        t.per_step_cumulative_tokens.clear();
        std::int64_t cum = 0;
        for (const auto& s : t.steps) t.per_step_cumulative_tokens.push_back(cum += s.token_usage.total());
    }
    return t;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read trajectory " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_trajectory(ss.str());
}

std::string render_transcript(const Trajectory& t) {
    std::string out = "Task: " + t.task.text + "\n";
    for (const StepRecord& s : t.steps) {
        out += "\n--- Step " + std::to_string(s.step_index) + " ---\n";
        out += "Page: " + s.observation.location + "\n";
        out += "Observation: " + s.observation.semantic_text + "\n";
        out += "Thought: " + s.thought + "\n";
        out += "Action: " + describe_action(s.action) + "\n";
    }
    out += "\nOutcome: " + std::string(to_string(t.status));
    if (t.final_answer) out += " with answer \"" + *t.final_answer + "\"";
    out += "\n";
    return out;
}

}  // namespace dualmem
