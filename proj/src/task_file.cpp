#include "dualmem/task_file.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dualmem {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<fs::path> TaskFile::script_for(Mode mode) const {
    if (auto it = scripts.find(std::string(to_string(mode))); it != scripts.end()) return it->second;
    if (auto it = scripts.find("default"); it != scripts.end()) return it->second;
    return std::nullopt;
}

TaskFile load_task_file(const fs::path& arg) {
    fs::path path = arg;
    if (!fs::is_regular_file(path)) path = fs::path(arg.string() + ".json");
    std::ifstream in(path);
    if (!in) throw Error("task file not found: " + arg.string());
    std::ostringstream ss;
    ss << in.rdbuf();

    TaskFile t;
    t.path = path;
    try {
        const json j = json::parse(ss.str());
        t.query.text = j.at("query").get<std::string>();
        t.query.task_id = j.value("task_id", path.stem().string());
        if (j.contains("site_tag")) t.query.site_tag = j["site_tag"].get<std::string>();
        if (j.contains("difficulty")) t.query.difficulty = j["difficulty"].get<std::string>();
        if (j.contains("site")) t.site = j["site"].get<std::string>();
        const fs::path base = path.parent_path();
        if (j.contains("agent_script")) t.scripts["default"] = base / j["agent_script"].get<std::string>();
        if (j.contains("agent_scripts")) {
            for (const auto& [mode, p] : j["agent_scripts"].items()) t.scripts[mode] = base / p.get<std::string>();
        }
        if (j.contains("goal")) {
            GoalSpec g;
            const json& gj = j["goal"];
            if (gj.contains("required_page")) g.required_page = gj["required_page"].get<std::string>();
            if (gj.contains("answer_pattern")) g.required_answer_pattern = gj["answer_pattern"].get<std::string>();
            t.goal = g;
        }
    } catch (const json::exception& e) {
        throw Error("task file " + path.string() + ": " + e.what());
    }
    validate(t.query);
    return t;
}

fs::path resolve_site(const std::string& name, const fs::path& sites_dir, const fs::path& task_dir) {
    for (const fs::path& candidate : {fs::path(name), sites_dir / name, task_dir / name}) {
        if (fs::exists(candidate / "site.jsonl") || fs::is_regular_file(candidate)) return candidate;
    }
    throw FixtureError("site pack not found: " + name);
}

}  // namespace dualmem
