#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "dualmem/environment.hpp"
#include "dualmem/types.hpp"

namespace dualmem {

/// A task description on disk (JSON): query, site, optional goal override
/// and optional scripted agent completions for offline runs.
///
///   {"task_id": "t01", "query": "...", "site": "../sites/demo-shop",
///    "site_tag": "shop", "difficulty": "easy",
///    "goal": {"required_page": "specs", "answer_pattern": "600\\s?g"},
///    "agent_script": "../scripts/t01.txt",
///    "agent_scripts": {"normal": "../scripts/loop.txt"}}
///
/// Relative paths resolve against the task file's directory.
struct TaskFile {
    std::filesystem::path path;
    Query query;
    std::optional<std::string> site;
    std::map<std::string, std::filesystem::path> scripts;  // mode name or "default"
    std::optional<GoalSpec> goal;

    /// Script for `mode`, falling back to the default script.
    std::optional<std::filesystem::path> script_for(Mode mode) const;
};

/// Accepts the path with or without its ".json" suffix.
TaskFile load_task_file(const std::filesystem::path& path);

/// Finds a site pack by directory, manifest path, `sites_dir/name` or a path
/// relative to `task_dir`. Throws FixtureError if none exists.
std::filesystem::path resolve_site(const std::string& name, const std::filesystem::path& sites_dir,
                                   const std::filesystem::path& task_dir);

}  // namespace dualmem
