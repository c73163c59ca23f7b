#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "dualmem/context.hpp"
#include "dualmem/environment.hpp"
#include "dualmem/gateway.hpp"
#include "dualmem/runner.hpp"
#include "dualmem/task_file.hpp"

namespace dualmem::test {

inline std::filesystem::path fixture(const std::string& rel) {
    return std::filesystem::path(DUALMEM_FIXTURE_DIR) / rel;
}

inline std::filesystem::path template_dir() { return DUALMEM_TEMPLATE_DIR; }

inline const PromptSet& prompts() {
    static const PromptSet p = PromptSet::load(template_dir());
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("dualmem-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

struct FixtureTask {
    TaskFile file;
    SitePack site;
    GoalSpec goal;
};

inline FixtureTask load_fixture_task(const std::string& id) {
    FixtureTask t;
    t.file = load_task_file(fixture("tasks/" + id + ".json"));
    t.site = validate_sitepack(resolve_site(*t.file.site, fixture("sites"), t.file.path.parent_path()));
    t.goal = t.file.goal.value_or(t.site.goal);
    return t;
}

}  // namespace dualmem::test
