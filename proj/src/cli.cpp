#include "dualmem/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dualmem/evaluation.hpp"
#include "dualmem/runner.hpp"
#include "dualmem/task_file.hpp"

namespace dualmem {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : Error {
    using Error::Error;
};

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
}

// Model-access flags shared by every subcommand that talks to a model.
struct ModelFlags {
    std::string script;
    std::string endpoint;
    std::string model;
    std::string api_key_env = "DUALMEM_API_KEY";
    double timeout_s = 120.0;
    int max_retries = 3;

    void add(CLI::App* app, const std::string& script_flag) {
        app->add_option(script_flag, script, "Scripted completions file (offline)");
        app->add_option("--endpoint", endpoint, "Chat-completions URL");
        app->add_option("--model", model, "Model id sent to the endpoint");
        app->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
        app->add_option("--timeout", timeout_s, "Request timeout in seconds");
        app->add_option("--max-retries", max_retries, "Retries on transient failures");
    }

    GatewayConfig config() const {
        GatewayConfig c;
        c.endpoint = endpoint;
        c.model_id = model;
        c.api_key_env = api_key_env;
        c.timeout_s = timeout_s;
        c.max_retries = max_retries;
        return c;
    }

    std::unique_ptr<ModelGateway> make(const std::string& fallback_script = {}, std::int64_t image_cost = 1100) const {
        const std::string s = script.empty() ? fallback_script : script;
        if (!s.empty()) return std::make_unique<ScriptedGateway>(load_script(s), TokenEstimator{image_cost});
        if (endpoint.empty()) throw UsageError("no model: give a script file or --endpoint");
        GatewayConfig c = config();
        c.validate();
        return std::make_unique<HttpGateway>(c);
    }
};

struct EmbedderFlags {
    std::string kind = "hash";
    std::string url = "http://localhost:8000";
    std::string model;

    void add(CLI::App* app) {
        app->add_option("--embedder", kind, "hash (built-in) or http")->check(CLI::IsMember({"hash", "http"}));
        app->add_option("--embed-url", url, "Embedding service base URL");
        app->add_option("--embed-model", model, "Expected embedding model id");
    }

    std::unique_ptr<Embedder> make() const {
        if (kind == "hash") return std::make_unique<HashingEmbedder>();
        auto e = std::make_unique<HttpEmbedder>(url, model.empty() ? std::nullopt : std::optional<std::string>(model));
        e->connect();
        return e;
    }
};

std::string default_template_dir() {
    if (const char* env = std::getenv("DUALMEM_TEMPLATES")) return env;
    return "templates";
}

// ---------------------------------------------------------------------------

struct RunCmd {
    std::string mode = "in_ex";
    std::string bank;
    std::string site;
    std::string sites_dir = "sites";
    std::vector<std::string> tasks;
    std::string out;
    std::string out_dir = "runs";
    std::string templates = default_template_dir();
    int k = 5;
    int top = 5;
    int max_steps = 60;
    int jobs = 1;
    std::int64_t image_cost = 1100;
    ModelFlags model;
    EmbedderFlags embedder;

    void add(CLI::App& app) {
        CLI::App* cmd = app.add_subcommand("run", "Run tasks and write trajectory files");
        cmd->add_option("--mode", mode, "normal, in, ex or in_ex")->check(CLI::IsMember({"normal", "in", "ex", "in_ex"}));
        cmd->add_option("--bank", bank, "Insight bank file (ex and in_ex modes)");
        cmd->add_option("--site", site, "Site pack name or directory");
        cmd->add_option("--sites-dir", sites_dir, "Directory holding site packs");
        cmd->add_option("--task", tasks, "Task file (repeatable)")->required();
        cmd->add_option("--out", out, "Trajectory output file (single task)");
        cmd->add_option("--out-dir", out_dir, "Trajectory output directory");
        cmd->add_option("--templates", templates, "Prompt template directory");
        cmd->add_option("--k", k, "Observation window");
        cmd->add_option("--top", top, "Retrieved bank entries");
        cmd->add_option("--max-steps", max_steps, "Step cap");
        cmd->add_option("--jobs", jobs, "Concurrent tasks")->check(CLI::PositiveNumber);
        cmd->add_option("--image-cost", image_cost, "Token estimate per image");
        model.add(cmd, "--agent-script");
        embedder.add(cmd);
        cmd->callback([this] { exec(); });
    }

    int status = 0;

    void exec() {
        if (!out.empty() && tasks.size() != 1) throw UsageError("--out takes a single --task; use --out-dir");
        RunConfig cfg;
        cfg.mode = parse_mode(mode);
        cfg.k = k;
        cfg.i = top;
        cfg.max_steps = max_steps;
        cfg.bank_path = bank;
        cfg.agent = model.config();
        cfg.template_dir = templates;
        cfg.image_cost = image_cost;
        try {
            cfg.validate();
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        const PromptSet prompts = PromptSet::load(templates);

        std::unique_ptr<Embedder> emb;
        std::optional<InsightBank> loaded;
        std::optional<BankRetriever> retriever;
        if (uses_external_memory(cfg.mode)) {
            emb = embedder.make();
            loaded = load_bank(bank);
            retriever.emplace(*loaded, *emb);
        }

        std::vector<TaskFile> task_files;
        for (const std::string& t : tasks) {
            try {
                task_files.push_back(load_task_file(t));
            } catch (const Error& e) {
                throw UsageError(e.what());
            }
        }

        std::vector<char> ok(tasks.size(), 0);
        run_parallel(tasks.size(), static_cast<std::size_t>(jobs), [&](std::size_t idx) {
            const TaskFile& tf = task_files[idx];
            const std::string site_name = !site.empty() ? site : tf.site.value_or("");
            if (site_name.empty()) throw UsageError("task '" + tf.query.task_id + "' names no site; pass --site");
            SitePack pack = validate_sitepack(resolve_site(site_name, sites_dir, tf.path.parent_path()));
            GoalSpec goal = tf.goal.value_or(pack.goal);
            SimulatedEnvironment env(std::move(pack), cfg.max_steps);

            const auto script = tf.script_for(cfg.mode);
            auto agent = model.make(script ? script->string() : std::string(), cfg.image_cost);

            RunConfig task_cfg = cfg;
            if (task_cfg.agent.model_id.empty()) task_cfg.agent.model_id = agent->model_id();
            RunnerDeps deps{*agent, prompts, retriever ? &*retriever : nullptr, TokenEstimator{cfg.image_cost}};
            Trajectory traj = run_task(env, tf.query, task_cfg, deps);
            const JudgeVerdict v = judge_oracle(traj, goal);
            traj.success = v.success;
            ok[idx] = v.success;

            const fs::path dest = !out.empty() ? fs::path(out)
                                               : fs::path(out_dir) / (tf.query.task_id + "." + mode + ".jsonl");
            write_trajectory(traj, dest);
            spdlog::info("task '{}': {} ({}) -> {}", tf.query.task_id, v.success ? "success" : "failure", v.rationale,
                         dest.string());
            return traj;
        });
        status = std::all_of(ok.begin(), ok.end(), [](char b) { return b != 0; }) ? 0 : 1;
    }
};

struct BankCmd {
    std::vector<std::string> trajectories;
    std::string out = "bank.jsonl";
    std::string templates = default_template_dir();
    ModelFlags model;
    EmbedderFlags build_embedder;

    std::string bank;
    std::string text;
    int top = 5;
    EmbedderFlags query_embedder;

    std::ostream* out_stream = nullptr;

    void add(CLI::App& app, std::ostream& os) {
        out_stream = &os;
        CLI::App* cmd = app.add_subcommand("bank", "Build or query an insight bank");
        cmd->require_subcommand(1);

        CLI::App* build = cmd->add_subcommand("build", "Distil successful trajectories into a bank");
        build->add_option("--trajectory", trajectories, "Trajectory file (repeatable)")->required();
        build->add_option("--out", out, "Bank output file");
        build->add_option("--templates", templates, "Prompt template directory");
        model.add(build, "--abstractor-script");
        build_embedder.add(build);
        build->callback([this] { exec_build(); });

        CLI::App* query = cmd->add_subcommand("query", "Show the top-ranked insight sets for a query");
        query->add_option("--bank", bank, "Bank file")->required();
        query->add_option("--text", text, "Query text")->required();
        query->add_option("--top", top, "Number of entries")->check(CLI::PositiveNumber);
        query_embedder.add(query);
        query->callback([this] { exec_query(); });
    }

    void exec_build() {
        std::vector<Trajectory> trajs;
        for (const auto& p : trajectories) trajs.push_back(read_trajectory(p));
        const PromptSet prompts = PromptSet::load(templates);
        auto abstractor = model.make();
        auto emb = build_embedder.make();
        const InsightBank b = build_bank(trajs, *emb, *abstractor, prompts);
        save_bank(b, out);
        *out_stream << "wrote " << b.size() << " entries to " << out << "\n";
    }

    void exec_query() {
        const InsightBank b = load_bank(bank);
        auto emb = query_embedder.make();
        const auto sets = retrieve(b, text, top, *emb);
        for (std::size_t r = 0; r < sets.size(); ++r) {
            const BankEntry& e = b.entries[sets[r].entry_ref];
            *out_stream << fmt::format("#{} entry {} similarity {:.4f}  {}\n", r + 1, sets[r].entry_ref,
                                       sets[r].similarity, e.hist_query);
            for (const Insight& i : sets[r].insights) *out_stream << "    " << render_insight(i) << "\n";
        }
    }
};

struct EnvCmd {
    std::string pack;
    std::ostream* out_stream = nullptr;

    void add(CLI::App& app, std::ostream& os) {
        out_stream = &os;
        CLI::App* cmd = app.add_subcommand("env", "Site pack tools");
        cmd->require_subcommand(1);
        CLI::App* v = cmd->add_subcommand("validate", "Check a site pack");
        v->add_option("pack", pack, "Site pack directory or manifest")->required();
        v->callback([this] { exec(); });
    }

    void exec() {
        const SitePack p = validate_sitepack(pack);
        for (const auto& w : p.warnings) *out_stream << "warning: " << w << "\n";
        *out_stream << "ok: site '" << p.name << "', " << p.pages.size() << " pages\n";
    }
};

struct EvalCmd {
    std::vector<std::string> trajectories;
    std::string site;
    std::string sites_dir = "sites";
    std::string templates = default_template_dir();
    bool write_back = false;
    ModelFlags judge;

    std::vector<std::string> report_trajs;
    std::string group_by = "site";
    std::string csv;

    std::string single;
    std::string baseline;
    std::string m2;
    std::string curve_out;

    std::ostream* out_stream = nullptr;
    std::ostream* err_stream = nullptr;
    int status = 0;

    void add(CLI::App& app, std::ostream& os, std::ostream& es) {
        out_stream = &os;
        err_stream = &es;
        CLI::App* cmd = app.add_subcommand("eval", "Judge trajectories and report metrics");
        cmd->require_subcommand(1);

        CLI::App* j = cmd->add_subcommand("judge", "Judge trajectories (oracle with --site, else model)");
        j->add_option("--trajectory", trajectories, "Trajectory file (repeatable)")->required();
        j->add_option("--site", site, "Site pack for the rule-based judge");
        j->add_option("--sites-dir", sites_dir, "Directory holding site packs");
        j->add_option("--templates", templates, "Prompt template directory");
        j->add_flag("--write", write_back, "Store the verdict in the trajectory file");
        judge.add(j, "--judge-script");
        j->callback([this] { exec_judge(); });

        CLI::App* r = cmd->add_subcommand("report", "Aggregate judged trajectories");
        r->add_option("--trajectory", report_trajs, "Trajectory file (repeatable)")->required();
        r->add_option("--group-by", group_by, "site or difficulty")->check(CLI::IsMember({"site", "difficulty"}));
        r->add_option("--csv", csv, "Also write the report as CSV");
        r->callback([this] { exec_report(); });

        CLI::App* c = cmd->add_subcommand("curve", "Cumulative token curve(s) as CSV");
        auto* t = c->add_option("--trajectory", single, "Single trajectory");
        auto* b = c->add_option("--baseline", baseline, "Baseline (normal mode) trajectory");
        auto* m = c->add_option("--m2", m2, "Memory-mode trajectory");
        t->excludes(b)->excludes(m);
        b->needs(m);
        m->needs(b);
        c->add_option("--out", curve_out, "CSV output file");
        c->callback([this] { exec_curve(); });
    }

    void exec_judge() {
        std::optional<GoalSpec> goal;
        if (!site.empty()) goal = validate_sitepack(resolve_site(site, sites_dir, fs::current_path())).goal;
        std::unique_ptr<ModelGateway> gw;
        std::optional<PromptSet> prompts;
        if (!goal) {
            gw = judge.make();
            prompts = PromptSet::load(templates);
        }
        for (const auto& p : trajectories) {
            Trajectory t = read_trajectory(p);
            const JudgeVerdict v = goal ? judge_oracle(t, *goal) : judge_model(t, *gw, *prompts);
            *out_stream << p << ": " << (v.success ? "SUCCESS" : "FAILURE") << "  " << v.rationale << "\n";
            if (!v.success) status = 1;
            if (write_back) {
                t.success = v.success;
                write_trajectory(t, p);
            }
        }
    }

    void exec_report() {
        std::vector<Trajectory> ts;
        std::vector<JudgeVerdict> vs;
        for (const auto& p : report_trajs) {
            ts.push_back(read_trajectory(p));
            if (!ts.back().success) spdlog::warn("{} carries no verdict; counted as failure", p);
            vs.push_back(JudgeVerdict{ts.back().success.value_or(false), "", JudgeKind::Oracle});
        }
        const auto rows = aggregate(ts, vs, parse_group_by(group_by));
        *out_stream << format_report(rows);
        if (!csv.empty()) write_file(csv, format_report_csv(rows));
    }

    void exec_curve() {
        std::string text;
        std::string summary;
        if (!single.empty()) {
            text = token_curve_csv(read_trajectory(single));
        } else if (!baseline.empty()) {
            const CurveComparison c = token_curve(read_trajectory(baseline), read_trajectory(m2));
            text = token_curve_csv(c);
            summary = fmt::format("crossover_step={} reduction_pct={:.2f}\n",
                                  c.crossover_step ? std::to_string(*c.crossover_step) : "none", c.reduction_pct);
        } else {
            throw UsageError("give --trajectory, or --baseline with --m2");
        }
        if (curve_out.empty()) {
            *out_stream << text;
            *err_stream << summary;
        } else {
            write_file(curve_out, text);
            *out_stream << summary;
        }
    }
};

struct ReplayCmd {
    std::string trajectory;
    std::string templates = default_template_dir();
    int only_step = 0;
    std::ostream* out_stream = nullptr;

    void add(CLI::App& app, std::ostream& os) {
        out_stream = &os;
        CLI::App* cmd = app.add_subcommand("replay", "Re-render the prompts of a recorded trajectory");
        cmd->add_option("--trajectory", trajectory, "Trajectory file")->required();
        cmd->add_option("--templates", templates, "Prompt template directory");
        cmd->add_option("--step", only_step, "Only this step");
        cmd->callback([this] { exec(); });
    }

    void exec() {
        const Trajectory t = read_trajectory(trajectory);
        const TokenEstimator est{t.config.image_cost};
        const auto bundles = replay_prompts(t, PromptSet::load(templates), est);
        for (std::size_t i = 0; i < bundles.size(); ++i) {
            const int step_no = static_cast<int>(i) + 1;
            if (only_step != 0 && only_step != step_no) continue;
            *out_stream << "##### step " << step_no << " (" << count_tokens(bundles[i], est) << " tokens)\n"
                        << render_bundle(bundles[i]);
        }
    }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Web agent runner with step-summary and insight-bank memory", "dualmem"};
    app.set_config("--config", "", "Config file (key=value or TOML); command-line flags win");
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    RunCmd run;
    BankCmd bank;
    EnvCmd env;
    EvalCmd eval;
    ReplayCmd replay;
    run.add(app);
    bank.add(app, out);
    env.add(app, out);
    eval.add(app, out, err);
    replay.add(app, out);
    if (!spdlog::get("dualmem")) spdlog::set_default_logger(spdlog::stderr_color_mt("dualmem"));
    app.parse_complete_callback([&] { spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info); });

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(std::move(rev));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return std::max(run.status, eval.status);
}

}  // namespace dualmem
