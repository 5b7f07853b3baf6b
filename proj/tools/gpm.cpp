// gpm: batch harnesses for sequence transformation, completion and
// improvement, plus the clicker-training service.
//
// Exit status: 0 when a run completes (individual task failures are results,
// not process failures), 2 for configuration or usage errors, 1 otherwise.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include "gpm/arc.hpp"
#include "gpm/artifact.hpp"
#include "gpm/clicker_service.hpp"
#include "gpm/completion.hpp"
#include "gpm/environments.hpp"
#include "gpm/error.hpp"
#include "gpm/improve.hpp"
#include "gpm/models.hpp"
#include "gpm/pcfg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpm;

namespace {

// Flags that were given on the command line override the config file's
// section for the command; everything else keeps its config/default value.
class Flags {
public:
    explicit Flags(CLI::App* app) : app_(app) {}

    template <typename T>
    CLI::Option* add(const std::string& flag, const std::string& key, const std::string& help) {
        auto value = std::make_shared<T>();
        auto* opt = app_->add_option(flag, *value, help);
        apply_.push_back([value, opt, key](json& params) {
            if (opt->count() > 0) params[key] = *value;
        });
        return opt;
    }
    CLI::Option* list(const std::string& flag, const std::string& key, const std::string& help) {
        return add<std::vector<int>>(flag, key, help)->delimiter(',');
    }
    void apply(json& params) const {
        for (const auto& f : apply_) f(params);
    }
    CLI::App* app() const { return app_; }

private:
    CLI::App* app_;
    std::vector<std::function<void(json&)>> apply_;
};

struct Global {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    std::string model;
    std::string model_spec;
    int parallel = 1;
    std::string data_dir = GPM_DATA_DIR;
};

struct Run {
    std::string command;
    std::uint64_t seed = 0;
    int parallel = 1;
    models::ModelSpec model;
    json params;
    fs::path out;
    fs::path data_dir;

    json resolved() const {
        return {{"seed", seed}, {"parallel", parallel}, {"model", models::to_json(model)}, {"params", params}};
    }
    json header(const json& inputs = json::object()) const {
        return artifact::header(command, seed, resolved(), inputs);
    }
};

template <typename T>
T param(const json& params, const char* key, T fallback) {
    if (!params.contains(key)) return fallback;
    try {
        return params.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("parameter '") + key + "' has the wrong type");
    }
}

std::string required_path(const json& params, const char* key) {
    const auto p = param<std::string>(params, key, "");
    if (p.empty()) throw ConfigError(std::string("missing required parameter '") + key + "'");
    if (!fs::exists(p)) throw ConfigError(std::string(key) + " not found: " + p);
    return p;
}

std::string fixed(double v, int digits = 2) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

std::string canonical_kind(std::string kind) {
    if (kind == "random") return "random_policy";
    if (kind == "oracle") return "mock_oracle";
    if (kind == "searcher") return "pcfg_searcher";
    return kind;
}

bool is_oracle(const Run& run) { return run.model.kind == "mock_oracle"; }

std::unique_ptr<models::CompletionModel> oracle_from(const std::vector<std::pair<std::string, std::string>>& entries) {
    auto m = std::make_unique<models::ScriptedModel>("mock_oracle");
    for (const auto& [p, c] : entries) m->add(p, c);
    return m;
}

void write_outputs(const Run& run, const std::map<std::string, std::string>& files) {
    for (const auto& [name, content] : files) artifact::write_file(run.out / name, content);
}

json records_array(const auto& records) {
    json a = json::array();
    for (const auto& r : records) a.push_back(to_json(r));
    return a;
}

// --- pcfg -------------------------------------------------------------------------

// Rows are rule counts, columns token counts; cells outside the grid are blank.
std::string triangle_table(const std::string& title, const std::vector<int>& ks, const std::vector<int>& ws,
                           const std::function<std::optional<std::string>(int, int)>& cell) {
    std::ostringstream out;
    out << title << "\n" << std::setw(8) << "w \\ k";
    for (int k : ks) out << std::setw(8) << k;
    out << "\n";
    for (int w : ws) {
        out << std::setw(8) << w;
        for (int k : ks) {
            const auto v = pcfg::cell_included(k, w) ? cell(k, w) : std::nullopt;
            out << std::setw(8) << v.value_or("");
        }
        out << "\n";
    }
    return out.str();
}

std::pair<std::vector<int>, std::vector<int>> grid_axes(std::span<const pcfg::Task> tasks) {
    std::set<int> ks, ws;
    for (const auto& t : tasks) {
        ks.insert(t.k);
        ws.insert(t.w);
    }
    return {{ks.begin(), ks.end()}, {ws.begin(), ws.end()}};
}

int cmd_pcfg_gen(const Run& run) {
    const auto ks = param<std::vector<int>>(run.params, "k", {pcfg::kTableTokens.begin(), pcfg::kTableTokens.end()});
    const auto ws = param<std::vector<int>>(run.params, "w", {pcfg::kTableRules.begin(), pcfg::kTableRules.end()});
    const int n = param<int>(run.params, "n", 100);
    if (n < 1) throw ConfigError("n must be >= 1");
    pcfg::GeneratorOptions opt;
    opt.n_examples = param<int>(run.params, "examples", opt.n_examples);
    opt.max_leaves = param<int>(run.params, "max_leaves", opt.max_leaves);
    opt.max_output_length = param<std::size_t>(run.params, "max_output_length", opt.max_output_length);
    const auto tasks = pcfg::generate_suite(ks, ws, n, run.seed, opt);

    json full = json::array(), public_split = json::array();
    for (const auto& t : tasks) {
        full.push_back(pcfg::to_json(t, true));
        public_split.push_back(pcfg::to_json(t, false));
    }
    const auto hdr = run.header();
    write_outputs(run, {{"pcfg_dataset.jsonl", artifact::jsonl(hdr, full)},
                        {"pcfg_public.jsonl", artifact::jsonl(hdr, public_split)}});
    const auto [gk, gw] = grid_axes(tasks);
    std::cout << triangle_table("tasks per cell", gk, gw, [&](int k, int w) -> std::optional<std::string> {
        const auto c = std::count_if(tasks.begin(), tasks.end(), [&](const auto& t) { return t.k == k && t.w == w; });
        return c ? std::optional(std::to_string(c)) : std::nullopt;
    });
    std::cout << "wrote " << tasks.size() << " tasks to " << (run.out / "pcfg_dataset.jsonl").string() << "\n";
    return 0;
}

std::unique_ptr<codec::Alphabet> alphabet_for(const Run& run) {
    if (!run.params.contains("alphabet_seed")) return nullptr;
    const auto pool_path = param<std::string>(run.params, "alphabet_pool", (run.data_dir / "alphabet_pool.txt").string());
    const auto pool = codec::load_pool(pool_path);
    return std::make_unique<codec::Alphabet>(
        codec::sample_alphabet(param<std::uint64_t>(run.params, "alphabet_seed", 0), pool));
}

int cmd_pcfg_eval(Run& run) {
    const auto path = required_path(run.params, "dataset");
    const auto tasks = pcfg::read_dataset(path);
    const auto alphabet = alphabet_for(run);
    pcfg::EvalOptions opt;
    opt.parallelism = run.parallel;
    opt.max_tokens = param<int>(run.params, "max_tokens", 0);
    opt.temperature = param<double>(run.params, "temperature", 0.0);
    opt.alphabet = alphabet.get();

    std::unique_ptr<models::CompletionModel> model;
    if (is_oracle(run)) {
        for (const auto& t : tasks)
            if (!t.has_answer) throw ConfigError("mock_oracle needs a dataset with answers; " + t.id + " has none");
        model = oracle_from(pcfg::oracle_entries(tasks, opt));
    } else {
        model = models::make_model(run.model);
    }
    const auto report = pcfg::evaluate(*model, tasks, opt);

    const auto [ks, ws] = grid_axes(tasks);
    const auto table = triangle_table("accuracy (%)", ks, ws, [&](int k, int w) -> std::optional<std::string> {
        const auto it = report.cells.find({k, w});
        if (it == report.cells.end()) return std::nullopt;
        return fixed(it->second.accuracy(), 0);
    });
    json cells = json::array();
    for (const auto& [kw, c] : report.cells)
        cells.push_back({{"k", kw.first}, {"w", kw.second}, {"solved", c.solved}, {"total", c.total},
                         {"accuracy", c.accuracy()}});
    const auto hdr = run.header({{"dataset", artifact::file_sha256(path)}});
    const json summary = {{"artifact", hdr},
                          {"model", model->name()},
                          {"solved", report.overall.solved},
                          {"total", report.overall.total},
                          {"accuracy", report.overall.accuracy()},
                          {"cells", cells}};
    write_outputs(run, {{"results.jsonl", artifact::jsonl(hdr, records_array(report.records))},
                        {"summary.json", summary.dump(2) + "\n"},
                        {"table.txt", table}});
    std::cout << table << "solved " << report.overall.solved << "/" << report.overall.total << "\n";
    return 0;
}

int cmd_pcfg_solve(Run& run) {
    const auto path = required_path(run.params, "dataset");
    const auto tasks = pcfg::read_dataset(path);
    pcfg::SearchLimits limits;
    limits.max_ops = param<int>(run.params, "max_ops", limits.max_ops);
    limits.max_leaves = param<int>(run.params, "max_leaves", limits.max_leaves);
    limits.node_budget = param<std::uint64_t>(run.params, "node_budget", limits.node_budget);
    if (limits.max_ops < 0 || limits.max_leaves < 1) throw ConfigError("max_ops must be >= 0 and max_leaves >= 1");

    struct Outcome {
        std::optional<pcfg::SearchResult> found;
        std::optional<pcfg::Seq> prediction;
        std::string error;
    };
    std::vector<Outcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < tasks.size();) {
            const auto& t = tasks[i];
            try {
                outcomes[i].found = pcfg::search(t.examples, limits);
                if (outcomes[i].found) {
                    const auto leaves = pcfg::split_segments(t.query.input, outcomes[i].found->partition);
                    outcomes[i].prediction = pcfg::eval_program(outcomes[i].found->program, leaves, limits.shift);
                }
            } catch (const std::exception& e) {
                outcomes[i].error = e.what();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (int i = 0; i < std::max(1, run.parallel); ++i) pool.emplace_back(worker);
    }

    struct Cell {
        int total = 0, consistent = 0, correct = 0, scored = 0;
    };
    std::map<std::pair<int, int>, Cell> cells;
    Cell overall;
    json records = json::array();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = tasks[i];
        const auto& o = outcomes[i];
        const bool correct = t.has_answer && o.prediction && *o.prediction == t.query.output;
        for (Cell* c : {&cells[{t.k, t.w}], &overall}) {
            ++c->total;
            c->consistent += o.found.has_value();
            c->scored += t.has_answer;
            c->correct += correct;
        }
        json r = {{"task_id", t.id}, {"k", t.k}, {"w", t.w}, {"consistent", o.found.has_value()}};
        if (o.found) {
            r["program"] = o.found->program.to_sexpr();
            r["partition"] = o.found->partition;
            r["nodes"] = o.found->nodes;
        }
        if (o.prediction) r["prediction"] = *o.prediction;
        if (t.has_answer) r["correct"] = correct;
        if (!o.error.empty()) r["error"] = o.error;
        records.push_back(std::move(r));
    }

    const auto [ks, ws] = grid_axes(tasks);
    auto lookup = [&](auto fn) {
        return [&, fn](int k, int w) -> std::optional<std::string> {
            const auto it = cells.find({k, w});
            if (it == cells.end()) return std::nullopt;
            return fn(it->second);
        };
    };
    const std::string table =
        triangle_table("consistent program found (%)", ks, ws,
                       lookup([](const Cell& c) { return fixed(100.0 * c.consistent / c.total, 0); })) +
        "\n" +
        triangle_table("query accuracy (%)", ks, ws, lookup([](const Cell& c) -> std::optional<std::string> {
                           if (c.scored == 0) return "-";
                           return fixed(100.0 * c.correct / c.scored, 0);
                       }));
    json cell_rows = json::array();
    for (const auto& [kw, c] : cells)
        cell_rows.push_back({{"k", kw.first},
                             {"w", kw.second},
                             {"total", c.total},
                             {"consistent", c.consistent},
                             {"scored", c.scored},
                             {"correct", c.correct},
                             {"accuracy", c.scored ? 100.0 * c.correct / c.scored : 0.0}});
    const auto hdr = run.header({{"dataset", artifact::file_sha256(path)}});
    const json summary = {{"artifact", hdr},
                          {"total", overall.total},
                          {"consistent", overall.consistent},
                          {"correct", overall.correct},
                          {"scored", overall.scored},
                          {"cells", cell_rows}};
    write_outputs(run, {{"results.jsonl", artifact::jsonl(hdr, records)},
                        {"summary.json", summary.dump(2) + "\n"},
                        {"table.txt", table}});
    std::cout << table << "consistent " << overall.consistent << "/" << overall.total << ", correct "
              << overall.correct << "/" << overall.scored << "\n";
    return 0;
}

// --- arc --------------------------------------------------------------------------

int cmd_arc_eval(Run& run) {
    const auto suite_path = param<std::string>(run.params, "suite", (run.data_dir / "arc").string());
    const auto suite = arc::load_suite(suite_path);
    for (const auto& w : suite.warnings) std::cerr << "warning: " << w << "\n";
    const auto alphabet = alphabet_for(run);
    arc::EvalOptions opt;
    opt.parallelism = run.parallel;
    opt.candidates = param<int>(run.params, "candidates", 1);
    opt.temperature = param<double>(run.params, "temperature", 0.0);
    opt.seed = run.seed;
    opt.alphabet = alphabet.get();
    if (opt.candidates < 1) throw ConfigError("candidates must be >= 1");

    auto model = is_oracle(run) ? oracle_from(arc::oracle_entries(suite.tasks, opt)) : models::make_model(run.model);
    const auto report = arc::run_eval(*model, suite.tasks, opt);
    json inputs = {{"suite", suite.hash}};
    if (alphabet) inputs["alphabet"] = artifact::sha256_hex(json(alphabet->mapping()).dump());
    const auto hdr = run.header(inputs);
    const json summary = {{"artifact", hdr},
                          {"model", model->name()},
                          {"solved", report.solved},
                          {"total", report.total},
                          {"errored", report.errored}};
    write_outputs(run, {{"results.jsonl", artifact::jsonl(hdr, records_array(report.records))},
                        {"summary.json", summary.dump(2) + "\n"}});
    std::cout << "solved " << report.solved << "/" << report.total;
    if (report.errored) std::cout << " (" << report.errored << " errored)";
    std::cout << "\n";
    return 0;
}

// --- completion -------------------------------------------------------------------

int cmd_complete_eval(Run& run) {
    const auto task = param<std::string>(run.params, "task", "family");
    const int trials = param<int>(run.params, "trials", 11);
    if (trials < 1) throw ConfigError("trials must be >= 1");
    std::vector<completion::CompletionTask> tasks;
    json inputs = json::object();
    Rng seeds(run.seed);
    if (task == "family") {
        completion::FunctionSpec spec;
        spec.family = completion::family_from_name(param<std::string>(run.params, "family", "sin"));
        spec.a = param<double>(run.params, "a", spec.a);
        spec.b = param<double>(run.params, "b", spec.b);
        spec.points_per_period = param<int>(run.params, "points_per_period", spec.points_per_period);
        spec.context_periods = param<int>(run.params, "context_periods", spec.context_periods);
        spec.horizon_periods = param<double>(run.params, "horizon_periods", spec.horizon_periods);
        spec.validate();
        for (int i = 0; i < trials; ++i)
            tasks.push_back(completion::function_task(spec, seeds.fork(), task + "-" + std::to_string(i)));
    } else if (task == "loops") {
        auto spec = completion::loop_preset(param<std::string>(run.params, "preset", "medium"));
        spec.loops_context = param<int>(run.params, "loops_context", spec.loops_context);
        spec.noise = param<double>(run.params, "noise", spec.noise);
        spec.validate();
        for (int i = 0; i < trials; ++i)
            tasks.push_back(completion::loop_task(spec, seeds.fork(), task + "-" + std::to_string(i)));
    } else if (task == "sweep") {
        const double fraction = param<double>(run.params, "context_fraction", 2.0 / 3.0);
        if (run.params.contains("trace")) {
            const auto path = required_path(run.params, "trace");
            tasks.push_back(completion::trace_task(completion::load_trace(path), "sweep-file", fraction));
            inputs["trace"] = artifact::file_sha256(path);
        } else {
            completion::SweepParams sp;
            sp.sweeps = param<int>(run.params, "sweeps", sp.sweeps);
            sp.noise = param<double>(run.params, "noise", sp.noise);
            for (int i = 0; i < trials; ++i)
                tasks.push_back(completion::trace_task(completion::synthesize_sweep_demo(sp, seeds.fork()),
                                                       task + "-" + std::to_string(i), fraction));
        }
    } else {
        throw ConfigError("task must be family, loops or sweep, not '" + task + "'");
    }

    completion::EvalOptions opt;
    opt.parallelism = run.parallel;
    opt.temperature = param<double>(run.params, "temperature", 0.0);
    auto model = is_oracle(run) ? oracle_from(completion::oracle_entries(tasks)) : models::make_model(run.model);
    const auto report = completion::evaluate_completion(*model, tasks, opt);
    const auto hdr = run.header(inputs);
    const json summary = {{"artifact", hdr},
                          {"model", model->name()},
                          {"trials", report.trials.size()},
                          {"mean_dtw", report.mean_dtw},
                          {"var_dtw", report.var_dtw},
                          {"mean_dtw_per_step", report.mean_per_step},
                          {"var_dtw_per_step", report.var_per_step}};
    write_outputs(run, {{"results.jsonl", artifact::jsonl(hdr, records_array(report.trials))},
                        {"summary.json", summary.dump(2) + "\n"}});
    std::cout << task << ": " << report.trials.size() << " trials, mean DTW " << fixed(report.mean_dtw)
              << ", per step " << fixed(report.mean_per_step) << " (var " << fixed(report.var_per_step) << ")\n";
    return 0;
}

// --- improvement ------------------------------------------------------------------

improve::ImproveConfig improve_config(const json& params) {
    improve::ImproveConfig c;
    c.token_budget = param<int>(params, "token_budget", c.token_budget);
    c.target_offset_max = param<int>(params, "target_offset_max", c.target_offset_max);
    c.ordering = improve::ordering_from_name(param<std::string>(params, "ordering", "sorted_asc"));
    const auto selection = param<std::string>(params, "selection", "highest_reward");
    if (selection == "highest_reward")
        c.selection = improve::Selection::highest_reward;
    else if (selection == "most_recent")
        c.selection = improve::Selection::most_recent;
    else
        throw ConfigError("selection must be highest_reward or most_recent");
    c.retries_per_action = param<int>(params, "retries_per_action", c.retries_per_action);
    c.temperature = param<double>(params, "temperature", c.temperature);
    c.validate();
    return c;
}

int cmd_improve_run(Run& run) {
    const auto env_name = param<std::string>(run.params, "env", "grid");
    improve::EnvFactory factory;
    int default_episodes = 50, default_warmup = 20;
    if (env_name == "grid") {
        env::GridConfig gc;
        const auto metric = param<std::string>(run.params, "metric", "euclidean");
        if (metric == "manhattan")
            gc.metric = env::Metric::manhattan;
        else if (metric != "euclidean")
            throw ConfigError("metric must be euclidean or manhattan");
        factory = [gc] { return std::make_unique<env::GridEnv>(gc); };
    } else if (env_name == "cartpole") {
        env::CartPoleConfig cc;
        cc.horizon = param<int>(run.params, "horizon", cc.horizon);
        factory = [cc] { return std::make_unique<env::CartPoleEnv>(cc); };
        default_episodes = default_warmup = 100;
    } else {
        throw ConfigError("env must be grid or cartpole, not '" + env_name + "'");
    }
    const int episodes = param<int>(run.params, "episodes", default_episodes);
    const int warmup = param<int>(run.params, "warmup", default_warmup);
    run.params["episodes"] = episodes;
    run.params["warmup"] = warmup;
    const auto cfg = improve_config(run.params);

    if (is_oracle(run)) throw ConfigError("improve-run has no ground truth for mock_oracle; use a policy model");
    if (run.model.kind == "random_policy") {
        // uniform over the environment's own action set
        run.model.random.dims = 1;
        run.model.random.lo = 1;
        run.model.random.hi = factory()->num_actions();
    }
    auto model = models::make_model(run.model);
    const auto result = improve::run_online(*model, factory, episodes, warmup, cfg, run.seed);

    const auto hdr = run.header();
    json points = json::array();
    for (const auto& p : result.points) points.push_back(improve::to_json(p));
    const auto& last = result.points.back();
    int transport_failures = 0, fallbacks = 0;
    for (const auto& p : result.points) {
        transport_failures += p.transport_failed;
        fallbacks += p.fallback_count;
    }
    const json summary = {{"artifact", hdr},
                          {"model", model->name()},
                          {"env", env_name},
                          {"episodes", episodes},
                          {"warmup", warmup},
                          {"final_running_max", last.running_max},
                          {"warmup_max", result.points[static_cast<std::size_t>(warmup) - 1].running_max},
                          {"fallback_actions", fallbacks},
                          {"transport_failed_episodes", transport_failures}};
    write_outputs(run, {{"curve.tsv", "# " + hdr.dump() + "\n" + improve::curve_table(result.points)},
                        {"curve.jsonl", artifact::jsonl(hdr, points)},
                        {"summary.json", summary.dump(2) + "\n"}});
    std::cout << env_name << ": " << warmup << " warmup + " << episodes << " episodes with " << model->name()
              << "; running max " << summary["warmup_max"] << " after warmup, " << last.running_max << " at the end\n";
    return 0;
}

int cmd_marker_demo(Run& run) {
    const auto ordering = param<std::string>(run.params, "ordering", "all");
    std::vector<improve::Ordering> arms;
    if (ordering == "all")
        arms = {improve::Ordering::sorted_asc, improve::Ordering::shuffled, improve::Ordering::sorted_no_rewards};
    else
        arms = {improve::ordering_from_name(ordering)};
    const int trials = param<int>(run.params, "trials", 11);
    if (trials < 1) throw ConfigError("trials must be >= 1");
    auto base = improve_config(run.params);

    if (run.model.kind == "random_policy") {
        run.model.random.dims = 3;
        run.model.random.lo = 0;
        run.model.random.hi = env::MarkerConfig{}.bin_hi;
    }
    std::unique_ptr<models::CompletionModel> shared;
    if (!is_oracle(run)) shared = models::make_model(run.model);

    json records = json::array();
    json arm_rows = json::array();
    std::ostringstream table;
    table << std::left << std::setw(24) << "ordering" << std::right << std::setw(10) << "mean" << std::setw(10) << "sd"
          << std::setw(10) << "min" << std::setw(10) << "max\n";
    for (const auto arm : arms) {
        auto cfg = base;
        cfg.ordering = arm;
        Rng rng(run.seed);  // every arm sees the same scenes
        std::vector<int> rewards;
        for (int i = 0; i < trials; ++i) {
            const auto scene = env::make_marker_scene(rng.fork());
            Rng trial_rng(rng.fork());
            std::unique_ptr<models::CompletionModel> oracle;
            models::CompletionModel* model = shared.get();
            if (!model) {
                Rng probe = trial_rng;
                oracle = oracle_from({{improve::marker_context(scene, cfg, probe).prompt,
                                       improve::marker_oracle_completion(scene, cfg.profile)}});
                model = oracle.get();
            }
            const auto r = improve::marker_improve(*model, scene, cfg, trial_rng);
            rewards.push_back(r.reward);
            json rec = {{"ordering", improve::ordering_name(arm)},
                        {"trial", i},
                        {"reward", r.reward},
                        {"min_reward", scene.min_reward()},
                        {"parsed_states", r.parsed_states},
                        {"padded", r.padded},
                        {"trajectory", r.trajectory}};
            if (!r.error.empty()) rec["error"] = r.error;
            records.push_back(std::move(rec));
        }
        double mean = 0, var = 0;
        for (int v : rewards) mean += v;
        mean /= rewards.size();
        for (int v : rewards) var += (v - mean) * (v - mean);
        const double sd = rewards.size() > 1 ? std::sqrt(var / (rewards.size() - 1)) : 0.0;
        const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
        arm_rows.push_back({{"ordering", improve::ordering_name(arm)},
                            {"mean_reward", mean},
                            {"sd", sd},
                            {"min", *lo},
                            {"max", *hi},
                            {"rewards", rewards}});
        table << std::left << std::setw(24) << improve::ordering_name(arm) << std::right << std::setw(10)
              << fixed(mean, 1) << std::setw(10) << fixed(sd, 1) << std::setw(10) << *lo << std::setw(9) << *hi
              << "\n";
    }
    const auto hdr = run.header();
    const json summary = {{"artifact", hdr}, {"trials", trials}, {"arms", arm_rows}};
    write_outputs(run, {{"results.jsonl", artifact::jsonl(hdr, records)},
                        {"summary.json", summary.dump(2) + "\n"},
                        {"table.txt", table.str()}});
    std::cout << table.str();
    return 0;
}

// --- service ----------------------------------------------------------------------

std::atomic<bool> g_interrupted{false};

int cmd_serve(Run& run) {
    const auto host = param<std::string>(run.params, "host", "127.0.0.1");
    const int port = param<int>(run.params, "port", 8080);
    const auto static_dir = param<std::string>(run.params, "static", "");
    clicker::ClickerService service(static_dir);
    const int bound = service.start(host, port);
    std::cout << "clicker service on http://" << host << ":" << bound << "/sessions" << std::endl;
    std::signal(SIGINT, [](int) { g_interrupted = true; });
    std::signal(SIGTERM, [](int) { g_interrupted = true; });
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    service.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gpm: sequence-model harnesses and the clicker-training service"};
    app.set_version_flag("--version", artifact::tool_version());
    app.require_subcommand(1);
    app.fallthrough();

    Global g;
    auto* seed_opt = app.add_option("--seed", g.seed, "random seed (default 0)");
    auto* out_opt = app.add_option("--out", g.out, "output directory (default runs/<command>)");
    auto* model_opt = app.add_option("--model", g.model,
                                     "model kind: remote, mock_scripted, mock_oracle, random_policy, "
                                     "pcfg_searcher, period_repeat");
    app.add_option("--model-spec", g.model_spec, "JSON model spec file");
    auto* parallel_opt = app.add_option("--parallel", g.parallel, "concurrent tasks")->check(CLI::PositiveNumber);
    app.add_option("--config", g.config_path, "JSON config file; command-line flags take precedence");
    app.add_option("--data-dir", g.data_dir, "bundled data directory");

    std::map<std::string, Flags> commands;
    auto command = [&](const std::string& name, const std::string& help) -> Flags& {
        return commands.emplace(name, Flags(app.add_subcommand(name, help))).first->second;
    };

    auto& gen = command("pcfg-gen", "generate a sequence-transformation dataset over the (k, w) grid");
    gen.list("--k", "k", "token counts (default 1,2,4,8,16,32)");
    gen.list("--w", "w", "rule counts (default 0,1,3,7,15,31)");
    gen.add<int>("--n", "n", "tasks per cell (default 100)");
    gen.add<int>("--examples", "examples", "examples per task (default 4)");
    gen.add<int>("--max-leaves", "max_leaves", "input segments per program (default 3)");

    auto& peval = command("pcfg-eval", "score a model on a sequence-transformation dataset");
    peval.add<std::string>("--dataset", "dataset", "dataset file from pcfg-gen");
    peval.add<std::uint64_t>("--alphabet-seed", "alphabet_seed", "remap digits through a random alphabet");
    peval.add<int>("--max-tokens", "max_tokens", "completion budget (default: from the examples)");

    auto& solve = command("pcfg-solve", "run the enumerative searcher over a dataset");
    solve.add<std::string>("--dataset", "dataset", "dataset file from pcfg-gen");
    solve.add<int>("--max-ops", "max_ops", "operator budget (default 3)");
    solve.add<int>("--max-leaves", "max_leaves", "segment budget (default 3)");
    solve.add<std::uint64_t>("--node-budget", "node_budget", "search nodes per task (default 2e7)");

    auto& aeval = command("arc-eval", "score a model on an ARC-format suite");
    aeval.add<std::string>("--suite", "suite", "directory of task files (default: bundled corpus)");
    aeval.add<std::uint64_t>("--alphabet-seed", "alphabet_seed", "remap digits through a random alphabet");
    aeval.add<int>("--candidates", "candidates", "samples per test input (default 1)");

    auto& ceval = command("complete-eval", "sequence completion: function families, loops or sweeps");
    ceval.add<std::string>("--task", "task", "family, loops or sweep (default family)");
    ceval.add<std::string>("--family", "family", "sin, grow_sin or decay_sin");
    ceval.add<int>("--trials", "trials", "tasks to generate (default 11)");
    ceval.add<int>("--context-periods", "context_periods", "periods of context (default 3)");
    ceval.add<std::string>("--preset", "preset", "loop preset: narrow, medium, wide");
    ceval.add<std::string>("--trace", "trace", "recorded trace file instead of a synthetic sweep");

    auto& irun = command("improve-run", "online return-conditioned improvement on grid or cartpole");
    irun.add<std::string>("--env", "env", "grid or cartpole (default grid)");
    irun.add<int>("--episodes", "episodes", "model episodes (default 50 grid, 100 cartpole)");
    irun.add<int>("--warmup", "warmup", "random episodes first (default 20 grid, 100 cartpole)");
    irun.add<int>("--token-budget", "token_budget", "context budget (default 1024)");
    irun.add<std::string>("--ordering", "ordering", "context ordering (default sorted_asc)");

    auto& marker = command("marker-demo", "offline trajectory extrapolation from fractional demos");
    marker.add<std::string>("--ordering", "ordering",
                            "sorted_asc, shuffled, sorted_no_rewards, unsorted_with_rewards or all (default)");
    marker.add<int>("--trials", "trials", "scenes per ordering (default 11)");

    auto& serve = command("serve", "serve the clicker-training endpoints");
    serve.add<std::string>("--host", "host", "bind address (default 127.0.0.1)");
    serve.add<int>("--port", "port", "port (default 8080, 0 picks one)");
    serve.add<std::string>("--static", "static", "directory of browser assets to mount at /");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        json file = json::object();
        if (!g.config_path.empty()) {
            try {
                file = json::parse(artifact::read_file(g.config_path));
            } catch (const json::exception& e) {
                throw ConfigError("config " + g.config_path + ": " + e.what());
            }
            if (!file.is_object()) throw ConfigError("config must be a JSON object");
        }

        const auto& [name, flags] = *std::find_if(commands.begin(), commands.end(),
                                                   [](const auto& c) { return c.second.app()->parsed(); });
        Run run;
        run.command = name;
        run.data_dir = g.data_dir;
        run.seed = seed_opt->count() ? g.seed : param<std::uint64_t>(file, "seed", 0);
        run.parallel = parallel_opt->count() ? g.parallel : param<int>(file, "parallel", 1);
        if (run.parallel < 1) throw ConfigError("parallel must be >= 1");
        run.out = out_opt->count() ? g.out : param<std::string>(file, "out", "runs/" + name);

        json spec = file.value("model", json::object());
        if (!g.model_spec.empty()) {
            try {
                spec = json::parse(artifact::read_file(g.model_spec));
            } catch (const json::exception& e) {
                throw ConfigError("model spec " + g.model_spec + ": " + e.what());
            }
        }
        if (model_opt->count()) spec["kind"] = g.model;
        if (spec.contains("kind")) spec["kind"] = canonical_kind(spec["kind"].get<std::string>());
        run.model = models::model_spec_from_json(spec);

        run.params = file.value(name, json::object());
        if (!run.params.is_object()) throw ConfigError("config section '" + name + "' must be an object");
        flags.apply(run.params);

        if (name == "pcfg-gen") return cmd_pcfg_gen(run);
        if (name == "pcfg-eval") return cmd_pcfg_eval(run);
        if (name == "pcfg-solve") return cmd_pcfg_solve(run);
        if (name == "arc-eval") return cmd_arc_eval(run);
        if (name == "complete-eval") return cmd_complete_eval(run);
        if (name == "improve-run") return cmd_improve_run(run);
        if (name == "marker-demo") return cmd_marker_demo(run);
        return cmd_serve(run);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const MappingError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
