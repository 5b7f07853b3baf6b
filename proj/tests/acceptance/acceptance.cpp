// Offline acceptance run: one PASS/FAIL line per criterion. The CLI-facing
// criteria run the real gpm executable and read back its artifacts.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <string>

#include "gpm/arc.hpp"
#include "gpm/artifact.hpp"
#include "gpm/clicker_service.hpp"
#include "gpm/codec.hpp"
#include "gpm/completion.hpp"
#include "gpm/environments.hpp"
#include "gpm/improve.hpp"
#include "gpm/models.hpp"
#include "gpm/pcfg.hpp"
#include "support/listings.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gpm;

namespace {

const fs::path kScratch = GPM_SCRATCH_DIR;

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

// Runs the CLI with output captured to <dir>/cli.log; returns the exit status.
int gpm(const std::string& args, const fs::path& log) {
    fs::create_directories(log.parent_path());
    const std::string cmd = std::string("\"") + GPM_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

json read_json(const fs::path& p) { return json::parse(artifact::read_file(p)); }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- 1 --------------------------------------------------------------------------

void pcfg_oracle_closure(Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = kScratch / "c1";
    v.check(gpm("--seed 1 --out " + q(dir / "data") + " pcfg-gen", dir / "gen.log") == 0, "pcfg-gen exit 0");
    v.check(gpm("--model mock_oracle --out " + q(dir / "eval") + " pcfg-eval --dataset " +
                    q(dir / "data" / "pcfg_dataset.jsonl"),
                dir / "eval.log") == 0,
            "pcfg-eval exit 0");
    const auto s = read_json(dir / "eval" / "summary.json");
    std::set<std::pair<int, int>> cells;
    bool every_cell_full = true;
    for (const auto& c : s["cells"]) {
        cells.insert({c["k"].get<int>(), c["w"].get<int>()});
        every_cell_full = every_cell_full && c["total"] == 100 && c["solved"] == 100;
    }
    std::set<std::pair<int, int>> expected;
    for (int k : pcfg::kTableTokens)
        for (int w : pcfg::kTableRules)
            if (pcfg::cell_included(k, w)) expected.insert({k, w});
    v.check(cells == expected, "cell set is the triangular grid");
    v.check(every_cell_full, "100/100 in every cell");
    const double secs = seconds_since(t0);
    v.check(secs <= 300, "runtime <= 5 min");
    v.detail << s["solved"] << "/" << s["total"] << " over " << cells.size() << " cells in " << std::fixed
             << std::setprecision(1) << secs << " s";
}

// --- 2 --------------------------------------------------------------------------

void searcher_completeness(Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = kScratch / "c2";
    v.check(gpm("--seed 2 --out " + q(dir / "data") + " pcfg-gen --k 1,2,4,8 --w 0,1,3", dir / "gen.log") == 0,
            "pcfg-gen exit 0");
    v.check(gpm("--out " + q(dir / "solve") + " pcfg-solve --dataset " + q(dir / "data" / "pcfg_dataset.jsonl"),
                dir / "solve.log") == 0,
            "pcfg-solve exit 0");
    const auto s = read_json(dir / "solve" / "summary.json");
    bool complete = true, w0 = true;
    double acc83 = -1;
    for (const auto& c : s["cells"]) {
        complete = complete && c["consistent"] == 100 && c["total"] == 100;
        if (c["w"] == 0) w0 = w0 && c["correct"] == 100;
        if (c["k"] == 8 && c["w"] == 3) acc83 = c["accuracy"].get<double>();
    }
    v.check(s["cells"].size() == 9, "nine cells with k <= 8, w <= 3");
    v.check(complete, "consistent program for 100/100 in every cell");
    v.check(w0, "w=0 query accuracy 100%");
    v.check(std::fabs(acc83 - 80.0) <= 10.0, "(8,3) query accuracy within 80 +- 10");
    const double secs = seconds_since(t0);
    v.check(secs <= 600, "runtime <= 10 min");
    v.detail << "consistent " << s["consistent"] << "/" << s["total"] << ", (8,3) accuracy " << acc83 << "% in "
             << std::fixed << std::setprecision(1) << secs << " s";
}

// --- 3 --------------------------------------------------------------------------

void worked_example(Verdict& v) {
    const std::vector<pcfg::Example> ex = {{{5, 3, 0}, {3, 5}}, {{7, 6, 1}, {6, 7}}, {{9, 2, 3}, {2, 9}}};
    const auto r = pcfg::search(ex);
    v.check(r.has_value(), "search finds a program");
    if (!r) return;
    const pcfg::Seq query = {4, 8, 5};
    const auto out = pcfg::format_completion(pcfg::eval_program(r->program, pcfg::split_segments(query, r->partition)));
    v.check(out == " 8 4", "prediction is \" 8 4\"");

    // the same through the model interface, from the prompt text alone
    pcfg::Task t;
    t.examples = ex;
    t.query = {query, {8, 4}};
    models::PcfgSearcherModel searcher;
    models::CompletionRequest req;
    req.prompt = pcfg::build_prompt(t);
    const auto text = searcher.complete(req);
    v.check(pcfg::parse_completion(text) == pcfg::Seq{8, 4}, "searcher model completes the prompt with 8 4");
    v.detail << r->program.to_sexpr() << " -> \"" << out << "\"";
}

// --- 4 --------------------------------------------------------------------------

void arc_closure(Verdict& v) {
    const auto dir = kScratch / "c4";
    v.check(arc::build_prompt(testing::arc_listing_task(), 0) == testing::kArcListingPrompt,
            "context listing byte-exact");
    v.check(gpm("--model mock_oracle --out " + q(dir / "identity") + " arc-eval", dir / "identity.log") == 0,
            "arc-eval exit 0");
    const auto base = read_json(dir / "identity" / "summary.json");
    v.check(base["solved"] == 800 && base["total"] == 800, "800/800 with digits");
    v.detail << "digits " << base["solved"] << "/" << base["total"] << "; alphabets";
    for (int seed = 1; seed <= 5; ++seed) {
        const auto sub = dir / ("alphabet" + std::to_string(seed));
        v.check(gpm("--model mock_oracle --out " + q(sub) + " arc-eval --alphabet-seed " + std::to_string(seed),
                    sub.string() + ".log") == 0,
                "arc-eval exit 0 under alphabet " + std::to_string(seed));
        const auto s = read_json(sub / "summary.json");
        v.check(s["solved"] == 800 && s["total"] == 800, "800/800 under alphabet " + std::to_string(seed));
        v.detail << " " << s["solved"];
    }
}

// --- 5 --------------------------------------------------------------------------

void dtw_equivalence(Verdict& v) {
    Rng rng(20230525);
    int equal = 0;
    for (int i = 0; i < 500; ++i) {
        const std::size_t dims = i % 2 ? 1 : 3;
        auto frames = [&] {
            completion::Frames f(rng.uniform_int(1, 6), completion::Frame(dims));
            for (auto& x : f)
                for (auto& c : x) c = static_cast<int>(rng.uniform_int(0, 20));
            return f;
        };
        const auto a = frames(), b = frames();
        equal += completion::dtw(a, b) == testing::brute_force_dtw(a, b);
    }
    v.check(equal == 500, "exact equality on every pair");
    v.detail << equal << "/500 pairs equal";
}

// --- 6 --------------------------------------------------------------------------

void completion_baseline(Verdict& v) {
    const auto dir = kScratch / "c6";
    double per_step[2] = {0, 0};
    int i = 0;
    for (int periods : {3, 5}) {
        const auto sub = dir / ("periods" + std::to_string(periods));
        v.check(gpm("--seed 6 --model period_repeat --out " + q(sub) +
                        " complete-eval --task family --family sin --trials 11 --context-periods " +
                        std::to_string(periods),
                    sub.string() + ".log") == 0,
                "complete-eval exit 0");
        const auto s = read_json(sub / "summary.json");
        v.check(s["trials"] == 11, "11 trials");
        per_step[i++] = s["mean_dtw_per_step"].get<double>();
    }
    v.check(per_step[0] <= 2.0 && per_step[1] <= 2.0, "mean per-step DTW <= 2 bins");
    v.check(per_step[1] <= per_step[0], "5-period context <= 3-period context");
    v.detail << "per-step DTW: 3 periods " << per_step[0] << ", 5 periods " << per_step[1];
}

// --- 7 --------------------------------------------------------------------------

void grid_environment(Verdict& v) {
    env::GridEnv g;
    int solved = 0, worst = 0;
    for (const auto goal : g.goal_cells()) {
        g.reset_with_goal(goal);
        int reached = -1;
        while (!g.terminal()) {
            g.step(env::grid_greedy_action(g.pos(), g.goal()));
            if (reached < 0 && g.pos() == goal) reached = g.t();
        }
        if (g.episode_return() == 100 && reached >= 1 && reached <= 16) ++solved;
        worst = std::max(worst, reached);
    }
    v.check(solved == 80, "greedy earns 100 within 16 steps for all 80 goals");

    bool formula = true;
    std::set<int> values;
    for (int ax = 0; ax < 9; ++ax)
        for (int ay = 0; ay < 9; ++ay)
            for (int gx = 0; gx < 9; ++gx)
                for (int gy = 0; gy < 9; ++gy) {
                    const double d = std::hypot(ax - gx, ay - gy);
                    const int want = static_cast<int>(std::lround(100.0 - 10.0 * d));
                    const int got = env::GridEnv::reward_for({ax, ay}, {gx, gy}, env::Metric::euclidean);
                    formula = formula && got == want;
                    values.insert(got);
                }
    v.check(formula, "reward_for = round(100 - 10 d) on every position/goal pair");
    v.check(values.count(6) && values.count(78), "values 6 and 78 occur");
    v.detail << solved << "/80 goals, slowest " << worst << " steps; " << values.size() << " distinct rewards";
}

// --- 8 --------------------------------------------------------------------------

void cartpole(Verdict& v) {
    env::CartPoleEnv e;
    int bang_ok = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        auto obs = e.reset(s);
        while (!e.terminal()) obs = e.step(env::cartpole_bang_bang(obs)).observation;
        bang_ok += e.episode_return() == 200;
    }
    v.check(bang_ok == 200, "bang-bang returns 200");
    int longest_constant = 0;
    for (int action : {1, 2})
        for (std::uint64_t s = 0; s < 50; ++s) {
            e.reset(s);
            while (!e.terminal()) e.step(action);
            longest_constant = std::max(longest_constant, e.episode_return());
        }
    v.check(longest_constant < 200, "constant actions terminate before 200");

    const auto fixture = read_json(fs::path(GPM_SOURCE_DIR) / "tests/fixtures/cartpole_random_return.json");
    double total = 0;
    for (int i = 0; i < 200; ++i) {
        e.reset(static_cast<std::uint64_t>(i));
        Rng policy(1000 + static_cast<std::uint64_t>(i));
        while (!e.terminal()) e.step(1 + static_cast<int>(policy.below(2)));
        total += e.episode_return();
    }
    const double mean = total / 200, want = fixture["mean_return"].get<double>();
    v.check(std::fabs(mean - want) <= 2.0, "random mean within fixture +- 2");
    v.detail << "bang-bang " << bang_ok << "/200 at 200; constant max " << longest_constant << "; random mean "
             << mean << " vs fixture " << want;
}

// --- 9 --------------------------------------------------------------------------

void improve_laws(Verdict& v) {
    using namespace improve;
    Rng rng(9);
    Buffer buffer;
    int inserts = 0, targets = 0, contexts = 0, episodes = 0;
    int sorting_bad = 0, target_bad = 0, budget_bad = 0, order_bad = 0, relabel_bad = 0;
    env::GridEnv grid;
    env::CartPoleEnv pole;
    models::RandomPolicyModel grid_policy({1, 1, 5, 0}), pole_policy({1, 1, 2, 0});

    auto sorted = [&] {
        const auto& r = buffer.records();
        for (std::size_t i = 1; i < r.size(); ++i)
            if (r[i].reward < r[i - 1].reward || (r[i].reward == r[i - 1].reward && r[i].serial < r[i - 1].serial))
                return false;
        return true;
    };

    for (int op = 0; op < 10000; ++op) {
        const auto kind = rng.below(20);
        if (kind < 8 || buffer.empty()) {
            TrajRecord r;
            r.reward = static_cast<int>(rng.uniform_int(-20, 120));
            const auto n = rng.uniform_int(1, 12);
            for (std::uint64_t i = 0; i < n; ++i)
                r.body += (i ? ", " : "") + std::to_string(rng.uniform_int(0, 100));
            buffer.insert(std::move(r));
            ++inserts;
            sorting_bad += !sorted();
        } else if (kind < 12) {
            ImproveConfig cfg;
            cfg.target_offset_max = static_cast<int>(rng.uniform_int(1, 30));
            const int t = propose_target(buffer, rng, cfg);
            target_bad += t < buffer.max_reward() + 1 || t > buffer.max_reward() + cfg.target_offset_max;
            ++targets;
        } else if (kind < 18) {
            ImproveConfig cfg;
            cfg.token_budget = static_cast<int>(rng.uniform_int(1, 400));
            cfg.ordering = static_cast<Ordering>(rng.below(4));
            cfg.selection = rng.coin() ? Selection::highest_reward : Selection::most_recent;
            const std::string partial = std::to_string(rng.uniform_int(0, 8)) + " " + std::to_string(rng.uniform_int(0, 8)) + ",";
            const int target = static_cast<int>(rng.uniform_int(0, 140));
            const auto ctx = build_context(buffer, cfg, target, partial, rng);
            ++contexts;
            const auto& recs = buffer.records();
            const std::string trailer = std::to_string(target) + ": " + partial;
            const int trailer_tokens = cfg.count_tokens(trailer);
            if (trailer_tokens > cfg.token_budget) {
                budget_bad += ctx.prompt != trailer || !ctx.truncated;
                continue;
            }
            budget_bad += ctx.tokens > cfg.token_budget || cfg.count_tokens(ctx.prompt) != ctx.tokens;
            // included records are the top of the priority order, and the next one would not fit
            std::vector<std::size_t> priority(recs.size());
            std::iota(priority.begin(), priority.end(), 0);
            std::sort(priority.begin(), priority.end(), [&](std::size_t a, std::size_t b) {
                return cfg.selection == Selection::highest_reward ? a > b : recs[a].serial > recs[b].serial;
            });
            const std::set<std::size_t> got(ctx.included.begin(), ctx.included.end());
            const std::set<std::size_t> top(priority.begin(), priority.begin() + static_cast<long>(got.size()));
            budget_bad += got != top;
            if (got.size() < recs.size()) {
                const auto& next = recs[priority[got.size()]];
                const std::string line = cfg.ordering == Ordering::sorted_no_rewards
                                             ? next.body
                                             : std::to_string(next.reward) + ": " + next.body;
                budget_bad += ctx.tokens + cfg.count_tokens(line) + 1 <= cfg.token_budget;
            }
            for (std::size_t i = 1; i < ctx.included.size(); ++i) {
                const auto a = ctx.included[i - 1], b = ctx.included[i];
                if (cfg.ordering == Ordering::sorted_asc || cfg.ordering == Ordering::sorted_no_rewards)
                    order_bad += a > b;
                if (cfg.ordering == Ordering::unsorted_with_rewards) order_bad += recs[a].serial > recs[b].serial;
            }
            order_bad += ctx.prompt.substr(ctx.prompt.size() - trailer.size()) != trailer;
        } else {
            // an episode: the inserted record carries the return its actions actually earn
            ImproveConfig cfg;
            cfg.token_budget = static_cast<int>(rng.uniform_int(16, 512));
            const bool use_grid = rng.coin();
            env::Environment& e = use_grid ? static_cast<env::Environment&>(grid) : pole;
            models::CompletionModel& m = use_grid ? static_cast<models::CompletionModel&>(grid_policy) : pole_policy;
            Rng episode_rng(rng.next());
            const auto res = run_episode(m, e, rng.next(), buffer, cfg, episode_rng);
            ++episodes;
            relabel_bad += res.record.reward != e.episode_return();
            relabel_bad += replay_return(e, res.record) != std::optional<int>(res.record.reward);
            const auto& recs = buffer.records();
            const auto it = std::find_if(recs.begin(), recs.end(),
                                         [&](const TrajRecord& r) { return r.serial == res.record.serial; });
            relabel_bad += it == recs.end() || it->reward != res.record.reward;
            sorting_bad += !sorted();
        }
    }
    v.check(sorting_bad == 0, "sorting law");
    v.check(target_bad == 0, "target law");
    v.check(budget_bad == 0, "budget law");
    v.check(order_bad == 0, "ordering and trailer");
    v.check(relabel_bad == 0, "relabel law");

    {
        Buffer b;
        auto add = [&](int reward, const std::string& body) {
            TrajRecord r;
            r.reward = reward;
            r.body = body;
            b.insert(std::move(r));
        };
        add(90, testing::kMarker90);
        add(72, testing::kMarkerElided);
        add(80, testing::kMarkerElided);
        add(71, testing::kMarkerElided);
        ImproveConfig cfg;
        Rng r0(0);
        v.check(build_context(b, cfg, 100, "104 83 123", r0).prompt == testing::kMarkerListingPrompt,
                "marker listing byte-exact");
    }
    {
        Buffer b;
        for (const auto& r : testing::kCartPoleListingRecords) {
            TrajRecord t;
            t.reward = r.reward;
            t.body = r.body;
            b.insert(std::move(t));
        }
        ImproveConfig cfg;
        Rng r0(0);
        v.check(build_context(b, cfg, 98, codec::encode_steps_body(testing::kCartPoleListingPartial, {}, true), r0)
                        .prompt == testing::kCartPoleListingPrompt,
                "cart-pole listing byte-exact");
    }
    v.check(clicker_build_context(testing::kClickerListingHistory, testing::kClickerListingObservation).prompt ==
                testing::kClickerListingPrompt,
            "clicker listing byte-exact");
    v.detail << "10000 ops (" << inserts << " inserts, " << targets << " targets, " << contexts << " contexts, "
             << episodes << " episodes replayed); violations: sort " << sorting_bad << ", target " << target_bad
             << ", budget " << budget_bad << ", order " << order_bad << ", relabel " << relabel_bad;
}

// --- 10 -------------------------------------------------------------------------

void online_smoke(Verdict& v) {
    const auto dir = kScratch / "c10";
    std::string first[3];
    for (int run = 0; run < 2; ++run) {
        const auto sub = dir / ("run" + std::to_string(run));
        fs::remove_all(sub);
        v.check(gpm("--seed 10 --model random_policy --out " + q(sub) + " improve-run --env grid --episodes 50",
                    sub.string() + ".log") == 0,
                "improve-run exit 0");
        int i = 0;
        for (const char* f : {"curve.tsv", "curve.jsonl", "summary.json"}) {
            const auto text = artifact::read_file(sub / f);
            if (run == 0)
                first[i] = text;
            else
                v.check(text == first[i], std::string(f) + " byte-identical");
            ++i;
        }
    }
    const auto s = read_json(dir / "run0" / "summary.json");
    std::istringstream curve(first[0]);
    std::string line;
    int rows = 0;
    while (std::getline(curve, line))
        if (!line.empty() && line[0] != '#' && line.rfind("episode", 0) != 0) ++rows;
    v.check(s["episodes"] == 50, "50 model episodes");
    v.check(rows == 50 + s["warmup"].get<int>(), "one curve row per episode");
    v.detail << rows << " curve rows, running max " << s["final_running_max"] << ", sha256 "
             << artifact::sha256_hex(first[0]).substr(0, 12);
}

// --- 11 -------------------------------------------------------------------------

void clicker_batch(Verdict& v) {
    clicker::ClickerService service;
    const int port = service.start("127.0.0.1", 0);
    httplib::Client client("127.0.0.1", port);
    auto post = [&](const std::string& path, const json& body) {
        auto r = client.Post(path, body.dump(), "application/json");
        if (!r) throw std::runtime_error("no response from " + path);
        return std::make_pair(r->status, json::parse(r->body));
    };
    auto dist = [](const json& a, const json& b, int dims) {
        double s = 0;
        for (int i = 0; i < dims; ++i) s += std::pow(a[i].get<double>() - b[i].get<double>(), 2);
        return std::sqrt(s);
    };

    struct Outcome {
        int after_warmup = 0, total = 0, model_steps = 0, law_violations = 0;
    };
    auto drive = [&](bool clicking) {
        Outcome o;
        const auto [status, created] = post("/sessions", {{"batch", true}, {"seed", 11}, {"episodes", 10}});
        v.check(status == 201, "create returns 201");
        const std::string base = "/sessions/" + created["id"].get<std::string>();
        post(base + "/resume", json::object());
        json prev = created["state"];
        const double contact = env::PushConfig{}.contact_radius;
        for (int guard = 0; guard < 400; ++guard) {
            const auto [st_status, st] = post(base + "/step", json::object());
            if (st_status != 200 || st["phase"] == "done") break;
            if (st["last_action_source"] != "random") {
                ++o.model_steps;
                std::vector<int> labels;
                std::istringstream in(st["prompt"].get<std::string>());
                std::string line;
                std::vector<std::string> lines;
                while (std::getline(in, line)) lines.push_back(line);
                for (std::size_t i = 0; i + 1 < lines.size(); ++i) labels.push_back(lines[i][0] == '1');
                const auto ones = std::count(labels.begin(), labels.end(), 1);
                o.law_violations += ones * 2 != static_cast<long>(labels.size()) ||
                                    !std::is_sorted(labels.begin(), labels.end()) ||
                                    lines.back().rfind("1: ", 0) != 0;
            }
            if (clicking && st["step"].get<int>() == prev["step"].get<int>() + 1) {
                const bool near = dist(prev["effector"], prev["object"], 3) <= contact;
                const bool good = near ? dist(st["object"], st["goal"], 2) < dist(prev["object"], prev["goal"], 2)
                                       : dist(st["effector"], st["object"], 3) < dist(prev["effector"], prev["object"], 3);
                if (good) post(base + "/click", json::object());
            }
            prev = st;
        }
        auto r = client.Get(base + "/state");
        const auto final_state = json::parse(r->body);
        v.check(final_state["phase"] == "done", "session reaches done after 10 episodes");
        for (const auto& e : final_state["history"]["episodes"]) {
            o.total += e["rewarded"].get<int>();
            if (e["episode"].get<int>() > 2) o.after_warmup += e["rewarded"].get<int>();
        }
        return o;
    };
    const auto clicked = drive(true);
    const auto silent = drive(false);
    service.stop();
    v.check(clicked.after_warmup >= 1, ">= 1 reward-1 tuple after warmup");
    v.check(clicked.model_steps > 0, "model-driven steps occurred");
    v.check(clicked.law_violations == 0 && silent.law_violations == 0, "equal-count, 0-before-1 law on every step");
    v.check(clicked.total > silent.total, "auto-clicker beats a silent run");
    v.detail << "reward-1 tuples " << clicked.total << " (" << clicked.after_warmup << " after warmup) vs silent "
             << silent.total << "; " << clicked.model_steps + silent.model_steps
             << " model prompts checked, violations " << clicked.law_violations + silent.law_violations;
}

}  // namespace

int main() {
    fs::create_directories(kScratch);
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
        {"PCFG oracle closure over the full grid", pcfg_oracle_closure},
        {"searcher completeness", searcher_completeness},
        {"worked three-example transformation", worked_example},
        {"ARC harness closure and alphabet invariance", arc_closure},
        {"DTW equals exhaustive alignment", dtw_equivalence},
        {"period-repeat completion baseline", completion_baseline},
        {"grid environment", grid_environment},
        {"cart-pole environment", cartpole},
        {"improvement engine laws and listings", improve_laws},
        {"online loop reproducibility", online_smoke},
        {"clicker batch integration", clicker_batch},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            criteria[i].second(v);
        } catch (const std::exception& e) {
            v.check(false, std::string("exception: ") + e.what());
        }
        failed += !v.pass;
        std::cout << "criterion " << std::setw(2) << i + 1 << " " << (v.pass ? "PASS" : "FAIL") << "  "
                  << criteria[i].first << ": " << v.detail.str() << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
