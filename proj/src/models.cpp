#include "gpm/models.hpp"

#include <algorithm>
#include <array>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "gpm/codec.hpp"
#include "gpm/error.hpp"

namespace gpm::models {

void CompletionRequest::validate() const {
    if (prompt.empty()) throw DomainError("completion request: empty prompt");
    if (max_tokens < 1) throw DomainError("completion request: max_tokens must be >= 1");
    if (stop.size() > 4) throw DomainError("completion request: at most 4 stop sequences");
    if (!(temperature >= 0.0)) throw DomainError("completion request: negative temperature");
}

std::string truncate_at_stop(std::string_view text, std::span<const std::string> stop) {
    std::size_t cut = text.size();
    for (const auto& s : stop) {
        if (s.empty()) continue;
        cut = std::min(cut, text.find(s));
    }
    return std::string(text.substr(0, cut));
}

std::string score_logprob_choice(CompletionModel& model, const std::string& prompt,
                                 std::span<const std::string> candidates) {
    if (candidates.empty()) throw DomainError("score_logprob_choice: no candidates");
    if (candidates.size() == 1) return candidates.front();
    if (auto scores = model.score(prompt, candidates); scores && scores->size() == candidates.size()) {
        const auto best = std::max_element(scores->begin(), scores->end()) - scores->begin();
        return candidates[best];
    }
    CompletionRequest req;
    req.prompt = prompt;
    std::size_t longest = 0;
    for (const auto& c : candidates) longest = std::max(longest, c.size());
    req.max_tokens = static_cast<int>(std::max<std::size_t>(1, longest));
    req.stop = {"\n"};
    const std::string text(codec::trim(model.complete(req)));
    const std::string* best = nullptr;
    for (const auto& c : candidates) {
        const std::string_view trimmed = codec::trim(c);
        if (!trimmed.empty() && text.rfind(trimmed, 0) == 0 && (!best || trimmed.size() > codec::trim(*best).size()))
            best = &c;
    }
    return best ? *best : candidates.front();
}

// --- scripted -----------------------------------------------------------------

void ScriptedModel::add(std::string prompt, std::string completion) {
    table_.insert_or_assign(std::move(prompt), std::move(completion));
}

ScriptedModel ScriptedModel::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read scripted model table " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    ScriptedModel m;
    for (const auto& [prompt, text] : j.value("completions", nlohmann::json::object()).items())
        m.add(prompt, text.get<std::string>());
    std::map<std::string, double> scores;
    for (const auto& [cand, v] : j.value("scores", nlohmann::json::object()).items()) scores[cand] = v.get<double>();
    m.set_scores(std::move(scores));
    return m;
}

std::string ScriptedModel::complete(const CompletionRequest& request) {
    request.validate();
    const auto it = table_.find(request.prompt);
    if (it == table_.end()) return {};
    return truncate_at_stop(it->second, request.stop);
}

std::optional<std::vector<double>> ScriptedModel::score(const std::string&, std::span<const std::string> candidates) {
    if (scores_.empty()) return std::nullopt;
    std::vector<double> out;
    for (const auto& c : candidates) {
        const auto it = scores_.find(c);
        out.push_back(it == scores_.end() ? -1e300 : it->second);
    }
    return out;
}

// --- random policy ------------------------------------------------------------

RandomPolicyModel::RandomPolicyModel(RandomPolicyOptions options)
    : options_(options), fallback_rng_(options.seed) {
    if (options_.dims < 1 || options_.lo > options_.hi) throw ConfigError("random_policy: bad action range");
}

std::string RandomPolicyModel::complete(const CompletionRequest& request) {
    request.validate();
    std::vector<int> action(options_.dims);
    if (request.seed) {
        Rng rng(*request.seed);
        for (auto& a : action) a = static_cast<int>(rng.uniform_int(options_.lo, options_.hi));
    } else {
        std::lock_guard lock(mu_);
        for (auto& a : action) a = static_cast<int>(fallback_rng_.uniform_int(options_.lo, options_.hi));
    }
    return truncate_at_stop(" " + codec::join_ints(action, ", "), request.stop);
}

// --- specs --------------------------------------------------------------------

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model spec must be an object");
    for (const auto& [key, value] : j.items())
        if (key != "kind" && key != "remote" && key != "random" && key != "search" && key != "script_path")
            throw ConfigError("model spec: unknown key '" + key + "'");
    ModelSpec s;
    try {
        s.kind = j.value("kind", s.kind);
        if (j.contains("remote")) {
            const auto& r = j["remote"];
            auto& c = s.remote;
            c.base_url = r.value("base_url", c.base_url);
            c.path = r.value("path", c.path);
            c.model = r.value("model", c.model);
            c.credential_env = r.value("credential_env", c.credential_env);
            c.auth_header = r.value("auth_header", c.auth_header);
            c.auth_prefix = r.value("auth_prefix", c.auth_prefix);
            c.timeout_s = r.value("timeout_s", c.timeout_s);
            c.retries = r.value("retries", c.retries);
            c.backoff_initial_s = r.value("backoff_initial_s", c.backoff_initial_s);
            c.rate_per_second = r.value("rate_per_second", c.rate_per_second);
            c.burst = r.value("burst", c.burst);
            if (r.contains("api_key") || r.contains("credential"))
                throw ConfigError("credentials are read from the environment only; set remote.credential_env");
        }
        if (j.contains("random")) {
            const auto& r = j["random"];
            s.random.dims = r.value("dims", s.random.dims);
            s.random.lo = r.value("lo", s.random.lo);
            s.random.hi = r.value("hi", s.random.hi);
            s.random.seed = r.value("seed", s.random.seed);
        }
        if (j.contains("search")) {
            const auto& r = j["search"];
            s.search.max_ops = r.value("max_ops", s.search.max_ops);
            s.search.max_leaves = r.value("max_leaves", s.search.max_leaves);
            s.search.node_budget = r.value("node_budget", s.search.node_budget);
        }
        s.script_path = j.value("script_path", s.script_path);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model spec: ") + e.what());
    }
    return s;
}

nlohmann::json to_json(const ModelSpec& s) {
    const auto& c = s.remote;
    return {{"kind", s.kind},
            {"remote",
             {{"base_url", c.base_url},
              {"path", c.path},
              {"model", c.model},
              {"credential_env", c.credential_env},
              {"auth_header", c.auth_header},
              {"auth_prefix", c.auth_prefix},
              {"timeout_s", c.timeout_s},
              {"retries", c.retries},
              {"backoff_initial_s", c.backoff_initial_s},
              {"rate_per_second", c.rate_per_second},
              {"burst", c.burst}}},
            {"random", {{"dims", s.random.dims}, {"lo", s.random.lo}, {"hi", s.random.hi}, {"seed", s.random.seed}}},
            {"search",
             {{"max_ops", s.search.max_ops},
              {"max_leaves", s.search.max_leaves},
              {"node_budget", s.search.node_budget}}},
            {"script_path", s.script_path}};
}

std::unique_ptr<CompletionModel> make_model(const ModelSpec& spec) {
    if (spec.kind == "remote") return std::make_unique<RemoteModel>(spec.remote);
    if (spec.kind == "mock_scripted") {
        if (spec.script_path.empty()) return std::make_unique<ScriptedModel>();
        return std::make_unique<ScriptedModel>(ScriptedModel::from_file(spec.script_path));
    }
    if (spec.kind == "random_policy") return std::make_unique<RandomPolicyModel>(spec.random);
    if (spec.kind == "pcfg_searcher") return std::make_unique<PcfgSearcherModel>(spec.search);
    if (spec.kind == "period_repeat") return std::make_unique<PeriodRepeatModel>();
    if (spec.kind == "mock_oracle") throw ConfigError("mock_oracle is built by the harness, not from a spec");
    throw ConfigError("unknown model kind '" + spec.kind + "'");
}

// --- token counting -----------------------------------------------------------

int HeuristicTokenCounter::count(std::string_view text) const { return codec::estimate_tokens(text); }

int ExternalTokenCounter::count(std::string_view text) const {
    // a command that exits without reading its input must not kill us
    static const bool sigpipe_ignored = (std::signal(SIGPIPE, SIG_IGN), true);
    (void)sigpipe_ignored;
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0) throw ConfigError("tokenizer: pipe failed");
    if (pipe(from_child) != 0) {
        close(to_child[0]);
        close(to_child[1]);
        throw ConfigError("tokenizer: pipe failed");
    }
    const pid_t pid = fork();
    if (pid < 0) throw ConfigError("tokenizer: fork failed");
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    std::size_t written = 0;
    while (written < text.size()) {
        const ssize_t n = write(to_child[1], text.data() + written, text.size() - written);
        if (n <= 0) break;
        written += static_cast<std::size_t>(n);
    }
    close(to_child[1]);
    std::string out;
    std::array<char, 256> buf;
    for (;;) {
        const ssize_t n = read(from_child[0], buf.data(), buf.size());
        if (n <= 0) break;
        out.append(buf.data(), static_cast<std::size_t>(n));
    }
    close(from_child[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    int value = 0;
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0 || !codec::parse_int(codec::trim(out), value) || value < 0)
        throw ConfigError("tokenizer command '" + command_ + "' did not print a token count");
    return value;
}

}  // namespace gpm::models
