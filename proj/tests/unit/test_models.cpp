#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "gpm/codec.hpp"
#include "gpm/error.hpp"
#include "gpm/models.hpp"
#include "gpm/pcfg.hpp"

using namespace gpm;
using namespace gpm::models;

namespace {

CompletionRequest req(std::string prompt, std::vector<std::string> stop = {}) {
    CompletionRequest r;
    r.prompt = std::move(prompt);
    r.stop = std::move(stop);
    return r;
}

// In-process completions server on an ephemeral port.
struct FakeServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> hits{0};
    std::string last_auth;
    nlohmann::json last_body;
    std::mutex mu;

    explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&, int)> handler) {
        server.Post("/v1/completions", [this, handler](const httplib::Request& rq, httplib::Response& rs) {
            const int n = ++hits;
            {
                std::lock_guard lock(mu);
                last_auth = rq.get_header_value("Authorization");
                last_body = nlohmann::json::parse(rq.body);
            }
            handler(rq, rs, n);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeServer() {
        server.stop();
        thread.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

RemoteConfig fast_config(const std::string& url) {
    RemoteConfig c;
    c.base_url = url;
    c.model = "test-model";
    c.timeout_s = 2.0;
    c.retries = 3;
    c.backoff_initial_s = 0.01;
    c.rate_per_second = 1000.0;
    c.burst = 100.0;
    c.credential_env = "GPM_TEST_SECRET";
    return c;
}

}  // namespace

TEST_CASE("request validation") {
    CHECK_THROWS_AS(req("").validate(), DomainError);
    auto r = req("x");
    r.max_tokens = 0;
    CHECK_THROWS_AS(r.validate(), DomainError);
    r = req("x", {"a", "b", "c", "d", "e"});
    CHECK_THROWS_AS(r.validate(), DomainError);
    r = req("x");
    r.temperature = -1;
    CHECK_THROWS_AS(r.validate(), DomainError);
    CHECK_NOTHROW(req("x").validate());
}

TEST_CASE("stop truncation") {
    const std::vector<std::string> semi = {";"};
    CHECK(truncate_at_stop("2010 慶; junk", semi) == "2010 慶");
    const std::vector<std::string> two = {"\n", "---"};
    CHECK(truncate_at_stop("a---b\nc", two) == "a");
    CHECK(truncate_at_stop("abc", {}) == "abc");
}

TEST_CASE("scripted model") {
    ScriptedModel m;
    m.add("p", "c; d");
    CHECK(m.complete(req("p")) == "c; d");
    CHECK(m.complete(req("p", {";"})) == "c");
    CHECK(m.complete(req("q")) == "");
    CHECK(m.name() == "mock_scripted");
    CHECK(ScriptedModel("mock_oracle").name() == "mock_oracle");
}

TEST_CASE("score_logprob_choice") {
    ScriptedModel m;
    const std::vector<std::string> one = {"only"};
    CHECK(score_logprob_choice(m, "p", one) == "only");
    const std::vector<std::string> none;
    CHECK_THROWS_AS(score_logprob_choice(m, "p", none), DomainError);

    ScriptedModel scored;
    scored.set_scores({{" 1", -2.0}, {" 2", -0.5}, {" 3", -1.0}});
    const std::vector<std::string> cands = {" 1", " 2", " 3"};
    CHECK(score_logprob_choice(scored, "p", cands) == " 2");
    CHECK(score_logprob_choice(scored, "p", cands) == " 2");

    // fallback path: complete, then the longest candidate prefixing the text
    ScriptedModel plain;
    plain.add("p", " 12, 4");
    const std::vector<std::string> numbers = {" 1", " 12", " 3"};
    CHECK(score_logprob_choice(plain, "p", numbers) == " 12");
    CHECK(score_logprob_choice(plain, "unknown", numbers) == " 1");

    // differential: the fallback equals complete-then-match done by hand
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        ScriptedModel t;
        const std::string text = " " + std::to_string(rng.uniform_int(0, 30));
        t.add("p", text);
        std::vector<std::string> c;
        for (int j = 0; j < 4; ++j) c.push_back(" " + std::to_string(rng.uniform_int(0, 30)));
        std::string want = c.front();
        std::size_t best = 0;
        for (const auto& x : c) {
            const auto tx = codec::trim(x);
            if (std::string(codec::trim(text)).rfind(tx, 0) == 0 && tx.size() > best) {
                best = tx.size();
                want = x;
            }
        }
        REQUIRE(score_logprob_choice(t, "p", c) == want);
    }
}

TEST_CASE("random policy model is seeded and in range") {
    RandomPolicyOptions o;
    o.dims = 3;
    o.lo = 0;
    o.hi = 100;
    RandomPolicyModel m(o);
    auto r = req("ctx");
    r.seed = 42;
    const auto a = m.complete(r);
    CHECK(a == m.complete(r));
    const auto vals = codec::split(codec::trim(a), ", ");
    CHECK(vals.size() == 3);
    for (auto v : vals) {
        int x = -1;
        REQUIRE(codec::parse_int(v, x));
        CHECK(x >= 0);
        CHECK(x <= 100);
    }
    RandomPolicyModel s1({1, 1, 5, 9}), s2({1, 1, 5, 9});
    for (int i = 0; i < 20; ++i) CHECK(s1.complete(req("x")) == s2.complete(req("x")));
    CHECK_THROWS_AS(RandomPolicyModel({1, 5, 1, 0}), ConfigError);
}

TEST_CASE("pcfg searcher model agrees with predict_with_search") {
    const std::array<int, 3> ks = {2, 4, 8};
    const std::array<int, 3> ws = {0, 1, 3};
    const auto all = pcfg::generate_suite(ks, ws, 13, 5);
    const std::span<const pcfg::Task> suite(all.data(), 100);
    PcfgSearcherModel m;
    int n = 0;
    for (const auto& t : suite) {
        const auto direct = pcfg::predict_with_search(t);
        const auto text = m.complete(req(pcfg::build_prompt(t), {";"}));
        REQUIRE(direct);
        REQUIRE(text == pcfg::format_completion(*direct));
        ++n;
    }
    CHECK(n == 100);
    CHECK(m.complete(req("5 3 0, 3 5; 7 6 1, 6 7; 9 2 3, 2 9; 4 8 5,")) == " 8 4");
    // token-agnostic: the same task written with words
    CHECK(m.complete(req("e c a, c e; g f b, f g; i h d, h i; x y z,")) == " y x");
    CHECK(m.complete(req("garbage")) == "");
}

TEST_CASE("period estimation and repetition") {
    std::vector<std::vector<int>> frames;
    for (int i = 0; i < 30; ++i) frames.push_back({i % 5 * 10, 7});
    CHECK(estimate_period(frames) == 5);
    std::vector<std::vector<int>> tiny = {{1}, {2}};
    CHECK(estimate_period(tiny) == 1);

    PeriodRepeatModel m;
    auto r = req("1, 2, 3, 1, 2, 3, 1, 2, 3, 1,");
    r.max_tokens = 10;  // five scalar frames
    CHECK(m.complete(r) == " 2, 3, 1, 2, 3");
    auto r2 = req("1 9, 2 8, 1 9, 2 8, 1 9, 2 8,");
    r2.max_tokens = 9;
    CHECK(m.complete(r2) == " 1 9, 2 8, 1 9");
}

TEST_CASE("model specs and factory") {
    const auto spec = model_spec_from_json(
        {{"kind", "random_policy"}, {"random", {{"dims", 1}, {"lo", 1}, {"hi", 5}}}});
    auto m = make_model(spec);
    CHECK(m->name() == "random_policy");
    CHECK(make_model(model_spec_from_json({{"kind", "pcfg_searcher"}}))->name() == "pcfg_searcher");
    CHECK(make_model(model_spec_from_json({{"kind", "period_repeat"}}))->name() == "period_repeat");
    CHECK_THROWS_AS(make_model(model_spec_from_json({{"kind", "mock_oracle"}})), ConfigError);
    CHECK_THROWS_AS(make_model(model_spec_from_json({{"kind", "gpt-local"}})), ConfigError);
    CHECK_THROWS_AS(model_spec_from_json({{"kind", "remote"}, {"remote", {{"api_key", "sk-1"}}}}), ConfigError);
    CHECK_THROWS_AS(model_spec_from_json(nlohmann::json::array()), ConfigError);

    const auto back = model_spec_from_json(to_json(spec));
    CHECK(to_json(back) == to_json(spec));
}

TEST_CASE("remote model: request shape, auth header, stop truncation") {
    ::setenv("GPM_TEST_SECRET", "sk-test-credential-123", 1);
    FakeServer fake([](const httplib::Request&, httplib::Response& rs, int) {
        rs.set_content(R"({"choices":[{"text":" 8 4; 1 2"}]})", "application/json");
    });
    RemoteModel m(fast_config(fake.url()));
    auto r = req("5 3 0, 3 5; 4 8 5,", {";"});
    r.max_tokens = 7;
    CHECK(m.complete(r) == " 8 4");
    CHECK_FALSE(m.is_local());
    std::lock_guard lock(fake.mu);
    CHECK(fake.last_auth == "Bearer sk-test-credential-123");
    CHECK(fake.last_body["model"] == "test-model");
    CHECK(fake.last_body["prompt"] == "5 3 0, 3 5; 4 8 5,");
    CHECK(fake.last_body["max_tokens"] == 7);
    CHECK(fake.last_body["stop"] == nlohmann::json::array({";"}));
    CHECK(fake.last_body["temperature"] == 0.0);

    // the model-spec serialization carries the variable name, never the value
    ModelSpec spec;
    spec.kind = "remote";
    spec.remote = fast_config(fake.url());
    CHECK(to_json(spec).dump().find("sk-test-credential-123") == std::string::npos);
    ::unsetenv("GPM_TEST_SECRET");
}

TEST_CASE("remote model retries server errors then succeeds") {
    FakeServer fake([](const httplib::Request&, httplib::Response& rs, int n) {
        if (n < 3) {
            rs.status = n == 1 ? 503 : 429;
            return;
        }
        rs.set_content(R"({"choices":[{"text":"ok"}]})", "application/json");
    });
    RemoteModel m(fast_config(fake.url()));
    CHECK(m.complete(req("p")) == "ok");
    CHECK(fake.hits == 3);
}

TEST_CASE("remote model surfaces typed errors") {
    SUBCASE("client error is not retried") {
        FakeServer fake([](const httplib::Request&, httplib::Response& rs, int) { rs.status = 401; });
        RemoteModel m(fast_config(fake.url()));
        CHECK_THROWS_AS(m.complete(req("p")), TransportError);
        CHECK(fake.hits == 1);
    }
    SUBCASE("persistent server errors exhaust retries") {
        FakeServer fake([](const httplib::Request&, httplib::Response& rs, int) { rs.status = 500; });
        RemoteModel m(fast_config(fake.url()));
        CHECK_THROWS_AS(m.complete(req("p")), TransportError);
        CHECK(fake.hits == 3);
    }
    SUBCASE("empty choices read as empty text") {
        FakeServer fake([](const httplib::Request&, httplib::Response& rs, int) {
            rs.set_content(R"({"choices":[]})", "application/json");
        });
        RemoteModel m(fast_config(fake.url()));
        CHECK(m.complete(req("p")) == "");
    }
    SUBCASE("unreachable endpoint stays within timeout x retries") {
        auto c = fast_config("http://127.0.0.1:1");
        c.timeout_s = 0.3;
        const auto t0 = std::chrono::steady_clock::now();
        RemoteModel m(c);
        CHECK_THROWS_AS(m.complete(req("p")), TransportError);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        CHECK(s <= c.timeout_s * c.retries + 0.2);
    }
    CHECK_THROWS_AS(RemoteModel(RemoteConfig{.base_url = ""}), ConfigError);
}

TEST_CASE("rate limiter paces requests") {
    RateLimiter lim(50.0, 1.0);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 6; ++i) lim.acquire();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(s >= 5 / 50.0 - 0.01);
    CHECK(RateLimiter::for_endpoint("a", 1, 1) == RateLimiter::for_endpoint("a", 1, 1));
    CHECK_THROWS_AS(RateLimiter(0, 1), ConfigError);
}

TEST_CASE("token counters") {
    HeuristicTokenCounter h;
    CHECK(h.count("100: 104 83 123") == 5);
    ExternalTokenCounter wc("wc -c");
    CHECK(wc.count("abcd") == 4);
    ExternalTokenCounter bad("echo nope");
    CHECK_THROWS_AS(bad.count("x"), ConfigError);
    ExternalTokenCounter fails("exit 3");
    CHECK_THROWS_AS(fails.count("x"), ConfigError);
}
