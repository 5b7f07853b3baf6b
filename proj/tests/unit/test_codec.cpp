#include <doctest.h>

#include <set>

#include "gpm/codec.hpp"
#include "gpm/error.hpp"
#include "gpm/rng.hpp"

using namespace gpm;
using namespace gpm::codec;

namespace {

Alphabet example_alphabet() {
    return Alphabet::from_pairs({{8, "falls"}, {6, "+#"}, {7, "UI"}, {9, "Chev"}, {3, "慶"}, {2, "2010"}});
}

Grid random_grid(Rng& rng) {
    const int h = static_cast<int>(rng.uniform_int(1, 30));
    const int w = static_cast<int>(rng.uniform_int(1, 30));
    Grid g(h, std::vector<int>(w));
    for (auto& row : g)
        for (auto& c : row) c = static_cast<int>(rng.uniform_int(0, 9));
    return g;
}

std::vector<std::string> test_pool() {
    std::vector<std::string> pool;
    for (int i = 0; i < 200; ++i) pool.push_back("tok" + std::to_string(i));
    pool.push_back("bad,comma");
    pool.push_back("has space");
    pool.push_back("a:b");
    pool.push_back("");
    return pool;
}

}  // namespace

TEST_CASE("encode_grid matches the row style of the ARC listing") {
    CHECK(encode_grid({{0, 3}, {7, 0}}) == "0, 3\n7, 0");
    CHECK(encode_grid({{5}}) == "5");
    CHECK(encode_grid({{0, 3, 4, 0}}) == "0, 3, 4, 0");
}

TEST_CASE("encode_grid rejects ragged grids and out-of-range cells") {
    CHECK_THROWS_AS(encode_grid({{1, 2}, {3}}), StructuralError);
    CHECK_THROWS_AS(encode_grid({{1, 10}}), DomainError);
    CHECK_THROWS_AS(encode_grid({}), StructuralError);
}

TEST_CASE("decode_grid parses and reports positions") {
    CHECK(decode_grid("3, 0\n0, 4") == Grid{{3, 0}, {0, 4}});
    CHECK(decode_grid("3, 0  \n0, 4\n") == Grid{{3, 0}, {0, 4}});
    try {
        decode_grid("3, x");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 0);
        CHECK(e.col() == 1);
    }
    CHECK_THROWS_AS(decode_grid("1, 2\n3"), StructuralError);
    CHECK_THROWS_AS(decode_grid(""), ParseError);
}

TEST_CASE("grid round trip over random grids, with and without an alphabet") {
    Rng rng(7);
    const auto pool = load_pool(GPM_DATA_DIR "/alphabet_pool.txt");
    for (int i = 0; i < 1000; ++i) {
        const Grid g = random_grid(rng);
        REQUIRE(decode_grid(encode_grid(g)) == g);
        if (i % 10 == 0) {
            const Alphabet a = sample_alphabet(rng.next(), pool);
            REQUIRE(decode_grid(encode_grid(g, {}, &a), {}, &a) == g);
        }
    }
}

TEST_CASE("sample_alphabet is deterministic and filters invalid candidates") {
    const auto pool = test_pool();
    const Alphabet a = sample_alphabet(42, pool);
    const Alphabet b = sample_alphabet(42, pool);
    CHECK(a.mapping() == b.mapping());
    CHECK(a.size() == 10);
    for (const auto& [d, tok] : a.mapping()) CHECK(tok.rfind("tok", 0) == 0);
    CHECK(sample_alphabet(43, pool).mapping() != a.mapping());

    std::vector<std::string> tiny = {"a", "b", "c", "d,", "e"};
    CHECK_THROWS_AS(sample_alphabet(1, tiny), ConfigError);
}

TEST_CASE("sampled alphabets are bijective and delimiter-safe") {
    const auto pool = load_pool(GPM_DATA_DIR "/alphabet_pool.txt");
    REQUIRE(pool.size() >= 5000);
    const CodecProfile profile;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Alphabet a = sample_alphabet(seed, pool);
        std::set<std::string> images;
        for (const auto& [d, tok] : a.mapping()) {
            images.insert(tok);
            CHECK(is_valid_token(tok, profile));
            for (const auto* delim : {&profile.cell_delimiter, &profile.row_delimiter, &profile.step_delimiter,
                                      &profile.segment_delimiter, &profile.example_delimiter}) {
                CHECK(tok.find(*delim) == std::string::npos);
            }
        }
        CHECK(images.size() == 10);
    }
}

TEST_CASE("remap reproduces the token-invariance example") {
    const Alphabet a = example_alphabet();
    const TokenSeq in = {"8", "6", "8", "6"};
    CHECK(remap(in, a) == TokenSeq{"falls", "+#", "falls", "+#"});
    CHECK(unremap(remap(in, a), a) == in);
    CHECK(remap({"3", "2", "3", "2"}, a) == TokenSeq{"慶", "2010", "慶", "2010"});
    CHECK(remap(in, Alphabet::identity()) == in);
}

TEST_CASE("remap and unremap name the offending token") {
    const Alphabet a = example_alphabet();
    try {
        remap({"8", "5"}, a);
        FAIL("expected MappingError");
    } catch (const MappingError& e) {
        CHECK(e.token() == "5");
    }
    CHECK_THROWS_AS(unremap({"falls", "nope"}, a), MappingError);
}

TEST_CASE("alphabet construction enforces bijectivity") {
    CHECK_THROWS_AS(Alphabet::from_pairs({{1, "x"}, {2, "x"}}), MappingError);
    CHECK_THROWS_AS(Alphabet::from_pairs({{1, "x"}, {1, "y"}}), MappingError);
    CHECK_THROWS_AS(Alphabet::from_pairs({{1, "a,b"}}), ConfigError);
    CHECK_THROWS_AS(Alphabet::from_pairs({{12, "z"}}), MappingError);
}

TEST_CASE("unremap inverts remap over random sequences and alphabets") {
    const auto pool = load_pool(GPM_DATA_DIR "/alphabet_pool.txt");
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
        const Alphabet a = sample_alphabet(rng.next(), pool);
        TokenSeq seq;
        const int n = static_cast<int>(rng.uniform_int(0, 40));
        for (int j = 0; j < n; ++j) seq.push_back(std::to_string(rng.uniform_int(0, 9)));
        REQUIRE(unremap(remap(seq, a), a) == seq);
    }
}

TEST_CASE("reward-prefixed state encoding") {
    const std::vector<IntVec> one = {{104, 83, 123}};
    CHECK(encode_reward_states(100, one) == "100: 104 83 123");
    CHECK(encode_reward_states(0, {}) == "0: ");
    const std::vector<IntVec> bad = {{1, 2}, {3}};
    CHECK_THROWS_AS(encode_reward_states(1, bad), StructuralError);

    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const int reward = static_cast<int>(rng.uniform_int(-50, 200));
        const int dim = static_cast<int>(rng.uniform_int(1, 7));
        std::vector<IntVec> states(rng.uniform_int(0, 20), IntVec(dim));
        for (auto& s : states)
            for (auto& v : s) v = static_cast<int>(rng.uniform_int(0, 300));
        const auto decoded = decode_reward_states(encode_reward_states(reward, states));
        REQUIRE(decoded.reward == reward);
        REQUIRE(decoded.states == states);
    }
}

TEST_CASE("reward-prefixed observation/action encoding") {
    const std::vector<Step> steps = {IntVec{40, 50}, 1, IntVec{40, 54}};
    CHECK(encode_reward_obs_actions(52, steps) == "52: 40 50, 1, 40 54");
    const std::vector<Step> single = {IntVec{44, 50}};
    CHECK(encode_reward_obs_actions(98, single) == "98: 44 50");
    const std::vector<Step> open = {IntVec{44, 50}, 1, IntVec{44, 55}, 2, IntVec{45, 50}};
    CHECK(encode_reward_obs_actions(98, open, {}, true) == "98: 44 50, 1, 44 55, 2, 45 50,");

    const std::vector<Step> two_actions = {IntVec{1}, 1, 2};
    CHECK_THROWS_AS(encode_reward_obs_actions(0, two_actions), StructuralError);
    const std::vector<Step> starts_with_action = {1};
    CHECK_THROWS_AS(encode_reward_obs_actions(0, starts_with_action), StructuralError);
    const std::vector<Step> ends_on_action = {IntVec{1}, 1};
    CHECK_THROWS_AS(encode_reward_obs_actions(0, ends_on_action, {}, true), StructuralError);

    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const int dim = static_cast<int>(rng.uniform_int(1, 4));
        const int n = static_cast<int>(rng.uniform_int(0, 30));
        std::vector<Step> s;
        for (int j = 0; j < n; ++j) {
            if (j % 2 == 0) {
                IntVec obs(dim);
                for (auto& v : obs) v = static_cast<int>(rng.uniform_int(0, 100));
                s.emplace_back(obs);
            } else {
                s.emplace_back(static_cast<int>(rng.uniform_int(1, 5)));
            }
        }
        const bool is_open = n % 2 == 1 && rng.coin();
        const auto decoded = decode_reward_obs_actions(encode_reward_obs_actions(7, s, {}, is_open));
        REQUIRE(decoded.reward == 7);
        REQUIRE(decoded.steps == s);
    }
}

TEST_CASE("clicker tuple encoding") {
    const IntVec obs = {80, 49, 138, 109, 54, 133};
    const IntVec act = {45, 44, 55};
    CHECK(encode_clicker_tuple(0, obs, act) == "0: 80, 49, 138, 109, 54, 133; 45, 44, 55");
    const IntVec zeros(6, 0);
    const IntVec noop = {50, 50, 50};
    CHECK(encode_clicker_tuple(1, zeros, noop) == "1: 0, 0, 0, 0, 0, 0; 50, 50, 50");
    const IntVec short_obs = {1, 2, 3};
    CHECK_THROWS_AS(encode_clicker_tuple(0, short_obs, act), StructuralError);
    const IntVec long_act = {1, 2, 3, 4};
    CHECK_THROWS_AS(encode_clicker_tuple(0, obs, long_act), StructuralError);

    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        IntVec o(6), a(3);
        for (auto& v : o) v = static_cast<int>(rng.uniform_int(0, 300));
        for (auto& v : a) v = static_cast<int>(rng.uniform_int(0, 100));
        const int r = static_cast<int>(rng.uniform_int(0, 1));
        const auto t = decode_clicker_tuple(encode_clicker_tuple(r, o, a));
        REQUIRE(t.reward == r);
        REQUIRE(t.observation == o);
        REQUIRE(t.action == a);
    }
}

TEST_CASE("estimate_tokens counting rule") {
    CHECK(estimate_tokens("") == 0);
    // "100" ":" "104" "83" "123"
    CHECK(estimate_tokens("100: 104 83 123") == 5);
    CHECK(estimate_tokens("a, b\nc") == 5);
    CHECK(estimate_tokens("   ") == 0);
    Rng rng(13);
    const std::string alphabet = "ab1 ,:;\n";
    for (int i = 0; i < 1000; ++i) {
        std::string a, b;
        for (int j = rng.uniform_int(0, 12); j > 0; --j) a += alphabet[rng.below(alphabet.size())];
        for (int j = rng.uniform_int(0, 12); j > 0; --j) b += alphabet[rng.below(alphabet.size())];
        REQUIRE(estimate_tokens(a + b) >= estimate_tokens(a));
    }
}

TEST_CASE("profile validation") {
    CodecProfile p;
    CHECK_NOTHROW(p.validate());
    p.dim_delimiter = ", ";
    CHECK_THROWS_AS(p.validate(), ConfigError);
    CodecProfile empty;
    empty.row_delimiter.clear();
    CHECK_THROWS_AS(empty.validate(), ConfigError);
    CHECK(CodecProfile{}.open_terminator() == ",");
}
