#include "gpm/codec.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "gpm/error.hpp"
#include "gpm/rng.hpp"

namespace gpm::codec {

namespace {

constexpr std::string_view kReservedChars = ",;:\n";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

std::string rtrim_copy(std::string_view s) {
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return std::string(s);
}

// Splitting on the trimmed delimiter tolerates models that drop the space
// after a comma; fields are trimmed afterwards.
std::string_view field_separator(const std::string& delimiter) {
    std::string_view t = trim(delimiter);
    return t.empty() ? std::string_view(delimiter) : t;
}

std::string position(int row, int col) {
    return "row " + std::to_string(row) + " col " + std::to_string(col);
}

IntVec parse_vector(std::string_view text, const CodecProfile& profile, int row) {
    IntVec out;
    int col = 0;
    for (auto field : profile.dim_delimiter == " " ? split_ws(text) : split(text, profile.dim_delimiter)) {
        int v = 0;
        if (!parse_int(field, v)) {
            throw ParseError("non-integer value '" + std::string(field) + "' at " + position(row, col), row, col);
        }
        out.push_back(v);
        ++col;
    }
    if (out.empty()) throw ParseError("empty vector at item " + std::to_string(row), row, 0);
    return out;
}

void append_vector(std::string& out, std::span<const int> v, const CodecProfile& profile) {
    out += join_ints(v, profile.dim_delimiter);
}

std::pair<int, std::string_view> split_reward(std::string_view text, const CodecProfile& profile) {
    const auto sep = field_separator(profile.reward_delimiter);
    const auto pos = text.find(sep);
    if (pos == std::string_view::npos) throw ParseError("missing reward separator");
    int reward = 0;
    if (!parse_int(text.substr(0, pos), reward)) {
        throw ParseError("non-integer reward '" + std::string(text.substr(0, pos)) + "'");
    }
    return {reward, text.substr(pos + sep.size())};
}

}  // namespace

void CodecProfile::validate() const {
    const std::vector<std::pair<const std::string*, const char*>> all = {
        {&cell_delimiter, "cell_delimiter"},       {&row_delimiter, "row_delimiter"},
        {&example_delimiter, "example_delimiter"}, {&input_header, "input_header"},
        {&output_header, "output_header"},         {&dim_delimiter, "dim_delimiter"},
        {&step_delimiter, "step_delimiter"},       {&segment_delimiter, "segment_delimiter"},
        {&reward_delimiter, "reward_delimiter"},
    };
    for (const auto& [value, name] : all) {
        if (value->empty()) throw ConfigError(std::string(name) + " must not be empty");
    }
    // Pairs that appear together inside one encoding must differ.
    const std::vector<std::pair<const std::string*, const std::string*>> together = {
        {&cell_delimiter, &row_delimiter},     {&row_delimiter, &example_delimiter},
        {&input_header, &output_header},       {&dim_delimiter, &step_delimiter},
        {&step_delimiter, &reward_delimiter},  {&cell_delimiter, &segment_delimiter},
        {&step_delimiter, &segment_delimiter}, {&dim_delimiter, &segment_delimiter},
    };
    for (const auto& [a, b] : together) {
        if (*a == *b) throw ConfigError("delimiters collide: '" + *a + "'");
    }
}

std::string CodecProfile::open_terminator() const { return rtrim_copy(step_delimiter); }

bool is_valid_token(std::string_view text, const CodecProfile& profile) {
    if (text.empty()) return false;
    for (char c : text) {
        if (is_space(c)) return false;
        if (kReservedChars.find(c) != std::string_view::npos) return false;
    }
    for (const std::string* d : {&profile.cell_delimiter, &profile.row_delimiter, &profile.example_delimiter,
                                 &profile.step_delimiter, &profile.segment_delimiter,
                                 &profile.reward_delimiter}) {
        std::string_view t = trim(*d);
        if (!t.empty() && text.find(t) != std::string_view::npos) return false;
    }
    return true;
}

// --- Alphabet -------------------------------------------------------------

Alphabet Alphabet::identity() {
    std::vector<std::pair<int, std::string>> pairs;
    for (int d = 0; d <= 9; ++d) pairs.emplace_back(d, std::to_string(d));
    return from_pairs(pairs);
}

Alphabet Alphabet::from_pairs(const std::vector<std::pair<int, std::string>>& pairs,
                              const CodecProfile& profile) {
    Alphabet a;
    for (const auto& [digit, token] : pairs) {
        if (digit < 0 || digit > 9) throw MappingError("alphabet digit out of range", std::to_string(digit));
        if (!is_valid_token(token, profile)) throw ConfigError("invalid alphabet token '" + token + "'");
        if (a.forward_.count(digit)) throw MappingError("digit mapped twice", std::to_string(digit));
        if (a.inverse_.count(token)) throw MappingError("token mapped twice", token);
        a.forward_.emplace(digit, token);
        a.inverse_.emplace(token, digit);
    }
    return a;
}

const std::string& Alphabet::token_for(int digit) const {
    auto it = forward_.find(digit);
    if (it == forward_.end()) throw MappingError("digit not in alphabet domain", std::to_string(digit));
    return it->second;
}

int Alphabet::digit_for(std::string_view token) const {
    auto it = inverse_.find(std::string(token));
    if (it == inverse_.end()) throw MappingError("token not in alphabet image: '" + std::string(token) + "'", std::string(token));
    return it->second;
}

bool Alphabet::is_identity() const {
    return std::all_of(forward_.begin(), forward_.end(),
                       [](const auto& kv) { return kv.second == std::to_string(kv.first); });
}

Alphabet sample_alphabet(std::uint64_t seed, std::span<const std::string> pool, const CodecProfile& profile) {
    std::vector<std::string> usable;
    std::set<std::string> seen;
    for (const auto& t : pool) {
        if (is_valid_token(t, profile) && seen.insert(t).second) usable.push_back(t);
    }
    if (usable.size() < 10) {
        throw ConfigError("alphabet pool has " + std::to_string(usable.size()) +
                          " usable tokens; need at least 10");
    }
    Rng rng(seed);
    // Partial Fisher-Yates: the first ten slots become the sample.
    std::vector<std::pair<int, std::string>> pairs;
    for (std::size_t i = 0; i < 10; ++i) {
        const std::size_t j = i + rng.below(usable.size() - i);
        std::swap(usable[i], usable[j]);
        pairs.emplace_back(static_cast<int>(i), usable[i]);
    }
    return Alphabet::from_pairs(pairs, profile);
}

std::vector<std::string> load_pool(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open alphabet pool " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

TokenSeq remap(const TokenSeq& seq, const Alphabet& alphabet) {
    TokenSeq out;
    out.reserve(seq.size());
    for (const auto& tok : seq) {
        int d = 0;
        if (!parse_int(tok, d) || !alphabet.has_digit(d)) {
            throw MappingError("token '" + tok + "' is not in the alphabet domain", tok);
        }
        out.push_back(alphabet.token_for(d));
    }
    return out;
}

TokenSeq unremap(const TokenSeq& seq, const Alphabet& alphabet) {
    TokenSeq out;
    out.reserve(seq.size());
    for (const auto& tok : seq) out.push_back(std::to_string(alphabet.digit_for(tok)));
    return out;
}

TokenSeq digits_to_tokens(const IntVec& digits) {
    TokenSeq out;
    out.reserve(digits.size());
    for (int d : digits) out.push_back(std::to_string(d));
    return out;
}

IntVec tokens_to_ints(const TokenSeq& tokens) {
    IntVec out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        int v = 0;
        if (!parse_int(tokens[i], v)) {
            throw ParseError("non-integer token '" + tokens[i] + "'", 0, static_cast<int>(i));
        }
        out.push_back(v);
    }
    return out;
}

// --- grids ------------------------------------------------------------------

std::string encode_grid(const Grid& grid, const CodecProfile& profile, const Alphabet* alphabet) {
    if (grid.empty() || grid.front().empty()) throw StructuralError("grid must be non-empty");
    const std::size_t width = grid.front().size();
    std::string out;
    for (std::size_t r = 0; r < grid.size(); ++r) {
        if (grid[r].size() != width) {
            throw StructuralError("ragged grid: row " + std::to_string(r) + " has " +
                                  std::to_string(grid[r].size()) + " cells, expected " + std::to_string(width));
        }
        if (r > 0) out += profile.row_delimiter;
        for (std::size_t c = 0; c < width; ++c) {
            const int v = grid[r][c];
            if (v < 0 || v > 9) {
                throw DomainError("cell value " + std::to_string(v) + " outside 0-9 at " +
                                  position(static_cast<int>(r), static_cast<int>(c)));
            }
            if (c > 0) out += profile.cell_delimiter;
            out += alphabet ? alphabet->token_for(v) : std::to_string(v);
        }
    }
    return out;
}

Grid decode_grid(std::string_view text, const CodecProfile& profile, const Alphabet* alphabet) {
    auto rows = split(text, profile.row_delimiter);
    while (!rows.empty() && trim(rows.back()).empty()) rows.pop_back();
    if (rows.empty()) throw ParseError("empty grid");
    const auto sep = field_separator(profile.cell_delimiter);
    Grid grid;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::vector<int> row;
        auto fields = split(trim(rows[r]), sep);
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const auto field = trim(fields[c]);
            const int ri = static_cast<int>(r), ci = static_cast<int>(c);
            int v = 0;
            if (alphabet) {
                if (!alphabet->has_token(field)) {
                    throw ParseError("unknown token '" + std::string(field) + "' at " + position(ri, ci), ri, ci);
                }
                v = alphabet->digit_for(field);
            } else if (!parse_int(field, v)) {
                throw ParseError("non-integer cell '" + std::string(field) + "' at " + position(ri, ci), ri, ci);
            }
            if (v < 0 || v > 9) throw DomainError("cell value outside 0-9 at " + position(ri, ci));
            row.push_back(v);
        }
        if (!grid.empty() && row.size() != grid.front().size()) {
            throw StructuralError("ragged grid: row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                                  " cells, expected " + std::to_string(grid.front().size()));
        }
        grid.push_back(std::move(row));
    }
    return grid;
}

// --- trajectories -----------------------------------------------------------

std::string encode_states_body(std::span<const IntVec> states, const CodecProfile& profile) {
    std::string out;
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i].empty()) throw StructuralError("state vectors must have at least one dimension");
        if (states[i].size() != states.front().size()) {
            throw StructuralError("state " + std::to_string(i) + " has dimension " +
                                  std::to_string(states[i].size()) + ", expected " +
                                  std::to_string(states.front().size()));
        }
        if (i > 0) out += profile.step_delimiter;
        append_vector(out, states[i], profile);
    }
    return out;
}

std::vector<IntVec> decode_states_body(std::string_view body, const CodecProfile& profile) {
    std::vector<IntVec> states;
    auto items = split(body, field_separator(profile.step_delimiter));
    if (!items.empty() && trim(items.back()).empty()) items.pop_back();
    for (std::size_t i = 0; i < items.size(); ++i) {
        states.push_back(parse_vector(trim(items[i]), profile, static_cast<int>(i)));
        if (states.back().size() != states.front().size()) {
            throw StructuralError("state " + std::to_string(i) + " has inconsistent dimension");
        }
    }
    return states;
}

std::string encode_reward_states(int reward, std::span<const IntVec> states, const CodecProfile& profile) {
    return std::to_string(reward) + profile.reward_delimiter + encode_states_body(states, profile);
}

RewardStates decode_reward_states(std::string_view text, const CodecProfile& profile) {
    auto [reward, body] = split_reward(text, profile);
    return {reward, decode_states_body(body, profile)};
}

std::string encode_steps_body(std::span<const Step> steps, const CodecProfile& profile, bool open) {
    if (open && (steps.empty() || !std::holds_alternative<IntVec>(steps.back()))) {
        throw StructuralError("an open episode must end on an observation");
    }
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const bool expect_obs = (i % 2 == 0);
        if (expect_obs != std::holds_alternative<IntVec>(steps[i])) {
            throw StructuralError(std::string("step ") + std::to_string(i) + " must be " +
                                  (expect_obs ? "an observation" : "an action"));
        }
        if (i > 0) out += profile.step_delimiter;
        if (expect_obs) {
            const auto& obs = std::get<IntVec>(steps[i]);
            if (obs.empty()) throw StructuralError("observation must have at least one dimension");
            append_vector(out, obs, profile);
        } else {
            out += std::to_string(std::get<int>(steps[i]));
        }
    }
    if (open) out += profile.open_terminator();
    return out;
}

std::vector<Step> decode_steps_body(std::string_view body, const CodecProfile& profile) {
    std::vector<Step> steps;
    auto items = split(body, field_separator(profile.step_delimiter));
    if (!items.empty() && trim(items.back()).empty()) items.pop_back();
    for (std::size_t i = 0; i < items.size(); ++i) {
        const int idx = static_cast<int>(i);
        if (i % 2 == 0) {
            steps.emplace_back(parse_vector(trim(items[i]), profile, idx));
        } else {
            int a = 0;
            if (!parse_int(items[i], a)) throw ParseError("non-integer action at item " + std::to_string(i), idx, 0);
            steps.emplace_back(a);
        }
    }
    return steps;
}

std::string encode_reward_obs_actions(int reward, std::span<const Step> steps, const CodecProfile& profile,
                                      bool open) {
    return std::to_string(reward) + profile.reward_delimiter + encode_steps_body(steps, profile, open);
}

RewardSteps decode_reward_obs_actions(std::string_view text, const CodecProfile& profile) {
    auto [reward, body] = split_reward(text, profile);
    return {reward, decode_steps_body(body, profile)};
}

std::string encode_clicker_tuple(int reward, std::span<const int> observation, std::span<const int> action,
                                 const CodecProfile& profile) {
    if (observation.size() != kClickerObsDims) {
        throw StructuralError("clicker observation must have 6 dims, got " + std::to_string(observation.size()));
    }
    if (action.size() != kClickerActionDims) {
        throw StructuralError("clicker action must have 3 dims, got " + std::to_string(action.size()));
    }
    return std::to_string(reward) + profile.reward_delimiter + join_ints(observation, profile.cell_delimiter) +
           profile.segment_delimiter + join_ints(action, profile.cell_delimiter);
}

ClickerTuple decode_clicker_tuple(std::string_view text, const CodecProfile& profile) {
    auto [reward, body] = split_reward(text, profile);
    auto parts = split(body, field_separator(profile.segment_delimiter));
    if (parts.size() != 2) throw ParseError("clicker tuple needs exactly one observation/action separator");
    auto parse_list = [&](std::string_view s, int row) {
        IntVec v;
        int col = 0;
        for (auto f : split(s, field_separator(profile.cell_delimiter))) {
            int x = 0;
            if (!parse_int(f, x)) throw ParseError("non-integer field at " + position(row, col), row, col);
            v.push_back(x);
            ++col;
        }
        return v;
    };
    ClickerTuple t{reward, parse_list(parts[0], 0), parse_list(parts[1], 1)};
    if (t.observation.size() != kClickerObsDims || t.action.size() != kClickerActionDims) {
        throw StructuralError("clicker tuple has wrong dimensionality");
    }
    return t;
}

int estimate_tokens(std::string_view text) {
    int count = 0;
    bool in_run = false;
    for (char c : text) {
        if (c == ',' || c == ':' || c == ';' || c == '\n') {
            ++count;
            in_run = false;
        } else if (is_space(c)) {
            in_run = false;
        } else if (!in_run) {
            ++count;
            in_run = true;
        }
    }
    return count;
}

// --- helpers ----------------------------------------------------------------

std::vector<std::string_view> split(std::string_view text, std::string_view delimiter) {
    std::vector<std::string_view> out;
    if (delimiter.empty()) {
        out.push_back(text);
        return out;
    }
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(delimiter, start);
        if (pos == std::string_view::npos) {
            out.push_back(text.substr(start));
            return out;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + delimiter.size();
    }
}

std::vector<std::string_view> split_ws(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) out.push_back(text.substr(start, i - start));
    }
    return out;
}

std::string_view trim(std::string_view text) {
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
    return text;
}

std::string join_ints(std::span<const int> values, std::string_view delimiter) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) out += delimiter;
        out += std::to_string(values[i]);
    }
    return out;
}

bool parse_int(std::string_view text, int& out) {
    text = trim(text);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace gpm::codec
