#pragma once

// Prompt-text serialization for grids, token sequences and trajectories.
//
// Every encoder here is byte-exact: prompts built from the same inputs are
// identical, and each encoder has a decoder that inverts it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace gpm::codec {

using Grid = std::vector<std::vector<int>>;
using IntVec = std::vector<int>;
using TokenSeq = std::vector<std::string>;

struct CodecProfile {
    std::string cell_delimiter = ", ";
    std::string row_delimiter = "\n";
    std::string example_delimiter = "---";
    std::string input_header = "input:";
    std::string output_header = "output:";
    std::string dim_delimiter = " ";
    std::string step_delimiter = ", ";
    // Separates sequence examples ("in, out; in, out") and the observation
    // from the action in clicker tuples.
    std::string segment_delimiter = "; ";
    std::string reward_delimiter = ": ";

    /// Throws ConfigError if delimiters that share an encoding collide.
    void validate() const;

    /// step_delimiter without trailing whitespace; ends an open episode so the
    /// model's completion starts with " <next item>".
    std::string open_terminator() const;
};

/// Non-empty, no whitespace, and none of the codec's reserved characters.
bool is_valid_token(std::string_view text, const CodecProfile& profile = {});

/// Bijective map from digits 0-9 (possibly a subset) to tokens.
class Alphabet {
public:
    Alphabet() = default;

    static Alphabet identity();
    /// Throws MappingError on duplicates or digits outside 0-9, ConfigError on
    /// tokens that violate the token rules under `profile`.
    static Alphabet from_pairs(const std::vector<std::pair<int, std::string>>& pairs,
                               const CodecProfile& profile = {});

    const std::string& token_for(int digit) const;
    int digit_for(std::string_view token) const;
    bool has_digit(int digit) const { return forward_.count(digit) != 0; }
    bool has_token(std::string_view token) const { return inverse_.count(std::string(token)) != 0; }

    const std::map<int, std::string>& mapping() const { return forward_; }
    bool is_identity() const;
    std::size_t size() const { return forward_.size(); }

private:
    std::map<int, std::string> forward_;
    std::unordered_map<std::string, int> inverse_;
};

/// Draw ten distinct tokens from `pool` (after dropping invalid entries).
/// Pure function of (seed, pool). Throws ConfigError if fewer than ten
/// usable candidates remain.
Alphabet sample_alphabet(std::uint64_t seed, std::span<const std::string> pool,
                         const CodecProfile& profile = {});

/// One candidate per line, UTF-8.
std::vector<std::string> load_pool(const std::filesystem::path& path);

TokenSeq remap(const TokenSeq& seq, const Alphabet& alphabet);
TokenSeq unremap(const TokenSeq& seq, const Alphabet& alphabet);

TokenSeq digits_to_tokens(const IntVec& digits);
/// Each token must be a base-10 integer.
IntVec tokens_to_ints(const TokenSeq& tokens);

std::string encode_grid(const Grid& grid, const CodecProfile& profile = {},
                        const Alphabet* alphabet = nullptr);
Grid decode_grid(std::string_view text, const CodecProfile& profile = {},
                 const Alphabet* alphabet = nullptr);

// --- trajectories -------------------------------------------------------

struct RewardStates {
    int reward = 0;
    std::vector<IntVec> states;
};

/// "<reward>: <s1>, <s2>, ..." with dims joined by the dim delimiter.
std::string encode_reward_states(int reward, std::span<const IntVec> states,
                                 const CodecProfile& profile = {});
RewardStates decode_reward_states(std::string_view text, const CodecProfile& profile = {});

/// Body of encode_reward_states without the reward prefix.
std::string encode_states_body(std::span<const IntVec> states, const CodecProfile& profile = {});
std::vector<IntVec> decode_states_body(std::string_view body, const CodecProfile& profile = {});

/// An observation vector or an action id.
using Step = std::variant<IntVec, int>;

struct RewardSteps {
    int reward = 0;
    std::vector<Step> steps;
};

/// "<reward>: <obs>, <act>, <obs>, ...". Steps must alternate starting with an
/// observation. With `open` set, the text ends with the open terminator.
std::string encode_reward_obs_actions(int reward, std::span<const Step> steps,
                                      const CodecProfile& profile = {}, bool open = false);
RewardSteps decode_reward_obs_actions(std::string_view text, const CodecProfile& profile = {});

std::string encode_steps_body(std::span<const Step> steps, const CodecProfile& profile = {},
                              bool open = false);
std::vector<Step> decode_steps_body(std::string_view body, const CodecProfile& profile = {});

inline constexpr std::size_t kClickerObsDims = 6;
inline constexpr std::size_t kClickerActionDims = 3;

struct ClickerTuple {
    int reward = 0;
    IntVec observation;
    IntVec action;
};

/// "<reward>: o1, ..., o6; a1, a2, a3"
std::string encode_clicker_tuple(int reward, std::span<const int> observation,
                                 std::span<const int> action, const CodecProfile& profile = {});
ClickerTuple decode_clicker_tuple(std::string_view text, const CodecProfile& profile = {});

/// Deterministic token-count proxy: maximal non-whitespace runs, with every
/// ',', ':', ';' and newline counted as its own unit. It tends to over-count
/// relative to BPE tokenizers on numeric text.
int estimate_tokens(std::string_view text);

// --- small text helpers shared by the harnesses --------------------------

std::vector<std::string_view> split(std::string_view text, std::string_view delimiter);
std::vector<std::string_view> split_ws(std::string_view text);
std::string_view trim(std::string_view text);
std::string join_ints(std::span<const int> values, std::string_view delimiter);
/// Parses a whole (trimmed) field as a base-10 integer.
bool parse_int(std::string_view text, int& out);

}  // namespace gpm::codec
