#pragma once

// Sequence-transformation benchmark: list operators composed into programs
// over contiguous input segments, a task generator parameterized by token
// count k and operator count w, and an enumerative program searcher.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gpm/codec.hpp"
#include "gpm/rng.hpp"

namespace gpm::models {
class CompletionModel;
}

namespace gpm::pcfg {

// Symbols are plain ints: digits for generated tasks, interned ids when the
// searcher works on arbitrary tokens.
using Seq = std::vector<int>;

// Declared in name order, which is the searcher's operator order.
enum class Op : std::uint8_t {
    append,
    copy,
    echo,
    prepend,
    remove_first,
    remove_second,
    repeat,
    reverse,
    shift,
    swap,
};

inline constexpr std::array<Op, 10> kAllOps = {Op::append,       Op::copy,          Op::echo,   Op::prepend,
                                               Op::remove_first, Op::remove_second, Op::repeat, Op::reverse,
                                               Op::shift,        Op::swap};

int arity(Op op);
std::string_view op_name(Op op);
std::optional<Op> op_from_name(std::string_view name);

enum class ShiftDirection { left, right };

/// Throws DomainError on an empty unary argument.
Seq apply_unary(Op op, const Seq& a, ShiftDirection shift = ShiftDirection::left);
Seq apply_binary(Op op, const Seq& a, const Seq& b);
/// Arity-checked dispatch; StructuralError when args.size() != arity(op).
Seq apply_op(Op op, std::span<const Seq> args, ShiftDirection shift = ShiftDirection::left);

struct Expr {
    int leaf = 0;  // 1-based segment index when this is a leaf, else 0
    Op op = Op::copy;
    std::vector<Expr> args;

    static Expr make_leaf(int index);
    static Expr make(Op op, std::vector<Expr> args);

    bool is_leaf() const { return leaf > 0; }
    friend bool operator==(const Expr&, const Expr&) = default;
};

struct Program {
    Expr root = Expr::make_leaf(1);

    int op_count() const;
    /// Largest leaf index referenced.
    int leaf_count() const;
    /// Leaves are exactly 1..m, each used at least once.
    bool well_formed() const;

    /// "(remove_second (reverse s1) s2)"; a bare leaf prints as "s1".
    std::string to_sexpr() const;
    static Program parse(std::string_view text);

    friend bool operator==(const Program&, const Program&) = default;
};

/// StructuralError when a leaf index exceeds leaves.size().
Seq eval_program(const Program& program, std::span<const Seq> leaves,
                 ShiftDirection shift = ShiftDirection::left);

/// Contiguous segments with the given lengths. StructuralError when the
/// lengths do not sum to input.size() or any is < 1.
std::vector<Seq> split_segments(const Seq& input, std::span<const int> partition);

/// Output length from leaf lengths, without evaluating.
std::size_t output_length(const Expr& expr, std::span<const std::size_t> leaf_lengths);

struct GeneratorOptions {
    int max_leaves = 3;
    int n_examples = 4;
    /// Programs whose outputs could exceed this many tokens are resampled
    /// (stacked repeats otherwise double the length per operator).
    std::size_t max_output_length = 64;
    ShiftDirection shift = ShiftDirection::left;
};

struct SampledProgram {
    Program program;
    std::vector<int> partition;
};

/// Exactly w operator nodes over m contiguous segments; m is uniform in
/// [1, min(max_leaves, k, w + 1)] since w operators can host at most w + 1
/// distinct leaves. DomainError when k < 1 or w < 0.
SampledProgram sample_program(int k, int w, int max_leaves, Rng& rng, std::size_t max_output_length = 64);

struct Example {
    Seq input;
    Seq output;
    friend bool operator==(const Example&, const Example&) = default;
};

struct Task {
    std::string id;
    std::uint64_t seed = 0;
    int k = 0;
    int w = 0;
    Program program;
    std::vector<int> partition;
    std::vector<Example> examples;
    Example query;  // query.output is the hidden answer
    bool has_answer = true;  // false for tasks read from a public split
};

Task generate_task(int k, int w, Rng& rng, const GeneratorOptions& options = {});

/// Every cell (k, w) with w < k or w == 0, `per_cell` tasks each. Task i of a
/// cell is generated from a seed derived from (seed, k, w, i), so cells are
/// independent of which other cells are requested.
std::vector<Task> generate_suite(std::span<const int> ks, std::span<const int> ws, int per_cell,
                                 std::uint64_t seed, const GeneratorOptions& options = {});

inline constexpr std::array<int, 6> kTableTokens = {1, 2, 4, 8, 16, 32};
inline constexpr std::array<int, 6> kTableRules = {0, 1, 3, 7, 15, 31};

bool cell_included(int k, int w);

// --- prompts ------------------------------------------------------------------

/// "in, out; in, out; query," with tokens space-joined; digits are written
/// through `alphabet` when given.
std::string build_prompt(const Task& task, const codec::Alphabet* alphabet = nullptr,
                         const codec::CodecProfile& profile = {});

/// Text up to the first segment delimiter or newline, split on whitespace and
/// mapped back to digits. nullopt when any token is not a known symbol.
std::optional<Seq> parse_completion(std::string_view completion, const codec::Alphabet* alphabet = nullptr,
                                    const codec::CodecProfile& profile = {});

/// " 8 4" style: each symbol preceded by a space.
std::string format_completion(const Seq& seq, const codec::Alphabet* alphabet = nullptr);

// --- search -------------------------------------------------------------------

struct SearchLimits {
    int max_ops = 3;
    int max_leaves = 3;
    std::uint64_t node_budget = 20'000'000;
    ShiftDirection shift = ShiftDirection::left;
};

struct SearchResult {
    Program program;
    std::vector<int> partition;
    std::uint64_t nodes = 0;
};

/// Iterative deepening over operator count; within a depth, partitions by
/// number of segments then lexicographically; within a partition, programs in
/// operator-name order (root first, then children left to right). Returns
/// the first program consistent with every example, or nullopt when none
/// exists within the limits or the node budget runs out.
/// DomainError when example inputs differ in length.
std::optional<SearchResult> search(std::span<const Example> examples, const SearchLimits& limits = {});

std::optional<Seq> predict_with_search(const Task& task, const SearchLimits& limits = {});

/// All compositions of k into at most max_parts positive parts, in search order.
std::vector<std::vector<int>> ordered_partitions(int k, int max_parts);

// --- evaluation ---------------------------------------------------------------

struct TaskRecord {
    std::string task_id;
    int k = 0;
    int w = 0;
    std::string model;
    std::size_t prompt_chars = 0;
    std::string completion;
    std::optional<Seq> parsed;
    bool correct = false;
    bool errored = false;
    std::string error;
    double latency_ms = 0.0;
};

struct CellStats {
    int solved = 0;
    int total = 0;
    double accuracy() const { return total == 0 ? 0.0 : 100.0 * solved / total; }
};

struct Report {
    std::vector<TaskRecord> records;  // in task order
    std::map<std::pair<int, int>, CellStats> cells;
    CellStats overall;
};

struct EvalOptions {
    int parallelism = 1;
    int max_tokens = 0;  // 0: twice the longest example output plus slack
    double temperature = 0.0;
    const codec::Alphabet* alphabet = nullptr;
    codec::CodecProfile profile;
};

Report evaluate(models::CompletionModel& model, std::span<const Task> tasks, const EvalOptions& options = {});

/// (prompt, formatted ground-truth answer) per task, for a scripted oracle.
std::vector<std::pair<std::string, std::string>> oracle_entries(std::span<const Task> tasks,
                                                                const EvalOptions& options = {});

// --- files --------------------------------------------------------------------

nlohmann::json to_json(const Task& task, bool include_answer);
Task task_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskRecord& record);

void write_dataset(const std::filesystem::path& path, std::span<const Task> tasks, bool include_answers);
/// Lines carrying an "artifact" key (provenance headers) are skipped.
std::vector<Task> read_dataset(const std::filesystem::path& path);

}  // namespace gpm::pcfg
