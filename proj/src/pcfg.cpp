#include "gpm/pcfg.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <thread>

#include "gpm/error.hpp"
#include "gpm/models.hpp"

namespace gpm::pcfg {

namespace {

constexpr std::array<std::string_view, 10> kNames = {"append",        "copy",   "echo",    "prepend", "remove_first",
                                                     "remove_second", "repeat", "reverse", "shift",   "swap"};

std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

int arity(Op op) {
    switch (op) {
        case Op::append:
        case Op::prepend:
        case Op::remove_first:
        case Op::remove_second:
            return 2;
        default:
            return 1;
    }
}

std::string_view op_name(Op op) { return kNames[static_cast<std::size_t>(op)]; }

std::optional<Op> op_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNames.size(); ++i)
        if (kNames[i] == name) return static_cast<Op>(i);
    return std::nullopt;
}

Seq apply_unary(Op op, const Seq& a, ShiftDirection shift) {
    if (arity(op) != 1) throw StructuralError(std::string(op_name(op)) + " takes two arguments");
    if (a.empty()) throw DomainError(std::string(op_name(op)) + " of an empty sequence");
    Seq out;
    switch (op) {
        case Op::copy:
            return a;
        case Op::reverse:
            return Seq(a.rbegin(), a.rend());
        case Op::shift:
            out = a;
            if (shift == ShiftDirection::left)
                std::rotate(out.begin(), out.begin() + 1, out.end());
            else
                std::rotate(out.rbegin(), out.rbegin() + 1, out.rend());
            return out;
        case Op::swap:
            out = a;
            std::swap(out.front(), out.back());
            return out;
        case Op::repeat:
            out.reserve(2 * a.size());
            out.insert(out.end(), a.begin(), a.end());
            out.insert(out.end(), a.begin(), a.end());
            return out;
        case Op::echo:
            out = a;
            out.push_back(a.back());
            return out;
        default:
            break;
    }
    throw StructuralError("unreachable unary operator");
}

Seq apply_binary(Op op, const Seq& a, const Seq& b) {
    Seq out;
    switch (op) {
        case Op::append:
            out.reserve(a.size() + b.size());
            out.insert(out.end(), a.begin(), a.end());
            out.insert(out.end(), b.begin(), b.end());
            return out;
        case Op::prepend:
            out.reserve(a.size() + b.size());
            out.insert(out.end(), b.begin(), b.end());
            out.insert(out.end(), a.begin(), a.end());
            return out;
        case Op::remove_first:
            return b;
        case Op::remove_second:
            return a;
        default:
            throw StructuralError(std::string(op_name(op)) + " takes one argument");
    }
}

Seq apply_op(Op op, std::span<const Seq> args, ShiftDirection shift) {
    if (static_cast<int>(args.size()) != arity(op))
        throw StructuralError(std::string(op_name(op)) + ": wrong number of arguments");
    return args.size() == 1 ? apply_unary(op, args[0], shift) : apply_binary(op, args[0], args[1]);
}

// --- expressions --------------------------------------------------------------

Expr Expr::make_leaf(int index) {
    if (index < 1) throw StructuralError("leaf index must be >= 1");
    Expr e;
    e.leaf = index;
    return e;
}

Expr Expr::make(Op op, std::vector<Expr> args) {
    if (static_cast<int>(args.size()) != arity(op))
        throw StructuralError(std::string(op_name(op)) + ": wrong number of arguments");
    Expr e;
    e.op = op;
    e.args = std::move(args);
    return e;
}

namespace {

int count_ops(const Expr& e) {
    if (e.is_leaf()) return 0;
    int n = 1;
    for (const auto& a : e.args) n += count_ops(a);
    return n;
}

void collect_leaves(const Expr& e, std::vector<int>& out) {
    if (e.is_leaf()) {
        out.push_back(e.leaf);
        return;
    }
    for (const auto& a : e.args) collect_leaves(a, out);
}

void print(const Expr& e, std::string& out) {
    if (e.is_leaf()) {
        out += 's';
        out += std::to_string(e.leaf);
        return;
    }
    out += '(';
    out += op_name(e.op);
    for (const auto& a : e.args) {
        out += ' ';
        print(a, out);
    }
    out += ')';
}

struct SexprParser {
    std::string_view text;
    std::size_t pos = 0;

    void skip() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("program: " + msg + " at offset " + std::to_string(pos), 0, static_cast<int>(pos));
    }

    std::string_view atom() {
        const std::size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) && text[pos] != '(' &&
               text[pos] != ')')
            ++pos;
        if (start == pos) fail("expected a name");
        return text.substr(start, pos - start);
    }

    Expr expr() {
        skip();
        if (pos >= text.size()) fail("unexpected end");
        if (text[pos] == '(') {
            ++pos;
            skip();
            const auto name = atom();
            const auto op = op_from_name(name);
            if (!op) fail("unknown operator '" + std::string(name) + "'");
            std::vector<Expr> args;
            for (;;) {
                skip();
                if (pos >= text.size()) fail("missing ')'");
                if (text[pos] == ')') {
                    ++pos;
                    break;
                }
                args.push_back(expr());
            }
            if (static_cast<int>(args.size()) != arity(*op)) fail(std::string(name) + ": wrong number of arguments");
            return Expr::make(*op, std::move(args));
        }
        const auto name = atom();
        int index = 0;
        if (name.size() < 2 || name[0] != 's' || !codec::parse_int(name.substr(1), index) || index < 1)
            fail("bad leaf '" + std::string(name) + "'");
        return Expr::make_leaf(index);
    }
};

Seq eval(const Expr& e, std::span<const Seq> leaves, ShiftDirection shift) {
    if (e.is_leaf()) {
        if (e.leaf > static_cast<int>(leaves.size()))
            throw StructuralError("leaf s" + std::to_string(e.leaf) + " out of range");
        return leaves[e.leaf - 1];
    }
    if (e.args.size() == 1) return apply_unary(e.op, eval(e.args[0], leaves, shift), shift);
    return apply_binary(e.op, eval(e.args[0], leaves, shift), eval(e.args[1], leaves, shift));
}

}  // namespace

int Program::op_count() const { return count_ops(root); }

int Program::leaf_count() const {
    std::vector<int> leaves;
    collect_leaves(root, leaves);
    return leaves.empty() ? 0 : *std::max_element(leaves.begin(), leaves.end());
}

bool Program::well_formed() const {
    std::vector<int> leaves;
    collect_leaves(root, leaves);
    const int m = leaf_count();
    std::vector<bool> seen(m + 1, false);
    for (int l : leaves) seen[l] = true;
    for (int i = 1; i <= m; ++i)
        if (!seen[i]) return false;
    return true;
}

std::string Program::to_sexpr() const {
    std::string out;
    print(root, out);
    return out;
}

Program Program::parse(std::string_view text) {
    SexprParser p{text};
    Program prog;
    prog.root = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("trailing text");
    return prog;
}

Seq eval_program(const Program& program, std::span<const Seq> leaves, ShiftDirection shift) {
    return eval(program.root, leaves, shift);
}

std::vector<Seq> split_segments(const Seq& input, std::span<const int> partition) {
    std::vector<Seq> out;
    std::size_t pos = 0;
    for (int len : partition) {
        if (len < 1) throw StructuralError("partition parts must be positive");
        if (pos + len > input.size()) throw StructuralError("partition exceeds input length");
        out.emplace_back(input.begin() + pos, input.begin() + pos + len);
        pos += len;
    }
    if (pos != input.size()) throw StructuralError("partition does not cover the input");
    return out;
}

std::size_t output_length(const Expr& e, std::span<const std::size_t> leaf_lengths) {
    if (e.is_leaf()) {
        if (e.leaf > static_cast<int>(leaf_lengths.size())) throw StructuralError("leaf out of range");
        return leaf_lengths[e.leaf - 1];
    }
    const std::size_t a = output_length(e.args[0], leaf_lengths);
    switch (e.op) {
        case Op::repeat:
            return 2 * a;
        case Op::echo:
            return a + 1;
        case Op::append:
        case Op::prepend:
            return a + output_length(e.args[1], leaf_lengths);
        case Op::remove_first:
            return output_length(e.args[1], leaf_lengths);
        default:
            return a;
    }
}

// --- generation ---------------------------------------------------------------

namespace {

constexpr std::array<Op, 6> kUnary = {Op::copy, Op::reverse, Op::shift, Op::swap, Op::repeat, Op::echo};
constexpr std::array<Op, 4> kBinary = {Op::append, Op::prepend, Op::remove_first, Op::remove_second};

// A tree with exactly n operator nodes and at least `need` leaf slots
// (need <= n + 1). Leaves carry placeholder index 1 until labelled.
Expr grow(int n, int need, Rng& rng) {
    if (n == 0) return Expr::make_leaf(1);
    const bool unary_ok = need <= n;
    const bool unary = unary_ok && rng.coin();
    if (unary) return Expr::make(kUnary[rng.below(kUnary.size())], {grow(n - 1, need, rng)});
    const int l = static_cast<int>(rng.below(n));
    const int r = n - 1 - l;
    const int lo = std::max(0, need - (r + 1));
    const int hi = std::min(l + 1, need);
    const int need_left = static_cast<int>(rng.uniform_int(lo, hi));
    const Op op = kBinary[rng.below(kBinary.size())];
    Expr left = grow(l, need_left, rng);
    Expr right = grow(r, need - need_left, rng);
    return Expr::make(op, {std::move(left), std::move(right)});
}

void label(Expr& e, const std::vector<int>& labels, std::size_t& next) {
    if (e.is_leaf()) {
        e.leaf = labels[next++];
        return;
    }
    for (auto& a : e.args) label(a, labels, next);
}

std::vector<int> random_composition(int k, int m, Rng& rng) {
    // m - 1 distinct cut points among the k - 1 gaps
    std::vector<int> gaps(k - 1);
    for (int i = 0; i < k - 1; ++i) gaps[i] = i + 1;
    for (int i = 0; i < m - 1; ++i) std::swap(gaps[i], gaps[i + rng.below(gaps.size() - i)]);
    std::vector<int> cuts(gaps.begin(), gaps.begin() + (m - 1));
    std::sort(cuts.begin(), cuts.end());
    std::vector<int> parts;
    int prev = 0;
    for (int c : cuts) {
        parts.push_back(c - prev);
        prev = c;
    }
    parts.push_back(k - prev);
    return parts;
}

}  // namespace

SampledProgram sample_program(int k, int w, int max_leaves, Rng& rng, std::size_t max_output_length) {
    if (k < 1) throw DomainError("k must be >= 1");
    if (w < 0) throw DomainError("w must be >= 0");
    if (max_leaves < 1) throw DomainError("max_leaves must be >= 1");
    const int m_hi = std::min({max_leaves, k, w + 1});
    for (;;) {
        const int m = static_cast<int>(rng.uniform_int(1, m_hi));
        Expr root = grow(w, m, rng);
        std::vector<int> slots;
        collect_leaves(root, slots);
        std::vector<int> labels;
        for (int i = 1; i <= m; ++i) labels.push_back(i);
        while (labels.size() < slots.size()) labels.push_back(static_cast<int>(rng.uniform_int(1, m)));
        rng.shuffle(labels);
        std::size_t next = 0;
        label(root, labels, next);

        SampledProgram out;
        out.program.root = std::move(root);
        out.partition = random_composition(k, m, rng);
        std::vector<std::size_t> lengths(out.partition.begin(), out.partition.end());
        if (output_length(out.program.root, lengths) <= max_output_length) return out;
    }
}

Task generate_task(int k, int w, Rng& rng, const GeneratorOptions& options) {
    if (options.n_examples < 1) throw DomainError("n_examples must be >= 1");
    auto sampled = sample_program(k, w, options.max_leaves, rng, options.max_output_length);
    Task task;
    task.k = k;
    task.w = w;
    task.program = std::move(sampled.program);
    task.partition = std::move(sampled.partition);
    for (int i = 0; i <= options.n_examples; ++i) {
        Example ex;
        ex.input.resize(k);
        for (auto& v : ex.input) v = static_cast<int>(rng.below(10));
        ex.output = eval_program(task.program, split_segments(ex.input, task.partition), options.shift);
        if (i == options.n_examples)
            task.query = std::move(ex);
        else
            task.examples.push_back(std::move(ex));
    }
    return task;
}

bool cell_included(int k, int w) { return w == 0 || w < k; }

std::vector<Task> generate_suite(std::span<const int> ks, std::span<const int> ws, int per_cell, std::uint64_t seed,
                                 const GeneratorOptions& options) {
    std::vector<Task> out;
    for (int k : ks) {
        for (int w : ws) {
            if (!cell_included(k, w)) continue;
            for (int i = 0; i < per_cell; ++i) {
                const std::uint64_t task_seed =
                    mix(mix(mix(seed) ^ static_cast<std::uint64_t>(k)) ^ (static_cast<std::uint64_t>(w) << 20) ^
                        (static_cast<std::uint64_t>(i) << 40));
                Rng rng(task_seed);
                Task t = generate_task(k, w, rng, options);
                t.seed = task_seed;
                char id[48];
                std::snprintf(id, sizeof id, "k%d_w%d_%03d", k, w, i);
                t.id = id;
                out.push_back(std::move(t));
            }
        }
    }
    return out;
}

// --- prompts ------------------------------------------------------------------

namespace {

std::string join_symbols(const Seq& seq, const codec::Alphabet* alphabet, std::string_view delim) {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i) out += delim;
        out += alphabet ? alphabet->token_for(seq[i]) : std::to_string(seq[i]);
    }
    return out;
}

}  // namespace

std::string build_prompt(const Task& task, const codec::Alphabet* alphabet, const codec::CodecProfile& profile) {
    std::string out;
    for (const auto& ex : task.examples) {
        out += join_symbols(ex.input, alphabet, profile.dim_delimiter);
        out += profile.cell_delimiter;
        out += join_symbols(ex.output, alphabet, profile.dim_delimiter);
        out += profile.segment_delimiter;
    }
    out += join_symbols(task.query.input, alphabet, profile.dim_delimiter);
    out += profile.open_terminator();
    return out;
}

std::optional<Seq> parse_completion(std::string_view completion, const codec::Alphabet* alphabet,
                                    const codec::CodecProfile& profile) {
    const auto stop = codec::trim(profile.segment_delimiter);
    std::size_t end = completion.find('\n');
    if (!stop.empty()) end = std::min(end, completion.find(stop));
    const auto body = completion.substr(0, end);
    Seq out;
    for (auto tok : codec::split_ws(body)) {
        if (alphabet) {
            if (!alphabet->has_token(std::string(tok))) return std::nullopt;
            out.push_back(alphabet->digit_for(std::string(tok)));
        } else {
            int v = 0;
            if (tok.size() != 1 || !codec::parse_int(tok, v) || v < 0 || v > 9) return std::nullopt;
            out.push_back(v);
        }
    }
    if (out.empty()) return std::nullopt;
    return out;
}

std::string format_completion(const Seq& seq, const codec::Alphabet* alphabet) {
    std::string out;
    for (int v : seq) {
        out += ' ';
        out += alphabet ? alphabet->token_for(v) : std::to_string(v);
    }
    return out;
}

std::optional<Seq> predict_with_search(const Task& task, const SearchLimits& limits) {
    if (task.examples.empty()) return std::nullopt;
    const auto found = search(task.examples, limits);
    if (!found) return std::nullopt;
    return eval_program(found->program, split_segments(task.query.input, found->partition), limits.shift);
}

// --- evaluation ---------------------------------------------------------------

namespace {

int default_max_tokens(const Task& task) {
    std::size_t longest = task.query.input.size();
    for (const auto& ex : task.examples) longest = std::max(longest, ex.output.size());
    return static_cast<int>(2 * longest + 8);
}

}  // namespace

Report evaluate(models::CompletionModel& model, std::span<const Task> tasks, const EvalOptions& options) {
    Report report;
    report.records.resize(tasks.size());
    const bool timed = !model.is_local();
    std::atomic<std::size_t> next{0};
    std::mutex mu;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            TaskRecord rec;
            rec.task_id = task.id;
            rec.k = task.k;
            rec.w = task.w;
            rec.model = model.name();
            models::CompletionRequest req;
            req.prompt = build_prompt(task, options.alphabet, options.profile);
            req.max_tokens = options.max_tokens > 0 ? options.max_tokens : default_max_tokens(task);
            req.stop = {std::string(codec::trim(options.profile.segment_delimiter)), "\n"};
            req.temperature = options.temperature;
            req.seed = task.seed;
            rec.prompt_chars = req.prompt.size();
            const auto t0 = std::chrono::steady_clock::now();
            try {
                rec.completion = model.complete(req);
                rec.parsed = parse_completion(rec.completion, options.alphabet, options.profile);
                rec.correct = task.has_answer && rec.parsed && *rec.parsed == task.query.output;
            } catch (const std::exception& e) {
                rec.errored = true;
                rec.error = e.what();
            }
            if (timed)
                rec.latency_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            std::lock_guard lock(mu);
            report.records[i] = std::move(rec);
        }
    };

    const int n = std::max(1, std::min<int>(options.parallelism, static_cast<int>(tasks.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const auto& rec : report.records) {
        auto& cell = report.cells[{rec.k, rec.w}];
        ++cell.total;
        ++report.overall.total;
        if (rec.correct) {
            ++cell.solved;
            ++report.overall.solved;
        }
    }
    return report;
}

std::vector<std::pair<std::string, std::string>> oracle_entries(std::span<const Task> tasks,
                                                                const EvalOptions& options) {
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(tasks.size());
    for (const auto& t : tasks)
        out.emplace_back(build_prompt(t, options.alphabet, options.profile),
                         format_completion(t.query.output, options.alphabet));
    return out;
}

// --- files --------------------------------------------------------------------

nlohmann::json to_json(const Task& task, bool include_answer) {
    nlohmann::json examples = nlohmann::json::array();
    for (const auto& ex : task.examples) examples.push_back({{"input", ex.input}, {"output", ex.output}});
    nlohmann::json j = {{"id", task.id},
                        {"seed", task.seed},
                        {"k", task.k},
                        {"w", task.w},
                        {"program", task.program.to_sexpr()},
                        {"partition", task.partition},
                        {"examples", examples},
                        {"query_input", task.query.input}};
    if (include_answer && task.has_answer) j["query_output"] = task.query.output;
    return j;
}

Task task_from_json(const nlohmann::json& j) {
    try {
        Task t;
        t.id = j.at("id").get<std::string>();
        t.seed = j.value("seed", std::uint64_t{0});
        t.k = j.at("k").get<int>();
        t.w = j.at("w").get<int>();
        t.program = Program::parse(j.at("program").get<std::string>());
        t.partition = j.at("partition").get<std::vector<int>>();
        for (const auto& ex : j.at("examples"))
            t.examples.push_back({ex.at("input").get<Seq>(), ex.at("output").get<Seq>()});
        t.query.input = j.at("query_input").get<Seq>();
        if (j.contains("query_output")) {
            t.query.output = j["query_output"].get<Seq>();
        } else {
            t.has_answer = false;
        }
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("task record: ") + e.what());
    }
}

nlohmann::json to_json(const TaskRecord& r) {
    nlohmann::json j = {{"task_id", r.task_id},     {"k", r.k},
                        {"w", r.w},                 {"model", r.model},
                        {"prompt_chars", r.prompt_chars}, {"completion", r.completion},
                        {"parsed", nullptr},        {"correct", r.correct},
                        {"latency_ms", r.latency_ms}};
    if (r.parsed) j["parsed"] = *r.parsed;
    if (r.errored) j["error"] = r.error;
    return j;
}

void write_dataset(const std::filesystem::path& path, std::span<const Task> tasks, bool include_answers) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    for (const auto& t : tasks) out << to_json(t, include_answers).dump() << '\n';
}

std::vector<Task> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::vector<Task> out;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (codec::trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.contains("artifact")) continue;  // provenance header
            out.push_back(task_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": " + e.what(), row);
        }
    }
    return out;
}

}  // namespace gpm::pcfg
