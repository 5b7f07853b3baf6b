#include "gpm/arc.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "gpm/error.hpp"
#include "gpm/models.hpp"

namespace gpm::arc {

namespace {

Grid parse_grid(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ParseError(where + ": expected a non-empty 2D array");
    Grid g;
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto& row = j[r];
        if (!row.is_array() || row.empty())
            throw ParseError(where + ": row " + std::to_string(r) + " is not a non-empty array", static_cast<int>(r));
        std::vector<int> cells;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (!row[c].is_number_integer())
                throw ParseError(where + ": non-integer cell", static_cast<int>(r), static_cast<int>(c));
            const int v = row[c].get<int>();
            if (v < 0 || v > 9)
                throw DomainError(where + ": cell value " + std::to_string(v) + " outside 0-9 at row " +
                                  std::to_string(r) + " col " + std::to_string(c));
            cells.push_back(v);
        }
        if (!g.empty() && cells.size() != g.front().size())
            throw StructuralError(where + ": ragged grid at row " + std::to_string(r));
        g.push_back(std::move(cells));
    }
    if (g.size() > 30 || g.front().size() > 30) throw StructuralError(where + ": grid larger than 30x30");
    return g;
}

std::vector<Pair> parse_pairs(const nlohmann::json& j, const char* field, const std::string& source) {
    if (!j.contains(field) || !j[field].is_array()) throw ParseError(source + ": missing array field '" + field + "'");
    std::vector<Pair> out;
    const auto& arr = j[field];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = source + ": " + field + "[" + std::to_string(i) + "]";
        if (!arr[i].contains("input") || !arr[i].contains("output"))
            throw ParseError(where + ": needs 'input' and 'output'");
        out.push_back({parse_grid(arr[i]["input"], where + ".input"), parse_grid(arr[i]["output"], where + ".output")});
    }
    return out;
}

void hash_grid(EVP_MD_CTX* ctx, const Grid& g) {
    std::string s = std::to_string(g.size()) + "x" + std::to_string(g.front().size()) + ":";
    for (const auto& row : g)
        for (int v : row) s += static_cast<char>('0' + v);
    EVP_DigestUpdate(ctx, s.data(), s.size());
}

}  // namespace

Task parse_task(const nlohmann::json& j, const std::string& id, const std::string& source) {
    if (!j.is_object()) throw ParseError(source + ": task record must be an object");
    Task t;
    t.id = id;
    t.train = parse_pairs(j, "train", source);
    t.test = parse_pairs(j, "test", source);
    if (t.train.empty()) throw StructuralError(source + ": 'train' is empty");
    if (t.test.empty() || t.test.size() > 3) throw StructuralError(source + ": 'test' must have 1-3 pairs");
    return t;
}

Suite load_suite(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw ConfigError("ARC suite path does not exist: " + path.string());
    std::vector<fs::path> files;
    if (fs::is_regular_file(path)) {
        files.push_back(path);
    } else {
        for (const auto& e : fs::recursive_directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    Suite suite;
    std::set<std::string> ids;
    for (const auto& f : files) {
        std::ifstream in(f);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(f.string() + ": " + e.what());
        }
        const std::string id = f.stem().string();
        if (!ids.insert(id).second) throw ConfigError("duplicate ARC task id '" + id + "' at " + f.string());
        suite.tasks.push_back(parse_task(j, id, f.string()));
    }
    std::sort(suite.tasks.begin(), suite.tasks.end(), [](const Task& a, const Task& b) { return a.id < b.id; });
    if (suite.tasks.empty()) suite.warnings.push_back("no ARC task files found under " + path.string());
    suite.hash = suite_hash(suite.tasks);
    return suite;
}

std::string suite_hash(std::span<const Task> tasks) {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    for (const auto& t : tasks) {
        EVP_DigestUpdate(ctx, t.id.data(), t.id.size());
        for (const auto* pairs : {&t.train, &t.test}) {
            EVP_DigestUpdate(ctx, "|", 1);
            for (const auto& p : *pairs) {
                hash_grid(ctx, p.input);
                hash_grid(ctx, p.output);
            }
        }
        EVP_DigestUpdate(ctx, "\n", 1);
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string build_prompt(const Task& task, std::size_t test_index, const codec::CodecProfile& profile,
                         const codec::Alphabet* alphabet) {
    if (test_index >= task.test.size()) throw DomainError("test index out of range for task " + task.id);
    const std::string& nl = profile.row_delimiter;
    std::string out;
    for (const auto& p : task.train) {
        out += profile.input_header + nl + codec::encode_grid(p.input, profile, alphabet) + nl;
        out += profile.output_header + nl + codec::encode_grid(p.output, profile, alphabet) + nl;
        out += profile.example_delimiter + nl;
    }
    out += profile.input_header + nl + codec::encode_grid(task.test[test_index].input, profile, alphabet) + nl;
    out += profile.output_header + nl;
    return out;
}

std::optional<Grid> parse_prediction(std::string_view text, const codec::CodecProfile& profile,
                                     const codec::Alphabet* alphabet) {
    std::string body;
    const auto rows = codec::split(text, profile.row_delimiter);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto row = codec::trim(rows[i]);
        if (row.empty()) {
            if (body.empty()) continue;  // leading blank lines before the grid
            break;
        }
        if (row == codec::trim(profile.example_delimiter) || row == codec::trim(profile.input_header) ||
            row == codec::trim(profile.output_header))
            break;
        if (!body.empty()) body += profile.row_delimiter;
        body += row;
    }
    if (body.empty()) return std::nullopt;
    try {
        return codec::decode_grid(body, profile, alphabet);
    } catch (const Error&) {
        return std::nullopt;
    }
}

int max_tokens_for(const Task& task, std::size_t test_index) {
    std::size_t h = task.test.at(test_index).input.size();
    std::size_t w = task.test[test_index].input.front().size();
    for (const auto& p : task.train) {
        h = std::max({h, p.input.size(), p.output.size()});
        w = std::max({w, p.input.front().size(), p.output.front().size()});
    }
    return static_cast<int>(2 * h * w + h);
}

Report run_eval(models::CompletionModel& model, std::span<const Task> tasks, const EvalOptions& options) {
    if (options.candidates < 1) throw ConfigError("candidates must be >= 1");
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
            rec.model = model.name();
            rec.solved = true;
            const auto t0 = std::chrono::steady_clock::now();
            try {
                for (std::size_t ti = 0; ti < task.test.size(); ++ti) {
                    models::CompletionRequest req;
                    req.prompt = build_prompt(task, ti, options.profile, options.alphabet);
                    req.max_tokens = max_tokens_for(task, ti);
                    req.stop = {options.profile.row_delimiter + options.profile.example_delimiter,
                                options.profile.row_delimiter + options.profile.row_delimiter,
                                options.profile.row_delimiter + options.profile.input_header};
                    req.temperature = options.temperature;
                    rec.prompt_chars += req.prompt.size();
                    TestRecord tr;
                    for (int c = 0; c < options.candidates; ++c) {
                        req.seed = options.seed + 1000003ULL * i + 101ULL * ti + c;
                        tr.completions.push_back(model.complete(req));
                        const auto grid = parse_prediction(tr.completions.back(), options.profile, options.alphabet);
                        tr.parsed = tr.parsed || grid.has_value();
                        if (grid && *grid == task.test[ti].output) tr.correct = true;
                    }
                    rec.solved = rec.solved && tr.correct;
                    rec.tests.push_back(std::move(tr));
                }
            } catch (const std::exception& e) {
                rec.errored = true;
                rec.solved = false;
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
    for (const auto& r : report.records) {
        ++report.total;
        report.solved += r.solved;
        report.errored += r.errored;
    }
    return report;
}

std::vector<std::pair<std::string, std::string>> oracle_entries(std::span<const Task> tasks,
                                                                const EvalOptions& options) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& t : tasks)
        for (std::size_t i = 0; i < t.test.size(); ++i)
            out.emplace_back(build_prompt(t, i, options.profile, options.alphabet),
                             codec::encode_grid(t.test[i].output, options.profile, options.alphabet) +
                                 options.profile.row_delimiter + options.profile.example_delimiter +
                                 options.profile.row_delimiter);
    return out;
}

nlohmann::json to_json(const TaskRecord& r) {
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& t : r.tests)
        tests.push_back({{"completions", t.completions}, {"parsed", t.parsed}, {"correct", t.correct}});
    nlohmann::json j = {{"task_id", r.task_id},
                        {"model", r.model},
                        {"prompt_chars", r.prompt_chars},
                        {"tests", tests},
                        {"solved", r.solved},
                        {"latency_ms", r.latency_ms}};
    if (r.errored) j["error"] = r.error;
    return j;
}

}  // namespace gpm::arc
