#pragma once

// ARC-format suites: loading, prompt construction, prediction parsing and
// exact-match scoring.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gpm/codec.hpp"

namespace gpm::models {
class CompletionModel;
}

namespace gpm::arc {

using codec::Grid;

struct Pair {
    Grid input;
    Grid output;
};

struct Task {
    std::string id;
    std::vector<Pair> train;
    std::vector<Pair> test;
};

struct Suite {
    std::vector<Task> tasks;  // sorted by id
    std::vector<std::string> warnings;
    std::string hash;  // SHA-256 over ids and grid contents, hex
};

/// Parse one task record. ParseError naming `source` and the bad field.
Task parse_task(const nlohmann::json& j, const std::string& id, const std::string& source = "<memory>");

/// Every *.json below `path` (recursively). Task ids are file stems and must
/// be unique. A missing path is a ConfigError; an empty one yields a warning.
Suite load_suite(const std::filesystem::path& path);

std::string suite_hash(std::span<const Task> tasks);

/// Train pairs as "input:\n<grid>\noutput:\n<grid>\n---\n", then
/// "input:\n<test grid>\noutput:\n". Throws DomainError for a bad index.
std::string build_prompt(const Task& task, std::size_t test_index, const codec::CodecProfile& profile = {},
                         const codec::Alphabet* alphabet = nullptr);

/// Rows up to a blank line, the example delimiter, an input header or the end
/// of text. nullopt when nothing parses to a non-empty rectangular grid.
std::optional<Grid> parse_prediction(std::string_view text, const codec::CodecProfile& profile = {},
                                     const codec::Alphabet* alphabet = nullptr);

/// Completion budget: room for the largest grid in the task, each cell
/// followed by a delimiter, plus one unit per row.
int max_tokens_for(const Task& task, std::size_t test_index);

struct TestRecord {
    std::vector<std::string> completions;  // one per candidate
    bool parsed = false;
    bool correct = false;
};

struct TaskRecord {
    std::string task_id;
    std::string model;
    std::size_t prompt_chars = 0;
    std::vector<TestRecord> tests;
    bool solved = false;
    bool errored = false;
    std::string error;
    double latency_ms = 0.0;
};

struct EvalOptions {
    int parallelism = 1;
    int candidates = 1;  // solved if any candidate matches
    double temperature = 0.0;
    std::uint64_t seed = 0;
    const codec::Alphabet* alphabet = nullptr;
    codec::CodecProfile profile;
};

struct Report {
    std::vector<TaskRecord> records;  // suite order
    int solved = 0;
    int total = 0;
    int errored = 0;
};

Report run_eval(models::CompletionModel& model, std::span<const Task> tasks, const EvalOptions& options = {});

/// (prompt, ground-truth completion) for every test input, for a scripted oracle.
std::vector<std::pair<std::string, std::string>> oracle_entries(std::span<const Task> tasks,
                                                                const EvalOptions& options = {});

nlohmann::json to_json(const TaskRecord& record);

}  // namespace gpm::arc
