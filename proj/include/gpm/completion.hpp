#pragma once

// Sequence completion: discretized function and motion-trace extrapolation
// tasks, Dynamic Time Warping scoring, and a model-driven evaluation loop.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace gpm::models {
class CompletionModel;
}

namespace gpm::completion {

using Frame = std::vector<int>;
using Frames = std::vector<Frame>;

/// Linear map from [lo, hi] onto the integer bins [bin_lo, bin_hi].
struct Scale {
    double lo = 0.0;
    double hi = 1.0;
    int bin_lo = 0;
    int bin_hi = 100;

    /// Nearest bin, clipped into range.
    int bin(double y) const;
    double unbin(int v) const;
    double bin_width() const { return (hi - lo) / (bin_hi - bin_lo); }
};

enum class Family { sin, grow_sin, decay_sin };
/// a/(2x) by default; a/(2x^2) is the alternative reading of the decaying family.
enum class DecayForm { over_2x, over_2x_squared };

Family family_from_name(const std::string& name);
std::string family_name(Family f);

struct FunctionSpec {
    Family family = Family::sin;
    double a = 1.0;
    double b = 1.0;
    int points_per_period = 20;
    int context_periods = 3;
    double horizon_periods = 1.0;
    int bin_lo = 0;
    int bin_hi = 100;
    DecayForm decay = DecayForm::over_2x;

    /// ConfigError on invalid parameters.
    void validate() const;
    double eval(double x) const;
};

struct FunctionSample {
    std::vector<int> context;
    std::vector<int> target;
    std::vector<double> x;  // every sample point, context then target
    std::vector<double> y;
    Scale scale;
};

/// Sample points are x0 + i*step (x0 + (i+1)*step for the decaying family so
/// x is never 0), with the start x0 drawn uniformly over one period from the
/// seed. Values are binned over the min/max of the whole sampled span.
FunctionSample sample_function(const FunctionSpec& spec, std::uint64_t seed);

struct Trace {
    Frames frames;  // T x D
    double rate_hz = 1.0;
    int bin_lo = 0;
    int bin_hi = 100;

    std::size_t dims() const { return frames.empty() ? 0 : frames.front().size(); }
};

struct LoopSpec {
    double a_x = 40.0;
    double a_y = 25.0;
    double b = 1.0;
    double c_y = 5.0;
    double d_x = 150.0;
    double d_y = 40.0;
    double sample_rate = 5.0;  // samples per time unit
    int loops_context = 2;
    int bin_lo = 0;
    int bin_hi = 300;
    double noise = 0.0;  // gaussian, in state units, added before binning

    void validate() const;
};

/// "narrow", "medium" or "wide"; ConfigError otherwise.
LoopSpec loop_preset(const std::string& name);

struct LoopSample {
    Trace context;
    Trace target;
    std::vector<double> t;  // sample times, context then target
    std::size_t samples_per_loop = 0;
};

/// loops_context + 1 loops, an integral number of samples per loop so the
/// context/target boundary lands exactly on t = loops_context * 2*pi/b.
LoopSample make_loop_trace(const LoopSpec& spec, std::uint64_t seed);

struct SweepParams {
    int sweeps = 9;
    double duration_s = 25.0;
    double rate_hz = 3.0;
    double noise = 0.0;  // gaussian, metres / quaternion units
};

/// 7-dim pose trace (xyz, quaternion xyzw with w >= 0), binned to 0-100.
Trace synthesize_sweep_demo(const SweepParams& params, std::uint64_t seed);

/// Workspace bounds used when binning sweep positions and quaternions.
Scale sweep_position_scale(int axis);
Scale quaternion_scale();

/// Header "D rate_hz bin_lo bin_hi" then one frame of D integers per line.
Trace load_trace(const std::filesystem::path& path);
void save_trace(const std::filesystem::path& path, const Trace& trace);

/// First floor(fraction * T) frames as context, the rest as target.
std::pair<Trace, Trace> split_trace(const Trace& trace, double context_fraction = 2.0 / 3.0);

// --- scoring --------------------------------------------------------------------

/// Classic DTW with no window: absolute difference for 1-D frames, Euclidean
/// distance otherwise. DomainError on empty input or mismatched dims.
double dtw(std::span<const Frame> a, std::span<const Frame> b);
double dtw(std::span<const int> a, std::span<const int> b);

// --- evaluation -----------------------------------------------------------------

struct CompletionTask {
    std::string id;
    Frames context;
    Frames target;
    int bin_lo = 0;
    int bin_hi = 100;
};

CompletionTask function_task(const FunctionSpec& spec, std::uint64_t seed, std::string id = {});
CompletionTask loop_task(const LoopSpec& spec, std::uint64_t seed, std::string id = {});
CompletionTask trace_task(const Trace& trace, std::string id = {}, double context_fraction = 2.0 / 3.0);

/// Frames joined by ", " (dims space-joined), followed by a closing ",".
std::string encode_prompt(const Frames& context);
/// " f1, f2, ..." for the oracle.
std::string encode_continuation(const Frames& frames);

struct ParsedCompletion {
    Frames frames;     // exactly `length` frames, clipped into the bin range
    int parsed = 0;    // frames read from the text
    bool padded = false;
};

/// Read frames until the first malformed one; pad with the last parsed frame
/// (or `fallback` when nothing parsed) up to `length`.
ParsedCompletion parse_completion(std::string_view text, std::size_t length, std::size_t dims, int bin_lo,
                                  int bin_hi, const Frame& fallback);

struct Trial {
    std::string task_id;
    std::string completion;
    double dtw = 0.0;
    double dtw_per_step = 0.0;
    int parsed = 0;
    bool padded = false;
    bool errored = false;
    std::string error;
};

struct Report {
    std::vector<Trial> trials;
    double mean_dtw = 0.0;
    double var_dtw = 0.0;
    double mean_per_step = 0.0;
    double var_per_step = 0.0;
};

struct EvalOptions {
    int parallelism = 1;
    double temperature = 0.0;
};

Report evaluate_completion(models::CompletionModel& model, std::span<const CompletionTask> tasks,
                           const EvalOptions& options = {});

std::vector<std::pair<std::string, std::string>> oracle_entries(std::span<const CompletionTask> tasks);

nlohmann::json to_json(const Trial& trial);

}  // namespace gpm::completion
