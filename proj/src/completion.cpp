#include "gpm/completion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "gpm/codec.hpp"
#include "gpm/error.hpp"
#include "gpm/models.hpp"
#include "gpm/rng.hpp"

namespace gpm::completion {

using std::numbers::pi;

int Scale::bin(double y) const {
    const double span = hi - lo;
    const double f = span > 0 ? (y - lo) / span : 0.5;
    const long v = std::lround(bin_lo + f * (bin_hi - bin_lo));
    return static_cast<int>(std::clamp<long>(v, bin_lo, bin_hi));
}

double Scale::unbin(int v) const { return lo + (static_cast<double>(v - bin_lo) / (bin_hi - bin_lo)) * (hi - lo); }

Family family_from_name(const std::string& name) {
    if (name == "sin") return Family::sin;
    if (name == "grow_sin") return Family::grow_sin;
    if (name == "decay_sin") return Family::decay_sin;
    throw ConfigError("unknown function family '" + name + "'");
}

std::string family_name(Family f) {
    switch (f) {
        case Family::sin:
            return "sin";
        case Family::grow_sin:
            return "grow_sin";
        case Family::decay_sin:
            return "decay_sin";
    }
    return "?";
}

void FunctionSpec::validate() const {
    if (points_per_period < 4) throw ConfigError("points_per_period must be >= 4");
    if (context_periods < 1) throw ConfigError("context_periods must be >= 1");
    if (!(horizon_periods > 0)) throw ConfigError("horizon_periods must be > 0");
    if (!(b > 0)) throw ConfigError("b must be > 0");
    if (bin_hi <= bin_lo) throw ConfigError("empty bin range");
}

double FunctionSpec::eval(double x) const {
    switch (family) {
        case Family::sin:
            return a * std::sin(b * x);
        case Family::grow_sin:
            return a * x * std::sin(b * x);
        case Family::decay_sin:
            if (x == 0.0) throw DomainError("decaying family evaluated at x = 0");
            return (decay == DecayForm::over_2x ? a / (2 * x) : a / (2 * x * x)) * std::sin(b * x);
    }
    return 0.0;
}

FunctionSample sample_function(const FunctionSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const double period = 2 * pi / spec.b;
    const double step = period / spec.points_per_period;
    const double x0 = rng.uniform(0.0, period);
    const int n_ctx = spec.context_periods * spec.points_per_period;
    const int n_tgt = std::max(1, static_cast<int>(std::lround(spec.horizon_periods * spec.points_per_period)));
    const int first = spec.family == Family::decay_sin ? 1 : 0;

    FunctionSample s;
    for (int i = 0; i < n_ctx + n_tgt; ++i) {
        const double x = x0 + (i + first) * step;
        s.x.push_back(x);
        s.y.push_back(spec.eval(x));
    }
    const auto [mn, mx] = std::minmax_element(s.y.begin(), s.y.end());
    s.scale = {*mn, *mx, spec.bin_lo, spec.bin_hi};
    for (int i = 0; i < n_ctx + n_tgt; ++i) (i < n_ctx ? s.context : s.target).push_back(s.scale.bin(s.y[i]));
    return s;
}

// --- loops ----------------------------------------------------------------------

void LoopSpec::validate() const {
    if (!(b > 0)) throw ConfigError("loop b must be > 0");
    if (!(sample_rate > 0)) throw ConfigError("loop sample_rate must be > 0");
    if (loops_context < 1) throw ConfigError("loops_context must be >= 1");
    if (bin_hi <= bin_lo) throw ConfigError("empty bin range");
}

LoopSpec loop_preset(const std::string& name) {
    LoopSpec s;
    if (name == "narrow") {
        s.a_y = 10.0;
    } else if (name == "medium") {
        s.a_y = 25.0;
    } else if (name == "wide") {
        s.a_y = 40.0;
    } else {
        throw ConfigError("unknown loop preset '" + name + "'");
    }
    return s;
}

LoopSample make_loop_trace(const LoopSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const double period = 2 * pi / spec.b;
    const auto per_loop = static_cast<std::size_t>(std::max(4L, std::lround(period * spec.sample_rate)));
    const double dt = period / static_cast<double>(per_loop);
    const std::size_t n_ctx = per_loop * spec.loops_context;
    const std::size_t n = n_ctx + per_loop;

    LoopSample out;
    out.samples_per_loop = per_loop;
    const Scale unit{static_cast<double>(spec.bin_lo), static_cast<double>(spec.bin_hi), spec.bin_lo, spec.bin_hi};
    for (auto* tr : {&out.context, &out.target}) {
        tr->rate_hz = spec.sample_rate;
        tr->bin_lo = spec.bin_lo;
        tr->bin_hi = spec.bin_hi;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        double x = spec.a_x * std::cos(spec.b * t) + spec.d_x;
        double y = spec.a_y * std::sin(spec.b * t) + spec.c_y * t + spec.d_y;
        if (spec.noise > 0) {
            x += spec.noise * rng.normal();
            y += spec.noise * rng.normal();
        }
        out.t.push_back(t);
        (i < n_ctx ? out.context : out.target).frames.push_back({unit.bin(x), unit.bin(y)});
    }
    return out;
}

// --- sweeps ---------------------------------------------------------------------

namespace {

double triangle(double phase) {
    const double f = phase - std::floor(phase);
    return f < 0.5 ? 4 * f - 1 : 3 - 4 * f;
}

struct Quat {
    double x, y, z, w;
};

Quat mul(const Quat& a, const Quat& b) {
    return {a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y, a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w, a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z};
}

}  // namespace

Scale sweep_position_scale(int axis) {
    switch (axis) {
        case 0:
            return {0.2, 0.8, 0, 100};
        case 1:
            return {-0.3, 0.3, 0, 100};
        default:
            return {0.0, 0.4, 0, 100};
    }
}

Scale quaternion_scale() { return {-1.0, 1.0, 0, 100}; }

Trace synthesize_sweep_demo(const SweepParams& params, std::uint64_t seed) {
    if (params.sweeps < 1 || !(params.duration_s > 0) || !(params.rate_hz > 0))
        throw ConfigError("sweep parameters must be positive");
    Rng rng(seed);
    const auto n = static_cast<std::size_t>(std::lround(params.duration_s * params.rate_hz));
    Trace tr;
    tr.rate_hz = params.rate_hz;
    tr.bin_lo = 0;
    tr.bin_hi = 100;
    // tool tilted about x, then yawing back and forth with each sweep
    const Quat base = {std::sin(1.3), 0.0, 0.0, std::cos(1.3)};
    for (std::size_t i = 0; i < n; ++i) {
        const double phase = params.sweeps * static_cast<double>(i) / static_cast<double>(n);
        double pos[3] = {0.5 + 0.2 * triangle(phase), 0.05 * std::cos(2 * pi * phase),
                         0.15 + 0.02 * std::sin(4 * pi * phase)};
        const double yaw = 0.3 * triangle(phase);
        Quat q = mul({0.0, 0.0, std::sin(yaw / 2), std::cos(yaw / 2)}, base);
        if (params.noise > 0) {
            for (double& p : pos) p += params.noise * rng.normal();
            q.x += params.noise * rng.normal();
            q.y += params.noise * rng.normal();
            q.z += params.noise * rng.normal();
            q.w += params.noise * rng.normal();
        }
        const double norm = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z + q.w * q.w);
        q = {q.x / norm, q.y / norm, q.z / norm, q.w / norm};
        if (q.w < 0) q = {-q.x, -q.y, -q.z, -q.w};
        Frame f;
        for (int a = 0; a < 3; ++a) f.push_back(sweep_position_scale(a).bin(pos[a]));
        for (double c : {q.x, q.y, q.z, q.w}) f.push_back(quaternion_scale().bin(c));
        tr.frames.push_back(std::move(f));
    }
    return tr;
}

Trace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read trace " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ": missing header", 0);
    std::istringstream header(line);
    int dims = 0;
    Trace tr;
    if (!(header >> dims >> tr.rate_hz >> tr.bin_lo >> tr.bin_hi) || dims < 1 || tr.bin_hi <= tr.bin_lo)
        throw ParseError(path.string() + ": header must be 'D rate_hz bin_lo bin_hi'", 0);
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto fields = codec::split_ws(line);
        if (fields.empty()) continue;
        if (static_cast<int>(fields.size()) != dims)
            throw StructuralError(path.string() + ": frame at line " + std::to_string(row + 1) + " has " +
                                  std::to_string(fields.size()) + " values, expected " + std::to_string(dims));
        Frame f;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            int v = 0;
            if (!codec::parse_int(fields[c], v))
                throw ParseError(path.string() + ": bad value", row, static_cast<int>(c));
            if (v < tr.bin_lo || v > tr.bin_hi)
                throw DomainError(path.string() + ": value outside bin range at line " + std::to_string(row + 1));
            f.push_back(v);
        }
        tr.frames.push_back(std::move(f));
    }
    return tr;
}

void save_trace(const std::filesystem::path& path, const Trace& trace) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write trace " + path.string());
    out << trace.dims() << ' ' << trace.rate_hz << ' ' << trace.bin_lo << ' ' << trace.bin_hi << '\n';
    for (const auto& f : trace.frames) out << codec::join_ints(f, " ") << '\n';
}

std::pair<Trace, Trace> split_trace(const Trace& trace, double context_fraction) {
    if (!(context_fraction > 0 && context_fraction < 1)) throw ConfigError("context fraction must be in (0, 1)");
    const auto cut = static_cast<std::size_t>(std::floor(context_fraction * static_cast<double>(trace.frames.size())));
    Trace a = trace, b = trace;
    a.frames.assign(trace.frames.begin(), trace.frames.begin() + cut);
    b.frames.assign(trace.frames.begin() + cut, trace.frames.end());
    return {a, b};
}

// --- DTW ------------------------------------------------------------------------

double dtw(std::span<const Frame> a, std::span<const Frame> b) {
    if (a.empty() || b.empty()) throw DomainError("dtw of an empty sequence");
    const std::size_t d = a.front().size();
    for (const auto* s : {&a, &b})
        for (const auto& f : *s)
            if (f.size() != d || d == 0) throw DomainError("dtw frames differ in dimension");
    auto cost = [d](const Frame& x, const Frame& y) {
        if (d == 1) return std::fabs(static_cast<double>(x[0] - y[0]));
        double s = 0;
        for (std::size_t i = 0; i < d; ++i) s += static_cast<double>(x[i] - y[i]) * (x[i] - y[i]);
        return std::sqrt(s);
    };
    const std::size_t n = a.size(), m = b.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j)
            cur[j] = cost(a[i - 1], b[j - 1]) + std::min({prev[j], cur[j - 1], prev[j - 1]});
        std::swap(prev, cur);
    }
    return prev[m];
}

double dtw(std::span<const int> a, std::span<const int> b) {
    Frames fa, fb;
    for (int v : a) fa.push_back({v});
    for (int v : b) fb.push_back({v});
    return dtw(fa, fb);
}

// --- tasks ----------------------------------------------------------------------

CompletionTask function_task(const FunctionSpec& spec, std::uint64_t seed, std::string id) {
    const auto s = sample_function(spec, seed);
    CompletionTask t;
    t.id = id.empty() ? family_name(spec.family) + "_" + std::to_string(seed) : std::move(id);
    for (int v : s.context) t.context.push_back({v});
    for (int v : s.target) t.target.push_back({v});
    t.bin_lo = spec.bin_lo;
    t.bin_hi = spec.bin_hi;
    return t;
}

CompletionTask loop_task(const LoopSpec& spec, std::uint64_t seed, std::string id) {
    auto s = make_loop_trace(spec, seed);
    CompletionTask t;
    t.id = id.empty() ? "loop_" + std::to_string(seed) : std::move(id);
    t.context = std::move(s.context.frames);
    t.target = std::move(s.target.frames);
    t.bin_lo = spec.bin_lo;
    t.bin_hi = spec.bin_hi;
    return t;
}

CompletionTask trace_task(const Trace& trace, std::string id, double context_fraction) {
    auto [ctx, tgt] = split_trace(trace, context_fraction);
    if (ctx.frames.empty() || tgt.frames.empty()) throw StructuralError("trace too short to split");
    CompletionTask t;
    t.id = id.empty() ? "trace" : std::move(id);
    t.context = std::move(ctx.frames);
    t.target = std::move(tgt.frames);
    t.bin_lo = trace.bin_lo;
    t.bin_hi = trace.bin_hi;
    return t;
}

std::string encode_prompt(const Frames& context) {
    std::string out;
    for (std::size_t i = 0; i < context.size(); ++i) {
        if (i) out += ", ";
        out += codec::join_ints(context[i], " ");
    }
    return out + ",";
}

std::string encode_continuation(const Frames& frames) {
    std::string out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        out += i ? ", " : " ";
        out += codec::join_ints(frames[i], " ");
    }
    return out;
}

ParsedCompletion parse_completion(std::string_view text, std::size_t length, std::size_t dims, int bin_lo,
                                  int bin_hi, const Frame& fallback) {
    ParsedCompletion out;
    for (auto field : codec::split(text, ",")) {
        if (out.frames.size() == length) break;
        const auto toks = codec::split_ws(field);
        if (toks.size() != dims) break;
        Frame f;
        bool ok = true;
        for (auto tok : toks) {
            int v = 0;
            if (!codec::parse_int(tok, v)) {
                ok = false;
                break;
            }
            f.push_back(std::clamp(v, bin_lo, bin_hi));
        }
        if (!ok) break;
        out.frames.push_back(std::move(f));
    }
    out.parsed = static_cast<int>(out.frames.size());
    if (out.frames.size() < length) {
        out.padded = true;
        const Frame pad = out.frames.empty() ? fallback : out.frames.back();
        out.frames.resize(length, pad);
    }
    return out;
}

Report evaluate_completion(models::CompletionModel& model, std::span<const CompletionTask> tasks,
                           const EvalOptions& options) {
    for (const auto& task : tasks)
        if (task.context.empty() || task.target.empty())
            throw StructuralError("completion task '" + task.id + "' has an empty context or target");
    Report report;
    report.trials.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const auto& task = tasks[i];
            const std::size_t dims = task.context.front().size();
            Trial trial;
            trial.task_id = task.id;
            models::CompletionRequest req;
            req.prompt = encode_prompt(task.context);
            req.max_tokens = static_cast<int>(task.target.size() * (dims + 1));
            req.stop = {"\n"};
            req.temperature = options.temperature;
            req.seed = i;
            try {
                trial.completion = model.complete(req);
            } catch (const std::exception& e) {
                trial.errored = true;
                trial.error = e.what();
            }
            const auto parsed = parse_completion(trial.completion, task.target.size(), dims, task.bin_lo,
                                                 task.bin_hi, task.context.back());
            trial.parsed = parsed.parsed;
            trial.padded = parsed.padded;
            trial.dtw = dtw(parsed.frames, task.target);
            trial.dtw_per_step = trial.dtw / static_cast<double>(task.target.size());
            std::lock_guard lock(mu);
            report.trials[i] = std::move(trial);
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
    if (!report.trials.empty()) {
        const double cnt = static_cast<double>(report.trials.size());
        for (const auto& t : report.trials) {
            report.mean_dtw += t.dtw / cnt;
            report.mean_per_step += t.dtw_per_step / cnt;
        }
        for (const auto& t : report.trials) {
            report.var_dtw += (t.dtw - report.mean_dtw) * (t.dtw - report.mean_dtw) / cnt;
            report.var_per_step += (t.dtw_per_step - report.mean_per_step) * (t.dtw_per_step - report.mean_per_step) / cnt;
        }
    }
    return report;
}

std::vector<std::pair<std::string, std::string>> oracle_entries(std::span<const CompletionTask> tasks) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& t : tasks) out.emplace_back(encode_prompt(t.context), encode_continuation(t.target));
    return out;
}

nlohmann::json to_json(const Trial& t) {
    nlohmann::json j = {{"task_id", t.task_id},     {"completion", t.completion}, {"dtw", t.dtw},
                        {"dtw_per_step", t.dtw_per_step}, {"parsed", t.parsed},  {"padded", t.padded}};
    if (t.errored) j["error"] = t.error;
    return j;
}

}  // namespace gpm::completion
