#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "gpm/codec.hpp"
#include "gpm/models.hpp"
#include "gpm/pcfg.hpp"

namespace gpm::models {

namespace {

// Strip one trailing terminator and surrounding whitespace.
std::string_view open_body(std::string_view prompt) {
    auto body = codec::trim(prompt);
    if (!body.empty() && body.back() == ',') body.remove_suffix(1);
    return codec::trim(body);
}

}  // namespace

std::string PcfgSearcherModel::complete(const CompletionRequest& request) {
    request.validate();
    const auto segments = codec::split(open_body(request.prompt), ";");
    if (segments.size() < 2) return {};

    std::unordered_map<std::string, int> ids;
    std::vector<std::string> names;
    auto intern = [&](std::string_view text) {
        pcfg::Seq out;
        for (auto tok : codec::split_ws(text)) {
            auto [it, inserted] = ids.emplace(std::string(tok), static_cast<int>(names.size()));
            if (inserted) names.emplace_back(tok);
            out.push_back(it->second);
        }
        return out;
    };

    std::vector<pcfg::Example> examples;
    for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
        const auto parts = codec::split(segments[i], ",");
        if (parts.size() != 2) return {};
        examples.push_back({intern(parts[0]), intern(parts[1])});
        if (examples.back().input.empty() || examples.back().output.empty()) return {};
    }
    const pcfg::Seq query = intern(segments.back());
    const std::size_t k = examples.front().input.size();
    if (query.size() != k) return {};
    for (const auto& ex : examples)
        if (ex.input.size() != k) return {};

    pcfg::SearchLimits limits;
    limits.max_ops = limits_.max_ops;
    limits.max_leaves = limits_.max_leaves;
    limits.node_budget = limits_.node_budget;
    const auto found = pcfg::search(examples, limits);
    if (!found) return {};
    const auto out = pcfg::eval_program(found->program, pcfg::split_segments(query, found->partition));
    std::string text;
    for (int id : out) {
        text += ' ';
        text += names[id];
    }
    return truncate_at_stop(text, request.stop);
}

std::size_t estimate_period(std::span<const std::vector<int>> frames) {
    const std::size_t n = frames.size();
    if (n < 4) return 1;
    std::vector<double> cost(n / 2 + 1, 0.0);
    for (std::size_t lag = 1; lag <= n / 2; ++lag) {
        std::size_t count = 0;
        for (std::size_t t = lag; t < n; ++t) {
            const auto& a = frames[t];
            const auto& b = frames[t - lag];
            for (std::size_t d = 0; d < std::min(a.size(), b.size()); ++d) {
                cost[lag] += std::abs(a[d] - b[d]);
                ++count;
            }
        }
        cost[lag] /= static_cast<double>(std::max<std::size_t>(1, count));
    }
    const auto first = cost.begin() + 2;
    const double lo = *std::min_element(first, cost.end());
    const double hi = *std::max_element(first, cost.end());
    // A fractional period makes some multiple of it the global minimum; take
    // the shortest local minimum that comes close to the best instead.
    const double accept = lo + 0.3 * (hi - lo);
    for (std::size_t lag = 2; lag <= n / 2; ++lag) {
        const bool local = cost[lag] < cost[lag - 1] && (lag == n / 2 || cost[lag] <= cost[lag + 1]);
        if (local && cost[lag] <= accept) return lag;
    }
    return static_cast<std::size_t>(std::min_element(first, cost.end()) - cost.begin());
}

std::string PeriodRepeatModel::complete(const CompletionRequest& request) {
    request.validate();
    std::vector<std::vector<int>> frames;
    for (auto field : codec::split(open_body(request.prompt), ",")) {
        std::vector<int> frame;
        for (auto tok : codec::split_ws(field)) {
            int v = 0;
            if (!codec::parse_int(tok, v)) return {};
            frame.push_back(v);
        }
        if (frame.empty()) return {};
        frames.push_back(std::move(frame));
    }
    if (frames.empty()) return {};
    const std::size_t dims = frames.back().size();
    const std::size_t period = estimate_period(frames);
    const std::size_t count = std::max<std::size_t>(1, request.max_tokens / (dims + 1));
    const std::size_t n = frames.size();
    std::string text;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& f = frames[n - period + (i % period)];
        text += i ? ", " : " ";
        text += codec::join_ints(f, " ");
    }
    return truncate_at_stop(text, request.stop);
}

}  // namespace gpm::models
