// Bottom-up enumeration in a fixed total order. Sub-programs with fewer than
// the current depth's operator count are materialized per partition (values
// on every example, leaf mask, length); candidates at the current depth are
// only checked, element by element, against the expected outputs.

#include <algorithm>

#include "gpm/error.hpp"
#include "gpm/pcfg.hpp"

namespace gpm::pcfg {

std::vector<std::vector<int>> ordered_partitions(int k, int max_parts) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int remaining, int parts_left) -> void {
        if (parts_left == 1) {
            cur.push_back(remaining);
            out.push_back(cur);
            cur.pop_back();
            return;
        }
        for (int first = 1; first <= remaining - (parts_left - 1); ++first) {
            cur.push_back(first);
            self(self, remaining - first, parts_left - 1);
            cur.pop_back();
        }
    };
    for (int m = 1; m <= std::min(k, max_parts); ++m) rec(rec, k, m);
    return out;
}

namespace {

struct Node {
    Op op = Op::copy;
    int leaf = 0;
    int la = -1, ia = -1;  // first child (level, index)
    int lb = -1, ib = -1;  // second child
    std::uint32_t mask = 0;
    std::size_t len = 0;
    std::vector<Seq> vals;  // one per example
};

using Levels = std::vector<std::vector<Node>>;

int at(Op op, const Seq& a, const Seq* b, std::size_t i, ShiftDirection shift) {
    const std::size_t n = a.size();
    switch (op) {
        case Op::copy:
        case Op::remove_second:
            return a[i];
        case Op::reverse:
            return a[n - 1 - i];
        case Op::shift:
            return shift == ShiftDirection::left ? a[(i + 1) % n] : a[(i + n - 1) % n];
        case Op::swap:
            if (i == 0) return a[n - 1];
            if (i == n - 1) return a[0];
            return a[i];
        case Op::repeat:
            return a[i % n];
        case Op::echo:
            return i < n ? a[i] : a[n - 1];
        case Op::append:
            return i < n ? a[i] : (*b)[i - n];
        case Op::prepend:
            return i < b->size() ? (*b)[i] : a[i - b->size()];
        case Op::remove_first:
            return (*b)[i];
    }
    return 0;
}

std::size_t result_len(Op op, std::size_t a, std::size_t b) {
    switch (op) {
        case Op::repeat:
            return 2 * a;
        case Op::echo:
            return a + 1;
        case Op::append:
        case Op::prepend:
            return a + b;
        case Op::remove_first:
            return b;
        default:
            return a;
    }
}

Expr rebuild(const Levels& levels, int level, int index) {
    const Node& n = levels[level][index];
    if (n.leaf) return Expr::make_leaf(n.leaf);
    std::vector<Expr> args;
    args.push_back(rebuild(levels, n.la, n.ia));
    if (n.lb >= 0) args.push_back(rebuild(levels, n.lb, n.ib));
    return Expr::make(n.op, std::move(args));
}

class Searcher {
public:
    Searcher(std::span<const Example> examples, const SearchLimits& limits) : examples_(examples), limits_(limits) {}

    std::optional<SearchResult> run() {
        const std::size_t k = examples_.front().input.size();
        target_len_ = examples_.front().output.size();
        for (const auto& ex : examples_)
            if (ex.output.size() != target_len_) return std::nullopt;  // no program maps equal lengths apart
        const auto partitions = ordered_partitions(static_cast<int>(k), limits_.max_leaves);
        for (int depth = 0; depth <= limits_.max_ops; ++depth) {
            for (const auto& part : partitions) {
                const int m = static_cast<int>(part.size());
                if (m > depth + 1) continue;
                full_mask_ = (1u << m) - 1;
                if (!build_levels(part, depth)) return std::nullopt;
                const auto hit = check_depth(depth);
                if (exhausted_) return std::nullopt;
                if (hit) {
                    SearchResult r;
                    r.program.root = *hit;
                    r.partition = part;
                    r.nodes = nodes_;
                    return r;
                }
            }
        }
        return std::nullopt;
    }

private:
    bool charge() {
        if (++nodes_ > limits_.node_budget) exhausted_ = true;
        return !exhausted_;
    }

    // Levels 0..depth-1 for this partition.
    bool build_levels(const std::vector<int>& part, int depth) {
        levels_.assign(1, {});
        for (int i = 0; i < static_cast<int>(part.size()); ++i) {
            Node leaf;
            leaf.leaf = i + 1;
            leaf.mask = 1u << i;
            leaf.len = part[i];
            for (const auto& ex : examples_) leaf.vals.push_back(split_segments(ex.input, part)[i]);
            levels_[0].push_back(std::move(leaf));
        }
        for (int n = 1; n < depth; ++n) {
            std::vector<Node> level;
            for (Op op : kAllOps) {
                if (arity(op) == 1) {
                    for (int i = 0; i < static_cast<int>(levels_[n - 1].size()); ++i) {
                        if (!charge()) return false;
                        const Node& c = levels_[n - 1][i];
                        Node node;
                        node.op = op;
                        node.la = n - 1;
                        node.ia = i;
                        node.mask = c.mask;
                        node.len = result_len(op, c.len, 0);
                        for (const auto& v : c.vals) node.vals.push_back(apply_unary(op, v, limits_.shift));
                        level.push_back(std::move(node));
                    }
                } else {
                    for (int l = 0; l < n; ++l) {
                        const int r = n - 1 - l;
                        for (int i = 0; i < static_cast<int>(levels_[l].size()); ++i) {
                            for (int j = 0; j < static_cast<int>(levels_[r].size()); ++j) {
                                if (!charge()) return false;
                                const Node& a = levels_[l][i];
                                const Node& b = levels_[r][j];
                                Node node;
                                node.op = op;
                                node.la = l;
                                node.ia = i;
                                node.lb = r;
                                node.ib = j;
                                node.mask = a.mask | b.mask;
                                node.len = result_len(op, a.len, b.len);
                                for (std::size_t e = 0; e < examples_.size(); ++e)
                                    node.vals.push_back(apply_binary(op, a.vals[e], b.vals[e]));
                                level.push_back(std::move(node));
                            }
                        }
                    }
                }
            }
            levels_.push_back(std::move(level));
        }
        return true;
    }

    bool matches(Op op, const Node& a, const Node* b) const {
        for (std::size_t e = 0; e < examples_.size(); ++e) {
            const Seq& want = examples_[e].output;
            const Seq* bv = b ? &b->vals[e] : nullptr;
            for (std::size_t i = 0; i < target_len_; ++i)
                if (at(op, a.vals[e], bv, i, limits_.shift) != want[i]) return false;
        }
        return true;
    }

    std::optional<Expr> check_depth(int depth) {
        if (depth == 0) {
            for (const auto& leaf : levels_[0]) {
                if (!charge()) return std::nullopt;
                if (leaf.mask == full_mask_ && leaf.len == target_len_ && matches(Op::copy, leaf, nullptr))
                    return Expr::make_leaf(leaf.leaf);
            }
            return std::nullopt;
        }
        for (Op op : kAllOps) {
            if (arity(op) == 1) {
                const auto& kids = levels_[depth - 1];
                for (int i = 0; i < static_cast<int>(kids.size()); ++i) {
                    if (!charge()) return std::nullopt;
                    const Node& c = kids[i];
                    if (c.mask != full_mask_ || result_len(op, c.len, 0) != target_len_) continue;
                    if (matches(op, c, nullptr)) return Expr::make(op, {rebuild(levels_, depth - 1, i)});
                }
            } else {
                for (int l = 0; l < depth; ++l) {
                    const int r = depth - 1 - l;
                    for (int i = 0; i < static_cast<int>(levels_[l].size()); ++i) {
                        const Node& a = levels_[l][i];
                        for (int j = 0; j < static_cast<int>(levels_[r].size()); ++j) {
                            if (!charge()) return std::nullopt;
                            const Node& b = levels_[r][j];
                            if ((a.mask | b.mask) != full_mask_ || result_len(op, a.len, b.len) != target_len_)
                                continue;
                            if (matches(op, a, &b))
                                return Expr::make(op, {rebuild(levels_, l, i), rebuild(levels_, r, j)});
                        }
                    }
                }
            }
        }
        return std::nullopt;
    }

    std::span<const Example> examples_;
    SearchLimits limits_;
    Levels levels_;
    std::size_t target_len_ = 0;
    std::uint32_t full_mask_ = 0;
    std::uint64_t nodes_ = 0;
    bool exhausted_ = false;
};

}  // namespace

std::optional<SearchResult> search(std::span<const Example> examples, const SearchLimits& limits) {
    if (examples.empty()) throw DomainError("search needs at least one example");
    const std::size_t k = examples.front().input.size();
    if (k == 0) throw DomainError("example inputs must be non-empty");
    for (const auto& ex : examples)
        if (ex.input.size() != k) throw DomainError("example inputs differ in length");
    if (limits.max_leaves < 1 || limits.max_leaves > 31 || limits.max_ops < 0)
        throw DomainError("search limits out of range");
    return Searcher(examples, limits).run();
}

}  // namespace gpm::pcfg
