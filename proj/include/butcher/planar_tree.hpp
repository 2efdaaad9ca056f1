#pragma once

// Non-degenerate planar trees: ordered rooted trees whose internal vertices
// all have at least two children. These index every series in the library.
// Values are immutable after construction and safe to share across threads.

#include <algorithm>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace butcher {

class PlanarTree;
using Forest = std::vector<PlanarTree>;

/// Ordered rooted tree; an empty child list is the single-leaf tree "o".
/// Child order is significant: (oo(oo)) != ((oo)oo).
class PlanarTree {
public:
    PlanarTree() = default;

    explicit PlanarTree(Forest children) : children_(std::move(children)) {
        if (children_.size() == 1)
            throw std::invalid_argument(
                "PlanarTree: internal vertex with a single child is degenerate");
        if (children_.empty()) return;
        leaves_ = 0;
        internal_ = 1;
        for (const auto& c : children_) {
            leaves_ += c.leaves_;
            internal_ += c.internal_;
        }
    }

    bool is_leaf() const { return children_.empty(); }
    const Forest& children() const { return children_; }

    /// Number of leaves.
    int leaves() const { return leaves_; }
    /// Number of internal vertices.
    int internal() const { return internal_; }
    /// Total vertex count.
    int total() const { return leaves_ + internal_; }

    /// Children counts of every internal vertex, root first, depth-first.
    std::vector<int> internal_arities() const {
        std::vector<int> out;
        collect_arities(out);
        return out;
    }

    /// Bijective text form: leaf -> "o", B+(b1,...,bm) -> "(" enc(b1)...enc(bm) ")".
    std::string encode() const {
        std::string s;
        encode_into(s);
        return s;
    }

    /// Inverse of encode(); rejects unbalanced or degenerate strings.
    static PlanarTree parse(const std::string& s) {
        std::size_t pos = 0;
        PlanarTree t = parse_at(s, pos);
        if (pos != s.size())
            throw std::invalid_argument("PlanarTree::parse: trailing characters in \"" + s + "\"");
        return t;
    }

    friend bool operator==(const PlanarTree& a, const PlanarTree& b) {
        return a.leaves_ == b.leaves_ && a.internal_ == b.internal_ &&
               a.children_ == b.children_;
    }
    friend bool operator!=(const PlanarTree& a, const PlanarTree& b) { return !(a == b); }

private:
    Forest children_;
    int leaves_ = 1;
    int internal_ = 0;

    void collect_arities(std::vector<int>& out) const {
        if (is_leaf()) return;
        out.push_back(static_cast<int>(children_.size()));
        for (const auto& c : children_) c.collect_arities(out);
    }

    void encode_into(std::string& s) const {
        if (is_leaf()) {
            s += 'o';
            return;
        }
        s += '(';
        for (const auto& c : children_) c.encode_into(s);
        s += ')';
    }

    static PlanarTree parse_at(const std::string& s, std::size_t& pos) {
        if (pos >= s.size())
            throw std::invalid_argument("PlanarTree::parse: unexpected end of input");
        if (s[pos] == 'o') {
            ++pos;
            return PlanarTree{};
        }
        if (s[pos] != '(')
            throw std::invalid_argument(std::string("PlanarTree::parse: unexpected character '") +
                                        s[pos] + "'");
        ++pos;
        Forest children;
        while (pos < s.size() && s[pos] != ')') children.push_back(parse_at(s, pos));
        if (pos >= s.size())
            throw std::invalid_argument("PlanarTree::parse: unbalanced parentheses");
        ++pos;  // consume ')'
        if (children.empty())
            throw std::invalid_argument("PlanarTree::parse: \"()\" is not a tree");
        return PlanarTree{std::move(children)};  // ctor rejects degenerate arity
    }
};

/// Graded ordering: by total vertex count, then lexicographic on the encoding.
inline bool tree_less(const PlanarTree& a, const PlanarTree& b) {
    if (a.total() != b.total()) return a.total() < b.total();
    return a.encode() < b.encode();
}

inline const PlanarTree& leaf() {
    static const PlanarTree o;
    return o;
}

/// Join m >= 2 trees under a new root.
inline PlanarTree b_plus(Forest children) {
    if (children.size() < 2)
        throw std::invalid_argument("b_plus: needs at least 2 children");
    return PlanarTree{std::move(children)};
}

/// Remove the root, recovering the unique forest with b = B+(b_1,...,b_m).
/// The single leaf has no such decomposition.
inline Forest b_minus(const PlanarTree& b) {
    if (b.is_leaf())
        throw std::invalid_argument("b_minus: undefined on the single-leaf tree");
    return b.children();
}

inline std::string encode_forest(const Forest& f) {
    std::string s;
    for (const auto& t : f) s += t.encode();
    return s;
}

inline int forest_leaves(const Forest& f) {
    int k = 0;
    for (const auto& t : f) k += t.leaves();
    return k;
}

inline int forest_internal(const Forest& f) {
    int k = 0;
    for (const auto& t : f) k += t.internal();
    return k;
}

namespace detail {
inline PlanarTree graft_rec(const Forest& grafts, std::size_t& next, const PlanarTree& c) {
    if (c.is_leaf()) return grafts[next++];
    Forest children;
    children.reserve(c.children().size());
    for (const auto& ci : c.children()) children.push_back(graft_rec(grafts, next, ci));
    return PlanarTree{std::move(children)};
}
}  // namespace detail

/// Replace the i-th leaf of c (left to right) by grafts[i].
inline PlanarTree graft(const Forest& grafts, const PlanarTree& c) {
    if (static_cast<int>(grafts.size()) != c.leaves())
        throw std::invalid_argument("graft: tuple length must equal the leaf count of the base");
    std::size_t next = 0;
    return detail::graft_rec(grafts, next, c);
}

/// One way of writing b as a grafting E on c, i.e. E applied to c gives back b.
struct TreeSplit {
    Forest upper;      ///< E_1,...,E_{leaves(c)}
    PlanarTree lower;  ///< c
};

/// Every (E, c) with E grafted on c equal to b. For a fixed c the tuple E is
/// unique when it exists, so each pair appears exactly once.
inline std::vector<TreeSplit> splits(const PlanarTree& b) {
    std::vector<TreeSplit> out;
    // c = o keeps nothing of b below the cut.
    out.push_back({Forest{b}, leaf()});
    if (b.is_leaf()) {
        // (b, o) and (leaves, b) coincide for the leaf.
        return out;
    }
    // c != o: the root of c is the root of b, children split independently.
    std::vector<std::vector<TreeSplit>> child_splits;
    child_splits.reserve(b.children().size());
    for (const auto& bi : b.children()) child_splits.push_back(splits(bi));

    std::vector<std::size_t> idx(b.children().size(), 0);
    for (;;) {
        Forest upper;
        Forest lower_children;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const TreeSplit& sj = child_splits[j][idx[j]];
            upper.insert(upper.end(), sj.upper.begin(), sj.upper.end());
            lower_children.push_back(sj.lower);
        }
        out.push_back({std::move(upper), PlanarTree{std::move(lower_children)}});
        std::size_t j = 0;
        while (j < idx.size() && ++idx[j] == child_splits[j].size()) idx[j++] = 0;
        if (j == idx.size()) break;
    }
    return out;
}

/// Integer combination of Forest (x) PlanarTree terms; equal pairs merged.
struct ForestTreeTerm {
    long long coeff = 0;
    Forest left;
    PlanarTree right;
};

using ForestTreeSum = std::vector<ForestTreeTerm>;

/// Sum over all (E, c) with E grafted on c giving b, of E_1*...*E_k (x) c.
/// Always contains b (x) o and o*...*o (x) b; every coefficient is 1.
inline ForestTreeSum coproduct(const PlanarTree& b) {
    std::map<std::pair<std::string, std::string>, std::size_t> seen;
    ForestTreeSum out;
    for (auto& s : splits(b)) {
        auto key = std::make_pair(encode_forest(s.upper), s.lower.encode());
        auto it = seen.find(key);
        if (it == seen.end()) {
            seen.emplace(std::move(key), out.size());
            out.push_back({1, std::move(s.upper), std::move(s.lower)});
        } else {
            ++out[it->second].coeff;
        }
    }
    return out;
}

/// Integer combination of Forest (x) Forest terms; the multiplicative
/// extension of the coproduct lives here.
struct ForestForestTerm {
    long long coeff = 0;
    Forest left;
    Forest right;
};

using ForestForestSum = std::vector<ForestForestTerm>;

namespace detail {
inline void merge_term(ForestForestSum& sum,
                       std::map<std::pair<std::string, std::string>, std::size_t>& seen,
                       long long coeff, Forest left, Forest right) {
    auto key = std::make_pair(encode_forest(left), encode_forest(right));
    auto it = seen.find(key);
    if (it == seen.end()) {
        seen.emplace(std::move(key), sum.size());
        sum.push_back({coeff, std::move(left), std::move(right)});
    } else {
        sum[it->second].coeff += coeff;
    }
}
}  // namespace detail

/// Coproduct of a forest: the product of the coproducts of its factors.
inline ForestForestSum coproduct_forest(const Forest& f) {
    ForestForestSum acc{{1, {}, {}}};
    for (const auto& t : f) {
        ForestForestSum next;
        std::map<std::pair<std::string, std::string>, std::size_t> seen;
        for (const auto& term : acc) {
            for (const auto& ct : coproduct(t)) {
                Forest left = term.left;
                left.insert(left.end(), ct.left.begin(), ct.left.end());
                Forest right = term.right;
                right.push_back(ct.right);
                detail::merge_term(next, seen, term.coeff * ct.coeff, std::move(left),
                                   std::move(right));
            }
        }
        acc = std::move(next);
    }
    return acc;
}

namespace detail {

// Forests with exactly `parts` factors and the given total vertex count,
// drawn from the already-filled grades of `by_total`.
inline void forests_exact(int total, int parts,
                          const std::vector<std::vector<PlanarTree>>& by_total, Forest& current,
                          std::vector<Forest>& out) {
    if (parts == 0) {
        if (total == 0) out.push_back(current);
        return;
    }
    for (int first = 1; first <= total - (parts - 1); ++first) {
        for (const auto& t : by_total[static_cast<std::size_t>(first)]) {
            current.push_back(t);
            forests_exact(total - first, parts - 1, by_total, current, out);
            current.pop_back();
        }
    }
}

}  // namespace detail

/// Every non-degenerate planar tree with total vertex count <= n_max, each
/// exactly once, graded by total count then lexicographic on the encoding.
/// Trees containing an internal vertex of arity > max_arity are omitted when
/// the cap is set (their series contributions vanish downstream).
inline std::vector<PlanarTree> enumerate_trees(int n_max, int max_arity = -1) {
    if (n_max < 1) throw std::invalid_argument("enumerate_trees: n_max must be >= 1");
    if (max_arity < 0) max_arity = n_max;
    std::vector<std::vector<PlanarTree>> by_total(static_cast<std::size_t>(n_max) + 1);
    if (n_max >= 1) by_total[1].push_back(leaf());
    for (int n = 3; n <= n_max; ++n) {
        auto& slot = by_total[static_cast<std::size_t>(n)];
        // Root with m children, 2 <= m <= max_arity, subtree totals summing to n-1.
        int cap = std::min(max_arity, n - 1);
        for (int m = 2; m <= cap; ++m) {
            std::vector<Forest> forests;
            Forest current;
            detail::forests_exact(n - 1, m, by_total, current, forests);
            for (auto& f : forests) slot.push_back(PlanarTree{std::move(f)});
        }
        std::sort(slot.begin(), slot.end(), tree_less);
    }
    std::vector<PlanarTree> out;
    for (const auto& grade : by_total) out.insert(out.end(), grade.begin(), grade.end());
    return out;
}

}  // namespace butcher
