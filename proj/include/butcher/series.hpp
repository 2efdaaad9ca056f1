#pragma once

// Tree-indexed series machinery: the recursive elementary solution maps, their
// convolution against tree-indexed data through the coproduct, truncated
// summation, norm bounds, and the series convergence certificate.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "butcher/linear_ode.hpp"
#include "butcher/nonlinearity.hpp"
#include "butcher/planar_tree.hpp"

namespace butcher {

/// One datum (x0 part, source part) of the space R^n x L2(0,T).
struct SeriesEntry {
    Eigen::VectorXd x0_part;
    Trajectory f_part;

    /// |x0| + L2 norm of the source; the norm used for every |u| quantity.
    double norm() const { return x0_part.norm() + l2_norm(f_part); }
};

/// Tree-indexed data u, keyed by the canonical tree encoding.
class SeriesData {
public:
    explicit SeriesData(const TimeGrid& grid) : grid_(grid) {}

    const TimeGrid& grid() const { return grid_; }

    void set(const PlanarTree& b, SeriesEntry entry) {
        if (!(entry.f_part.grid == grid_))
            throw std::invalid_argument("SeriesData: entry grid mismatch");
        entries_[b.encode()] = std::move(entry);
    }

    const SeriesEntry* find(const PlanarTree& b) const { return find(b.encode()); }
    const SeriesEntry* find(const std::string& enc) const {
        auto it = entries_.find(enc);
        return it == entries_.end() ? nullptr : &it->second;
    }

    const std::map<std::string, SeriesEntry>& entries() const { return entries_; }

    /// sum over the support of |lambda|^{internal(b)} * ||u(b)||.
    double weighted_norm(double lambda) const {
        double acc = 0.0;
        for (const auto& [enc, entry] : entries_)
            acc += std::pow(std::abs(lambda), PlanarTree::parse(enc).internal()) * entry.norm();
        return acc;
    }

private:
    TimeGrid grid_;
    std::map<std::string, SeriesEntry> entries_;
};

/// Elementary solution map of tree b applied to leaves(b) data pairs:
/// the leaf solves the linear problem with its datum, an internal vertex of
/// arity r feeds its children's outputs through F_r and solves with zero
/// initial state. Inputs are distributed to children left to right by leaf
/// count. Multilinear in the inputs; r above the top tensor order gives zero.
inline Trajectory phi(const PlanarTree& b, std::span<const SeriesEntry> inputs,
                      const LinearSystem& sys, const TimeGrid& grid,
                      const PolynomialNonlinearity& F) {
    if (static_cast<int>(inputs.size()) != b.leaves())
        throw std::invalid_argument("phi: input count must equal the leaf count");
    if (b.is_leaf()) return solve_linear(sys, grid, inputs[0].x0_part, &inputs[0].f_part);

    const auto& children = b.children();
    const int r = static_cast<int>(children.size());
    if (!F.has_order(r)) return Trajectory(grid, sys.n());  // F_r = 0

    std::vector<Trajectory> child_out;
    child_out.reserve(static_cast<std::size_t>(r));
    std::size_t offset = 0;
    for (const auto& c : children) {
        auto k = static_cast<std::size_t>(c.leaves());
        child_out.push_back(phi(c, inputs.subspan(offset, k), sys, grid, F));
        offset += k;
    }
    Trajectory source = F.apply_pointwise(r, child_out);
    return solve_linear(sys, grid, Eigen::VectorXd::Zero(sys.n()), &source);
}

/// Evaluates the convolution of the elementary maps with tree-indexed data:
/// for each tree, the sum over its coproduct terms (E_1 ... E_k) (x) c of the
/// elementary map of c applied to (u(E_1),...,u(E_k)). Terms with any E_i
/// outside the support of u vanish and are pruned before evaluation.
/// Results are memoized per canonical encoding; all inputs are held by
/// reference and must outlive the evaluator.
class SeriesEvaluator {
public:
    SeriesEvaluator(const LinearSystem& sys, const PolynomialNonlinearity& F, const SeriesData& u)
        : sys_(sys), F_(F), u_(u) {}

    const Trajectory& phi_star_u(const PlanarTree& b) {
        std::string enc = b.encode();
        auto it = star_memo_.find(enc);
        if (it != star_memo_.end()) return it->second;

        Trajectory acc(u_.grid(), sys_.n());
        for (const auto& split : supported_splits(b)) {
            std::vector<std::string> keys;
            keys.reserve(split.upper.size());
            for (const auto& e : split.upper) keys.push_back(e.encode());
            acc += phi_keys(split.lower, keys);
        }
        return star_memo_.emplace(std::move(enc), std::move(acc)).first->second;
    }

private:
    const LinearSystem& sys_;
    const PolynomialNonlinearity& F_;
    const SeriesData& u_;
    std::unordered_map<std::string, Trajectory> star_memo_;
    std::unordered_map<std::string, Trajectory> phi_memo_;

    // All (E, c) splits of b whose upper tuple lies entirely in u's support.
    std::vector<TreeSplit> supported_splits(const PlanarTree& b) const {
        std::vector<TreeSplit> out;
        if (u_.find(b)) out.push_back({Forest{b}, leaf()});
        if (b.is_leaf()) return out;
        std::vector<std::vector<TreeSplit>> child_splits;
        child_splits.reserve(b.children().size());
        for (const auto& bi : b.children()) {
            child_splits.push_back(supported_splits(bi));
            if (child_splits.back().empty()) return out;  // no surviving combination
        }
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

    // phi(c) applied to the u-entries named by keys, memoized on (c, keys).
    const Trajectory& phi_keys(const PlanarTree& c, std::span<const std::string> keys) {
        std::string memo_key = c.encode();
        memo_key += '|';
        for (const auto& k : keys) {
            memo_key += k;
            memo_key += ';';
        }
        auto it = phi_memo_.find(memo_key);
        if (it != phi_memo_.end()) return it->second;

        Trajectory result(u_.grid(), sys_.n());
        if (c.is_leaf()) {
            const SeriesEntry* e = u_.find(keys[0]);
            if (!e) throw std::logic_error("SeriesEvaluator: pruned split referenced missing entry");
            result = solve_linear(sys_, u_.grid(), e->x0_part, &e->f_part);
        } else {
            const int r = static_cast<int>(c.children().size());
            if (F_.has_order(r)) {
                std::vector<Trajectory> child_out;
                child_out.reserve(static_cast<std::size_t>(r));
                std::size_t offset = 0;
                for (const auto& ci : c.children()) {
                    auto k = static_cast<std::size_t>(ci.leaves());
                    child_out.push_back(phi_keys(ci, keys.subspan(offset, k)));
                    offset += k;
                }
                Trajectory source = F_.apply_pointwise(r, child_out);
                result = solve_linear(sys_, u_.grid(), Eigen::VectorXd::Zero(sys_.n()), &source);
            }
        }
        return phi_memo_.emplace(std::move(memo_key), std::move(result)).first->second;
    }
};

/// One row of the per-tree report emitted by sum_series.
struct TreeReportRow {
    std::string encoding;
    int internal = 0;
    int leaves = 0;
    int total = 0;
    int lambda_power = 0;
    double contribution_s_norm = 0.0;
};

struct SeriesResult {
    Trajectory x;
    std::vector<TreeReportRow> rows;
    /// S-norm mass of the highest included vertex-count level; a tail proxy.
    double last_level_mass = 0.0;
};

/// Truncated series sum over all trees with total vertex count <= n_max:
/// x = sum lambda^{internal(b)} (phi * u)(b). Trees containing an arity above
/// the top tensor order are skipped; their contribution is exactly zero.
inline SeriesResult sum_series(const SeriesData& u, double lambda, int n_max,
                               const LinearSystem& sys, const PolynomialNonlinearity& F) {
    if (n_max < 1) throw std::invalid_argument("sum_series: n_max must be >= 1");
    int arity_cap = F.max_order() > 0 ? F.max_order() : 2;
    SeriesEvaluator eval(sys, F, u);
    SeriesResult out;
    out.x = Trajectory(u.grid(), sys.n());
    int last_level = 1;
    for (const auto& b : enumerate_trees(n_max, arity_cap)) {
        Trajectory term = std::pow(lambda, b.internal()) * eval.phi_star_u(b);
        double mass = s_norm(term);
        out.x += term;
        if (b.total() > last_level) {
            last_level = b.total();
            out.last_level_mass = 0.0;
        }
        if (b.total() == last_level) out.last_level_mass += mass;
        out.rows.push_back({b.encode(), b.internal(), b.leaves(), b.total(), b.internal(), mass});
    }
    return out;
}

/// Computable bound for the norm of the linear solve map (x0, f) |-> x in the
/// S-norm. Variation of constants gives sup|x| <= e^{||A||T}(|x0| + sqrt(T)||f||)
/// and ||x'|| <= ||A|| sqrt(T) sup|x| + ||f||, so
///   ||x||_S <= [(1 + ||A|| sqrt(T)) e^{||A|| T} max(1, sqrt(T)) + 1] (|x0| + ||f||).
/// The trailing +1 carries the direct ||f|| term of the derivative.
inline double phi_circ_bound(const LinearSystem& sys) {
    double a = spectral_norm(sys.A);
    double rt = std::sqrt(sys.T);
    return (1.0 + a * rt) * std::exp(a * sys.T) * std::max(1.0, rt) + 1.0;
}

/// Product bound for the elementary map of b: the leaf-solve bound to the
/// power N(b) times the tensor norm bounds of all internal arities.
inline double phi_norm_bound(const PlanarTree& b, double phi_circ, const PolynomialNonlinearity& F,
                             double T) {
    double acc = std::pow(phi_circ, b.total());
    for (int r : b.internal_arities()) acc *= F.norm_bound(r, T);
    return acc;
}

/// Sufficient condition for absolute convergence of the full series:
/// |lambda| |u|^{-1} |F|(16 C_phi |u|) < 1 with C_phi the documented bound
/// for the leaf solve map.
struct ConvergenceCertificate {
    double lambda = 0.0;
    double u_norm = 0.0;
    double phi_circ_norm_bound = 0.0;
    double majorant_value = 0.0;
    double condition_value = 0.0;
    bool satisfied = false;
};

inline ConvergenceCertificate convergence_certificate(const SeriesData& u, double lambda,
                                                      const LinearSystem& sys,
                                                      const PolynomialNonlinearity& F) {
    ConvergenceCertificate cert;
    cert.lambda = lambda;
    cert.u_norm = u.weighted_norm(lambda);
    cert.phi_circ_norm_bound = phi_circ_bound(sys);
    if (cert.u_norm == 0.0) {
        // Zero data: the series is the zero-data solve, vacuously convergent.
        cert.satisfied = true;
        return cert;
    }
    cert.majorant_value = F.majorant(16.0 * cert.phi_circ_norm_bound * cert.u_norm, sys.T);
    cert.condition_value = std::abs(lambda) / cert.u_norm * cert.majorant_value;
    cert.satisfied = cert.condition_value < 1.0;
    return cert;
}

/// Node values of x' - Ax - f - lambda F(x) with the derivative taken by
/// finite differences (fourth-order interior stencil, one-sided at the ends).
/// Independent of the exponential solve path.
inline Trajectory equation_residual(const Trajectory& x, const LinearSystem& sys,
                                    const Trajectory* f, double lambda,
                                    const PolynomialNonlinearity& F) {
    const TimeGrid& grid = x.grid;
    if (grid.M < 4) throw std::invalid_argument("equation_residual: grid too coarse");
    const double h = grid.dt();
    Trajectory r(grid, x.dim());
    for (int k = 0; k <= grid.M; ++k) {
        Eigen::VectorXd dx;
        const int M = grid.M;
        if (k >= 2 && k <= M - 2) {
            dx = (x[k - 2] - 8 * x[k - 1] + 8 * x[k + 1] - x[k + 2]) / (12 * h);
        } else if (k == 0) {
            dx = (-25 * x[0] + 48 * x[1] - 36 * x[2] + 16 * x[3] - 3 * x[4]) / (12 * h);
        } else if (k == 1) {
            dx = (-3 * x[0] - 10 * x[1] + 18 * x[2] - 6 * x[3] + x[4]) / (12 * h);
        } else if (k == M - 1) {
            dx = (3 * x[M] + 10 * x[M - 1] - 18 * x[M - 2] + 6 * x[M - 3] - x[M - 4]) / (12 * h);
        } else {
            dx = (25 * x[M] - 48 * x[M - 1] + 36 * x[M - 2] - 16 * x[M - 3] + 3 * x[M - 4]) /
                 (12 * h);
        }
        r[k] = dx - sys.A * x[k];
        if (f) r[k] -= (*f)[k];
        if (lambda != 0.0) r[k] -= lambda * F.evaluate(x[k]);
    }
    return r;
}

}  // namespace butcher
