#pragma once

// Linear-analysis layer: uniform time grids, trajectories, quadrature,
// propagators for x' = Ax + f and the adjoint -y' = A^T y, the controllability
// Gramian with its observability constant, and the Kalman rank test.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace butcher {

/// Relative singular-value cutoff for rank decisions.
inline constexpr double kRankTolerance = 1e-9;
/// Smallest Gramian eigenvalue accepted as observable.
inline constexpr double kObservabilityThreshold = 1e-10;

/// Uniform grid t_k = k T / M on [0, T]; M even so composite Simpson applies.
struct TimeGrid {
    double T = 1.0;
    int M = 200;

    TimeGrid() = default;
    TimeGrid(double final_time, int intervals) : T(final_time), M(intervals) {
        if (!(T > 0.0)) throw std::invalid_argument("TimeGrid: T must be positive");
        if (M <= 0 || M % 2 != 0) throw std::invalid_argument("TimeGrid: M must be even and positive");
    }

    double dt() const { return T / M; }
    double node(int k) const { return k * T / M; }
    int nodes() const { return M + 1; }

    friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
        return a.T == b.T && a.M == b.M;
    }
};

/// Vector-valued function sampled on a TimeGrid.
struct Trajectory {
    TimeGrid grid;
    std::vector<Eigen::VectorXd> values;

    Trajectory() = default;
    Trajectory(const TimeGrid& g, int dim)
        : grid(g), values(static_cast<std::size_t>(g.nodes()), Eigen::VectorXd::Zero(dim)) {}

    int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }

    Eigen::VectorXd& operator[](int k) { return values[static_cast<std::size_t>(k)]; }
    const Eigen::VectorXd& operator[](int k) const { return values[static_cast<std::size_t>(k)]; }

    Trajectory& operator+=(const Trajectory& other) {
        check_same(other);
        for (std::size_t k = 0; k < values.size(); ++k) values[k] += other.values[k];
        return *this;
    }
    Trajectory& operator*=(double s) {
        for (auto& v : values) v *= s;
        return *this;
    }

    void check_same(const Trajectory& other) const {
        if (!(grid == other.grid) || dim() != other.dim())
            throw std::invalid_argument("Trajectory: grid or dimension mismatch");
    }
};

inline Trajectory operator*(double s, Trajectory t) {
    t *= s;
    return t;
}

/// Composite Simpson weights h/3 * {1,4,2,...,2,4,1}.
inline double simpson_weight(const TimeGrid& g, int k) {
    double w = (k == 0 || k == g.M) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    return w * g.dt() / 3.0;
}

/// Simpson approximation of the L2 pairing on [0,T]; exact per panel for
/// integrands of polynomial degree <= 3.
inline double l2_inner(const Trajectory& f, const Trajectory& g) {
    f.check_same(g);
    double acc = 0.0;
    for (int k = 0; k <= f.grid.M; ++k) acc += simpson_weight(f.grid, k) * f[k].dot(g[k]);
    return acc;
}

inline double l2_norm(const Trajectory& f) { return std::sqrt(std::max(0.0, l2_inner(f, f))); }

inline double sup_norm(const Trajectory& f) {
    double m = 0.0;
    for (const auto& v : f.values) m = std::max(m, v.norm());
    return m;
}

/// Norm on the solution space: sup of node values plus the L2 norm of the
/// piecewise-constant increment derivative. Dominates both the uniform and
/// the H1 seminorm needs of the certificates.
inline double s_norm(const Trajectory& f) {
    double h = f.grid.dt();
    double deriv_sq = 0.0;
    for (int k = 0; k < f.grid.M; ++k) deriv_sq += ((f[k + 1] - f[k]) / h).squaredNorm() * h;
    return sup_norm(f) + std::sqrt(deriv_sq);
}

/// x' = Ax + Bv on [0, T].
struct LinearSystem {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    double T = 1.0;

    LinearSystem() = default;
    LinearSystem(Eigen::MatrixXd a, Eigen::MatrixXd b, double final_time)
        : A(std::move(a)), B(std::move(b)), T(final_time) {
        if (A.rows() != A.cols()) throw std::invalid_argument("LinearSystem: A must be square");
        if (B.rows() != A.rows()) throw std::invalid_argument("LinearSystem: B row count must match A");
        if (!(T > 0.0)) throw std::invalid_argument("LinearSystem: T must be positive");
    }

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }
};

/// Scaling-and-squaring matrix exponential.
inline Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M) {
    if (M.rows() != M.cols()) throw std::invalid_argument("matrix_exponential: non-square input");
    return M.exp();
}

namespace detail {

/// e^{hA} together with phi_1, phi_2, phi_3 of hA, where
/// phi_j(z) = sum_k z^k / (k+j)!. Computed from one exponential of the
/// augmented block matrix [[hA, I, 0, 0], [0, 0, I, 0], ...].
struct PhiFunctions {
    Eigen::MatrixXd E, phi1, phi2, phi3;
};

inline PhiFunctions phi_functions(const Eigen::MatrixXd& hA) {
    const auto n = hA.rows();
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(4 * n, 4 * n);
    W.topLeftCorner(n, n) = hA;
    for (int blk = 0; blk < 3; ++blk)
        W.block(blk * n, (blk + 1) * n, n, n) = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd EW = W.exp();
    return {EW.block(0, 0, n, n), EW.block(0, n, n, n), EW.block(0, 2 * n, n, n),
            EW.block(0, 3 * n, n, n)};
}

}  // namespace detail

/// Variation-of-constants solve of x' = Ax + f, x(0) = x0, on the grid.
/// One-step exponential scheme with per-step quadratic interpolation of the
/// source: exact for f = 0, order >= 3 otherwise. x(0) = x0 exactly.
inline Trajectory solve_linear(const LinearSystem& sys, const TimeGrid& grid,
                               const Eigen::VectorXd& x0, const Trajectory* f = nullptr) {
    if (x0.size() != sys.n()) throw std::invalid_argument("solve_linear: x0 dimension mismatch");
    if (f && (f->dim() != sys.n() || !(f->grid == grid)))
        throw std::invalid_argument("solve_linear: source grid or dimension mismatch");

    const double h = grid.dt();
    const auto phis = detail::phi_functions(h * sys.A);

    Trajectory x(grid, sys.n());
    x[0] = x0;
    for (int k = 0; k < grid.M; ++k) {
        Eigen::VectorXd next = phis.E * x[k];
        if (f) {
            // Quadratic through three consecutive source samples; the stencil
            // is {k, k+1, k+2} shifted back one at the right boundary.
            int base = (k + 2 <= grid.M) ? k : k - 1;
            double s0 = (k - base) * h;  // position of t_k in local coordinates
            const Eigen::VectorXd& f0 = (*f)[base];
            const Eigen::VectorXd& f1 = (*f)[base + 1];
            const Eigen::VectorXd& f2 = (*f)[base + 2];
            // p(s) = c0 + c1 s + c2 s^2 on the local frame s in [0, 2h].
            Eigen::VectorXd c2 = (f2 - 2 * f1 + f0) / (2 * h * h);
            Eigen::VectorXd c1 = (f1 - f0) / h - c2 * h;
            // Shift to the step frame sigma = s - s0 in [0, h].
            Eigen::VectorXd a0 = f0 + c1 * s0 + c2 * s0 * s0;
            Eigen::VectorXd a1 = c1 + 2 * c2 * s0;
            Eigen::VectorXd a2 = c2;
            // int_0^h e^{A(h-sigma)} sigma^j dsigma = j! h^{j+1} phi_{j+1}(hA)
            next += h * (phis.phi1 * a0) + h * h * (phis.phi2 * a1) +
                    2 * h * h * h * (phis.phi3 * a2);
        }
        x[k + 1] = next;
    }
    return x;
}

/// Adjoint solve: y(t) = e^{-A^T t} y0 on the grid; y(0) = y0 exactly.
inline Trajectory solve_adjoint(const LinearSystem& sys, const TimeGrid& grid,
                                const Eigen::VectorXd& y0) {
    if (y0.size() != sys.n()) throw std::invalid_argument("solve_adjoint: y0 dimension mismatch");
    Eigen::MatrixXd step = matrix_exponential(-grid.dt() * sys.A.transpose());
    Trajectory y(grid, sys.n());
    y[0] = y0;
    for (int k = 0; k < grid.M; ++k) y[k + 1] = step * y[k];
    return y;
}

/// Numerical rank of the controllability matrix (B, AB, ..., A^{n-1}B).
inline int kalman_rank(const LinearSystem& sys, double rank_tol = kRankTolerance) {
    const int n = sys.n();
    const int m = sys.m();
    Eigen::MatrixXd K(n, n * m);
    Eigen::MatrixXd block = sys.B;
    for (int j = 0; j < n; ++j) {
        K.block(0, j * m, n, m) = block;
        block = sys.A * block;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(K);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > rank_tol * sv(0)) ++rank;
    return rank;
}

inline double spectral_norm(const Eigen::MatrixXd& M) {
    if (M.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    return svd.singularValues()(0);
}

/// Observability data of the pair (A, B) over [0, T]:
///   G   = int_0^T e^{-At} B B^T e^{-A^T t} dt       (quadratic form of the
///         adjoint observation energy),
///   c_T = smallest eigenvalue of G,
///   alpha = norm of y0 |-> y in L2, i.e. sqrt(lambda_max of
///           int_0^T e^{-At} e^{-A^T t} dt),
///   beta  = ||B||_2 alpha / sqrt(c_T)  (only meaningful when observable).
struct GramianData {
    Eigen::MatrixXd G;
    double c_T = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    bool observable = false;
};

inline GramianData gramian(const LinearSystem& sys, const TimeGrid& grid,
                           double observability_threshold = kObservabilityThreshold) {
    const int n = sys.n();
    Eigen::MatrixXd step = matrix_exponential(-grid.dt() * sys.A);
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);  // e^{-A t_k}
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k <= grid.M; ++k) {
        double w = simpson_weight(grid, k);
        Eigen::MatrixXd PB = P * sys.B;
        G += w * PB * PB.transpose();
        H += w * P * P.transpose();
        P = step * P;
    }
    G = 0.5 * (G + G.transpose());  // enforce exact symmetry
    H = 0.5 * (H + H.transpose());

    GramianData out;
    out.G = G;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(G);
    out.c_T = eg.eigenvalues().minCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eh(H);
    out.alpha = std::sqrt(std::max(0.0, eh.eigenvalues().maxCoeff()));
    out.observable = out.c_T > observability_threshold;
    if (out.observable) out.beta = spectral_norm(sys.B) * out.alpha / std::sqrt(out.c_T);
    return out;
}

}  // namespace butcher
