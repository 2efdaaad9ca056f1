#pragma once

// Pointwise polynomial nonlinearity F(x) = sum_{p>=2} F_p(x,...,x), each F_p a
// multilinear coefficient tensor applied at every grid node, stored sparsely.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "butcher/linear_ode.hpp"

namespace butcher {

/// One coefficient of a multilinear tensor of order p:
/// contributes value * x^{(1)}[in[0]] * ... * x^{(p)}[in[p-1]] to output row `out`.
struct TensorEntry {
    int out = 0;
    std::vector<int> in;
    double value = 0.0;
};

class PolynomialNonlinearity {
public:
    PolynomialNonlinearity() = default;
    explicit PolynomialNonlinearity(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    bool empty() const { return tensors_.empty(); }

    /// Highest tensor order present; 0 when F = 0. Maps of higher order are zero.
    int max_order() const { return tensors_.empty() ? 0 : tensors_.rbegin()->first; }

    void add_entry(int order, TensorEntry entry) {
        if (order < 2) throw std::invalid_argument("PolynomialNonlinearity: order must be >= 2");
        if (entry.out < 0 || entry.out >= dim_ ||
            static_cast<int>(entry.in.size()) != order)
            throw std::invalid_argument("PolynomialNonlinearity: malformed tensor entry");
        for (int i : entry.in)
            if (i < 0 || i >= dim_)
                throw std::invalid_argument("PolynomialNonlinearity: input index out of range");
        tensors_[order].push_back(std::move(entry));
    }

    bool has_order(int p) const { return tensors_.count(p) != 0; }

    const std::map<int, std::vector<TensorEntry>>& tensors() const { return tensors_; }

    /// F_p applied to p vectors; zero for orders without a tensor.
    Eigen::VectorXd apply(int p, std::span<const Eigen::VectorXd> args) const {
        if (static_cast<int>(args.size()) != p)
            throw std::invalid_argument("PolynomialNonlinearity::apply: arity mismatch");
        Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
        auto it = tensors_.find(p);
        if (it == tensors_.end()) return out;
        for (const auto& e : it->second) {
            double prod = e.value;
            for (int j = 0; j < p; ++j) prod *= args[static_cast<std::size_t>(j)](e.in[static_cast<std::size_t>(j)]);
            out(e.out) += prod;
        }
        return out;
    }

    /// Full diagonal evaluation F(x) = sum_p F_p(x,...,x) at one state.
    Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
        for (const auto& [p, entries] : tensors_) {
            for (const auto& e : entries) {
                double prod = e.value;
                for (int idx : e.in) prod *= x(idx);
                out(e.out) += prod;
            }
        }
        return out;
    }

    /// F_p applied node-by-node to p trajectories on a common grid.
    Trajectory apply_pointwise(int p, std::span<const Trajectory> args) const {
        if (static_cast<int>(args.size()) != p)
            throw std::invalid_argument("PolynomialNonlinearity::apply_pointwise: arity mismatch");
        const TimeGrid& grid = args[0].grid;
        for (const auto& a : args)
            if (!(a.grid == grid) || a.dim() != dim_)
                throw std::invalid_argument(
                    "PolynomialNonlinearity::apply_pointwise: grid or dimension mismatch");
        Trajectory out(grid, dim_);
        std::vector<Eigen::VectorXd> at(static_cast<std::size_t>(p));
        for (int k = 0; k <= grid.M; ++k) {
            for (int j = 0; j < p; ++j) at[static_cast<std::size_t>(j)] = args[static_cast<std::size_t>(j)][k];
            out[k] = apply(p, at);
        }
        return out;
    }

    /// Frobenius norm of the order-p coefficient tensor.
    double frobenius(int p) const {
        auto it = tensors_.find(p);
        if (it == tensors_.end()) return 0.0;
        double acc = 0.0;
        for (const auto& e : it->second) acc += e.value * e.value;
        return std::sqrt(acc);
    }

    /// Upper bound on the operator norm of F_p from the solution space into
    /// L2(0,T): pointwise |F_p(x_1,...,x_p)(t)| <= frobenius * prod sup|x_i|,
    /// and integrating over [0,T] contributes the factor sqrt(T).
    double norm_bound(int p, double T) const { return std::sqrt(T) * frobenius(p); }

    /// Majorant polynomial |F|(z) = sum_p norm_bound(p) z^p.
    double majorant(double z, double T) const {
        double acc = 0.0;
        for (const auto& [p, entries] : tensors_) acc += norm_bound(p, T) * std::pow(z, p);
        return acc;
    }

private:
    int dim_ = 0;
    std::map<int, std::vector<TensorEntry>> tensors_;
};

}  // namespace butcher
