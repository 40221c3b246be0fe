#pragma once

// Echo state reservoir: fixed random matrices, tanh state update,
// [r, r^2] augmentation and the ridge-regression readout.

#include "error.hpp"
#include "random.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace bkrc {

using sparse_matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct reservoir_spec {
    std::size_t r_dim = 400;
    double kappa = 3.0;
    double rho = 0.5;
    double beta = 1e-6;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (r_dim < 1) throw invalid_argument{"reservoir: r_dim must be at least 1"};
        if (!(kappa >= 1)) throw invalid_argument{"reservoir: kappa must be at least 1"};
        if (!(kappa < static_cast<double>(r_dim)))
            throw invalid_argument{"reservoir: kappa must be smaller than r_dim"};
        if (!(rho > 0)) throw invalid_argument{"reservoir: rho must be positive"};
        if (!(beta >= 0)) throw invalid_argument{"reservoir: beta must be non-negative"};
    }
};

/// Input matrix with exactly one nonzero per row, stored as (column, value) per row.
struct input_matrix {
    std::size_t x_dim = 0;
    std::vector<std::size_t> cols;
    std::vector<double> values;

    std::size_t rows() const noexcept { return cols.size(); }

    Eigen::MatrixXd to_dense() const
    {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(x_dim));
        for (std::size_t i = 0; i < rows(); ++i) m(i, cols[i]) = values[i];
        return m;
    }
};

struct reservoir_matrices {
    sparse_matrix adjacency;
    input_matrix w_in;

    std::size_t r_dim() const noexcept { return static_cast<std::size_t>(adjacency.rows()); }
    std::size_t x_dim() const noexcept { return w_in.x_dim; }
};

struct reservoir_state {
    Eigen::VectorXd r;

    static reservoir_state zero(std::size_t r_dim) { return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r_dim))}; }
};

struct readout {
    Eigen::MatrixXd w_out;  // y_dim x h_dim

    std::size_t y_dim() const noexcept { return static_cast<std::size_t>(w_out.rows()); }
    std::size_t h_dim() const noexcept { return static_cast<std::size_t>(w_out.cols()); }
};

// ---------------------------------------------------------------------------
// Spectral radius

struct spectral_options {
    double tolerance = 1e-10;
    std::size_t max_iterations = 10'000;
    std::size_t block = 16;
    std::uint64_t seed = 0x5eed;
};

namespace detail {

inline Eigen::MatrixXd orthonormal_columns(const Eigen::MatrixXd& z)
{
    Eigen::HouseholderQR<Eigen::MatrixXd> qr{z};
    return qr.householderQ() * Eigen::MatrixXd::Identity(z.rows(), z.cols());
}

inline double max_abs_eigenvalue(const Eigen::MatrixXd& t)
{
    Eigen::EigenSolver<Eigen::MatrixXd> es{t, false};
    if (es.info() != Eigen::Success) throw convergence_error{"spectral_radius: Ritz eigensolve failed"};
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Largest eigenvalue magnitude by block power iteration: a block of orthonormal
/// vectors is repeatedly multiplied by `m` and re-orthonormalized, and the largest
/// Ritz value of the projected matrix is tracked until its relative change stays
/// below the tolerance. The block handles complex-conjugate dominant pairs, which
/// single-vector power iteration cannot resolve.
template <typename Matrix>
double spectral_radius(const Matrix& m, const spectral_options& opt = {})
{
    if (m.rows() != m.cols()) throw dimension_error{"spectral_radius: matrix is not square"};
    const Eigen::Index n = m.rows();
    if (n == 0) return 0.0;
    {
        bool finite = true;
        if constexpr (std::is_base_of_v<Eigen::SparseMatrixBase<Matrix>, Matrix>) {
            for (Eigen::Index k = 0; k < m.nonZeros(); ++k) finite = finite && std::isfinite(m.valuePtr()[k]);
        } else {
            finite = m.allFinite();
        }
        if (!finite) throw invalid_argument{"spectral_radius: matrix is not finite"};
    }

    const Eigen::Index k = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(opt.block));
    auto gen = make_engine(derive_seed(opt.seed, {stream::spectral_start}));
    std::normal_distribution<double> normal;
    Eigen::MatrixXd q(n, k);
    for (Eigen::Index c = 0; c < k; ++c)
        for (Eigen::Index r = 0; r < n; ++r) q(r, c) = normal(gen);
    q = detail::orthonormal_columns(q);

    double previous = -1.0;
    int stable = 0;
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
        Eigen::MatrixXd z = m * q;
        if (z.squaredNorm() == 0.0) return 0.0;
        const double lambda = detail::max_abs_eigenvalue(q.transpose() * z);
        q = detail::orthonormal_columns(z);
        if (previous >= 0.0 && std::abs(lambda - previous) <= opt.tolerance * lambda) {
            if (++stable >= 2) return lambda;
        } else {
            stable = 0;
        }
        previous = lambda;
    }
    throw convergence_error{"spectral_radius: no convergence after " + std::to_string(opt.max_iterations)
                            + " iterations"};
}

/// Scale `m` so that its spectral radius equals rho.
inline sparse_matrix rescale_to_spectral_radius(sparse_matrix m, double rho)
{
    const double current = spectral_radius(m);
    if (current == 0.0) throw degenerate_draw_error{"adjacency has spectral radius 0; reseed"};
    m *= rho / current;
    return m;
}

// ---------------------------------------------------------------------------
// Random matrices

/// Sparse adjacency: each entry is nonzero with probability kappa / r_dim, with a
/// value uniform in [-1, 1], then rescaled to spectral radius rho.
inline sparse_matrix build_adjacency(const reservoir_spec& spec)
{
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.r_dim);
    const double p = spec.kappa / static_cast<double>(spec.r_dim);

    auto gen = make_engine(derive_seed(spec.seed, {stream::adjacency}));
    std::uniform_real_distribution<double> coin{0.0, 1.0};
    std::uniform_real_distribution<double> weight{-1.0, 1.0};

    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(spec.kappa * static_cast<double>(spec.r_dim) * 1.5) + 16);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (coin(gen) < p) entries.emplace_back(i, j, weight(gen));

    sparse_matrix a(n, n);
    a.setFromTriplets(entries.begin(), entries.end());
    a.makeCompressed();
    return rescale_to_spectral_radius(std::move(a), spec.rho);
}

/// One nonzero per row at a uniformly drawn column, value uniform in [-1, 1].
inline input_matrix build_input_matrix(std::size_t r_dim, std::size_t x_dim, std::uint64_t seed)
{
    if (r_dim < 1 || x_dim < 1) throw invalid_argument{"build_input_matrix: dimensions must be at least 1"};
    auto gen = make_engine(derive_seed(seed, {stream::input_matrix}));
    std::uniform_int_distribution<std::size_t> column{0, x_dim - 1};
    std::uniform_real_distribution<double> weight{-1.0, 1.0};

    input_matrix w{x_dim, std::vector<std::size_t>(r_dim), std::vector<double>(r_dim)};
    for (std::size_t i = 0; i < r_dim; ++i) {
        w.cols[i] = column(gen);
        double v = 0.0;
        while (v == 0.0) v = weight(gen);
        w.values[i] = v;
    }
    return w;
}

inline reservoir_matrices build_matrices(const reservoir_spec& spec, std::size_t x_dim)
{
    return {build_adjacency(spec), build_input_matrix(spec.r_dim, x_dim, spec.seed)};
}

// ---------------------------------------------------------------------------
// State update

/// next = tanh(A r + W_in x). `next` must not alias `r`.
inline void advance_into(const reservoir_matrices& m, const Eigen::VectorXd& r, std::span<const double> x,
                         Eigen::VectorXd& next)
{
    const sparse_matrix& a = m.adjacency;
    const auto n = a.rows();
    next.resize(n);
    const int* outer = a.outerIndexPtr();
    const int* inner = a.innerIndexPtr();
    const double* val = a.valuePtr();
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = m.w_in.values[i] * x[m.w_in.cols[i]];
        for (int k = outer[i]; k < outer[i + 1]; ++k) s += val[k] * r[inner[k]];
        next[i] = std::tanh(s);
    }
}

inline reservoir_state advance(const reservoir_state& state, const reservoir_matrices& m, std::span<const double> x)
{
    if (x.size() != m.x_dim())
        throw dimension_error{"advance: input has length " + std::to_string(x.size()) + ", W_in expects "
                              + std::to_string(m.x_dim())};
    if (static_cast<std::size_t>(state.r.size()) != m.r_dim())
        throw dimension_error{"advance: state length does not match r_dim"};
    reservoir_state out;
    advance_into(m, state.r, x, out.r);
    return out;
}

inline reservoir_state advance(const reservoir_state& state, const reservoir_matrices& m, const Eigen::VectorXd& x)
{
    return advance(state, m, std::span<const double>{x.data(), static_cast<std::size_t>(x.size())});
}

/// [r, r^2] (elementwise square).
inline Eigen::VectorXd augment(const Eigen::VectorXd& r)
{
    Eigen::VectorXd out(2 * r.size());
    out << r, r.array().square().matrix();
    return out;
}

/// Feed each input in turn and return the state after every step.
inline std::vector<reservoir_state> drive_open_loop(const reservoir_matrices& m, std::span<const Eigen::VectorXd> inputs,
                                                    const reservoir_state& r0)
{
    std::vector<reservoir_state> out;
    out.reserve(inputs.size());
    reservoir_state current = r0;
    for (const auto& x : inputs) {
        current = advance(current, m, x);
        out.push_back(current);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Readout training

/// What an unregularized (beta = 0) fit does when the feature Gram matrix is singular.
enum class singular_policy {
    raise,     ///< throw singular_system_error
    min_norm,  ///< minimum-norm least-squares solution (the beta -> 0+ limit)
};

/// W_out = argmin |W H - Y|^2 + beta |W|^2 = Y H^T (H H^T + beta I)^-1.
///
/// beta > 0 solves the regularized normal equations with a Cholesky factorization.
/// beta = 0 solves the least-squares problem through a QR factorization of H^T,
/// followed by a complete orthogonal decomposition of the triangular factor, which
/// avoids squaring the condition number and detects rank deficiency.
inline readout train_readout(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double beta,
                             singular_policy policy = singular_policy::raise)
{
    const Eigen::Index h = features.rows(), t = features.cols();
    if (t < 1) throw invalid_argument{"train_readout: at least one sample required"};
    if (targets.cols() != t)
        throw dimension_error{"train_readout: features have " + std::to_string(t) + " samples, targets "
                              + std::to_string(targets.cols())};
    if (!(beta >= 0)) throw invalid_argument{"train_readout: beta must be non-negative"};
    if (!features.allFinite() || !targets.allFinite()) throw invalid_argument{"train_readout: non-finite data"};

    if (beta > 0) {
        Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(h, h) * beta;
        gram.selfadjointView<Eigen::Lower>().rankUpdate(features);
        const Eigen::MatrixXd rhs = features * targets.transpose();
        Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt{gram};
        if (llt.info() == Eigen::Success) return {llt.solve(rhs).transpose()};
        Eigen::LDLT<Eigen::MatrixXd, Eigen::Lower> ldlt{gram};
        if (ldlt.info() != Eigen::Success) throw singular_system_error{"train_readout: regularized solve failed"};
        return {ldlt.solve(rhs).transpose()};
    }

    Eigen::MatrixXd reduced_lhs;
    Eigen::MatrixXd reduced_rhs;
    if (t >= h) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr{features.transpose()};
        reduced_lhs = qr.matrixQR().topRows(h).triangularView<Eigen::Upper>();
        Eigen::MatrixXd rhs = targets.transpose();
        rhs.applyOnTheLeft(qr.householderQ().adjoint());
        reduced_rhs = rhs.topRows(h);
    } else {
        reduced_lhs = features.transpose();
        reduced_rhs = targets.transpose();
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod{reduced_lhs};
    if (cod.rank() < h && policy == singular_policy::raise)
        throw singular_system_error{"train_readout: beta = 0 and H H^T has rank " + std::to_string(cod.rank())
                                    + " < " + std::to_string(h)};
    return {cod.solve(reduced_rhs).transpose()};
}

}  // namespace bkrc
