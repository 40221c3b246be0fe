#pragma once

// Local-states prediction: one independent reservoir per grid point, fed by the
// sigma x sigma neighbourhood of that point and predicting only the point itself.
//
// Training and prediction are embarrassingly parallel over points. Every
// per-point result is written to a slot indexed by the point, so the outcome is
// independent of the number of worker threads.

#include "barkley.hpp"
#include "error.hpp"
#include "field.hpp"
#include "hybrid.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "reservoir.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace bkrc {

struct patch_spec {
    std::size_t sigma = 3;

    void validate() const
    {
        if (sigma < 1 || sigma % 2 == 0) throw invalid_argument{"patch: sigma must be odd and at least 1"};
    }

    std::size_t cells() const noexcept { return sigma * sigma; }
    std::size_t width() const noexcept { return 2 * sigma * sigma; }
    /// Offset of the center cell inside the U (or V) half of a patch.
    std::size_t center() const noexcept { return (sigma * sigma - 1) / 2; }
};

/// Precomputed clamped storage offsets of every point's neighbourhood.
class patch_index {
public:
    patch_index() = default;

    patch_index(std::size_t nx, std::size_t ny, patch_spec spec) : nx_{nx}, ny_{ny}, spec_{spec}
    {
        spec.validate();
        const auto half = static_cast<std::ptrdiff_t>(spec.sigma / 2);
        const auto clamp = [](std::ptrdiff_t k, std::size_t n) {
            return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(n) - 1));
        };
        offsets_.reserve(nx * ny * spec.cells());
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i)
                for (std::ptrdiff_t dj = -half; dj <= half; ++dj)
                    for (std::ptrdiff_t di = -half; di <= half; ++di)
                        offsets_.push_back(clamp(static_cast<std::ptrdiff_t>(j) + dj, ny) * nx
                                           + clamp(static_cast<std::ptrdiff_t>(i) + di, nx));
    }

    std::size_t nx() const noexcept { return nx_; }
    std::size_t ny() const noexcept { return ny_; }
    std::size_t points() const noexcept { return nx_ * ny_; }
    const patch_spec& spec() const noexcept { return spec_; }

    /// U values then V values of the neighbourhood of point p (storage order).
    void gather(const field_pair& s, std::size_t p, std::span<double> out) const
    {
        const std::size_t c = spec_.cells();
        const std::size_t* off = offsets_.data() + p * c;
        const auto u = s.u.values();
        const auto v = s.v.values();
        for (std::size_t k = 0; k < c; ++k) {
            out[k] = u[off[k]];
            out[c + k] = v[off[k]];
        }
    }

private:
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    patch_spec spec_;
    std::vector<std::size_t> offsets_;
};

/// U then V over the sigma x sigma square centered at (i, j), row-major (y outer,
/// x inner). Out-of-grid neighbours are clamped to the boundary.
inline std::vector<double> extract_patch(const field_pair& state, std::size_t i, std::size_t j, patch_spec spec)
{
    spec.validate();
    if (i >= state.nx() || j >= state.ny())
        throw invalid_argument{"extract_patch: center (" + std::to_string(i) + ", " + std::to_string(j)
                               + ") outside the grid"};
    const auto half = static_cast<std::ptrdiff_t>(spec.sigma / 2);
    const auto cx = [&](std::ptrdiff_t k) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(state.nx()) - 1));
    };
    const auto cy = [&](std::ptrdiff_t k) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(state.ny()) - 1));
    };
    std::vector<double> out(spec.width());
    std::size_t k = 0;
    for (std::ptrdiff_t dj = -half; dj <= half; ++dj)
        for (std::ptrdiff_t di = -half; di <= half; ++di, ++k) {
            const std::size_t ii = cx(static_cast<std::ptrdiff_t>(i) + di);
            const std::size_t jj = cy(static_cast<std::ptrdiff_t>(j) + dj);
            out[k] = state.u(ii, jj);
            out[spec.cells() + k] = state.v(ii, jj);
        }
    return out;
}

/// Adds N(0, (alpha * sd)^2) noise where sd is the standard deviation of U (resp. V)
/// over the whole sequence.
inline trajectory add_input_noise(std::span<const field_pair> data, double alpha, std::uint64_t seed)
{
    if (!(alpha >= 0)) throw invalid_argument{"add_input_noise: alpha must be non-negative"};
    trajectory out(data.begin(), data.end());
    if (alpha == 0.0 || data.empty()) return out;

    const auto sd = [&](auto member) {
        double sum = 0, sum2 = 0;
        std::size_t n = 0;
        for (const auto& s : data)
            for (double x : (s.*member).values()) {
                sum += x;
                sum2 += x * x;
                ++n;
            }
        const double mean = sum / n;
        return std::sqrt(std::max(0.0, sum2 / n - mean * mean));
    };
    const double sd_u = alpha * sd(&field_pair::u);
    const double sd_v = alpha * sd(&field_pair::v);

    auto gen = make_engine(derive_seed(seed, {stream::input_noise}));
    std::normal_distribution<double> normal;
    for (auto& s : out) {
        if (sd_u > 0)
            for (double& x : s.u.values()) x += sd_u * normal(gen);
        if (sd_v > 0)
            for (double& x : s.v.values()) x += sd_v * normal(gen);
    }
    return out;
}

/// Global sequences from which every point's training pairs are gathered.
/// For step t: inputs[t] feeds the reservoir (noise added), kbm[t] = K(truth[t])
/// computed from the noise-free field, targets[t] = truth[t + 1].
struct local_dataset {
    std::size_t nx = 0;
    std::size_t ny = 0;
    trajectory inputs;
    trajectory kbm;
    trajectory targets;

    std::size_t steps() const noexcept { return inputs.size(); }
};

inline local_dataset build_local_dataset(std::span<const field_pair> truth, const barkley_params& kbm_params,
                                         hybrid_mode mode, patch_spec spec, double alpha, std::uint64_t seed)
{
    static_cast<void>(mode);  // KBM fields are produced for every mode
    spec.validate();
    kbm_params.validate();
    if (truth.size() < 2) throw insufficient_data_error{2, truth.size()};

    const std::size_t n = truth.size() - 1;
    local_dataset ds;
    ds.nx = truth.front().nx();
    ds.ny = truth.front().ny();
    ds.inputs = add_input_noise(truth.first(n), alpha, seed);
    ds.targets.assign(truth.begin() + 1, truth.end());
    ds.kbm.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        detail::check_state(truth[t], kbm_params);
        if (!barkley_step_into(truth[t], ds.kbm[t], kbm_params))
            throw blow_up_error{"build_local_dataset: knowledge-based model produced a non-finite state", t};
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Reservoir grid

enum class matrix_sharing { shared, per_point };

struct local_options {
    patch_spec patch;
    hybrid_mode mode = hybrid_mode::none;
    hybrid_options hybrid;
    matrix_sharing sharing = matrix_sharing::shared;
    singular_policy singular = singular_policy::min_norm;
    std::size_t threads = 1;
};

/// Fixed reservoir matrices for a grid: one set shared by all points or one per point.
class matrix_set {
public:
    matrix_set() = default;

    matrix_set(matrix_sharing sharing, std::vector<std::shared_ptr<const reservoir_matrices>> sets)
      : sharing_{sharing}, sets_{std::move(sets)}
    {
    }

    matrix_sharing sharing() const noexcept { return sharing_; }
    std::size_t distinct() const noexcept { return sets_.size(); }
    bool empty() const noexcept { return sets_.empty(); }

    const reservoir_matrices& at(std::size_t point) const
    {
        return sharing_ == matrix_sharing::shared ? *sets_.front() : *sets_.at(point);
    }

private:
    matrix_sharing sharing_ = matrix_sharing::shared;
    std::vector<std::shared_ptr<const reservoir_matrices>> sets_;
};

/// Seed of the matrices used at point (i, j); depends only on (base, i, j).
inline std::uint64_t point_seed(std::uint64_t base, std::size_t i, std::size_t j)
{
    return derive_seed(base, {stream::per_point, i, j});
}

namespace detail {

/// Reseed on the (rare) zero-spectral-radius draw.
inline std::shared_ptr<const reservoir_matrices> matrices_with_retry(reservoir_spec spec, std::size_t x_dim)
{
    const std::uint64_t base = spec.seed;
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        spec.seed = attempt == 0 ? base : derive_seed(base, {attempt});
        try {
            return std::make_shared<const reservoir_matrices>(build_matrices(spec, x_dim));
        } catch (const degenerate_draw_error&) {
        }
    }
    throw degenerate_draw_error{"could not draw a non-degenerate adjacency matrix in 64 attempts"};
}

}  // namespace detail

inline matrix_set build_matrix_set(const reservoir_spec& spec, matrix_sharing sharing, std::size_t nx, std::size_t ny,
                                   std::size_t x_dim, std::size_t threads = 1)
{
    spec.validate();
    if (sharing == matrix_sharing::shared) {
        reservoir_spec s = spec;
        s.seed = derive_seed(spec.seed, {stream::matrix_set});
        return {sharing, {detail::matrices_with_retry(s, x_dim)}};
    }
    std::vector<std::shared_ptr<const reservoir_matrices>> sets(nx * ny);
    parallel_for(nx * ny, threads, [&](std::size_t p) {
        reservoir_spec s = spec;
        s.seed = point_seed(spec.seed, p % nx, p / nx);
        sets[p] = detail::matrices_with_retry(s, x_dim);
    });
    return {sharing, std::move(sets)};
}

struct reservoir_grid {
    std::size_t nx = 0;
    std::size_t ny = 0;
    hybrid_mode mode = hybrid_mode::none;
    patch_spec patch;
    hybrid_options hybrid;
    reservoir_spec spec;
    dim_plan plan;
    matrix_set matrices;
    std::vector<readout> readouts;             ///< one per point, storage order
    std::vector<Eigen::VectorXd> feature_rms;  ///< RMS of each readout feature over the training window

    std::size_t points() const noexcept { return nx * ny; }
};

namespace detail {

/// Writes the readout features of one point: reservoir part then KBM part.
inline void write_features(const reservoir_grid& g, const Eigen::VectorXd& r, std::span<const double> k_patch,
                           double* out)
{
    const auto n = r.size();
    for (Eigen::Index k = 0; k < n; ++k) out[k] = r[k];
    std::size_t pos = static_cast<std::size_t>(n);
    if (g.hybrid.state == readout_state::augmented) {
        for (Eigen::Index k = 0; k < n; ++k) out[pos + k] = r[k] * r[k];
        pos += static_cast<std::size_t>(n);
    }
    if (kbm_in_readout(g.mode)) {
        if (g.hybrid.kbm == kbm_readout::patch) {
            for (std::size_t k = 0; k < k_patch.size(); ++k) out[pos + k] = k_patch[k];
        } else {
            out[pos] = k_patch[g.patch.center()];
            out[pos + 1] = k_patch[g.patch.cells() + g.patch.center()];
        }
    }
}

}  // namespace detail

/// Trains every point's readout. The first `sync_steps` dataset steps only drive the
/// reservoir; features are collected from the remaining steps. Pass `matrices` to
/// reuse reservoirs from an earlier section; otherwise they are built from `spec`.
inline reservoir_grid train_all(const local_dataset& data, const reservoir_spec& spec, const local_options& opt,
                                std::size_t sync_steps, const matrix_set* matrices = nullptr)
{
    spec.validate();
    opt.patch.validate();
    if (data.steps() <= sync_steps) throw insufficient_data_error{sync_steps + 1, data.steps()};

    reservoir_grid g;
    g.nx = data.nx;
    g.ny = data.ny;
    g.mode = opt.mode;
    g.patch = opt.patch;
    g.hybrid = opt.hybrid;
    g.spec = spec;
    g.plan = plan_dims(opt.mode, spec.r_dim, opt.patch.sigma, opt.hybrid);
    g.matrices = matrices ? *matrices : build_matrix_set(spec, opt.sharing, g.nx, g.ny, g.plan.x_dim, opt.threads);
    if (g.matrices.at(0).x_dim() != g.plan.x_dim || g.matrices.at(0).r_dim() != spec.r_dim)
        throw dimension_error{"train_all: reused matrices do not match the dimension plan"};

    const std::size_t points = g.points();
    const std::size_t samples = data.steps() - sync_steps;
    const patch_index index{g.nx, g.ny, g.patch};
    g.readouts.resize(points);
    g.feature_rms.resize(points);

    parallel_for(points, opt.threads, [&](std::size_t p) {
        const reservoir_matrices& m = g.matrices.at(p);
        const auto w = g.patch.width();
        std::vector<double> u_patch(w), k_patch(w), x(g.plan.x_dim);
        Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.r_dim)), next;
        Eigen::MatrixXd h(static_cast<Eigen::Index>(g.plan.h_dim), static_cast<Eigen::Index>(samples));
        Eigen::MatrixXd y(2, static_cast<Eigen::Index>(samples));

        for (std::size_t t = 0; t < data.steps(); ++t) {
            index.gather(data.inputs[t], p, u_patch);
            if (uses_kbm(g.mode)) index.gather(data.kbm[t], p, k_patch);
            assemble_input_into(g.mode, u_patch, k_patch, x);
            advance_into(m, r, x, next);
            r.swap(next);
            if (t < sync_steps) continue;
            const auto col = static_cast<Eigen::Index>(t - sync_steps);
            detail::write_features(g, r, k_patch, h.col(col).data());
            y(0, col) = data.targets[t].u[p];
            y(1, col) = data.targets[t].v[p];
        }

        try {
            g.readouts[p] = train_readout(h, y, spec.beta, opt.singular);
        } catch (const singular_system_error& e) {
            throw singular_system_error{std::string{e.what()} + " at point (" + std::to_string(p % g.nx) + ", "
                                        + std::to_string(p / g.nx) + ")"};
        }
        g.feature_rms[p] = (h.rowwise().squaredNorm() / static_cast<double>(samples)).cwiseSqrt();
    });
    return g;
}

// ---------------------------------------------------------------------------
// Closed-loop prediction

struct prediction_options {
    std::size_t threads = 1;
    double sync_alpha = 0.0;  ///< input noise during prediction synchronization
    std::uint64_t sync_seed = 0;
};

struct prediction_result {
    trajectory predicted;             ///< one state per completed prediction step
    std::size_t kbm_evaluations = 0;  ///< global KBM steps, synchronization included
    bool failed = false;
    std::size_t failed_step = 0;      ///< prediction step at which the KBM blew up
    std::string message;
};

/// Synchronizes every reservoir on `sync_data` and then forecasts n_steps states
/// autonomously. Each step: every point emits its (U, V); the global field is
/// assembled; one global KBM step runs on it (hybrid modes only); every point
/// advances on its patches of the predicted field and of the KBM output.
/// The k-th predicted state corresponds to the state k + 1 steps after the last
/// synchronization state.
inline prediction_result predict_closed_loop(const reservoir_grid& g, std::span<const field_pair> sync_data,
                                             const barkley_params& kbm_params, std::size_t n_steps,
                                             const prediction_options& opt = {})
{
    if (sync_data.empty()) throw insufficient_data_error{1, 0};
    if (g.readouts.size() != g.points()) throw invalid_argument{"predict_closed_loop: grid is not trained"};
    for (const auto& s : sync_data)
        if (s.nx() != g.nx || s.ny() != g.ny) throw dimension_error{"predict_closed_loop: sync data shape mismatch"};
    if (uses_kbm(g.mode)) {
        kbm_params.validate();
        if (kbm_params.nx != g.nx || kbm_params.ny != g.ny)
            throw dimension_error{"predict_closed_loop: KBM grid does not match the reservoir grid"};
    }

    prediction_result result;
    const std::size_t points = g.points();
    const std::size_t w = g.patch.width();
    const patch_index index{g.nx, g.ny, g.patch};
    const auto r_dim = static_cast<Eigen::Index>(g.spec.r_dim);

    const auto kbm_step = [&](const field_pair& in, field_pair& out) {
        ++result.kbm_evaluations;
        return barkley_step_into(in, out, kbm_params);
    };

    // Synchronization on observed data.
    const trajectory noisy = opt.sync_alpha > 0 ? add_input_noise(sync_data, opt.sync_alpha, opt.sync_seed) : trajectory{};
    const std::span<const field_pair> sync_inputs = opt.sync_alpha > 0 ? std::span<const field_pair>{noisy} : sync_data;
    trajectory sync_kbm(kbm_in_input(g.mode) ? sync_data.size() : 0);
    for (std::size_t t = 0; t < sync_kbm.size(); ++t)
        if (!kbm_step(sync_data[t], sync_kbm[t]))
            throw blow_up_error{"predict_closed_loop: KBM non-finite during synchronization", t};

    field_pair last_k;
    if (kbm_in_readout(g.mode)) {
        if (!sync_kbm.empty()) {
            last_k = sync_kbm.back();
        } else if (!kbm_step(sync_data.back(), last_k)) {
            throw blow_up_error{"predict_closed_loop: KBM non-finite during synchronization", sync_data.size() - 1};
        }
    }

    std::vector<Eigen::VectorXd> states(points, Eigen::VectorXd::Zero(r_dim));
    parallel_for(points, opt.threads, [&](std::size_t p) {
        const reservoir_matrices& m = g.matrices.at(p);
        std::vector<double> u_patch(w), k_patch(w), x(g.plan.x_dim);
        Eigen::VectorXd next;
        for (std::size_t t = 0; t < sync_inputs.size(); ++t) {
            index.gather(sync_inputs[t], p, u_patch);
            if (kbm_in_input(g.mode)) index.gather(sync_kbm[t], p, k_patch);
            assemble_input_into(g.mode, u_patch, k_patch, x);
            advance_into(m, states[p], x, next);
            states[p].swap(next);
        }
    });

    // Per-point scratch, reused across steps.
    std::vector<double> u_scratch(points * w), k_scratch(points * w), x_scratch(points * g.plan.x_dim),
        h_scratch(points * g.plan.h_dim);
    std::vector<Eigen::VectorXd> nexts(points, Eigen::VectorXd::Zero(r_dim));

    result.predicted.reserve(n_steps);
    field_pair k_next;
    for (std::size_t step = 0; step < n_steps; ++step) {
        // (1)-(2) emit and assemble
        field_pair pred{g.nx, g.ny};
        parallel_for(points, opt.threads, [&](std::size_t p) {
            const std::span<double> k_patch{k_scratch.data() + p * w, w};
            double* h = h_scratch.data() + p * g.plan.h_dim;
            if (kbm_in_readout(g.mode)) index.gather(last_k, p, k_patch);
            detail::write_features(g, states[p], k_patch, h);
            const Eigen::Map<const Eigen::VectorXd> hv{h, static_cast<Eigen::Index>(g.plan.h_dim)};
            const Eigen::Vector2d yv = g.readouts[p].w_out * hv;
            pred.u[p] = yv[0];
            pred.v[p] = yv[1];
        });
        result.predicted.push_back(pred);
        if (step + 1 == n_steps) break;

        // (3) global KBM step on the assembled field
        if (uses_kbm(g.mode) && !kbm_step(result.predicted.back(), k_next)) {
            result.failed = true;
            result.failed_step = step + 1;
            result.message = "knowledge-based model produced a non-finite state at prediction step "
                             + std::to_string(step + 1);
            return result;
        }

        // (4) advance every reservoir on its predicted and KBM patches
        const field_pair& current = result.predicted.back();
        parallel_for(points, opt.threads, [&](std::size_t p) {
            const std::span<double> u_patch{u_scratch.data() + p * w, w};
            const std::span<double> k_patch{k_scratch.data() + p * w, w};
            const std::span<double> x{x_scratch.data() + p * g.plan.x_dim, g.plan.x_dim};
            index.gather(current, p, u_patch);
            if (kbm_in_input(g.mode)) index.gather(k_next, p, k_patch);
            assemble_input_into(g.mode, u_patch, k_patch, x);
            advance_into(g.matrices.at(p), states[p], x, nexts[p]);
            states[p].swap(nexts[p]);
        });
        if (kbm_in_readout(g.mode)) std::swap(last_k, k_next);
    }
    return result;
}

}  // namespace bkrc
