#pragma once

// Prediction quality metrics and readout contribution analysis. //

#include "error.hpp"
#include "field.hpp"
#include "hybrid.hpp"
#include "local_states.hpp"
#include "reservoir.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bkrc {

// ---------------------------------------------------------------------------
// Quantiles

/// Nearest-rank quantile: the element of rank ceil(q n) (1-based) of the sorted values.
inline double nearest_rank(std::vector<double> values, double q)
{
    if (values.empty()) throw invalid_argument{"nearest_rank: empty sample"};
    if (!(q > 0 && q <= 1)) throw invalid_argument{"nearest_rank: q must lie in (0, 1]"};
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size()) - 1e-12));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

inline double median(std::vector<double> values) { return nearest_rank(std::move(values), 0.5); }

// ---------------------------------------------------------------------------
// Normalized error and valid time

struct error_series {
    std::vector<double> values;
    double dt = 0.01;

    std::size_t size() const noexcept { return values.size(); }
};

/// e(t) = |y(t) - y_r(t)| / sqrt(<|y|^2>), the norm running over all points and
/// both variables, the average over the compared truth window.
inline error_series normalized_error(std::span<const field_pair> truth, std::span<const field_pair> pred,
                                     double dt = 0.01)
{
    if (truth.size() != pred.size())
        throw dimension_error{"normalized_error: truth has " + std::to_string(truth.size()) + " steps, prediction "
                              + std::to_string(pred.size())};
    error_series out{std::vector<double>(truth.size()), dt};
    if (truth.empty()) return out;

    double mean_sq = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!truth[t].same_shape(pred[t])) throw dimension_error{"normalized_error: shape mismatch"};
        double diff = 0.0, norm = 0.0;
        const auto tu = truth[t].u.values(), tv = truth[t].v.values();
        const auto pu = pred[t].u.values(), pv = pred[t].v.values();
        for (std::size_t k = 0; k < tu.size(); ++k) {
            diff += (tu[k] - pu[k]) * (tu[k] - pu[k]) + (tv[k] - pv[k]) * (tv[k] - pv[k]);
            norm += tu[k] * tu[k] + tv[k] * tv[k];
        }
        out.values[t] = std::sqrt(diff);
        mean_sq += norm;
    }
    mean_sq /= static_cast<double>(truth.size());
    if (mean_sq == 0.0) throw invalid_argument{"normalized_error: truth is identically zero"};
    const double scale = 1.0 / std::sqrt(mean_sq);
    for (double& e : out.values) e *= scale;
    return out;
}

struct valid_time_result {
    double time = 0.0;
    std::size_t steps = 0;  ///< index of the first exceedance, or the series length
    bool censored = false;  ///< no exceedance within the series

    friend bool operator==(const valid_time_result&, const valid_time_result&) = default;
};

/// dt times the index of the first entry above e_max (non-finite entries count as
/// above). Without an exceedance the full length is returned, flagged as censored.
inline valid_time_result valid_time(const error_series& errors, double e_max = 0.2)
{
    if (!(e_max > 0)) throw invalid_argument{"valid_time: e_max must be positive"};
    for (std::size_t k = 0; k < errors.values.size(); ++k)
        if (!(errors.values[k] <= e_max)) return {errors.dt * static_cast<double>(k), k, false};
    return {errors.dt * static_cast<double>(errors.values.size()), errors.values.size(), true};
}

/// Per-point |truth - pred| for U and V.
inline field_pair error_field(const field_pair& truth, const field_pair& pred)
{
    if (!truth.same_shape(pred)) throw dimension_error{"error_field: shape mismatch"};
    field_pair out{truth.nx(), truth.ny()};
    for (std::size_t k = 0; k < truth.points(); ++k) {
        out.u[k] = std::abs(truth.u[k] - pred.u[k]);
        out.v[k] = std::abs(truth.v[k] - pred.v[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Readout contributions

struct contribution_share {
    double reservoir = 0.0;
    double kbm = 0.0;
};

/// Shares per output variable; empty when the row carries no weight at all.
struct contribution_report {
    std::optional<contribution_share> u;
    std::optional<contribution_share> v;
};

enum class contribution_metric {
    weight_mass,     ///< sum of |w| per block
    activity_weighted,  ///< sum of |w| * RMS(feature) per block
};

namespace detail {

inline std::optional<contribution_share> row_share(const Eigen::RowVectorXd& mass, std::size_t reservoir_block)
{
    const double total = mass.sum();
    if (!(total > 0)) return std::nullopt;
    const double res = mass.head(static_cast<Eigen::Index>(reservoir_block)).sum();
    const double share = res / total;
    return contribution_share{share, 1.0 - share};
}

inline void check_contribution_input(const readout& r, const dim_plan& plan)
{
    if (plan.kbm_block == 0) throw invalid_argument{"wout_contribution: the readout has no KBM block"};
    if (r.h_dim() != plan.h_dim || r.y_dim() != 2)
        throw dimension_error{"wout_contribution: readout is " + std::to_string(r.y_dim()) + "x"
                              + std::to_string(r.h_dim()) + ", plan expects 2x" + std::to_string(plan.h_dim)};
}

}  // namespace detail

/// Reservoir share = sum |w| over the reservoir columns / sum |w| over all columns.
inline contribution_report wout_contribution(const readout& r, const dim_plan& plan)
{
    detail::check_contribution_input(r, plan);
    const Eigen::MatrixXd mass = r.w_out.cwiseAbs();
    return {detail::row_share(mass.row(0), plan.reservoir_block), detail::row_share(mass.row(1), plan.reservoir_block)};
}

/// As wout_contribution with every |w| scaled by the RMS of its feature.
inline contribution_report wout_contribution(const readout& r, const dim_plan& plan, const Eigen::VectorXd& feature_rms)
{
    detail::check_contribution_input(r, plan);
    if (static_cast<std::size_t>(feature_rms.size()) != plan.h_dim)
        throw dimension_error{"wout_contribution: feature RMS has the wrong length"};
    const Eigen::MatrixXd mass = r.w_out.cwiseAbs().array().rowwise() * feature_rms.transpose().array();
    return {detail::row_share(mass.row(0), plan.reservoir_block), detail::row_share(mass.row(1), plan.reservoir_block)};
}

/// Median over points of the per-point shares; undefined rows are skipped.
inline contribution_report grid_contribution(const reservoir_grid& g,
                                             contribution_metric metric = contribution_metric::weight_mass)
{
    std::vector<double> u_res, v_res;
    for (std::size_t p = 0; p < g.points(); ++p) {
        const contribution_report c = metric == contribution_metric::weight_mass
                                          ? wout_contribution(g.readouts[p], g.plan)
                                          : wout_contribution(g.readouts[p], g.plan, g.feature_rms[p]);
        if (c.u) u_res.push_back(c.u->reservoir);
        if (c.v) v_res.push_back(c.v->reservoir);
    }
    const auto summarize = [](std::vector<double>& xs) -> std::optional<contribution_share> {
        if (xs.empty()) return std::nullopt;
        const double m = median(xs);
        return contribution_share{m, 1.0 - m};
    };
    return {summarize(u_res), summarize(v_res)};
}

}  // namespace bkrc
