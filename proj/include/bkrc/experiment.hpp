#pragma once

// Experiment orchestration: section layout of a long trajectory into training and
// prediction blocks, ensemble runs, aggregation into medians and quartiles, the
// one-at-a-time hyperparameter sweep and the readout contribution study.

#include "barkley.hpp"
#include "error.hpp"
#include "field.hpp"
#include "hybrid.hpp"
#include "local_states.hpp"
#include "metrics.hpp"
#include "random.hpp"
#include "reservoir.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace bkrc {

// ---------------------------------------------------------------------------
// Sectioning

struct ensemble_config {
    std::size_t n_t = 1;     ///< training sections
    std::size_t n_p = 1;     ///< predictions per training section
    std::size_t n_td = 0;    ///< discarded steps before each training
    std::size_t n_ts = 200;  ///< training synchronization
    std::size_t n_tr = 5000; ///< training
    std::size_t n_pd = 0;    ///< discarded steps before each prediction
    std::size_t n_ps = 200;  ///< prediction synchronization
    std::size_t n_pr = 2000; ///< predicted steps

    void validate() const
    {
        if (n_t < 1) throw invalid_argument{"ensemble: n_t must be at least 1"};
        if (n_tr < 1) throw invalid_argument{"ensemble: n_tr must be at least 1"};
        if (n_pr < 1) throw invalid_argument{"ensemble: n_pr must be at least 1"};
    }

    /// n_t (n_td + n_ts + n_tr + n_p (n_pd + n_ps + n_pr)).
    std::size_t required_length() const noexcept
    {
        return n_t * (n_td + n_ts + n_tr + n_p * (n_pd + n_ps + n_pr));
    }
};

/// Half-open index range [begin, end).
struct index_range {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    friend bool operator==(const index_range&, const index_range&) = default;
};

struct prediction_block {
    index_range discard, sync, predict;
};

struct training_block {
    index_range discard, sync, train;
    std::vector<prediction_block> predictions;
};

struct section_layout {
    std::vector<training_block> trainings;
    std::size_t length = 0;  ///< one past the last used index
};

/// Contiguous layout: each training block [discard | sync | train] is followed by
/// its n_p prediction blocks [discard | sync | predict].
inline section_layout partition_sections(std::size_t total_steps, const ensemble_config& cfg)
{
    cfg.validate();
    const std::size_t need = cfg.required_length();
    if (total_steps < need) throw insufficient_data_error{need, total_steps};

    section_layout out;
    std::size_t pos = 0;
    const auto take = [&pos](std::size_t n) {
        const index_range r{pos, pos + n};
        pos += n;
        return r;
    };
    for (std::size_t t = 0; t < cfg.n_t; ++t) {
        training_block tb;
        tb.discard = take(cfg.n_td);
        tb.sync = take(cfg.n_ts);
        tb.train = take(cfg.n_tr);
        for (std::size_t p = 0; p < cfg.n_p; ++p) {
            prediction_block pb;
            pb.discard = take(cfg.n_pd);
            pb.sync = take(cfg.n_ps);
            pb.predict = take(cfg.n_pr);
            tb.predictions.push_back(pb);
        }
        out.trainings.push_back(std::move(tb));
    }
    out.length = pos;
    return out;
}

// ---------------------------------------------------------------------------
// Runs

/// Everything needed to train and evaluate one configuration.
struct run_settings {
    barkley_params truth;
    double model_error = 0.1;
    reservoir_spec reservoir;
    local_options local;
    double alpha = 1e-6;                  ///< input noise ratio for training and its synchronization
    bool prediction_sync_noise = false;   ///< add the same noise during prediction synchronization
    double e_max = 0.2;
    std::uint64_t seed = 0;
    ensemble_config ensemble;
    contribution_metric metric = contribution_metric::weight_mass;
    std::string config_hash;
};

struct run_record {
    hybrid_mode mode = hybrid_mode::none;
    std::size_t r_dim = 0;
    double model_error = 0.0;
    std::size_t train_section = 0;
    std::size_t prediction_section = 0;
    std::size_t predict_begin = 0;  ///< trajectory index of the first predicted state
    std::uint64_t seed = 0;
    valid_time_result valid;
    double train_seconds = 0.0;
    double predict_seconds = 0.0;
    std::size_t kbm_evaluations = 0;  ///< global KBM steps during prediction (incl. synchronization)
    bool ok = true;
    std::size_t failed_step = 0;
    std::string message;
    std::optional<contribution_report> contribution;
    std::string config_hash;
};

namespace detail {

using clock = std::chrono::steady_clock;

inline double seconds_since(clock::time_point t0)
{
    return std::chrono::duration<double>(clock::now() - t0).count();
}

/// Training pairs of a block: the reservoir is driven by every state of
/// [sync.begin, train.end) except the last; the first n_ts - 1 steps only
/// synchronize, so exactly n_tr targets fall inside the training range.
inline std::size_t training_sync_steps(const ensemble_config& cfg) { return cfg.n_ts > 0 ? cfg.n_ts - 1 : 0; }

inline reservoir_grid train_block(std::span<const field_pair> data, const training_block& tb, const run_settings& s,
                                  const barkley_params& kbm, const matrix_set& matrices, std::uint64_t noise_seed)
{
    const auto slice = data.subspan(tb.sync.begin, tb.train.end - tb.sync.begin);
    if (slice.size() < 2) throw insufficient_data_error{2, slice.size()};
    const local_dataset ds = build_local_dataset(slice, kbm, s.local.mode, s.local.patch, s.alpha, noise_seed);
    return train_all(ds, s.reservoir, s.local, training_sync_steps(s.ensemble), &matrices);
}

}  // namespace detail

/// Matrices for the configuration in `s`, built once and reused by every section.
inline matrix_set build_run_matrices(const run_settings& s, std::size_t nx, std::size_t ny)
{
    const dim_plan plan = plan_dims(s.local.mode, s.reservoir.r_dim, s.local.patch.sigma, s.local.hybrid);
    return build_matrix_set(s.reservoir, s.local.sharing, nx, ny, plan.x_dim, s.local.threads);
}

/// One record per (training section, prediction section). `data` starts after the
/// transient. Per-record KBM failures are recorded, not thrown.
inline std::vector<run_record> run_ensemble(std::span<const field_pair> data, const run_settings& s)
{
    s.ensemble.validate();
    if (s.ensemble.n_p > 0 && s.ensemble.n_ps < 1)
        throw invalid_argument{"ensemble: n_ps must be at least 1 for predictions"};
    const section_layout layout = partition_sections(data.size(), s.ensemble);
    if (data.empty()) throw insufficient_data_error{1, 0};

    const barkley_params kbm = make_epsilon_model(s.truth, {s.model_error});
    const std::size_t nx = data.front().nx(), ny = data.front().ny();

    auto t0 = detail::clock::now();
    const matrix_set matrices = build_run_matrices(s, nx, ny);
    const double matrix_seconds = detail::seconds_since(t0);

    std::vector<run_record> records;
    for (std::size_t it = 0; it < layout.trainings.size(); ++it) {
        const training_block& tb = layout.trainings[it];
        const std::uint64_t noise_seed = derive_seed(s.seed, {stream::section, it});

        run_record base;
        base.mode = s.local.mode;
        base.r_dim = s.reservoir.r_dim;
        base.model_error = s.model_error;
        base.train_section = it;
        base.seed = s.seed;
        base.config_hash = s.config_hash;

        std::optional<reservoir_grid> grid;
        t0 = detail::clock::now();
        try {
            grid = detail::train_block(data, tb, s, kbm, matrices, noise_seed);
        } catch (const error& e) {
            base.ok = false;
            base.message = std::string{"training failed: "} + e.what();
        }
        base.train_seconds = detail::seconds_since(t0) + (it == 0 ? matrix_seconds : 0.0);
        if (grid && kbm_in_readout(s.local.mode)) base.contribution = grid_contribution(*grid, s.metric);

        for (std::size_t ip = 0; ip < tb.predictions.size(); ++ip) {
            const prediction_block& pb = tb.predictions[ip];
            run_record rec = base;
            rec.prediction_section = ip;
            rec.predict_begin = pb.predict.begin;
            if (!grid) {
                records.push_back(std::move(rec));
                continue;
            }

            prediction_options po;
            po.threads = s.local.threads;
            po.sync_alpha = s.prediction_sync_noise ? s.alpha : 0.0;
            po.sync_seed = derive_seed(s.seed, {stream::section, it, ip + 1});

            t0 = detail::clock::now();
            prediction_result pr;
            try {
                pr = predict_closed_loop(*grid, data.subspan(pb.sync.begin, pb.sync.size()), kbm, pb.predict.size(), po);
            } catch (const error& e) {
                pr.failed = true;
                pr.message = e.what();
            }
            rec.predict_seconds = detail::seconds_since(t0);
            rec.kbm_evaluations = pr.kbm_evaluations;

            const auto truth = data.subspan(pb.predict.begin, pr.predicted.size());
            const error_series es = pr.predicted.empty() ? error_series{{}, s.truth.dt}
                                                         : normalized_error(truth, pr.predicted, s.truth.dt);
            rec.valid = valid_time(es, s.e_max);
            if (pr.failed) {
                rec.ok = false;
                rec.failed_step = pr.failed_step;
                rec.message = pr.message;
                rec.valid.censored = false;
            }
            records.push_back(std::move(rec));
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Aggregation

struct group_keys {
    bool mode = true;
    bool r_dim = true;
    bool model_error = true;
};

struct quartiles {
    double lower = 0.0;
    double median = 0.0;
    double upper = 0.0;
};

inline quartiles nearest_rank_quartiles(const std::vector<double>& xs)
{
    return {nearest_rank(xs, 0.25), nearest_rank(xs, 0.5), nearest_rank(xs, 0.75)};
}

struct summary_row {
    std::optional<hybrid_mode> mode;
    std::optional<std::size_t> r_dim;
    std::optional<double> model_error;
    std::size_t count = 0;
    quartiles valid_time;
    bool median_censored = false;
    std::size_t censored = 0;
    std::size_t failed = 0;
    double train_seconds = 0.0;    ///< medians
    double predict_seconds = 0.0;
    double total_seconds = 0.0;
    std::optional<double> reservoir_share_u;  ///< median over records with a report
    std::optional<double> reservoir_share_v;
};

/// Median and nearest-rank quartiles per group. Censored valid times enter at the
/// horizon value and are counted.
inline std::vector<summary_row> aggregate(std::span<const run_record> records, group_keys keys = {})
{
    if (records.empty()) throw invalid_argument{"aggregate: empty group"};

    using key_t = std::tuple<int, std::size_t, double>;
    std::map<key_t, std::vector<const run_record*>> groups;
    for (const auto& r : records)
        groups[{keys.mode ? static_cast<int>(r.mode) : -1, keys.r_dim ? r.r_dim : 0,
                keys.model_error ? r.model_error : 0.0}]
            .push_back(&r);

    std::vector<summary_row> rows;
    for (auto& [key, members] : groups) {
        summary_row row;
        if (keys.mode) row.mode = members.front()->mode;
        if (keys.r_dim) row.r_dim = members.front()->r_dim;
        if (keys.model_error) row.model_error = members.front()->model_error;
        row.count = members.size();

        std::vector<std::pair<double, bool>> vt;
        std::vector<double> times, train, predict, total, su, sv;
        for (const run_record* r : members) {
            vt.emplace_back(r->valid.time, r->valid.censored);
            times.push_back(r->valid.time);
            train.push_back(r->train_seconds);
            predict.push_back(r->predict_seconds);
            total.push_back(r->train_seconds + r->predict_seconds);
            row.censored += r->valid.censored ? 1 : 0;
            row.failed += r->ok ? 0 : 1;
            if (r->contribution && r->contribution->u) su.push_back(r->contribution->u->reservoir);
            if (r->contribution && r->contribution->v) sv.push_back(r->contribution->v->reservoir);
        }
        row.valid_time = nearest_rank_quartiles(times);
        std::sort(vt.begin(), vt.end());
        const auto rank = static_cast<std::size_t>(std::ceil(0.5 * static_cast<double>(vt.size()) - 1e-12));
        row.median_censored = vt[std::clamp<std::size_t>(rank, 1, vt.size()) - 1].second;
        row.train_seconds = median(train);
        row.predict_seconds = median(predict);
        row.total_seconds = median(total);
        if (!su.empty()) row.reservoir_share_u = median(su);
        if (!sv.empty()) row.reservoir_share_v = median(sv);
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep

enum class sweep_parameter { r_dim, rho, sigma, alpha, beta };

inline std::string_view to_string(sweep_parameter p)
{
    switch (p) {
    case sweep_parameter::r_dim: return "r_dim";
    case sweep_parameter::rho: return "rho";
    case sweep_parameter::sigma: return "sigma";
    case sweep_parameter::alpha: return "alpha";
    case sweep_parameter::beta: return "beta";
    }
    return "r_dim";
}

inline sweep_parameter parse_sweep_parameter(std::string_view name)
{
    for (auto p : {sweep_parameter::r_dim, sweep_parameter::rho, sweep_parameter::sigma, sweep_parameter::alpha,
                   sweep_parameter::beta})
        if (to_string(p) == name) return p;
    throw invalid_argument{"unknown sweep parameter '" + std::string{name} + "'"};
}

/// Values held fixed while another parameter is examined.
struct sweep_fixed {
    std::size_t r_dim = 500;
    double rho = 1.0;
    std::size_t sigma = 5;
    double alpha = 1e-4;
    double beta = 1e-6;
};

/// Examined grid of the hyperparameter study for each parameter.
inline std::vector<double> default_sweep_values(sweep_parameter p)
{
    switch (p) {
    case sweep_parameter::r_dim: return {200, 400, 500, 600};
    case sweep_parameter::rho: return {0.1, 0.3, 0.5, 0.6, 0.7, 0.8, 1.0, 1.2, 1.5};
    case sweep_parameter::sigma: return {3, 5, 7};
    case sweep_parameter::alpha: return {1e-4, 1e-5, 1e-6};
    case sweep_parameter::beta: return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
    }
    return {};
}

struct sweep_config {
    sweep_parameter parameter = sweep_parameter::rho;
    std::vector<double> values = default_sweep_values(sweep_parameter::rho);
    sweep_fixed fixed;
};

struct sweep_row {
    sweep_parameter parameter = sweep_parameter::rho;
    double value = 0.0;
    run_record record;
};

inline run_settings apply_sweep_value(run_settings s, const sweep_config& sweep, double value)
{
    s.reservoir.r_dim = sweep.fixed.r_dim;
    s.reservoir.rho = sweep.fixed.rho;
    s.local.patch.sigma = sweep.fixed.sigma;
    s.alpha = sweep.fixed.alpha;
    s.reservoir.beta = sweep.fixed.beta;
    switch (sweep.parameter) {
    case sweep_parameter::r_dim: s.reservoir.r_dim = static_cast<std::size_t>(value); break;
    case sweep_parameter::rho: s.reservoir.rho = value; break;
    case sweep_parameter::sigma: s.local.patch.sigma = static_cast<std::size_t>(value); break;
    case sweep_parameter::alpha: s.alpha = value; break;
    case sweep_parameter::beta: s.reservoir.beta = value; break;
    }
    s.ensemble.n_t = 1;
    s.ensemble.n_p = 1;
    return s;
}

/// Single training and single prediction per examined value; every other
/// hyperparameter is held at its fixed value.
inline std::vector<sweep_row> run_sweep(std::span<const field_pair> data, const sweep_config& sweep,
                                        const run_settings& base)
{
    if (sweep.values.empty()) throw invalid_argument{"sweep: no values to examine"};
    std::vector<sweep_row> rows;
    for (double v : sweep.values) {
        sweep_row row{sweep.parameter, v, {}};
        try {
            const auto records = run_ensemble(data, apply_sweep_value(base, sweep, v));
            row.record = records.front();
        } catch (const error& e) {
            row.record.ok = false;
            row.record.message = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Readout contribution study

struct wout_study {
    std::vector<double> model_errors{0.0, 0.1, 5.0, 100.0};
    std::size_t n_a = 4;  ///< independent matrix initializations
    std::size_t n_t = 5;  ///< consecutive training sections per initialization
    bool exact_at_zero_error = true;  ///< alpha = beta = 0 when e = 0
};

struct wout_record {
    double model_error = 0.0;
    std::size_t matrix_index = 0;
    std::size_t train_section = 0;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string message;
    contribution_report contribution;
};

/// For every model error: n_a matrix draws, each trained on n_t consecutive
/// training sections; one record per training with the median share over points.
inline std::vector<wout_record> run_wout(std::span<const field_pair> data, const run_settings& base,
                                         const wout_study& study)
{
    if (!kbm_in_readout(base.local.mode)) throw invalid_argument{"wout: mode must feed the KBM into the readout"};
    if (study.n_a < 1 || study.n_t < 1) throw invalid_argument{"wout: n_a and n_t must be at least 1"};

    ensemble_config ec = base.ensemble;
    ec.n_t = study.n_t;
    ec.n_p = 0;
    const section_layout layout = partition_sections(data.size(), ec);

    std::vector<wout_record> out;
    for (double e : study.model_errors) {
        run_settings s = base;
        s.ensemble = ec;
        s.model_error = e;
        if (e == 0.0 && study.exact_at_zero_error) {
            s.alpha = 0.0;
            s.reservoir.beta = 0.0;
        }
        const barkley_params kbm = make_epsilon_model(s.truth, {e});
        for (std::size_t a = 0; a < study.n_a; ++a) {
            run_settings sa = s;
            sa.reservoir.seed = derive_seed(base.reservoir.seed, {stream::matrix_set, a});
            const matrix_set matrices = build_run_matrices(sa, data.front().nx(), data.front().ny());
            for (std::size_t it = 0; it < layout.trainings.size(); ++it) {
                wout_record rec{e, a, it, sa.reservoir.seed, true, {}, {}};
                try {
                    const reservoir_grid g = detail::train_block(data, layout.trainings[it], sa, kbm, matrices,
                                                                 derive_seed(sa.seed, {stream::section, it, a}));
                    rec.contribution = grid_contribution(g, sa.metric);
                } catch (const error& ex) {
                    rec.ok = false;
                    rec.message = ex.what();
                }
                out.push_back(std::move(rec));
            }
        }
    }
    return out;
}

struct wout_summary_row {
    double model_error = 0.0;
    std::size_t count = 0;
    std::optional<quartiles> reservoir_share_u;
    std::optional<quartiles> reservoir_share_v;
};

inline std::vector<wout_summary_row> aggregate_wout(std::span<const wout_record> records)
{
    if (records.empty()) throw invalid_argument{"aggregate_wout: empty input"};
    std::map<double, std::vector<const wout_record*>> groups;
    for (const auto& r : records) groups[r.model_error].push_back(&r);
    std::vector<wout_summary_row> rows;
    for (auto& [e, members] : groups) {
        wout_summary_row row{e, members.size(), std::nullopt, std::nullopt};
        std::vector<double> su, sv;
        for (const auto* r : members) {
            if (r->ok && r->contribution.u) su.push_back(r->contribution.u->reservoir);
            if (r->ok && r->contribution.v) sv.push_back(r->contribution.v->reservoir);
        }
        if (!su.empty()) row.reservoir_share_u = nearest_rank_quartiles(su);
        if (!sv.empty()) row.reservoir_share_v = nearest_rank_quartiles(sv);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace bkrc
