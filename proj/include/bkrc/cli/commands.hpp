#pragma once

// Batch commands. Every command writes its tables below `config.out`; timing
// values live in separate *_timing.csv files so that all other outputs are
// reproducible byte for byte.

#include "../barkley.hpp"
#include "../experiment.hpp"
#include "../local_states.hpp"
#include "../metrics.hpp"
#include "config.hpp"
#include "io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace bkrc::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Data source

/// Ground truth after the transient: exactly what the experiment layout consumes
/// (and possibly more, when read from a longer file).
inline trajectory load_or_simulate(const run_config& c, std::ostream* log = nullptr)
{
    if (!c.trajectory.empty()) {
        trajectory_data d = read_trajectory(c.trajectory);
        if (d.header.nx != c.sim.nx || d.header.ny != c.sim.ny)
            throw invalid_argument{"trajectory '" + c.trajectory + "' is " + std::to_string(d.header.nx) + "x"
                                   + std::to_string(d.header.ny) + ", config expects " + std::to_string(c.sim.nx)
                                   + "x" + std::to_string(c.sim.ny)};
        if (d.header.dt != c.sim.dt) throw invalid_argument{"trajectory '" + c.trajectory + "' has a different dt"};
        if (d.states.size() < c.transient) throw insufficient_data_error{c.transient, d.states.size()};
        d.states.erase(d.states.begin(), d.states.begin() + static_cast<std::ptrdiff_t>(c.transient));
        return std::move(d.states);
    }
    if (log) *log << "simulating " << c.simulation_steps() << " steps on " << c.sim.nx << "x" << c.sim.ny << "\n";
    trajectory all = simulate(c.sim, default_initial_condition(c.sim.nx, c.sim.ny, c.seed, c.sim.a), c.simulation_steps());
    // Index 0 is the initial condition; stored/consumed states start after step 1.
    all.erase(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(c.transient + 1));
    return all;
}

namespace detail {

inline std::string share_cell(const std::optional<contribution_share>& s, bool kbm)
{
    if (!s) return "";
    return format_double(kbm ? s->kbm : s->reservoir);
}

inline std::string opt_cell(const std::optional<double>& x) { return x ? format_double(*x) : std::string{}; }

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

struct variable_stats {
    double min = 0, max = 0, std = 0;
};

struct simulate_result {
    fs::path file;
    trajectory_header header;
    variable_stats u, v;
};

inline variable_stats stats_of(std::span<const field_pair> states, bool v)
{
    variable_stats s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.0};
    double sum = 0, sum2 = 0;
    std::size_t n = 0;
    for (const auto& st : states)
        for (double x : (v ? st.v : st.u).values()) {
            s.min = std::min(s.min, x);
            s.max = std::max(s.max, x);
            sum += x;
            sum2 += x * x;
            ++n;
        }
    const double mean = n ? sum / static_cast<double>(n) : 0.0;
    s.std = n ? std::sqrt(std::max(0.0, sum2 / static_cast<double>(n) - mean * mean)) : 0.0;
    return s;
}

/// Writes the states after steps 1..N, N = transient + ensemble layout length.
inline simulate_result cmd_simulate(const run_config& c, std::ostream& log)
{
    c.validate();
    const std::uint64_t hash = config_hash(c);
    const std::size_t steps = c.simulation_steps();
    const trajectory all = simulate(c.sim, default_initial_condition(c.sim.nx, c.sim.ny, c.seed, c.sim.a), steps);
    const std::span<const field_pair> stored = std::span{all}.subspan(1);

    simulate_result r;
    r.file = fs::path{c.out} / "trajectory.bkrc";
    write_trajectory(r.file, stored, c.sim.dt, hash);
    r.header = {trajectory_version, static_cast<std::uint32_t>(c.sim.nx), static_cast<std::uint32_t>(c.sim.ny), 2,
                stored.size(), c.sim.dt, hash};
    r.u = stats_of(stored, false);
    r.v = stats_of(stored, true);

    csv_table t{{"variable", "min", "max", "std"}, hash_hex(hash)};
    t.row() << "U" << r.u.min << r.u.max << r.u.std;
    t.row() << "V" << r.v.min << r.v.max << r.v.std;
    t.write(fs::path{c.out} / "simulate_summary.csv");

    log << "wrote " << r.file.string() << " (" << stored.size() << " steps, " << c.sim.nx << "x" << c.sim.ny
        << ", config " << hash_hex(hash) << ")\n";
    log << "U: min " << r.u.min << " max " << r.u.max << " std " << r.u.std << "\n";
    log << "V: min " << r.v.min << " max " << r.v.max << " std " << r.v.std << "\n";
    return r;
}

// ---------------------------------------------------------------------------
// run

struct run_result {
    run_record record;
    error_series errors;
    trajectory predicted;
};

/// One training on the first training section and one closed-loop prediction on
/// its first prediction section.
inline run_result cmd_run(const run_config& c, std::ostream& log)
{
    c.validate();
    const std::uint64_t hash = config_hash(c);
    const std::string hx = hash_hex(hash);
    const fs::path out{c.out};

    run_config rc = c;
    rc.ensemble.n_t = 1;
    rc.ensemble.n_p = 1;
    if (rc.ensemble.n_ps < 1) throw invalid_argument{"run: ensemble.n_ps must be at least 1"};
    const trajectory data = load_or_simulate(rc, &log);
    const run_settings s = rc.settings();
    const section_layout layout = partition_sections(data.size(), s.ensemble);
    const training_block& tb = layout.trainings.front();
    const prediction_block& pb = tb.predictions.front();
    const barkley_params kbm = make_epsilon_model(s.truth, {s.model_error});

    run_result res;
    run_record& rec = res.record;
    rec.mode = s.local.mode;
    rec.r_dim = s.reservoir.r_dim;
    rec.model_error = s.model_error;
    rec.predict_begin = pb.predict.begin;
    rec.seed = s.seed;
    rec.config_hash = hx;

    auto t0 = bkrc::detail::clock::now();
    const matrix_set matrices = build_run_matrices(s, c.sim.nx, c.sim.ny);
    const reservoir_grid grid =
        bkrc::detail::train_block(data, tb, s, kbm, matrices, derive_seed(s.seed, {stream::section, 0}));
    rec.train_seconds = bkrc::detail::seconds_since(t0);
    if (kbm_in_readout(s.local.mode)) rec.contribution = grid_contribution(grid, s.metric);

    prediction_options po;
    po.threads = s.local.threads;
    po.sync_alpha = s.prediction_sync_noise ? s.alpha : 0.0;
    po.sync_seed = derive_seed(s.seed, {stream::section, 0, 1});
    t0 = bkrc::detail::clock::now();
    prediction_result pr = predict_closed_loop(grid, std::span{data}.subspan(pb.sync.begin, pb.sync.size()), kbm,
                                               pb.predict.size(), po);
    rec.predict_seconds = bkrc::detail::seconds_since(t0);
    rec.kbm_evaluations = pr.kbm_evaluations;

    const auto truth = std::span{data}.subspan(pb.predict.begin, pr.predicted.size());
    res.errors = pr.predicted.empty() ? error_series{{}, s.truth.dt} : normalized_error(truth, pr.predicted, s.truth.dt);
    rec.valid = valid_time(res.errors, s.e_max);
    if (pr.failed) {
        rec.ok = false;
        rec.failed_step = pr.failed_step;
        rec.message = pr.message;
        rec.valid.censored = false;
    }
    res.predicted = std::move(pr.predicted);

    // e(t) curve
    const bool lyap = c.lyapunov_max > 0;
    std::vector<std::string> cols{"step", "time", "error"};
    if (lyap) cols.emplace_back("lyapunov_time");
    csv_table err{cols, hx};
    for (std::size_t k = 0; k < res.errors.size(); ++k) {
        const double t = c.sim.dt * static_cast<double>(k + 1);
        auto row = err.row();
        row << k << t << res.errors.values[k];
        if (lyap) row << t * c.lyapunov_max;
    }
    err.write(out / "run_error.csv");

    std::vector<std::string> scols{"mode",       "r_dim",      "model_error",     "valid_time",       "valid_steps",
                                   "censored",   "ok",         "failed_step",     "kbm_evaluations",  "reservoir_share_u",
                                   "kbm_share_u", "reservoir_share_v", "kbm_share_v"};
    if (lyap) scols.emplace_back("valid_lyapunov_time");
    csv_table summary{scols, hx};
    {
        const auto& cr = rec.contribution;
        auto row = summary.row();
        row << to_string(rec.mode) << rec.r_dim << rec.model_error << rec.valid.time << rec.valid.steps
            << rec.valid.censored << rec.ok << rec.failed_step << rec.kbm_evaluations
            << (cr ? detail::share_cell(cr->u, false) : "") << (cr ? detail::share_cell(cr->u, true) : "")
            << (cr ? detail::share_cell(cr->v, false) : "") << (cr ? detail::share_cell(cr->v, true) : "");
        if (lyap) row << rec.valid.time * c.lyapunov_max;
    }
    summary.write(out / "run_summary.csv");

    csv_table timing{{"mode", "r_dim", "model_error", "train_seconds", "predict_seconds", "total_seconds"}, hx};
    timing.row() << to_string(rec.mode) << rec.r_dim << rec.model_error << rec.train_seconds << rec.predict_seconds
                 << rec.train_seconds + rec.predict_seconds;
    timing.write(out / "run_timing.csv");

    // Heatmap panels: truth, prediction, |difference| per variable.
    for (std::size_t k : c.snapshots) {
        if (k >= res.predicted.size()) {
            log << "snapshot " << k << " skipped: prediction has " << res.predicted.size() << " steps\n";
            continue;
        }
        const field_pair& p = res.predicted[k];
        const field_pair& t = truth[k];
        const field_pair d = error_field(t, p);
        const std::string stem = "step" + std::to_string(k) + "_";
        const fs::path dir = out / "snapshots";
        const std::string note = "config_hash=" + hx + " prediction_step=" + std::to_string(k);
        render_heatmap(t.u, c.u_lo, c.u_hi, dir / (stem + "truth_u.pgm"), note);
        render_heatmap(t.v, c.v_lo, c.v_hi, dir / (stem + "truth_v.pgm"), note);
        render_heatmap(p.u, c.u_lo, c.u_hi, dir / (stem + "pred_u.pgm"), note);
        render_heatmap(p.v, c.v_lo, c.v_hi, dir / (stem + "pred_v.pgm"), note);
        render_heatmap(d.u, 0.0, c.u_hi - c.u_lo, dir / (stem + "diff_u.pgm"), note);
        render_heatmap(d.v, 0.0, c.v_hi - c.v_lo, dir / (stem + "diff_v.pgm"), note);
    }
    if (c.write_prediction && !res.predicted.empty())
        write_trajectory(out / "prediction.bkrc", res.predicted, c.sim.dt, hash);

    log << "mode " << to_string(rec.mode) << ", r_dim " << rec.r_dim << ", e " << rec.model_error << "\n";
    log << "kbm evaluations: " << rec.kbm_evaluations << "\n";
    log << "valid time: " << rec.valid.time << (rec.valid.censored ? " (censored)" : "") << "\n";
    if (!rec.ok) log << "prediction stopped early: " << rec.message << "\n";
    if (rec.contribution && rec.contribution->u && rec.contribution->v)
        log << "reservoir share U " << rec.contribution->u->reservoir << ", V " << rec.contribution->v->reservoir
            << "\n";
    log << "train " << rec.train_seconds << " s, predict " << rec.predict_seconds << " s\n";
    return res;
}

// ---------------------------------------------------------------------------
// ensemble

inline const std::vector<std::string>& ensemble_record_columns()
{
    static const std::vector<std::string> cols{
        "mode",        "r_dim",       "model_error",     "train_section",     "prediction_section", "predict_begin",
        "seed",        "valid_time",  "valid_steps",     "censored",          "ok",                 "failed_step",
        "kbm_evaluations", "reservoir_share_u", "reservoir_share_v", "message"};
    return cols;
}

inline const std::vector<std::string>& ensemble_summary_columns()
{
    static const std::vector<std::string> cols{
        "mode",          "r_dim",           "model_error", "count",    "valid_time_q1",     "valid_time_median",
        "valid_time_q3", "median_censored", "censored",    "failed",   "reservoir_share_u", "reservoir_share_v"};
    return cols;
}

struct ensemble_result {
    std::vector<run_record> records;
    std::vector<summary_row> summary;
};

/// Ensemble over every (mode, r_dim, e) cell of the configured grid.
inline ensemble_result cmd_ensemble(const run_config& c, std::ostream& log)
{
    c.validate();
    const std::string hx = hash_hex(config_hash(c));
    const fs::path out{c.out};
    const trajectory data = load_or_simulate(c, &log);

    ensemble_result res;
    for (hybrid_mode m : c.ensemble_modes)
        for (std::size_t r_dim : c.ensemble_r_dims)
            for (double e : c.ensemble_model_errors) {
                run_config cell = c;
                cell.mode = m;
                cell.reservoir.r_dim = r_dim;
                cell.model_error = e;
                run_settings s = cell.settings();
                s.config_hash = hx;
                log << "ensemble cell mode=" << to_string(m) << " r_dim=" << r_dim << " e=" << e << "\n";
                auto recs = run_ensemble(data, s);
                res.records.insert(res.records.end(), recs.begin(), recs.end());
            }
    res.summary = aggregate(res.records);

    csv_table records{ensemble_record_columns(), hx};
    csv_table timing{{"mode", "r_dim", "model_error", "train_section", "prediction_section", "train_seconds",
                      "predict_seconds", "total_seconds"},
                     hx};
    for (const auto& r : res.records) {
        const auto& cr = r.contribution;
        records.row() << to_string(r.mode) << r.r_dim << r.model_error << r.train_section << r.prediction_section
                      << r.predict_begin << r.seed << r.valid.time << r.valid.steps << r.valid.censored << r.ok
                      << r.failed_step << r.kbm_evaluations << (cr ? detail::share_cell(cr->u, false) : "")
                      << (cr ? detail::share_cell(cr->v, false) : "") << r.message;
        timing.row() << to_string(r.mode) << r.r_dim << r.model_error << r.train_section << r.prediction_section
                     << r.train_seconds << r.predict_seconds << r.train_seconds + r.predict_seconds;
    }
    csv_table summary{ensemble_summary_columns(), hx};
    csv_table timing_summary{{"mode", "r_dim", "model_error", "count", "train_seconds_median",
                              "predict_seconds_median", "total_seconds_median"},
                             hx};
    for (const auto& s : res.summary) {
        summary.row() << to_string(*s.mode) << *s.r_dim << *s.model_error << s.count << s.valid_time.lower
                      << s.valid_time.median << s.valid_time.upper << s.median_censored << s.censored << s.failed
                      << detail::opt_cell(s.reservoir_share_u) << detail::opt_cell(s.reservoir_share_v);
        timing_summary.row() << to_string(*s.mode) << *s.r_dim << *s.model_error << s.count << s.train_seconds
                             << s.predict_seconds << s.total_seconds;
        log << to_string(*s.mode) << " r_dim=" << *s.r_dim << " e=" << *s.model_error << ": median valid time "
            << s.valid_time.median << " [" << s.valid_time.lower << ", " << s.valid_time.upper << "], censored "
            << s.censored << "/" << s.count << ", median total " << s.total_seconds << " s\n";
    }
    records.write(out / "ensemble_records.csv");
    summary.write(out / "ensemble_summary.csv");
    timing.write(out / "ensemble_timing.csv");
    timing_summary.write(out / "ensemble_timing_summary.csv");
    return res;
}

// ---------------------------------------------------------------------------
// sweep

inline std::vector<sweep_row> cmd_sweep(const run_config& c, std::ostream& log)
{
    c.validate();
    const std::string hx = hash_hex(config_hash(c));
    const fs::path out{c.out};
    run_config rc = c;
    rc.ensemble.n_t = 1;
    rc.ensemble.n_p = 1;
    const trajectory data = load_or_simulate(rc, &log);
    run_settings base = rc.settings();
    base.config_hash = hx;

    const auto rows = run_sweep(data, c.sweep, base);
    csv_table t{{"parameter", "value", "valid_time", "valid_steps", "censored", "ok", "message"}, hx};
    csv_table timing{{"parameter", "value", "train_seconds", "predict_seconds", "total_seconds"}, hx};
    for (const auto& r : rows) {
        t.row() << to_string(r.parameter) << r.value << r.record.valid.time << r.record.valid.steps
                << r.record.valid.censored << r.record.ok << r.record.message;
        timing.row() << to_string(r.parameter) << r.value << r.record.train_seconds << r.record.predict_seconds
                     << r.record.train_seconds + r.record.predict_seconds;
        log << to_string(r.parameter) << "=" << r.value << ": valid time " << r.record.valid.time
            << (r.record.ok ? "" : " (failed: " + r.record.message + ")") << "\n";
    }
    t.write(out / "sweep.csv");
    timing.write(out / "sweep_timing.csv");
    return rows;
}

// ---------------------------------------------------------------------------
// wout

struct wout_result {
    std::vector<wout_record> records;
    std::vector<wout_summary_row> summary;
};

inline wout_result cmd_wout(const run_config& c, std::ostream& log)
{
    c.validate();
    const std::string hx = hash_hex(config_hash(c));
    const fs::path out{c.out};
    const trajectory data = load_or_simulate(c, &log);
    run_settings base = c.settings();
    base.config_hash = hx;

    wout_result res;
    res.records = run_wout(data, base, c.wout);
    res.summary = aggregate_wout(res.records);

    csv_table rec{{"model_error", "matrix_index", "train_section", "seed", "ok", "reservoir_share_u", "kbm_share_u",
                   "reservoir_share_v", "kbm_share_v", "message"},
                  hx};
    for (const auto& r : res.records)
        rec.row() << r.model_error << r.matrix_index << r.train_section << r.seed << r.ok
                  << detail::share_cell(r.contribution.u, false) << detail::share_cell(r.contribution.u, true)
                  << detail::share_cell(r.contribution.v, false) << detail::share_cell(r.contribution.v, true)
                  << r.message;
    rec.write(out / "wout_records.csv");

    csv_table sum{{"model_error", "count", "reservoir_share_u_q1", "reservoir_share_u_median", "reservoir_share_u_q3",
                   "kbm_share_u_median", "reservoir_share_v_q1", "reservoir_share_v_median", "reservoir_share_v_q3",
                   "kbm_share_v_median"},
                  hx};
    const auto q = [](const std::optional<quartiles>& x, int which) -> std::string {
        if (!x) return "";
        switch (which) {
        case 0: return format_double(x->lower);
        case 1: return format_double(x->median);
        case 2: return format_double(x->upper);
        default: return format_double(1.0 - x->median);
        }
    };
    for (const auto& s : res.summary) {
        sum.row() << s.model_error << s.count << q(s.reservoir_share_u, 0) << q(s.reservoir_share_u, 1)
                  << q(s.reservoir_share_u, 2) << q(s.reservoir_share_u, 3) << q(s.reservoir_share_v, 0)
                  << q(s.reservoir_share_v, 1) << q(s.reservoir_share_v, 2) << q(s.reservoir_share_v, 3);
        log << "e=" << s.model_error << ": median reservoir share U " << q(s.reservoir_share_u, 1) << ", V "
            << q(s.reservoir_share_v, 1) << "\n";
    }
    sum.write(out / "wout_summary.csv");
    return res;
}

// ---------------------------------------------------------------------------
// render

/// One PGM per variable per requested (stored) step of `render.input`.
inline std::vector<fs::path> cmd_render(const run_config& c, std::ostream& log)
{
    c.validate();
    if (c.render_input.empty()) throw invalid_argument{"render: render.input is not set"};
    const trajectory_data d = read_trajectory(c.render_input);
    const fs::path dir = fs::path{c.out} / "render";
    const std::string note = "config_hash=" + hash_hex(config_hash(c)) + " source_hash=" + hash_hex(d.header.config_hash);
    std::vector<fs::path> files;
    for (std::size_t k : c.render_steps) {
        if (k >= d.states.size())
            throw invalid_argument{"render: step " + std::to_string(k) + " beyond the " + std::to_string(d.states.size())
                                   + " stored steps"};
        const std::string stem = "step" + std::to_string(k);
        files.push_back(dir / (stem + "_u.pgm"));
        render_heatmap(d.states[k].u, c.u_lo, c.u_hi, files.back(), note + " step=" + std::to_string(k));
        files.push_back(dir / (stem + "_v.pgm"));
        render_heatmap(d.states[k].v, c.v_lo, c.v_hi, files.back(), note + " step=" + std::to_string(k));
    }
    log << "wrote " << files.size() << " images to " << dir.string() << "\n";
    return files;
}

}  // namespace bkrc::cli
