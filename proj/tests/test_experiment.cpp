#include <bkrc/experiment.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace {

using bkrc::ensemble_config;
using bkrc::hybrid_mode;
using bkrc::index_range;

// ---------------------------------------------------------------------------
// Section layout

TEST(PartitionSections, SingleTrainingSinglePrediction)
{
    ensemble_config c;
    c.n_ts = 2;
    c.n_tr = 3;
    c.n_ps = 1;
    c.n_pr = 4;
    const auto l = bkrc::partition_sections(10, c);
    ASSERT_EQ(l.trainings.size(), 1u);
    const auto& tb = l.trainings[0];
    EXPECT_EQ(tb.sync, (index_range{0, 2}));
    EXPECT_EQ(tb.train, (index_range{2, 5}));
    ASSERT_EQ(tb.predictions.size(), 1u);
    EXPECT_EQ(tb.predictions[0].sync, (index_range{5, 6}));
    EXPECT_EQ(tb.predictions[0].predict, (index_range{6, 10}));
    EXPECT_EQ(l.length, 10u);
}

TEST(PartitionSections, TrainingsFollowedByTheirPredictions)
{
    ensemble_config c{2, 3, 1, 2, 5, 1, 2, 4};
    const auto l = bkrc::partition_sections(c.required_length(), c);
    ASSERT_EQ(l.trainings.size(), 2u);
    // 1 + 2 + 5 + 3 * (1 + 2 + 4) = 29 per training.
    EXPECT_EQ(c.required_length(), 58u);
    EXPECT_EQ(l.trainings[0].discard, (index_range{0, 1}));
    EXPECT_EQ(l.trainings[0].train, (index_range{3, 8}));
    EXPECT_EQ(l.trainings[0].predictions[2].predict, (index_range{25, 29}));
    EXPECT_EQ(l.trainings[1].discard, (index_range{29, 30}));
    EXPECT_EQ(l.trainings[1].predictions[0].discard, (index_range{37, 38}));
    EXPECT_EQ(l.length, 58u);
}

TEST(PartitionSections, RandomConfigsAreContiguousAndSized)
{
    std::mt19937_64 gen{11};
    std::uniform_int_distribution<std::size_t> small(0, 6), count(1, 4);
    for (int rep = 0; rep < 100; ++rep) {
        ensemble_config c{count(gen), count(gen) - 1, small(gen), small(gen), small(gen) + 1,
                          small(gen), small(gen), small(gen) + 1};
        const std::size_t need = c.n_t * (c.n_td + c.n_ts + c.n_tr + c.n_p * (c.n_pd + c.n_ps + c.n_pr));
        ASSERT_EQ(c.required_length(), need);
        EXPECT_THROW(bkrc::partition_sections(need - 1, c), bkrc::insufficient_data_error);
        const auto l = bkrc::partition_sections(need + 3, c);
        EXPECT_EQ(l.length, need);
        std::size_t pos = 0;
        const auto expect_next = [&pos](const index_range& r, std::size_t n) {
            EXPECT_EQ(r.begin, pos);
            EXPECT_EQ(r.size(), n);
            pos = r.end;
        };
        for (const auto& tb : l.trainings) {
            expect_next(tb.discard, c.n_td);
            expect_next(tb.sync, c.n_ts);
            expect_next(tb.train, c.n_tr);
            ASSERT_EQ(tb.predictions.size(), c.n_p);
            for (const auto& pb : tb.predictions) {
                expect_next(pb.discard, c.n_pd);
                expect_next(pb.sync, c.n_ps);
                expect_next(pb.predict, c.n_pr);
            }
        }
        EXPECT_EQ(pos, need);
    }
}

TEST(PartitionSections, RejectsEmptyCounts)
{
    ensemble_config c;
    c.n_t = 0;
    EXPECT_THROW(bkrc::partition_sections(100000, c), bkrc::invalid_argument);
    c = {};
    c.n_tr = 0;
    EXPECT_THROW(bkrc::partition_sections(100000, c), bkrc::invalid_argument);
}

// ---------------------------------------------------------------------------
// Ensemble runs on a small grid

const bkrc::trajectory& small_data()
{
    static const bkrc::trajectory data = [] {
        bkrc::barkley_params p;
        p.nx = p.ny = 20;
        auto tr = bkrc::simulate(p, bkrc::default_initial_condition(20, 20, 1), 1500 + 2300);
        return bkrc::trajectory(tr.begin() + 1501, tr.end());
    }();
    return data;
}

bkrc::run_settings small_settings(hybrid_mode mode)
{
    bkrc::run_settings s;
    s.truth.nx = s.truth.ny = 20;
    s.model_error = 0.1;
    s.reservoir = {20, 3, 0.5, 1e-6, 3};
    s.local.mode = mode;
    s.alpha = 1e-6;
    s.seed = 5;
    s.ensemble = {1, 1, 0, 20, 300, 0, 20, 50};
    s.config_hash = "abc";
    return s;
}

void expect_same_outcome(const bkrc::run_record& a, const bkrc::run_record& b)
{
    EXPECT_EQ(a.valid.steps, b.valid.steps);
    EXPECT_EQ(a.valid.time, b.valid.time);
    EXPECT_EQ(a.valid.censored, b.valid.censored);
    EXPECT_EQ(a.kbm_evaluations, b.kbm_evaluations);
    EXPECT_EQ(a.ok, b.ok);
    EXPECT_EQ(a.predict_begin, b.predict_begin);
    ASSERT_EQ(a.contribution.has_value(), b.contribution.has_value());
    if (a.contribution) {
        EXPECT_EQ(a.contribution->u->reservoir, b.contribution->u->reservoir);
        EXPECT_EQ(a.contribution->v->reservoir, b.contribution->v->reservoir);
    }
}

TEST(RunEnsemble, OneTrainingOnePrediction)
{
    const auto s = small_settings(hybrid_mode::output_hybrid);
    const auto recs = bkrc::run_ensemble(small_data(), s);
    ASSERT_EQ(recs.size(), 1u);
    const auto& r = recs[0];
    EXPECT_TRUE(r.ok) << r.message;
    EXPECT_EQ(r.mode, hybrid_mode::output_hybrid);
    EXPECT_EQ(r.r_dim, 20u);
    EXPECT_EQ(r.predict_begin, 340u);
    EXPECT_EQ(r.config_hash, "abc");
    EXPECT_GT(r.valid.time, 0.0);
    EXPECT_LE(r.valid.steps, 50u);
    // OH feeds the KBM to the readout only: one step after synchronization, then 49 in the loop.
    EXPECT_EQ(r.kbm_evaluations, 50u);
    ASSERT_TRUE(r.contribution.has_value());
    EXPECT_GT(r.train_seconds, 0.0);
}

TEST(RunEnsemble, RecordCountAndSectionIndices)
{
    auto s = small_settings(hybrid_mode::none);
    s.ensemble = {3, 6, 0, 20, 300, 0, 20, 50};
    const auto recs = bkrc::run_ensemble(small_data(), s);
    ASSERT_EQ(recs.size(), 18u);
    for (std::size_t k = 0; k < recs.size(); ++k) {
        EXPECT_EQ(recs[k].train_section, k / 6);
        EXPECT_EQ(recs[k].prediction_section, k % 6);
        EXPECT_EQ(recs[k].kbm_evaluations, 0u);
        EXPECT_FALSE(recs[k].contribution.has_value());
    }
    EXPECT_EQ(recs[7].predict_begin, 740u + 320u + 70u + 20u);
}

TEST(RunEnsemble, DeterministicAcrossRepeatsAndThreads)
{
    auto s = small_settings(hybrid_mode::full_hybrid);
    s.ensemble = {2, 2, 0, 20, 300, 0, 20, 50};
    s.prediction_sync_noise = true;
    const auto a = bkrc::run_ensemble(small_data(), s);
    const auto b = bkrc::run_ensemble(small_data(), s);
    s.local.threads = 3;
    const auto c = bkrc::run_ensemble(small_data(), s);
    ASSERT_EQ(a.size(), 4u);
    ASSERT_EQ(b.size(), 4u);
    ASSERT_EQ(c.size(), 4u);
    for (std::size_t k = 0; k < a.size(); ++k) {
        expect_same_outcome(a[k], b[k]);
        expect_same_outcome(a[k], c[k]);
    }
}

TEST(RunEnsemble, TooShortDataIsReported)
{
    auto s = small_settings(hybrid_mode::none);
    s.ensemble.n_tr = 5000;
    EXPECT_THROW(bkrc::run_ensemble(small_data(), s), bkrc::insufficient_data_error);
}

// ---------------------------------------------------------------------------
// Aggregation

bkrc::run_record record(double vt, bool censored = false, hybrid_mode mode = hybrid_mode::none)
{
    bkrc::run_record r;
    r.mode = mode;
    r.r_dim = 100;
    r.model_error = 0.1;
    r.valid = {vt, static_cast<std::size_t>(vt * 100), censored};
    r.train_seconds = vt;
    r.predict_seconds = 1.0;
    return r;
}

TEST(Aggregate, NearestRankQuartilesOfFive)
{
    std::vector<bkrc::run_record> rs;
    for (double v : {4.0, 1.0, 5.0, 3.0, 2.0}) rs.push_back(record(v));
    const auto rows = bkrc::aggregate(rs);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].count, 5u);
    EXPECT_EQ(rows[0].valid_time.median, 3.0);
    EXPECT_EQ(rows[0].valid_time.lower, 2.0);
    EXPECT_EQ(rows[0].valid_time.upper, 4.0);
    EXPECT_EQ(rows[0].train_seconds, 3.0);
    EXPECT_EQ(rows[0].total_seconds, 4.0);
    EXPECT_FALSE(rows[0].median_censored);
}

TEST(Aggregate, SingleRecordIsItsOwnQuartiles)
{
    const std::vector<bkrc::run_record> rs{record(2.5)};
    const auto rows = bkrc::aggregate(rs);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].valid_time.lower, 2.5);
    EXPECT_EQ(rows[0].valid_time.median, 2.5);
    EXPECT_EQ(rows[0].valid_time.upper, 2.5);
}

TEST(Aggregate, CensoredMedianIsFlagged)
{
    const std::vector<bkrc::run_record> all{record(20, true), record(20, true), record(20, true)};
    auto rows = bkrc::aggregate(all);
    EXPECT_TRUE(rows[0].median_censored);
    EXPECT_EQ(rows[0].censored, 3u);
    EXPECT_EQ(rows[0].valid_time.median, 20.0);

    const std::vector<bkrc::run_record> some{record(1), record(2), record(20, true)};
    rows = bkrc::aggregate(some);
    EXPECT_FALSE(rows[0].median_censored);
    EXPECT_EQ(rows[0].censored, 1u);
}

TEST(Aggregate, PermutationInvariant)
{
    std::vector<bkrc::run_record> rs;
    for (int k = 0; k < 9; ++k) rs.push_back(record(0.37 * k * k - 2 * k + 7, k % 4 == 0));
    const auto ref = bkrc::aggregate(rs);
    std::mt19937_64 gen{3};
    for (int rep = 0; rep < 10; ++rep) {
        std::shuffle(rs.begin(), rs.end(), gen);
        const auto got = bkrc::aggregate(rs);
        EXPECT_EQ(got[0].valid_time.lower, ref[0].valid_time.lower);
        EXPECT_EQ(got[0].valid_time.median, ref[0].valid_time.median);
        EXPECT_EQ(got[0].valid_time.upper, ref[0].valid_time.upper);
        EXPECT_EQ(got[0].median_censored, ref[0].median_censored);
        EXPECT_EQ(got[0].train_seconds, ref[0].train_seconds);
    }
}

TEST(Aggregate, GroupsByKeys)
{
    const std::vector<bkrc::run_record> rs{record(1, false, hybrid_mode::none), record(3, false, hybrid_mode::none),
                                           record(7, false, hybrid_mode::full_hybrid)};
    const auto by_mode = bkrc::aggregate(rs);
    ASSERT_EQ(by_mode.size(), 2u);
    EXPECT_EQ(*by_mode[0].mode, hybrid_mode::none);
    EXPECT_EQ(by_mode[0].count, 2u);
    EXPECT_EQ(*by_mode[1].mode, hybrid_mode::full_hybrid);

    const auto pooled = bkrc::aggregate(rs, {false, true, true});
    ASSERT_EQ(pooled.size(), 1u);
    EXPECT_FALSE(pooled[0].mode.has_value());
    EXPECT_EQ(pooled[0].valid_time.median, 3.0);
}

TEST(Aggregate, EmptyInputThrows)
{
    EXPECT_THROW(bkrc::aggregate(std::span<const bkrc::run_record>{}), bkrc::invalid_argument);
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep

TEST(Sweep, DefaultGrids)
{
    using bkrc::sweep_parameter;
    EXPECT_EQ(bkrc::default_sweep_values(sweep_parameter::rho).size(), 9u);
    EXPECT_EQ(bkrc::default_sweep_values(sweep_parameter::beta).size(), 7u);
    EXPECT_EQ(bkrc::default_sweep_values(sweep_parameter::r_dim).size(), 4u);
    EXPECT_EQ(bkrc::default_sweep_values(sweep_parameter::sigma).size(), 3u);
    EXPECT_EQ(bkrc::default_sweep_values(sweep_parameter::alpha).size(), 3u);
    for (auto p : {sweep_parameter::r_dim, sweep_parameter::rho, sweep_parameter::sigma, sweep_parameter::alpha,
                   sweep_parameter::beta})
        EXPECT_EQ(bkrc::parse_sweep_parameter(bkrc::to_string(p)), p);
    EXPECT_THROW(bkrc::parse_sweep_parameter("gamma"), bkrc::invalid_argument);
}

TEST(Sweep, ApplyHoldsOthersFixed)
{
    bkrc::sweep_config sc;
    sc.parameter = bkrc::sweep_parameter::beta;
    sc.fixed = {30, 0.8, 3, 1e-5, 1e-6};
    auto base = small_settings(hybrid_mode::output_hybrid);
    base.ensemble.n_t = 4;
    const auto s = bkrc::apply_sweep_value(base, sc, 1e-3);
    EXPECT_EQ(s.reservoir.beta, 1e-3);
    EXPECT_EQ(s.reservoir.r_dim, 30u);
    EXPECT_EQ(s.reservoir.rho, 0.8);
    EXPECT_EQ(s.local.patch.sigma, 3u);
    EXPECT_EQ(s.alpha, 1e-5);
    EXPECT_EQ(s.ensemble.n_t, 1u);
    EXPECT_EQ(s.ensemble.n_p, 1u);
}

TEST(Sweep, OneRowPerValueAndSingletonMatchesDirectRun)
{
    bkrc::sweep_config sc;
    sc.parameter = bkrc::sweep_parameter::rho;
    sc.values = bkrc::default_sweep_values(sc.parameter);
    sc.fixed = {15, 1.0, 3, 1e-6, 1e-6};
    const auto base = small_settings(hybrid_mode::output_hybrid);
    const auto rows = bkrc::run_sweep(small_data(), sc, base);
    ASSERT_EQ(rows.size(), 9u);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        EXPECT_EQ(rows[k].value, sc.values[k]);
        EXPECT_EQ(rows[k].parameter, bkrc::sweep_parameter::rho);
    }

    sc.values = {0.7};
    const auto single = bkrc::run_sweep(small_data(), sc, base);
    ASSERT_EQ(single.size(), 1u);
    const auto direct = bkrc::run_ensemble(small_data(), bkrc::apply_sweep_value(base, sc, 0.7));
    expect_same_outcome(single[0].record, direct.front());
    expect_same_outcome(single[0].record, rows[4].record);
}

TEST(Sweep, EmptyValuesRejected)
{
    bkrc::sweep_config sc;
    sc.values.clear();
    EXPECT_THROW(bkrc::run_sweep(small_data(), sc, small_settings(hybrid_mode::none)), bkrc::invalid_argument);
}

// ---------------------------------------------------------------------------
// Readout contribution study

TEST(Wout, RecordLayoutAndSummary)
{
    auto base = small_settings(hybrid_mode::output_hybrid);
    // Short windows leave many points with near-constant patches, where the exact fit is
    // not unique and the minimum-norm solution spreads weight over the reservoir.
    base.ensemble.n_tr = 1000;
    bkrc::wout_study st;
    st.model_errors = {0.0, 100.0};
    st.n_a = 2;
    st.n_t = 2;
    const auto recs = bkrc::run_wout(small_data(), base, st);
    ASSERT_EQ(recs.size(), 8u);
    for (std::size_t k = 0; k < recs.size(); ++k) {
        EXPECT_TRUE(recs[k].ok) << recs[k].message;
        EXPECT_EQ(recs[k].model_error, k < 4 ? 0.0 : 100.0);
        EXPECT_EQ(recs[k].matrix_index, (k / 2) % 2);
        EXPECT_EQ(recs[k].train_section, k % 2);
        ASSERT_TRUE(recs[k].contribution.u.has_value());
    }
    // Different matrix draws, same draws across model errors.
    EXPECT_NE(recs[0].seed, recs[2].seed);
    EXPECT_EQ(recs[0].seed, recs[4].seed);

    const auto rows = bkrc::aggregate_wout(recs);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].model_error, 0.0);
    EXPECT_EQ(rows[0].count, 4u);
    // A perfect KBM leaves almost nothing to the reservoir; a useless one leaves a lot.
    EXPECT_LT(rows[0].reservoir_share_u->median, 1e-3);
    EXPECT_GT(rows[1].reservoir_share_u->median, rows[0].reservoir_share_u->median);
}

TEST(Wout, RequiresKbmInReadout)
{
    EXPECT_THROW(bkrc::run_wout(small_data(), small_settings(hybrid_mode::input_hybrid), {}), bkrc::invalid_argument);
    EXPECT_THROW(bkrc::aggregate_wout(std::span<const bkrc::wout_record>{}), bkrc::invalid_argument);
}

}  // namespace
