#include <bkrc/metrics.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

using bkrc::error_series;
using bkrc::field_pair;

bkrc::trajectory random_trajectory(std::size_t nx, std::size_t ny, std::size_t steps, std::uint64_t seed)
{
    auto gen = bkrc::make_engine(seed);
    std::uniform_real_distribution<double> u{-1, 1};
    bkrc::trajectory out;
    for (std::size_t t = 0; t < steps; ++t) {
        field_pair s{nx, ny};
        for (double& x : s.u.values()) x = u(gen);
        for (double& x : s.v.values()) x = u(gen);
        out.push_back(s);
    }
    return out;
}

TEST(NearestRank, Quartiles)
{
    const std::vector<double> xs{5, 1, 4, 2, 3};
    EXPECT_EQ(bkrc::nearest_rank(xs, 0.5), 3.0);
    EXPECT_EQ(bkrc::nearest_rank(xs, 0.25), 2.0);
    EXPECT_EQ(bkrc::nearest_rank(xs, 0.75), 4.0);
    EXPECT_EQ(bkrc::nearest_rank({7.0}, 0.5), 7.0);
    EXPECT_EQ(bkrc::median({4, 1, 3, 2}), 2.0);
    EXPECT_THROW(bkrc::nearest_rank({}, 0.5), bkrc::invalid_argument);
}

TEST(NormalizedError, PerfectPredictionIsZero)
{
    const auto t = random_trajectory(3, 3, 4, 1);
    for (double e : bkrc::normalized_error(t, t).values) EXPECT_EQ(e, 0.0);
}

TEST(NormalizedError, ZeroPredictionWithConstantNormIsOne)
{
    bkrc::trajectory truth;
    for (int k = 0; k < 5; ++k) {
        field_pair s{2, 2, 0.0, 0.0};
        s.u[static_cast<std::size_t>(k % 4)] = 3.0;  // norm 3 at every step
        truth.push_back(s);
    }
    const bkrc::trajectory zero(5, field_pair{2, 2});
    for (double e : bkrc::normalized_error(truth, zero).values) EXPECT_NEAR(e, 1.0, 1e-15);
}

TEST(NormalizedError, MatchesScalarLoopOracle)
{
    const auto truth = random_trajectory(2, 2, 3, 2);
    const auto pred = random_trajectory(2, 2, 3, 3);
    double mean_sq = 0;
    for (const auto& s : truth)
        for (std::size_t k = 0; k < 4; ++k) mean_sq += s.u[k] * s.u[k] + s.v[k] * s.v[k];
    mean_sq /= 3.0;
    const auto e = bkrc::normalized_error(truth, pred, 0.01);
    ASSERT_EQ(e.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t) {
        double d = 0;
        for (std::size_t k = 0; k < 4; ++k)
            d += std::pow(truth[t].u[k] - pred[t].u[k], 2) + std::pow(truth[t].v[k] - pred[t].v[k], 2);
        EXPECT_NEAR(e.values[t], std::sqrt(d) / std::sqrt(mean_sq), 1e-12);
    }
}

TEST(NormalizedError, InvariantUnderPointRelabeling)
{
    const auto truth = random_trajectory(3, 2, 4, 4);
    const auto pred = random_trajectory(3, 2, 4, 5);
    const std::size_t perm[] = {4, 2, 0, 5, 1, 3};
    auto relabel = [&](const bkrc::trajectory& tr) {
        bkrc::trajectory out;
        for (const auto& s : tr) {
            field_pair r{3, 2};
            for (std::size_t k = 0; k < 6; ++k) {
                r.u[k] = s.u[perm[k]];
                r.v[k] = s.v[perm[k]];
            }
            out.push_back(r);
        }
        return out;
    };
    const auto a = bkrc::normalized_error(truth, pred).values;
    const auto b = bkrc::normalized_error(relabel(truth), relabel(pred)).values;
    for (std::size_t t = 0; t < a.size(); ++t) EXPECT_NEAR(a[t], b[t], 1e-14);
}

TEST(NormalizedError, Errors)
{
    const auto t = random_trajectory(2, 2, 3, 6);
    EXPECT_THROW(bkrc::normalized_error(t, random_trajectory(2, 2, 2, 7)), bkrc::dimension_error);
    EXPECT_THROW(bkrc::normalized_error(t, random_trajectory(3, 2, 3, 7)), bkrc::dimension_error);
    const bkrc::trajectory zero(3, field_pair{2, 2});
    EXPECT_THROW(bkrc::normalized_error(zero, t), bkrc::invalid_argument);
}

TEST(ValidTime, Examples)
{
    const auto censored = bkrc::valid_time(error_series{std::vector<double>(100, 0.0), 0.01}, 0.2);
    EXPECT_NEAR(censored.time, 1.0, 1e-12);
    EXPECT_TRUE(censored.censored);
    EXPECT_EQ(censored.steps, 100u);

    const auto first = bkrc::valid_time(error_series{{0.3, 0.1}, 0.01}, 0.2);
    EXPECT_EQ(first.time, 0.0);
    EXPECT_FALSE(first.censored);

    const auto mid = bkrc::valid_time(error_series{{0.1, 0.19, 0.21, 0.05}, 0.01}, 0.2);
    EXPECT_NEAR(mid.time, 0.02, 1e-15);
    EXPECT_EQ(mid.steps, 2u);
    EXPECT_FALSE(mid.censored);

    const auto nan = bkrc::valid_time(error_series{{0.1, std::nan(""), 0.0}, 0.01}, 0.2);
    EXPECT_EQ(nan.steps, 1u);
    EXPECT_THROW(bkrc::valid_time(error_series{{0.1}, 0.01}, 0.0), bkrc::invalid_argument);
}

TEST(ValidTime, MonotoneInErrors)
{
    auto gen = bkrc::make_engine(10);
    std::uniform_real_distribution<double> u{0, 0.3};
    for (int trial = 0; trial < 200; ++trial) {
        error_series a{std::vector<double>(30), 0.01};
        for (double& x : a.values) x = u(gen);
        error_series b = a;
        for (double& x : b.values) x += u(gen) * 0.2;
        EXPECT_LE(bkrc::valid_time(b).time, bkrc::valid_time(a).time);
    }
}

TEST(ErrorField, Examples)
{
    const field_pair a{3, 3, 1.0, 0.5};
    const auto same = bkrc::error_field(a, a);
    for (double x : same.u.values()) EXPECT_EQ(x, 0.0);
    const auto d = bkrc::error_field(a, field_pair{3, 3, 0.75, 0.5});
    for (double x : d.u.values()) EXPECT_EQ(x, 0.25);

    const auto t = random_trajectory(3, 3, 1, 11).front(), p = random_trajectory(3, 3, 1, 12).front();
    const auto e = bkrc::error_field(t, p);
    for (std::size_t k = 0; k < 9; ++k) {
        EXPECT_EQ(e.u[k], std::abs(t.u[k] - p.u[k]));
        EXPECT_EQ(e.v[k], std::abs(t.v[k] - p.v[k]));
    }
    EXPECT_THROW(bkrc::error_field(t, field_pair{3, 4}), bkrc::dimension_error);
}

TEST(Contribution, BlockExtremes)
{
    const auto plan = bkrc::plan_dims(bkrc::hybrid_mode::output_hybrid, 3, 1);  // 6 reservoir + 2 KBM
    bkrc::readout r{Eigen::MatrixXd::Zero(2, 8)};
    r.w_out.leftCols(6).setConstant(0.5);
    auto c = bkrc::wout_contribution(r, plan);
    ASSERT_TRUE(c.u && c.v);
    EXPECT_EQ(c.u->reservoir, 1.0);
    EXPECT_EQ(c.u->kbm, 0.0);

    r.w_out.setZero();
    r.w_out.rightCols(2).setConstant(-2.0);
    c = bkrc::wout_contribution(r, plan);
    EXPECT_EQ(c.v->kbm, 1.0);

    r.w_out.setZero();
    c = bkrc::wout_contribution(r, plan);
    EXPECT_FALSE(c.u);
    EXPECT_FALSE(c.v);
}

TEST(Contribution, SharesSumToOneAndMatchOracle)
{
    const auto plan = bkrc::plan_dims(bkrc::hybrid_mode::full_hybrid, 4, 1);
    bkrc::readout r{Eigen::MatrixXd::Random(2, static_cast<Eigen::Index>(plan.h_dim))};
    const auto c = bkrc::wout_contribution(r, plan);
    for (int row = 0; row < 2; ++row) {
        double res = 0, all = 0;
        for (Eigen::Index k = 0; k < r.w_out.cols(); ++k) {
            all += std::abs(r.w_out(row, k));
            if (k < static_cast<Eigen::Index>(plan.reservoir_block)) res += std::abs(r.w_out(row, k));
        }
        const auto& s = row == 0 ? *c.u : *c.v;
        EXPECT_NEAR(s.reservoir, res / all, 1e-14);
        EXPECT_NEAR(s.reservoir + s.kbm, 1.0, 1e-12);
    }
}

TEST(Contribution, ActivityWeighting)
{
    const auto plan = bkrc::plan_dims(bkrc::hybrid_mode::output_hybrid, 1, 1);  // 2 + 2 columns
    bkrc::readout r{Eigen::MatrixXd::Ones(2, 4)};
    Eigen::VectorXd rms(4);
    rms << 1, 1, 3, 3;
    const auto c = bkrc::wout_contribution(r, plan, rms);
    EXPECT_NEAR(c.u->reservoir, 2.0 / 8.0, 1e-15);
}

TEST(Contribution, Errors)
{
    const auto none = bkrc::plan_dims(bkrc::hybrid_mode::none, 3, 1);
    EXPECT_THROW(bkrc::wout_contribution(bkrc::readout{Eigen::MatrixXd::Ones(2, 6)}, none), bkrc::invalid_argument);
    const auto oh = bkrc::plan_dims(bkrc::hybrid_mode::output_hybrid, 3, 1);
    EXPECT_THROW(bkrc::wout_contribution(bkrc::readout{Eigen::MatrixXd::Ones(2, 7)}, oh), bkrc::dimension_error);
}

}  // namespace
