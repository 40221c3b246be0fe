#include <bkrc/field.hpp>
#include <bkrc/parallel.hpp>
#include <bkrc/random.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <stdexcept>
#include <vector>

namespace {

TEST(Grid2d, RowMajorStorage)
{
    bkrc::grid2d g{3, 2};
    g(2, 1) = 7.0;
    EXPECT_EQ(g[1 * 3 + 2], 7.0);
    EXPECT_EQ(g.size(), 6u);
}

TEST(Grid2d, PopulationStatistics)
{
    bkrc::grid2d g{2, 2};
    const double xs[] = {1.0, 2.0, 3.0, 4.0};
    for (std::size_t k = 0; k < 4; ++k) g[k] = xs[k];
    EXPECT_DOUBLE_EQ(g.sum(), 10.0);
    EXPECT_DOUBLE_EQ(g.mean(), 2.5);
    EXPECT_DOUBLE_EQ(g.variance(), 1.25);
}

TEST(FieldPair, RejectsMismatchedShapes)
{
    EXPECT_THROW((bkrc::field_pair{bkrc::grid2d{3, 3}, bkrc::grid2d{3, 4}}), bkrc::dimension_error);
}

TEST(FieldPair, FiniteCheck)
{
    bkrc::field_pair s{3, 3};
    EXPECT_TRUE(s.all_finite());
    s.v(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(s.all_finite());
}

TEST(Random, DerivedSeedsDependOnTagsOnly)
{
    EXPECT_EQ(bkrc::derive_seed(5, {1, 2}), bkrc::derive_seed(5, {1, 2}));
    EXPECT_NE(bkrc::derive_seed(5, {1, 2}), bkrc::derive_seed(5, {2, 1}));
    EXPECT_NE(bkrc::derive_seed(5, {1}), bkrc::derive_seed(6, {1}));
}

TEST(ParallelFor, VisitsEveryIndexOnce)
{
    for (std::size_t threads : {1u, 3u, 8u}) {
        std::vector<std::atomic<int>> hits(101);
        bkrc::parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
        for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
}

TEST(ParallelFor, PropagatesExceptions)
{
    EXPECT_THROW(bkrc::parallel_for(50, 4,
                                    [](std::size_t i) {
                                        if (i == 37) throw std::runtime_error{"boom"};
                                    }),
                 std::runtime_error);
}

}  // namespace
