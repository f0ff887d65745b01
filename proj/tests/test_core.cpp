#include <gtest/gtest.h>

#include <set>

#include "rsrank/core.hpp"
#include "rsrank/rng.hpp"

using namespace rsrank;

TEST(Universe, RejectsTinyAndMislabeled) {
  EXPECT_THROW(Universe(1), Error);
  EXPECT_THROW(Universe(3, {"a", "b"}), Error);
  EXPECT_NO_THROW(Universe(3, {"a", "b", "c"}));
}

TEST(PairIndex, BijectionOntoRange) {
  for (int n = 2; n <= 7; ++n) {
    std::set<std::size_t> seen;
    for (Item x = 0; x < n; ++x) {
      for (Item z = 0; z < n; ++z) {
        if (x == z) continue;
        const auto idx = pair_index(x, z, n);
        EXPECT_LT(idx, static_cast<std::size_t>(n * (n - 1)));
        EXPECT_TRUE(seen.insert(idx).second);
        EXPECT_EQ(pair_from_index(idx, n), std::make_pair(x, z));
      }
    }
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(n * (n - 1)));
  }
}

TEST(PairIndex, RowMajorWithDiagonalRemoved) {
  EXPECT_EQ(pair_index(0, 1, 4), 0u);
  EXPECT_EQ(pair_index(1, 0, 4), 3u);
  EXPECT_EQ(pair_index(1, 2, 4), 4u);
  EXPECT_EQ(pair_index(3, 2, 4), 11u);
}

TEST(PairIndex, RejectsDiagonalAndRange) {
  try {
    pair_index(2, 2, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_pair);
  }
  EXPECT_THROW(pair_index(0, 4, 4), Error);
  EXPECT_THROW(pair_index(-1, 0, 4), Error);
}

TEST(ModelKind, RoundTrip) {
  for (auto k : {ModelKind::pl, ModelKind::crs_full, ModelKind::crs_factor,
                 ModelKind::mallows}) {
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  }
  EXPECT_EQ(parse_model_kind("crs_full"), ModelKind::crs_full);
  EXPECT_THROW(parse_model_kind("nope"), Error);
}

TEST(Center, ZeroMean) {
  std::vector<double> v{1.0, 2.0, 6.0};
  center(v);
  EXPECT_NEAR(v[0] + v[1] + v[2], 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(v[0], -2.0);
}

TEST(InducedFull, MatchesDotProducts) {
  auto f = make_crs_factor(4, 2);
  Rng rng(3);
  for (double& x : f.target.data) x = rng.normal();
  for (double& x : f.context.data) x = rng.normal();
  const auto full = induced_full(f);
  for (Item x = 0; x < 4; ++x) {
    for (Item z = 0; z < 4; ++z) {
      if (x == z) continue;
      double dot = 0.0;
      for (int k = 0; k < 2; ++k) dot += f.context(z, k) * f.target(x, k);
      EXPECT_DOUBLE_EQ(full.u[pair_index(x, z, 4)], dot);
    }
  }
}

TEST(CheckParams, RejectsBadShapes) {
  EXPECT_NO_THROW(check_params(make_pl(3)));
  CrsFullParams bad{3, std::vector<double>(5, 0.0)};
  EXPECT_THROW(check_params(bad), Error);
  MallowsParams m{{0, 0, 1}, 1.0};
  EXPECT_THROW(check_params(m), Error);
  MallowsParams neg{{0, 1, 2}, -1.0};
  EXPECT_THROW(check_params(neg), Error);
  PlParams nan{{0.0, std::nan("")}};
  EXPECT_THROW(check_params(nan), Error);
}

TEST(ValidateDataset, ReportsEachViolation) {
  RankingDataset ds{Universe(4), {{{0, 1, 2, 3}}, {{0, 0, 1}}, {{1, 7}}, {{2, 1}}}};
  const auto report = validate_dataset(ds);
  ASSERT_EQ(report.violations.size(), 2u);
  EXPECT_EQ(report.violations[0].ranking_index, 1u);
  EXPECT_NE(report.violations[0].message.find("duplicate item"), std::string::npos);
  EXPECT_EQ(report.violations[1].ranking_index, 2u);
  EXPECT_NE(report.violations[1].message.find("index out of range"), std::string::npos);
  EXPECT_FALSE(report.ok());
  EXPECT_THROW(require_valid(ds), Error);
}

TEST(ValidateDataset, EmptyDataset) {
  RankingDataset ds{Universe(3), {}};
  const auto report = validate_dataset(ds);
  EXPECT_FALSE(report.ok());
  EXPECT_NE(report.violations.at(0).message.find("empty dataset"), std::string::npos);
}

TEST(Rng, DeterministicAndUniformRange) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs |= x != c.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, TruncatedNormalBounded) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) EXPECT_LE(std::abs(r.truncated_normal(1.5)), 1.5);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(5);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(v);
  std::vector<int> s = v;
  std::sort(s.begin(), s.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(s[i], i);
}

TEST(Rng, JobSeedsDistinct) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(job_seed(7, i));
  EXPECT_EQ(seeds.size(), 1000u);
}
