#include <gtest/gtest.h>

#include <cmath>

#include "rsrank/estimate.hpp"

using namespace rsrank;

namespace {

ChoiceDataset random_choices(int n, int m, std::uint64_t seed) {
  Rng rng(seed);
  ChoiceDataset cds{Universe(n)};
  while (static_cast<int>(cds.size()) < m) {
    std::vector<Item> set;
    for (Item x = 0; x < n; ++x) {
      if (rng.uniform() < 0.6) set.push_back(x);
    }
    if (set.size() < 2) continue;
    const Item w = set[rng.below(set.size())];
    cds.add(w, set, 1 + static_cast<std::int64_t>(rng.below(3)));
  }
  return cds;
}

ModelParams random_params(ModelKind kind, int n, Rng& rng) {
  switch (kind) {
    case ModelKind::pl: {
      auto p = make_pl(n);
      for (double& x : p.theta) x = rng.normal();
      return p;
    }
    case ModelKind::crs_full: {
      auto p = make_crs_full(n);
      for (double& x : p.u) x = 0.5 * rng.normal();
      return p;
    }
    default: {
      auto p = make_crs_factor(n, 3);
      for (double& x : p.target.data) x = 0.7 * rng.normal();
      for (double& x : p.context.data) x = 0.7 * rng.normal();
      return p;
    }
  }
}

void expect_gradient_matches(const ModelParams& params, const ChoiceDataset& cds) {
  const auto g = flatten(nll_and_grad(params, cds).grad);
  auto flat = flatten(params);
  ModelParams probe = params;
  for (std::size_t j = 0; j < flat.size(); ++j) {
    const double keep = flat[j];
    flat[j] = keep + 1e-5;
    unflatten(flat, probe);
    const double up = nll(probe, cds);
    flat[j] = keep - 1e-5;
    unflatten(flat, probe);
    const double down = nll(probe, cds);
    flat[j] = keep;
    const double fd = (up - down) / 2e-5;
    EXPECT_LE(std::abs(fd - g[j]), 1e-6 * std::max(1.0, std::abs(g[j])))
        << "coordinate " << j << " analytic " << g[j] << " fd " << fd;
  }
}

}  // namespace

TEST(NllGrad, PairwiseExample) {
  ChoiceDataset cds{Universe(2)};
  cds.add(ChoiceObservation{0, {0, 1}});
  const auto r = nll_and_grad(make_pl(2), cds);
  EXPECT_NEAR(r.nll, std::log(2.0), 1e-15);
  const auto& g = std::get<PlParams>(r.grad).theta;
  EXPECT_NEAR(g[0], -0.5, 1e-15);
  EXPECT_NEAR(g[1], 0.5, 1e-15);
}

TEST(NllGrad, EmptyDatasetIsZero) {
  ChoiceDataset cds{Universe(4)};
  Rng rng(1);
  const auto r = nll_and_grad(random_params(ModelKind::crs_full, 4, rng), cds);
  EXPECT_EQ(r.nll, 0.0);
  for (double g : std::get<CrsFullParams>(r.grad).u) EXPECT_EQ(g, 0.0);
}

TEST(NllGrad, FiniteDifferences) {
  Rng rng(21);
  const auto cds = random_choices(5, 40, 8);
  for (auto kind : {ModelKind::pl, ModelKind::crs_full, ModelKind::crs_factor}) {
    for (int i = 0; i < 3; ++i) expect_gradient_matches(random_params(kind, 5, rng), cds);
  }
}

TEST(NllGrad, ThreadCountDoesNotChangeResult) {
  Rng rng(2);
  const auto cds = random_choices(6, 9000, 3);
  const auto p = random_params(ModelKind::crs_factor, 6, rng);
  const auto a = nll_and_grad(p, cds, 1);
  const auto b = nll_and_grad(p, cds, 3);
  EXPECT_EQ(a.nll, b.nll);
  EXPECT_EQ(flatten(a.grad), flatten(b.grad));
}

TEST(NllGrad, DimensionMismatch) {
  const auto cds = random_choices(4, 5, 1);
  EXPECT_THROW(nll(make_pl(5), cds), Error);
}

TEST(Nll, PlConvexAlongLines) {
  Rng rng(6);
  const auto cds = random_choices(5, 60, 4);
  for (int t = 0; t < 20; ++t) {
    const auto a = flatten(random_params(ModelKind::pl, 5, rng));
    const auto b = flatten(random_params(ModelKind::pl, 5, rng));
    std::vector<double> mid(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) mid[j] = 0.5 * (a[j] + b[j]);
    EXPECT_LE(nll(PlParams{mid}, cds),
              0.5 * nll(PlParams{a}, cds) + 0.5 * nll(PlParams{b}, cds) + 1e-12);
  }
}

TEST(Nll, ShiftInvariance) {
  Rng rng(8);
  const auto cds = random_choices(5, 30, 2);
  auto p = std::get<PlParams>(random_params(ModelKind::pl, 5, rng));
  auto q = p;
  for (double& x : q.theta) x += 3.25;
  EXPECT_NEAR(nll(p, cds), nll(q, cds), 1e-11);
  auto u = std::get<CrsFullParams>(random_params(ModelKind::crs_full, 5, rng));
  auto v = u;
  for (double& x : v.u) x -= 1.5;
  EXPECT_NEAR(nll(u, cds), nll(v, cds), 1e-11);
}

TEST(Fit, ZeroEpochsReturnsCenteredInit) {
  RankingDataset ds{Universe(3), {{{0, 1, 2}}, {{1, 0, 2}}}};
  FitConfig cfg;
  cfg.epochs = 0;
  const auto r = fit(ModelKind::pl, ds, cfg, ModelParams{PlParams{{1.0, 2.0, 3.0}}});
  EXPECT_EQ(std::get<PlParams>(r.final_params).theta, (std::vector<double>{-1.0, 0.0, 1.0}));
  EXPECT_TRUE(r.nll_trace.empty());
  EXPECT_EQ(r.epochs_run, 0);
}

TEST(Fit, RecoversPlParameters) {
  const PlParams truth{{1.0, 0.0, -1.0}};
  const auto ds = sample_rankings(truth, Universe(3), {2024, 1000});
  FitConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.final_learning_rate = 1e-4;
  cfg.epochs = 2000;
  const auto r = fit(ModelKind::pl, ds, cfg);
  const auto& est = std::get<PlParams>(r.final_params).theta;
  double err = 0.0;
  for (int i = 0; i < 3; ++i) err += (est[i] - truth.theta[i]) * (est[i] - truth.theta[i]);
  EXPECT_LE(std::sqrt(err), 0.15);
  EXPECT_NEAR(est[0] + est[1] + est[2], 0.0, 1e-12);
}

TEST(Fit, FullBatchTraceDecreases) {
  const auto ds = sample_rankings(PlParams{{0.5, 0.2, -0.1, -0.6}}, Universe(4), {1, 300});
  FitConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 50;
  const auto r = fit(ModelKind::crs_full, ds, cfg);
  ASSERT_EQ(r.nll_trace.size(), 50u);
  for (std::size_t i = 1; i < r.nll_trace.size(); ++i) {
    EXPECT_LE(r.nll_trace[i], r.nll_trace[i - 1] + 1e-9);
  }
}

TEST(Fit, MiniBatchDeterministicPerSeed) {
  const auto ds = sample_rankings(PlParams{{0.5, 0.2, -0.1, -0.6}}, Universe(4), {1, 100});
  FitConfig cfg;
  cfg.batch_size = 7;
  cfg.epochs = 3;
  cfg.rank = 2;
  cfg.seed = 5;
  const auto a = fit(ModelKind::crs_factor, ds, cfg);
  const auto b = fit(ModelKind::crs_factor, ds, cfg);
  EXPECT_EQ(flatten(a.final_params), flatten(b.final_params));
  EXPECT_EQ(a.nll_trace.size(), 3u);
  cfg.seed = 6;
  const auto c = fit(ModelKind::crs_factor, ds, cfg);
  EXPECT_NE(flatten(a.final_params), flatten(c.final_params));
}

TEST(Fit, EarlyStopping) {
  const auto ds = sample_rankings(PlParams{{0.5, -0.5}}, Universe(2), {1, 200});
  FitConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 5000;
  cfg.gradient_tolerance = 1e-8;
  const auto r = fit(ModelKind::pl, ds, cfg);
  EXPECT_LT(r.epochs_run, 5000);
  EXPECT_EQ(static_cast<int>(r.nll_trace.size()), r.epochs_run);
}

TEST(Fit, DivergenceNamesEpoch) {
  const auto ds = sample_rankings(PlParams{{0.5, -0.5, 0.0}}, Universe(3), {1, 50});
  FitConfig cfg;
  cfg.epochs = 20;
  auto init = make_crs_full(3);
  init.u.assign(init.u.size(), 1e308);
  try {
    fit(ModelKind::crs_full, ds, cfg, ModelParams{init});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::diverged);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Fit, ConfigValidation) {
  RankingDataset ds{Universe(3), {{{0, 1, 2}}}};
  FitConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(fit(ModelKind::pl, ds, cfg), Error);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(fit(ModelKind::pl, ds, cfg), Error);
  cfg = {};
  EXPECT_THROW(fit(ModelKind::crs_factor, ds, cfg), Error);
}

TEST(Fit, GaugeIndifferentFitMatchesCenteredStart) {
  const auto ds = sample_rankings(PlParams{{0.4, 0.1, -0.5}}, Universe(3), {3, 200});
  FitConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.epochs = 3000;
  cfg.final_learning_rate = 1e-5;
  const auto a = fit(ModelKind::pl, ds, cfg);
  const auto b = fit(ModelKind::pl, ds, cfg, ModelParams{PlParams{{2.0, 2.0, 2.0}}});
  const auto& x = std::get<PlParams>(a.final_params).theta;
  const auto& y = std::get<PlParams>(b.final_params).theta;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(x[i], y[i], 1e-6);
}

TEST(Mga, Examples) {
  RankingDataset unanimous{Universe(4), {{{2, 0, 3, 1}, 7}}};
  EXPECT_EQ(mga_reference(unanimous), (std::vector<Item>{2, 0, 3, 1}));
  RankingDataset majority{Universe(2), {{{0, 1}, 3}, {{1, 0}, 2}}};
  EXPECT_EQ(mga_reference(majority), (std::vector<Item>{0, 1}));
  RankingDataset cycle{Universe(3), {{{0, 1, 2}}, {{1, 2, 0}}, {{2, 0, 1}}}};
  EXPECT_EQ(mga_reference(cycle), (std::vector<Item>{0, 1, 2}));
}

TEST(Mga, TopKCountsUnrankedBelow) {
  RankingDataset ds{Universe(4), {{{3}, 2}, {{1, 0, 2, 3}}}};
  EXPECT_EQ(mga_reference(ds).front(), 3);
}

TEST(FitMallows, IdenticalRankingsSaturate) {
  RankingDataset ds{Universe(4), {{{0, 1, 2, 3}, 100}}};
  const auto r = fit_mallows(ds);
  const auto& m = std::get<MallowsParams>(r.final_params);
  EXPECT_EQ(m.reference, (std::vector<Item>{0, 1, 2, 3}));
  EXPECT_GE(m.concentration, 5.0);
}

TEST(FitMallows, SingleRankingIsReference) {
  RankingDataset ds{Universe(5), {{{3, 1, 4, 0, 2}}}};
  EXPECT_EQ(std::get<MallowsParams>(fit_mallows(ds).final_params).reference,
            (std::vector<Item>{3, 1, 4, 0, 2}));
}

TEST(FitMallows, RecoversConcentration) {
  const auto ds =
      sample_rankings(MallowsParams{{0, 1, 2, 3, 4}, 1.0}, Universe(5), {77, 2000});
  const auto r = fit(ModelKind::mallows, ds, FitConfig{});
  const auto& m = std::get<MallowsParams>(r.final_params);
  EXPECT_EQ(m.reference, (std::vector<Item>{0, 1, 2, 3, 4}));
  EXPECT_NEAR(m.concentration, 1.0, 0.1);
}

TEST(FitMallows, GridSweepAgrees) {
  const auto ds =
      sample_rankings(MallowsParams{{2, 0, 1, 3}, 0.6}, Universe(4), {5, 300});
  const auto r = fit_mallows(ds);
  const auto& m = std::get<MallowsParams>(r.final_params);
  const auto stats = mallows_stats(ds, m.reference);
  double best = stats.nll(m.concentration);
  for (int i = 0; i <= 2000; ++i) {
    EXPECT_GE(stats.nll(i * 0.01) + 1e-9, best);
  }
  double direct = 0.0;
  for (const auto& rk : ds.rankings) {
    direct -= static_cast<double>(rk.weight) * ranking_logprob(m, rk);
  }
  EXPECT_NEAR(direct, best, 1e-8 * std::abs(best));
}

TEST(FitMallows, NllConvexInConcentration) {
  const auto ds =
      sample_rankings(MallowsParams{{0, 1, 2, 3, 4}, 0.3}, Universe(5), {9, 200});
  const std::vector<Item> ref{0, 1, 2, 3, 4};
  const auto stats = mallows_stats(ds, ref);
  for (double t = 0.05; t < 10.0; t += 0.05) {
    EXPECT_LE(stats.nll(t), 0.5 * (stats.nll(t - 0.05) + stats.nll(t + 0.05)) + 1e-9);
  }
}
