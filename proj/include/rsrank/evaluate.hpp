#pragma once

// Out-of-sample evaluation: k-fold cross-validation, position-level
// log-likelihood profiles, and the parameter-recovery (squared l2 risk)
// simulations used to check convergence rates.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "rsrank/core.hpp"
#include "rsrank/decompose.hpp"
#include "rsrank/estimate.hpp"
#include "rsrank/models.hpp"
#include "rsrank/rng.hpp"

namespace rsrank {

namespace detail {

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, count) on up to `threads` workers. The first
/// exception thrown by any job is rethrown after all workers finish.
template <class Job>
void parallel_for(std::size_t count, unsigned threads, Job&& job) {
  const unsigned workers =
      std::max(1u, std::min<unsigned>(resolve_threads(threads),
                                      static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Position-level log-likelihood

struct PositionStat {
  double mean_log_likelihood = 0.0;
  std::int64_t count = 0;
};

/// Entry k-1 holds position k. Each position is averaged over the test
/// rankings long enough to reach it.
struct PositionProfile {
  std::vector<PositionStat> per_position;
};

class PositionAccumulator {
 public:
  explicit PositionAccumulator(int n)
      : sums_(static_cast<std::size_t>(n - 1), 0.0),
        counts_(static_cast<std::size_t>(n - 1), 0) {}

  void add(const StageKernel& kernel, const RankingDataset& test) {
    for (const auto& r : test.rankings) {
      for_each_stage(r, test.universe.n,
                     [&](std::size_t stage, Item winner, std::span<const Item> set) {
                       sums_[stage] += static_cast<double>(r.weight) *
                                       kernel.log_prob(winner, set);
                       counts_[stage] += r.weight;
                     });
    }
  }

  PositionProfile profile() const {
    PositionProfile p;
    for (std::size_t k = 0; k < sums_.size(); ++k) {
      p.per_position.push_back(
          {counts_[k] > 0 ? sums_[k] / static_cast<double>(counts_[k]) : 0.0,
           counts_[k]});
    }
    return p;
  }

 private:
  std::vector<double> sums_;
  std::vector<std::int64_t> counts_;
};

inline PositionProfile position_profile(const ModelParams& params,
                                        const RankingDataset& test) {
  require_valid(test);
  if (universe_size(params) != test.universe.n) {
    throw Error(ErrorKind::invalid_params, "parameters do not match test universe");
  }
  PositionAccumulator acc(test.universe.n);
  acc.add(StageKernel(params), test);
  return acc.profile();
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CVResult {
  ModelKind model_kind = ModelKind::pl;
  int folds = 0;
  double mean_test_nll_per_ranking = 0.0;
  double sem = 0.0;
  std::vector<double> per_fold_nll;
  PositionProfile position_profile;  // pooled over all test folds
};

/// Fold index of each expanded (unit-weight) ranking. Rankings are expanded
/// in dataset order, shuffled with `seed`, and dealt round-robin, so fold
/// sizes differ by at most one.
inline std::vector<int> fold_assignment(const RankingDataset& ds, int folds,
                                        std::uint64_t seed) {
  const auto total = static_cast<std::size_t>(ds.total_weight());
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> fold(total);
  for (std::size_t pos = 0; pos < total; ++pos) {
    fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  }
  return fold;
}

inline FitReport fit_any(ModelKind kind, const RankingDataset& ds, const FitConfig& cfg) {
  return kind == ModelKind::mallows ? fit_mallows(ds) : fit(kind, ds, cfg);
}

inline CVResult kfold_eval(const RankingDataset& ds, ModelKind kind, int folds,
                           const FitConfig& cfg, std::uint64_t seed,
                           unsigned threads = 1) {
  require_valid(ds);
  if (folds < 2) throw Error(ErrorKind::invalid_argument, "need at least 2 folds");
  if (folds > ds.total_weight()) {
    throw Error(ErrorKind::invalid_argument,
                "more folds (" + std::to_string(folds) + ") than rankings (" +
                    std::to_string(ds.total_weight()) + ")");
  }
  std::vector<const Ranking*> expanded;
  for (const auto& r : ds.rankings) {
    for (std::int64_t c = 0; c < r.weight; ++c) expanded.push_back(&r);
  }
  const auto assignment = fold_assignment(ds, folds, seed);

  std::vector<RankingDataset> train(static_cast<std::size_t>(folds),
                                    RankingDataset{ds.universe, {}});
  std::vector<RankingDataset> test = train;
  for (std::size_t i = 0; i < expanded.size(); ++i) {
    const Ranking unit{expanded[i]->items, 1};
    for (int f = 0; f < folds; ++f) {
      (f == assignment[i] ? test : train)[static_cast<std::size_t>(f)].rankings.push_back(unit);
    }
  }

  CVResult result;
  result.model_kind = kind;
  result.folds = folds;
  result.per_fold_nll.assign(static_cast<std::size_t>(folds), 0.0);
  std::vector<ModelParams> fitted(static_cast<std::size_t>(folds));
  detail::parallel_for(static_cast<std::size_t>(folds), threads, [&](std::size_t f) {
    FitConfig fold_cfg = cfg;
    fold_cfg.seed = job_seed(cfg.seed, f);
    fitted[f] = fit_any(kind, train[f], fold_cfg).final_params;
    const StageKernel kernel(fitted[f]);
    double total = 0.0;
    for (const auto& r : test[f].rankings) total += ranking_logprob(kernel, r);
    result.per_fold_nll[f] = -total / static_cast<double>(test[f].rankings.size());
  });

  PositionAccumulator pooled(ds.universe.n);
  for (std::size_t f = 0; f < fitted.size(); ++f) {
    pooled.add(StageKernel(fitted[f]), test[f]);
  }
  result.position_profile = pooled.profile();

  double mean = 0.0;
  for (double v : result.per_fold_nll) mean += v;
  mean /= folds;
  double ss = 0.0;
  for (double v : result.per_fold_nll) ss += (v - mean) * (v - mean);
  result.mean_test_nll_per_ranking = mean;
  result.sem = std::sqrt(ss / (folds - 1)) / std::sqrt(static_cast<double>(folds));
  return result;
}

// ---------------------------------------------------------------------------
// Risk simulations

struct RiskExperimentConfig {
  ModelKind model_kind = ModelKind::pl;
  std::vector<int> n_grid{6};
  std::optional<int> rank;
  double b = 1.5;
  std::vector<std::size_t> ell_grid;
  int trials = 20;
  std::uint64_t seed = 0;
  FitConfig fit_cfg;
  unsigned threads = 0;  // 0 = hardware concurrency

  void validate() const {
    if (model_kind == ModelKind::mallows) {
      throw Error(ErrorKind::unsupported, "risk experiments cover pl and crs models");
    }
    if (model_kind == ModelKind::crs_factor && !rank) {
      throw Error(ErrorKind::invalid_argument, "crs-factor experiments need a rank");
    }
    if (trials < 1) throw Error(ErrorKind::invalid_argument, "trials must be >= 1");
    if (ell_grid.empty() || n_grid.empty()) {
      throw Error(ErrorKind::invalid_argument, "empty n or ell grid");
    }
    for (std::size_t i = 0; i < ell_grid.size(); ++i) {
      if (ell_grid[i] < 1 || (i > 0 && ell_grid[i] <= ell_grid[i - 1])) {
        throw Error(ErrorKind::invalid_argument,
                    "ell grid must be positive and strictly increasing");
      }
    }
    for (int n : n_grid) {
      if (n < 2) throw Error(ErrorKind::invalid_argument, "n must be >= 2");
    }
    if (!(b > 0.0)) throw Error(ErrorKind::invalid_argument, "B must be positive");
  }
};

struct RiskRow {
  int n = 0;
  std::size_t ell = 0;
  int trial = 0;
  double squared_l2_risk = 0.0;
};

/// Ground-truth parameters inside the B-ball.
///  pl: entries are standard normals redrawn until |x| <= B, then centered.
///  crs-full: entries drawn the same way; any row of u whose l1 norm exceeds
///    B is rescaled onto the l1 sphere of radius B; finally centered.
///  crs-factor: T and C drawn the same way; whenever a row of the induced u
///    exceeds l1 norm B, the corresponding row of T is rescaled.
inline ModelParams draw_ground_truth(ModelKind kind, int n, std::optional<int> rank,
                                     double b, Rng& rng) {
  switch (kind) {
    case ModelKind::pl: {
      PlParams p = make_pl(n);
      for (double& x : p.theta) x = rng.truncated_normal(b);
      center(p.theta);
      return p;
    }
    case ModelKind::crs_full: {
      CrsFullParams p = make_crs_full(n);
      for (double& x : p.u) x = rng.truncated_normal(b);
      const auto row = static_cast<std::size_t>(n - 1);
      for (std::size_t x = 0; x < static_cast<std::size_t>(n); ++x) {
        double l1 = 0.0;
        for (std::size_t j = 0; j < row; ++j) l1 += std::abs(p.u[x * row + j]);
        if (l1 > b) {
          for (std::size_t j = 0; j < row; ++j) p.u[x * row + j] *= b / l1;
        }
      }
      center(p.u);
      return p;
    }
    case ModelKind::crs_factor: {
      CrsFactorParams p = make_crs_factor(n, rank.value_or(1));
      for (double& x : p.target.data) x = rng.truncated_normal(b);
      for (double& x : p.context.data) x = rng.truncated_normal(b);
      const auto induced = induced_full(p);
      const auto row = static_cast<std::size_t>(n - 1);
      for (std::size_t x = 0; x < static_cast<std::size_t>(n); ++x) {
        double l1 = 0.0;
        for (std::size_t j = 0; j < row; ++j) l1 += std::abs(induced.u[x * row + j]);
        if (l1 > b) {
          for (std::size_t d = 0; d < p.target.cols; ++d) p.target(x, d) *= b / l1;
        }
      }
      return p;
    }
    case ModelKind::mallows: break;
  }
  throw Error(ErrorKind::unsupported, "no ground-truth generator for mallows");
}

/// The identified parameter vector of a model: centered theta for PL,
/// centered u for full CRS, centered induced u for factorized CRS.
inline std::vector<double> identified_vector(const ModelParams& params) {
  std::vector<double> v;
  if (const auto* pl = std::get_if<PlParams>(&params)) v = pl->theta;
  else if (const auto* full = std::get_if<CrsFullParams>(&params)) v = full->u;
  else if (const auto* f = std::get_if<CrsFactorParams>(&params)) v = induced_full(*f).u;
  else throw Error(ErrorKind::unsupported, "mallows has no identified vector");
  center(v);
  return v;
}

inline double squared_l2_distance(const ModelParams& a, const ModelParams& b) {
  const auto va = identified_vector(a);
  const auto vb = identified_vector(b);
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += (va[i] - vb[i]) * (va[i] - vb[i]);
  return s;
}

/// For each (n, trial): draw a ground truth, sample max(ell_grid) rankings,
/// and fit each prefix in turn (warm-started from the previous prefix),
/// recording the squared l2 distance between identified parameters.
/// Job (n index, trial) is seeded by job_seed(seed, job), so the table does
/// not depend on scheduling.
inline std::vector<RiskRow> risk_experiment(const RiskExperimentConfig& cfg) {
  cfg.validate();
  const std::size_t jobs = cfg.n_grid.size() * static_cast<std::size_t>(cfg.trials);
  const std::size_t per_job = cfg.ell_grid.size();
  std::vector<RiskRow> rows(jobs * per_job);
  FitConfig fit_cfg = cfg.fit_cfg;
  if (cfg.model_kind == ModelKind::crs_factor) fit_cfg.rank = cfg.rank;

  detail::parallel_for(jobs, cfg.threads, [&](std::size_t job) {
    const int n = cfg.n_grid[job / static_cast<std::size_t>(cfg.trials)];
    const int trial = static_cast<int>(job % static_cast<std::size_t>(cfg.trials));
    const std::uint64_t seed = job_seed(cfg.seed, job);
    Rng rng(seed);
    const ModelParams truth = draw_ground_truth(cfg.model_kind, n, cfg.rank, cfg.b, rng);
    const Universe universe(n);
    const RankingDataset all = sample_rankings(
        truth, universe, SampleConfig{mix_seed(seed), cfg.ell_grid.back()});

    FitConfig job_cfg = fit_cfg;
    job_cfg.seed = mix_seed(seed + 1);
    std::optional<ModelParams> warm;
    for (std::size_t e = 0; e < per_job; ++e) {
      const std::size_t ell = cfg.ell_grid[e];
      RankingDataset prefix{universe,
                            std::vector<Ranking>(all.rankings.begin(),
                                                 all.rankings.begin() +
                                                     static_cast<std::ptrdiff_t>(ell))};
      FitReport report = fit(cfg.model_kind, prefix, job_cfg, warm);
      rows[job * per_job + e] = {n, ell, trial,
                                 squared_l2_distance(report.final_params, truth)};
      warm = std::move(report.final_params);
    }
  });
  return rows;
}

struct BundleStats {
  int n = 0;
  std::size_t ell = 0;
  int trials = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double max = 0.0;
  double max_over_median = 0.0;
};

/// Spread of the risk across trials for each (n, ell).
inline std::vector<BundleStats> tail_bundle_stats(const std::vector<RiskRow>& table,
                                                  int min_trials = 10) {
  std::map<std::pair<int, std::size_t>, std::vector<double>> groups;
  for (const auto& r : table) groups[{r.n, r.ell}].push_back(r.squared_l2_risk);
  std::vector<BundleStats> out;
  for (auto& [key, values] : groups) {
    if (static_cast<int>(values.size()) < min_trials) {
      throw Error(ErrorKind::invalid_argument,
                  "bundle statistics need at least " + std::to_string(min_trials) +
                      " trials per (n, ell); got " + std::to_string(values.size()));
    }
    std::sort(values.begin(), values.end());
    BundleStats s;
    s.n = key.first;
    s.ell = key.second;
    s.trials = static_cast<int>(values.size());
    s.median = detail::quantile_sorted(values, 0.5);
    s.q1 = detail::quantile_sorted(values, 0.25);
    s.q3 = detail::quantile_sorted(values, 0.75);
    s.iqr = s.q3 - s.q1;
    s.max = values.back();
    s.max_over_median = s.median > 0.0 ? s.max / s.median : 1.0;
    out.push_back(s);
  }
  return out;
}

/// Least-squares slope of log(y) against log(x).
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto k = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

}  // namespace rsrank
