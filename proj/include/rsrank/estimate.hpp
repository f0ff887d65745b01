#pragma once

// Maximum-likelihood fitting. PL and CDM-family models are fit with Adam on
// the choice-decomposition negative log-likelihood; Mallows is fit with the
// greedy reference permutation followed by a 1-D concentration search.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "rsrank/core.hpp"
#include "rsrank/decompose.hpp"
#include "rsrank/models.hpp"
#include "rsrank/rng.hpp"

namespace rsrank {

struct FitConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 10;
  std::optional<std::size_t> batch_size;  // nullopt = full batch
  std::uint64_t seed = 0;
  double init_scale = 0.1;
  std::optional<int> rank;  // factorized CRS only
  // When set, the step size decays geometrically from learning_rate to this
  // value over the run.
  std::optional<double> final_learning_rate;
  // Full-batch only: stop once max |gradient of the mean NLL| falls below
  // this value. Zero disables early stopping.
  double gradient_tolerance = 0.0;
  // Worker threads for objective evaluation. Results do not depend on it.
  unsigned threads = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) {
      throw Error(ErrorKind::invalid_argument, "learning rate must be positive");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
      throw Error(ErrorKind::invalid_argument, "Adam betas must lie in (0, 1)");
    }
    if (epochs < 0) throw Error(ErrorKind::invalid_argument, "epochs must be >= 0");
    if (batch_size && *batch_size == 0) {
      throw Error(ErrorKind::invalid_argument, "batch size must be positive");
    }
    if (init_scale < 0.0) {
      throw Error(ErrorKind::invalid_argument, "init scale must be >= 0");
    }
    if (rank && *rank < 1) {
      throw Error(ErrorKind::invalid_argument, "rank must be >= 1");
    }
  }
};

struct FitReport {
  ModelParams final_params;
  double train_nll_per_ranking = 0.0;
  double train_nll_per_choice = 0.0;
  int epochs_run = 0;
  std::vector<double> nll_trace;  // full-data NLL after each epoch
  double wall_time_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// Flat parameter layout shared by the objective and the optimizer.
// PL: theta. CRS full: u. CRS factor: T row-major followed by C row-major.

inline std::vector<double> flatten(const ModelParams& params) {
  return std::visit(
      [](const auto& m) -> std::vector<double> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PlParams>) {
          return m.theta;
        } else if constexpr (std::is_same_v<T, CrsFullParams>) {
          return m.u;
        } else if constexpr (std::is_same_v<T, CrsFactorParams>) {
          std::vector<double> out = m.target.data;
          out.insert(out.end(), m.context.data.begin(), m.context.data.end());
          return out;
        } else {
          throw Error(ErrorKind::unsupported,
                      "mallows parameters have no gradient layout");
        }
      },
      params);
}

/// Writes `flat` back into params of the same shape.
inline void unflatten(std::span<const double> flat, ModelParams& params) {
  std::visit(
      [&](auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PlParams>) {
          m.theta.assign(flat.begin(), flat.end());
        } else if constexpr (std::is_same_v<T, CrsFullParams>) {
          m.u.assign(flat.begin(), flat.end());
        } else if constexpr (std::is_same_v<T, CrsFactorParams>) {
          const std::size_t half = m.target.data.size();
          std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(half),
                    m.target.data.begin());
          std::copy(flat.begin() + static_cast<std::ptrdiff_t>(half), flat.end(),
                    m.context.data.begin());
        }
      },
      params);
}

namespace detail {

/// Adds the weighted NLL of observation `obs` and its gradient into `grad`.
/// `scratch` holds per-member utilities and, for the factor model, r-vectors.
struct ObjectiveScratch {
  std::vector<double> util;
  std::vector<double> context_sum;
  std::vector<double> weighted_target;
};

inline double add_observation(ModelKind kind, int n, int rank,
                              std::span<const double> p, const ChoiceView& obs,
                              std::span<double> grad, ObjectiveScratch& s) {
  const auto set = obs.choice_set;
  const std::size_t k = set.size();
  const auto w = static_cast<double>(obs.weight);
  s.util.assign(k, 0.0);
  const auto r = static_cast<std::size_t>(rank);

  switch (kind) {
    case ModelKind::pl:
      for (std::size_t i = 0; i < k; ++i) s.util[i] = p[set[i]];
      break;
    case ModelKind::crs_full:
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t row = static_cast<std::size_t>(set[i]) * (n - 1);
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          if (j == i) continue;
          acc += p[row + static_cast<std::size_t>(set[j] < set[i] ? set[j] : set[j] - 1)];
        }
        s.util[i] = acc;
      }
      break;
    case ModelKind::crs_factor: {
      const double* target = p.data();
      const double* context = p.data() + static_cast<std::size_t>(n) * r;
      s.context_sum.assign(r, 0.0);
      for (Item z : set) {
        for (std::size_t d = 0; d < r; ++d) s.context_sum[d] += context[z * r + d];
      }
      for (std::size_t i = 0; i < k; ++i) {
        const double* t = target + set[i] * r;
        const double* c = context + set[i] * r;
        double acc = 0.0;
        for (std::size_t d = 0; d < r; ++d) acc += t[d] * (s.context_sum[d] - c[d]);
        s.util[i] = acc;
      }
      break;
    }
    case ModelKind::mallows:
      throw Error(ErrorKind::unsupported, "mallows has no gradient objective");
  }

  const double lse = log_sum_exp(s.util);
  std::size_t win = 0;
  while (set[win] != obs.winner) ++win;
  const double nll = w * (lse - s.util[win]);
  if (grad.empty()) return nll;

  // Residuals d(nll)/d(utility_i) = w (p_i - [i == winner]), reused in place.
  for (std::size_t i = 0; i < k; ++i) {
    s.util[i] = w * (std::exp(s.util[i] - lse) - (i == win ? 1.0 : 0.0));
  }

  switch (kind) {
    case ModelKind::pl:
      for (std::size_t i = 0; i < k; ++i) grad[set[i]] += s.util[i];
      break;
    case ModelKind::crs_full:
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t row = static_cast<std::size_t>(set[i]) * (n - 1);
        for (std::size_t j = 0; j < k; ++j) {
          if (j == i) continue;
          grad[row + static_cast<std::size_t>(set[j] < set[i] ? set[j] : set[j] - 1)] +=
              s.util[i];
        }
      }
      break;
    case ModelKind::crs_factor: {
      const double* target = p.data();
      const double* context = p.data() + static_cast<std::size_t>(n) * r;
      double* g_target = grad.data();
      double* g_context = grad.data() + static_cast<std::size_t>(n) * r;
      s.weighted_target.assign(r, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        const double* t = target + set[i] * r;
        for (std::size_t d = 0; d < r; ++d) s.weighted_target[d] += s.util[i] * t[d];
      }
      for (std::size_t i = 0; i < k; ++i) {
        const double* t = target + set[i] * r;
        const double* c = context + set[i] * r;
        double* gt = g_target + set[i] * r;
        double* gc = g_context + set[i] * r;
        for (std::size_t d = 0; d < r; ++d) {
          gt[d] += s.util[i] * (s.context_sum[d] - c[d]);
          gc[d] += s.weighted_target[d] - s.util[i] * t[d];
        }
      }
      break;
    }
    case ModelKind::mallows:
      break;
  }
  return nll;
}

inline constexpr std::size_t kChunk = 2048;

/// Weighted NLL and gradient over the observations in `index` (all of them
/// when `index` is empty). Partial sums are formed over fixed-size chunks and
/// combined in chunk order, so the result is independent of `threads`.
inline double objective(ModelKind kind, int n, int rank, std::span<const double> p,
                        const ChoiceDataset& cds,
                        std::span<const std::size_t> index, std::span<double> grad,
                        unsigned threads) {
  const std::size_t count = index.empty() ? cds.size() : index.size();
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  std::fill(grad.begin(), grad.end(), 0.0);
  if (chunks == 0) return 0.0;

  std::vector<double> chunk_nll(chunks, 0.0);
  std::vector<std::vector<double>> chunk_grad(
      chunks, std::vector<double>(grad.empty() ? 0 : grad.size(), 0.0));

  auto run_chunk = [&](std::size_t c) {
    ObjectiveScratch scratch;
    const std::size_t lo = c * kChunk;
    const std::size_t hi = std::min(count, lo + kChunk);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t obs = index.empty() ? i : index[i];
      acc += add_observation(kind, n, rank, p, cds[obs], chunk_grad[c], scratch);
    }
    chunk_nll[c] = acc;
  };

  const unsigned workers =
      std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(chunks)));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < chunks; c += workers) run_chunk(c);
      });
    }
    for (auto& th : pool) th.join();
  }

  double nll = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    nll += chunk_nll[c];
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += chunk_grad[c][j];
  }
  return nll;
}

inline int factor_rank(const ModelParams& params) {
  if (const auto* f = std::get_if<CrsFactorParams>(&params)) return f->rank();
  return 0;
}

inline void check_dimensions(const ModelParams& params, const ChoiceDataset& cds) {
  check_params(params);
  if (universe_size(params) != cds.n()) {
    throw Error(ErrorKind::invalid_params,
                "parameters are dimensioned for n=" +
                    std::to_string(universe_size(params)) + " but data has n=" +
                    std::to_string(cds.n()));
  }
}

}  // namespace detail

struct NllGrad {
  double nll = 0.0;
  ModelParams grad;  // same shape as the parameters
};

/// Weighted negative log-likelihood of the choice data and its gradient.
inline NllGrad nll_and_grad(const ModelParams& params, const ChoiceDataset& cds,
                            unsigned threads = 1) {
  detail::check_dimensions(params, cds);
  const auto flat = flatten(params);
  std::vector<double> grad(flat.size(), 0.0);
  const double nll =
      detail::objective(kind_of(params), cds.n(), detail::factor_rank(params), flat,
                        cds, {}, grad, threads);
  NllGrad out{nll, params};
  unflatten(grad, out.grad);
  return out;
}

/// Weighted negative log-likelihood only.
inline double nll(const ModelParams& params, const ChoiceDataset& cds) {
  detail::check_dimensions(params, cds);
  const auto flat = flatten(params);
  return detail::objective(kind_of(params), cds.n(), detail::factor_rank(params),
                           flat, cds, {}, {}, 1);
}

inline ModelParams initial_params(ModelKind kind, int n, const FitConfig& cfg) {
  switch (kind) {
    case ModelKind::pl: return make_pl(n);
    case ModelKind::crs_full: return make_crs_full(n);
    case ModelKind::crs_factor: {
      if (!cfg.rank) {
        throw Error(ErrorKind::invalid_argument, "crs-factor requires a rank");
      }
      auto f = make_crs_factor(n, *cfg.rank);
      Rng rng(cfg.seed);
      for (double& x : f.target.data) x = cfg.init_scale * rng.normal();
      for (double& x : f.context.data) x = cfg.init_scale * rng.normal();
      return f;
    }
    case ModelKind::mallows: break;
  }
  throw Error(ErrorKind::unsupported, "mallows is not fit by gradient descent");
}

/// Adam on a fixed choice dataset. `ranking_weight` normalizes the reported
/// per-ranking NLL.
inline FitReport fit_choices(ModelParams params, const ChoiceDataset& cds,
                             double ranking_weight, const FitConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  detail::check_dimensions(params, cds);
  if (cds.empty()) {
    throw Error(ErrorKind::empty_dataset, "no choice observations to fit");
  }
  const ModelKind kind = kind_of(params);
  const int n = cds.n();
  const int rank = detail::factor_rank(params);

  std::vector<double> p = flatten(params);
  std::vector<double> grad(p.size(), 0.0);
  std::vector<double> m1(p.size(), 0.0);
  std::vector<double> m2(p.size(), 0.0);

  const bool full_batch = !cfg.batch_size || *cfg.batch_size >= cds.size();
  const std::size_t batch = full_batch ? cds.size() : *cfg.batch_size;
  const std::size_t steps_per_epoch = (cds.size() + batch - 1) / batch;
  const double total_steps =
      static_cast<double>(steps_per_epoch) * std::max(cfg.epochs, 1);
  const auto m_total = static_cast<double>(cds.total_weight());

  std::vector<std::size_t> order;
  if (!full_batch) {
    order.resize(cds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
  }

  FitReport report;
  long step = 0;
  auto adam_step = [&](double scale) {
    ++step;
    double lr = cfg.learning_rate;
    if (cfg.final_learning_rate) {
      const double frac = static_cast<double>(step - 1) / std::max(1.0, total_steps - 1);
      lr = cfg.learning_rate *
           std::pow(*cfg.final_learning_rate / cfg.learning_rate, frac);
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grad[j] * scale;
      m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * g;
      m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * g * g;
      p[j] -= lr * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + cfg.epsilon);
    }
  };
  auto diverged = [](double v, int epoch) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::diverged,
                  "objective diverged at epoch " + std::to_string(epoch));
    }
  };

  double current = 0.0;
  int epoch = 0;
  bool converged = false;
  for (; epoch < cfg.epochs; ++epoch) {
    if (full_batch) {
      current = detail::objective(kind, n, rank, p, cds, {}, grad, cfg.threads);
      diverged(current, epoch);
      if (epoch > 0) report.nll_trace.push_back(current);
      if (cfg.gradient_tolerance > 0.0) {
        double worst = 0.0;
        for (double g : grad) worst = std::max(worst, std::abs(g));
        if (worst / m_total < cfg.gradient_tolerance) {
          converged = true;
          break;
        }
      }
      adam_step(1.0 / m_total);
    } else {
      Rng shuffler(job_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
      shuffler.shuffle(order);
      for (std::size_t b = 0; b < steps_per_epoch; ++b) {
        const std::size_t lo = b * batch;
        const std::size_t hi = std::min(order.size(), lo + batch);
        const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
        double batch_weight = 0.0;
        for (std::size_t i : idx) batch_weight += static_cast<double>(cds[i].weight);
        const double v = detail::objective(kind, n, rank, p, cds, idx, grad, 1);
        diverged(v, epoch);
        adam_step(1.0 / batch_weight);
      }
      current = detail::objective(kind, n, rank, p, cds, {}, {}, cfg.threads);
      diverged(current, epoch);
      report.nll_trace.push_back(current);
    }
  }
  if (full_batch && !converged) {
    current = detail::objective(kind, n, rank, p, cds, {}, {}, cfg.threads);
    diverged(current, epoch);
    if (epoch > 0) report.nll_trace.push_back(current);
  }

  unflatten(p, params);
  center(params);
  report.final_params = std::move(params);
  report.epochs_run = epoch;
  report.train_nll_per_ranking = current / ranking_weight;
  report.train_nll_per_choice = current / m_total;
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Mallows

/// Greedy reference permutation from weighted pairwise preferences: keep
/// appending the remaining item with the largest net preference over the
/// other remaining items, ties to the lowest index.
inline std::vector<Item> mga_reference(const RankingDataset& ds) {
  require_valid(ds);
  const int n = ds.universe.n;
  const auto un = static_cast<std::size_t>(n);
  std::vector<double> above(un * un, 0.0);  // above[i*n+j]: i ranked above j
  for (const auto& r : ds.rankings) {
    const auto w = static_cast<double>(r.weight);
    std::vector<bool> placed(un, false);
    for (Item i : r.items) {
      placed[i] = true;
      for (Item j = 0; j < n; ++j) {
        if (!placed[j]) above[i * un + j] += w;
      }
    }
  }
  std::vector<bool> used(un, false);
  std::vector<Item> order;
  for (int step = 0; step < n; ++step) {
    Item best = -1;
    double best_score = 0.0;
    for (Item i = 0; i < n; ++i) {
      if (used[i]) continue;
      double score = 0.0;
      for (Item j = 0; j < n; ++j) {
        if (!used[j] && j != i) score += above[i * un + j] - above[j * un + i];
      }
      if (best < 0 || score > best_score) {
        best = i;
        best_score = score;
      }
    }
    used[best] = true;
    order.push_back(best);
  }
  return order;
}

/// Sufficient statistics of the stage-decomposed Mallows likelihood for a
/// fixed reference: total weighted displacement and weighted set-size counts.
struct MallowsStats {
  double displacement = 0.0;
  std::vector<double> set_size_weight;  // index k = choice-set size
  double rankings = 0.0;
  double choices = 0.0;

  double nll(double theta) const {
    double total = theta * displacement;
    for (std::size_t k = 2; k < set_size_weight.size(); ++k) {
      if (set_size_weight[k] > 0.0) {
        total += set_size_weight[k] *
                 mallows_stage_log_normalizer(theta, static_cast<int>(k));
      }
    }
    return total;
  }
};

inline MallowsStats mallows_stats(const RankingDataset& ds,
                                  std::span<const Item> reference) {
  const int n = ds.universe.n;
  std::vector<int> pos(static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < reference.size(); ++p) pos[reference[p]] = int(p);
  MallowsStats stats;
  stats.set_size_weight.assign(static_cast<std::size_t>(n) + 1, 0.0);
  for (const auto& r : ds.rankings) {
    const auto w = static_cast<double>(r.weight);
    stats.rankings += w;
    for_each_stage(r, n, [&](std::size_t, Item winner, std::span<const Item> set) {
      int v = 0;
      for (Item y : set) v += pos[y] < pos[winner];
      stats.displacement += w * v;
      stats.set_size_weight[set.size()] += w;
      stats.choices += w;
    });
  }
  return stats;
}

inline constexpr double kMallowsMaxConcentration = 20.0;

/// Golden-section minimization of a unimodal function on [lo, hi] until the
/// bracket is narrower than `tol`; the endpoints are also considered.
template <class F>
double golden_section_minimize(F&& f, double lo, double hi, double tol, int* iters) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double a0 = lo;
  const double b0 = hi;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  int count = 0;
  while (b - a > tol) {
    ++count;
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  double best = 0.5 * (a + b);
  double best_f = f(best);
  for (double x : {a0, b0}) {
    const double fx = f(x);
    if (fx < best_f) {
      best = x;
      best_f = fx;
    }
  }
  if (iters) *iters = count;
  return best;
}

inline FitReport fit_mallows(const RankingDataset& ds) {
  const auto start = std::chrono::steady_clock::now();
  MallowsParams params;
  params.reference = mga_reference(ds);
  const MallowsStats stats = mallows_stats(ds, params.reference);
  int iters = 0;
  params.concentration = golden_section_minimize(
      [&](double t) { return stats.nll(t); }, 0.0, kMallowsMaxConcentration, 1e-6,
      &iters);
  const double total = stats.nll(params.concentration);
  FitReport report;
  report.final_params = params;
  report.train_nll_per_ranking = total / stats.rankings;
  report.train_nll_per_choice = stats.choices > 0 ? total / stats.choices : 0.0;
  report.epochs_run = iters;
  report.nll_trace = {total};
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

/// Fits `kind` to the rankings. `init` overrides the default initialization
/// (zero for PL and full CRS, scaled Gaussian for factorized CRS).
inline FitReport fit(ModelKind kind, const RankingDataset& ds, const FitConfig& cfg,
                     std::optional<ModelParams> init = std::nullopt) {
  if (kind == ModelKind::mallows) return fit_mallows(ds);
  cfg.validate();
  const ChoiceDataset cds = repeated_selection(ds);
  if (cds.empty()) {
    throw Error(ErrorKind::empty_dataset, "dataset yields no choice observations");
  }
  ModelParams params = init ? *init : initial_params(kind, ds.universe.n, cfg);
  if (kind_of(params) != kind) {
    throw Error(ErrorKind::invalid_params, "initial parameters have the wrong kind");
  }
  return fit_choices(std::move(params), cds, static_cast<double>(ds.total_weight()),
                     cfg);
}

}  // namespace rsrank
