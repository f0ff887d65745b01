#pragma once

// Choice kernels (MNL, CDM full and factorized, Mallows stage kernel), the
// ranking distributions they induce by repeated selection, and exact
// samplers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "rsrank/core.hpp"
#include "rsrank/decompose.hpp"
#include "rsrank/rng.hpp"

namespace rsrank {

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - hi);
  return hi + std::log(sum);
}

/// log sum_{v=0}^{k-1} exp(-theta v), the Mallows stage normalizer.
inline double mallows_stage_log_normalizer(double theta, int k) {
  if (theta < 1e-12) return std::log(static_cast<double>(k));
  return std::log(-std::expm1(-theta * k)) - std::log(-std::expm1(-theta));
}

/// log Z(theta, n) = sum_{k=1}^{n} log((1 - e^{-theta k}) / (1 - e^{-theta})).
inline double mallows_log_normalizer(double theta, int n) {
  double total = 0.0;
  for (int k = 2; k <= n; ++k) total += mallows_stage_log_normalizer(theta, k);
  return total;
}

/// Evaluates stage choice probabilities for one parameter set. Derived data
/// (the Mallows position table) is computed once at construction.
class StageKernel {
 public:
  explicit StageKernel(ModelParams params) : params_(std::move(params)) {
    check_params(params_);
    if (const auto* m = std::get_if<MallowsParams>(&params_)) {
      position_.assign(m->reference.size(), 0);
      for (std::size_t p = 0; p < m->reference.size(); ++p) {
        position_[m->reference[p]] = static_cast<int>(p);
      }
    }
  }

  int n() const { return universe_size(params_); }
  const ModelParams& params() const { return params_; }

  /// Unnormalized log weights (utilities) of each member of `set`.
  void utilities(std::span<const Item> set, std::vector<double>& out) const {
    out.assign(set.size(), 0.0);
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, PlParams>) {
            for (std::size_t i = 0; i < set.size(); ++i) out[i] = m.theta[set[i]];
          } else if constexpr (std::is_same_v<T, CrsFullParams>) {
            for (std::size_t i = 0; i < set.size(); ++i) {
              double s = 0.0;
              for (std::size_t j = 0; j < set.size(); ++j) {
                if (i != j) s += m.u[pair_index(set[i], set[j], m.size)];
              }
              out[i] = s;
            }
          } else if constexpr (std::is_same_v<T, CrsFactorParams>) {
            const auto r = static_cast<std::size_t>(m.rank());
            std::vector<double> context_sum(r, 0.0);
            for (Item z : set) {
              for (std::size_t k = 0; k < r; ++k) context_sum[k] += m.context(z, k);
            }
            for (std::size_t i = 0; i < set.size(); ++i) {
              double s = 0.0;
              for (std::size_t k = 0; k < r; ++k) {
                s += m.target(set[i], k) * (context_sum[k] - m.context(set[i], k));
              }
              out[i] = s;
            }
          } else {
            for (std::size_t i = 0; i < set.size(); ++i) {
              int above = 0;
              for (Item y : set) above += position_[y] < position_[set[i]];
              out[i] = -m.concentration * above;
            }
          }
        },
        params_);
  }

  /// Log-probabilities of choosing each member of `set`.
  void log_probs(std::span<const Item> set, std::vector<double>& out) const {
    utilities(set, out);
    double norm;
    if (const auto* m = std::get_if<MallowsParams>(&params_)) {
      norm = mallows_stage_log_normalizer(m->concentration,
                                          static_cast<int>(set.size()));
    } else {
      norm = log_sum_exp(out);
    }
    for (double& x : out) x -= norm;
  }

  double log_prob(Item winner, std::span<const Item> set) const {
    std::vector<double> lp;
    log_probs(set, lp);
    const auto it = std::lower_bound(set.begin(), set.end(), winner);
    if (it == set.end() || *it != winner) {
      throw Error(ErrorKind::invalid_argument, "winner not in choice set");
    }
    return lp[static_cast<std::size_t>(it - set.begin())];
  }

 private:
  ModelParams params_;
  std::vector<int> position_;
};

namespace detail {

inline std::vector<Item> sorted_set(const ChoiceObservation& obs) {
  std::vector<Item> s = obs.choice_set;
  std::sort(s.begin(), s.end());
  return s;
}

inline void check_observation(const ChoiceObservation& obs, int n) {
  for (Item x : obs.choice_set) {
    if (x < 0 || x >= n) {
      throw Error(ErrorKind::invalid_params,
                  "choice set item outside the parameter universe");
    }
  }
}

}  // namespace detail

/// Generic stage log-probability for any model family.
inline double choice_logprob(const ModelParams& params,
                             const ChoiceObservation& obs) {
  detail::check_observation(obs, universe_size(params));
  const auto set = detail::sorted_set(obs);
  return StageKernel(params).log_prob(obs.winner, set);
}

inline double mnl_choice_logprob(const PlParams& theta,
                                 const ChoiceObservation& obs) {
  return choice_logprob(ModelParams{theta}, obs);
}

inline double cdm_choice_logprob(const CrsFullParams& params,
                                 const ChoiceObservation& obs) {
  return choice_logprob(ModelParams{params}, obs);
}

inline double cdm_choice_logprob(const CrsFactorParams& params,
                                 const ChoiceObservation& obs) {
  return choice_logprob(ModelParams{params}, obs);
}

inline double mallows_choice_logprob(const MallowsParams& params,
                                     const ChoiceObservation& obs) {
  return choice_logprob(ModelParams{params}, obs);
}

/// Debug oracle: Mallows stage log-probability with the normalizer summed
/// by direct counting instead of the closed form.
inline double mallows_choice_logprob_counting(const MallowsParams& params,
                                              const ChoiceObservation& obs) {
  std::vector<int> pos(params.reference.size());
  for (std::size_t p = 0; p < pos.size(); ++p) pos[params.reference[p]] = int(p);
  auto above = [&](Item x) {
    int c = 0;
    for (Item y : obs.choice_set) c += pos[y] < pos[x];
    return c;
  };
  std::vector<double> logits;
  for (Item y : obs.choice_set) logits.push_back(-params.concentration * above(y));
  return -params.concentration * above(obs.winner) - log_sum_exp(logits);
}

inline double ranking_logprob(const StageKernel& kernel, const Ranking& ranking) {
  const int n = kernel.n();
  for (Item x : ranking.items) {
    if (x < 0 || x >= n) {
      throw Error(ErrorKind::invalid_params,
                  "ranking references items outside the parameter universe");
    }
  }
  if (static_cast<int>(ranking.items.size()) > n) {
    throw Error(ErrorKind::invalid_params, "ranking longer than universe");
  }
  double total = 0.0;
  for_each_stage(ranking, n, [&](std::size_t, Item winner, std::span<const Item> set) {
    total += kernel.log_prob(winner, set);
  });
  return total;
}

/// Log-probability of a (full or top-k) ranking: the sum of its stage
/// choice log-probabilities.
inline double ranking_logprob(const ModelParams& params, const Ranking& ranking) {
  return ranking_logprob(StageKernel(params), ranking);
}

/// Number of discordant pairs between two full rankings.
inline long kendall_tau(const Ranking& a, const Ranking& b) {
  const std::size_t n = a.items.size();
  if (b.items.size() != n) {
    throw Error(ErrorKind::unsupported,
                "kendall_tau requires full rankings over the same universe");
  }
  std::vector<int> pos_b(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const Item x = b.items[i];
    if (x < 0 || static_cast<std::size_t>(x) >= n || pos_b[x] != -1) {
      throw Error(ErrorKind::unsupported, "kendall_tau requires full rankings");
    }
    pos_b[x] = static_cast<int>(i);
  }
  std::vector<bool> seen(n, false);
  for (Item x : a.items) {
    if (x < 0 || static_cast<std::size_t>(x) >= n || seen[x]) {
      throw Error(ErrorKind::unsupported, "kendall_tau requires full rankings");
    }
    seen[x] = true;
  }
  long discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      discordant += pos_b[a.items[i]] > pos_b[a.items[j]];
    }
  }
  return discordant;
}

struct SampleConfig {
  std::uint64_t seed = 0;
  std::size_t count = 1;
};

/// Draws one full ranking by sequential inverse-CDF sampling of each stage.
inline Ranking sample_ranking(const StageKernel& kernel, Rng& rng) {
  const int n = kernel.n();
  std::vector<Item> remaining(static_cast<std::size_t>(n));
  std::iota(remaining.begin(), remaining.end(), Item{0});
  Ranking out;
  out.items.reserve(static_cast<std::size_t>(n));
  std::vector<double> lp;
  while (remaining.size() > 1) {
    kernel.log_probs(remaining, lp);
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      cumulative += std::exp(lp[i]);
      if (u < cumulative) {
        pick = i;
        break;
      }
    }
    out.items.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  out.items.push_back(remaining.front());
  return out;
}

/// Draws cfg.count full rankings; sample i uses its own generator seeded
/// from (cfg.seed, i), so any parallel split gives identical output.
inline RankingDataset sample_rankings(const ModelParams& params,
                                      const Universe& universe,
                                      const SampleConfig& cfg) {
  if (universe_size(params) != universe.n) {
    throw Error(ErrorKind::invalid_params, "parameters do not match universe");
  }
  if (cfg.count < 1) {
    throw Error(ErrorKind::invalid_argument, "sample count must be >= 1");
  }
  const StageKernel kernel(params);
  RankingDataset ds{universe, {}};
  ds.rankings.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Rng rng(job_seed(cfg.seed, i));
    ds.rankings.push_back(sample_ranking(kernel, rng));
  }
  return ds;
}

inline constexpr int kMaxEnumerateN = 8;

/// Probability of every permutation, in lexicographic order.
inline std::vector<std::pair<std::vector<Item>, double>> enumerate_pmf(
    const ModelParams& params, const Universe& universe) {
  if (universe.n > kMaxEnumerateN) {
    throw Error(ErrorKind::too_large, "enumerate_pmf supports n <= 8");
  }
  if (universe_size(params) != universe.n) {
    throw Error(ErrorKind::invalid_params, "parameters do not match universe");
  }
  const StageKernel kernel(params);
  std::vector<std::pair<std::vector<Item>, double>> out;
  Ranking r;
  r.items.resize(static_cast<std::size_t>(universe.n));
  std::iota(r.items.begin(), r.items.end(), Item{0});
  do {
    out.emplace_back(r.items, std::exp(ranking_logprob(kernel, r)));
  } while (std::next_permutation(r.items.begin(), r.items.end()));
  return out;
}

}  // namespace rsrank
