#pragma once

// Shared domain types: items, rankings, choice observations, datasets and
// the tagged union of model parameters.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rsrank {

using Item = std::int32_t;

enum class ErrorKind {
  invalid_argument,
  invalid_pair,
  invalid_params,
  unsupported,
  too_large,
  empty_dataset,
  diverged,
  dimension_guard,
  parse,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Dense row-major matrix of doubles. Used for factor embeddings and for
/// the spectral objects.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data[i * cols + j];
  }

  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct Universe {
  int n = 0;
  std::vector<std::string> labels;  // empty or exactly n entries

  Universe() = default;
  explicit Universe(int size, std::vector<std::string> names = {})
      : n(size), labels(std::move(names)) {
    if (n < 2) {
      throw Error(ErrorKind::invalid_argument,
                  "universe must contain at least 2 items");
    }
    if (!labels.empty() && static_cast<int>(labels.size()) != n) {
      throw Error(ErrorKind::invalid_argument,
                  "universe labels must have exactly n entries");
    }
  }
};

/// Items in rank order: items[0] is ranked first. A ranking shorter than
/// the universe is a top-k ranking; the unlisted items are unranked.
struct Ranking {
  std::vector<Item> items;
  std::int64_t weight = 1;

  std::size_t length() const { return items.size(); }
  bool is_full(int n) const { return static_cast<int>(items.size()) == n; }
};

struct ChoiceObservation {
  Item winner = 0;
  std::vector<Item> choice_set;  // sorted, distinct
};

struct RankingDataset {
  Universe universe;
  std::vector<Ranking> rankings;

  /// Total weighted ranking count.
  std::int64_t total_weight() const {
    std::int64_t total = 0;
    for (const auto& r : rankings) total += r.weight;
    return total;
  }
};

// ---------------------------------------------------------------------------
// Model parameters

enum class ModelKind { pl, crs_full, crs_factor, mallows };

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::pl: return "pl";
    case ModelKind::crs_full: return "crs-full";
    case ModelKind::crs_factor: return "crs-factor";
    case ModelKind::mallows: return "mallows";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "pl") return ModelKind::pl;
  if (s == "crs-full" || s == "crs_full") return ModelKind::crs_full;
  if (s == "crs-factor" || s == "crs_factor") return ModelKind::crs_factor;
  if (s == "mallows") return ModelKind::mallows;
  throw Error(ErrorKind::invalid_argument,
              "unknown model kind '" + std::string(s) + "'");
}

struct PlParams {
  std::vector<double> theta;
  int n() const { return static_cast<int>(theta.size()); }
};

/// Full CDM: one parameter per ordered pair (x, z), x != z, laid out
/// row-major over x with the diagonal removed (see pair_index).
struct CrsFullParams {
  int size = 0;
  std::vector<double> u;
  int n() const { return size; }
};

/// Factorized CDM: u_xz = c_z . t_x with target rows T and context rows C.
struct CrsFactorParams {
  Matrix target;   // n x r
  Matrix context;  // n x r
  int n() const { return static_cast<int>(target.rows); }
  int rank() const { return static_cast<int>(target.cols); }
};

struct MallowsParams {
  std::vector<Item> reference;  // reference[pos] = item at that position
  double concentration = 0.0;
  int n() const { return static_cast<int>(reference.size()); }
};

using ModelParams =
    std::variant<PlParams, CrsFullParams, CrsFactorParams, MallowsParams>;

inline ModelKind kind_of(const ModelParams& p) {
  return static_cast<ModelKind>(p.index());
}

inline int universe_size(const ModelParams& p) {
  return std::visit([](const auto& m) { return m.n(); }, p);
}

/// Flat index of the ordered pair (x, z) in the n(n-1) CDM parameter vector.
inline std::size_t pair_index(Item x, Item z, int n) {
  if (x == z || x < 0 || z < 0 || x >= n || z >= n) {
    throw Error(ErrorKind::invalid_pair,
                "invalid pair (" + std::to_string(x) + ", " +
                    std::to_string(z) + ") for n=" + std::to_string(n));
  }
  return static_cast<std::size_t>(x) * static_cast<std::size_t>(n - 1) +
         static_cast<std::size_t>(z < x ? z : z - 1);
}

/// Inverse of pair_index.
inline std::pair<Item, Item> pair_from_index(std::size_t idx, int n) {
  const auto x = static_cast<Item>(idx / static_cast<std::size_t>(n - 1));
  auto z = static_cast<Item>(idx % static_cast<std::size_t>(n - 1));
  if (z >= x) ++z;
  return {x, z};
}

inline PlParams make_pl(int n) { return PlParams{std::vector<double>(n, 0.0)}; }

inline CrsFullParams make_crs_full(int n) {
  return CrsFullParams{n, std::vector<double>(
                              static_cast<std::size_t>(n) * (n - 1), 0.0)};
}

inline CrsFactorParams make_crs_factor(int n, int rank) {
  if (rank < 1) {
    throw Error(ErrorKind::invalid_params, "factor rank must be >= 1");
  }
  return CrsFactorParams{Matrix(n, rank), Matrix(n, rank)};
}

/// Induced full-CDM parameters of a factorized model.
inline CrsFullParams induced_full(const CrsFactorParams& f) {
  const int n = f.n();
  CrsFullParams out = make_crs_full(n);
  for (Item x = 0; x < n; ++x) {
    for (Item z = 0; z < n; ++z) {
      if (x == z) continue;
      double dot = 0.0;
      for (int k = 0; k < f.rank(); ++k) dot += f.context(z, k) * f.target(x, k);
      out.u[pair_index(x, z, n)] = dot;
    }
  }
  return out;
}

/// Subtract the mean so entries sum to zero (the softmax gauge).
inline void center(std::vector<double>& v) {
  if (v.empty()) return;
  const double mean =
      std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x -= mean;
}

/// Centers PL and full-CDM parameters; other kinds are left unchanged.
inline void center(ModelParams& p) {
  if (auto* pl = std::get_if<PlParams>(&p)) center(pl->theta);
  if (auto* full = std::get_if<CrsFullParams>(&p)) center(full->u);
}

/// Throws invalid_params unless the parameters are well-formed.
inline void check_params(const ModelParams& params) {
  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        auto require_finite = [](const std::vector<double>& v) {
          for (double x : v) {
            if (!std::isfinite(x)) {
              throw Error(ErrorKind::invalid_params, "non-finite parameter value");
            }
          }
        };
        if constexpr (std::is_same_v<T, PlParams>) {
          require_finite(m.theta);
        } else if constexpr (std::is_same_v<T, CrsFullParams>) {
          require_finite(m.u);
          if (m.size < 2 || m.u.size() != static_cast<std::size_t>(m.size) *
                                              (m.size - 1)) {
            throw Error(ErrorKind::invalid_params,
                        "crs-full parameter vector must have n(n-1) entries");
          }
        } else if constexpr (std::is_same_v<T, CrsFactorParams>) {
          if (m.target.rows != m.context.rows ||
              m.target.cols != m.context.cols || m.target.cols < 1) {
            throw Error(ErrorKind::invalid_params,
                        "crs-factor embeddings must both be n x r, r >= 1");
          }
          require_finite(m.target.data);
          require_finite(m.context.data);
        } else if constexpr (std::is_same_v<T, MallowsParams>) {
          if (!(m.concentration >= 0.0) || !std::isfinite(m.concentration)) {
            throw Error(ErrorKind::invalid_params,
                        "mallows concentration must be non-negative");
          }
          std::vector<Item> sorted = m.reference;
          std::sort(sorted.begin(), sorted.end());
          for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] != static_cast<Item>(i)) {
              throw Error(ErrorKind::invalid_params,
                          "mallows reference is not a permutation");
            }
          }
        }
      },
      params);
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::size_t ranking_index;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::int64_t total_weight = 0;

  bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_dataset(const RankingDataset& ds) {
  ValidationReport report;
  const int n = ds.universe.n;
  if (n < 2) report.violations.push_back({0, "universe has fewer than 2 items"});
  if (ds.rankings.empty()) report.violations.push_back({0, "empty dataset"});
  for (std::size_t i = 0; i < ds.rankings.size(); ++i) {
    const auto& r = ds.rankings[i];
    if (r.items.empty()) report.violations.push_back({i, "empty ranking"});
    if (static_cast<int>(r.items.size()) > n) {
      report.violations.push_back({i, "ranking longer than universe"});
    }
    if (r.weight < 1) report.violations.push_back({i, "non-positive weight"});
    std::vector<bool> seen(static_cast<std::size_t>(std::max(n, 0)), false);
    for (Item x : r.items) {
      if (x < 0 || x >= n) {
        report.violations.push_back({i, "index out of range"});
        continue;
      }
      if (seen[x]) report.violations.push_back({i, "duplicate item"});
      seen[x] = true;
    }
    report.total_weight += r.weight;
  }
  return report;
}

inline void require_valid(const RankingDataset& ds) {
  const auto report = validate_dataset(ds);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw Error(ErrorKind::invalid_argument,
                "invalid dataset: " + v.message + " (ranking " +
                    std::to_string(v.ranking_index) + ")");
  }
}

}  // namespace rsrank
