#pragma once

// Spectral identifiability objects: the comparison Laplacian of the MNL/PL
// likelihood, the design-matrix Gram of the full CDM, their algebraic
// connectivity, and certificates that compare it with known lower bounds.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rsrank/core.hpp"
#include "rsrank/decompose.hpp"

namespace rsrank {

inline constexpr std::size_t kMaxGramDim = 1024;
inline constexpr double kJacobiTolerance = 1e-11;
inline constexpr double kConnectivityThreshold = 1e-8;

/// All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi
/// rotations. Iterates until the off-diagonal Frobenius norm is at most
/// kJacobiTolerance (scaled by the matrix norm when that exceeds 1).
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
  const std::size_t n = a.rows;
  if (a.cols != n) {
    throw Error(ErrorKind::invalid_argument, "eigensolver needs a square matrix");
  }
  double frob = 0.0;
  for (double x : a.data) frob += x * x;
  frob = std::sqrt(frob);
  const double tol = kJacobiTolerance * std::max(1.0, frob);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    }
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 0.5 / theta;
        } else {
          t = (theta >= 0 ? 1.0 : -1.0) /
              (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        double* rp = a.row(p);
        double* rq = a.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = rp[k];
          const double aqk = rq[k];
          rp[k] = c * apk - s * aqk;
          rq[k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

inline void require_symmetric(const Matrix& m) {
  if (m.rows != m.cols) {
    throw Error(ErrorKind::invalid_argument, "matrix is not square");
  }
  double scale = 1.0;
  for (double x : m.data) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = i + 1; j < m.cols; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale) {
        throw Error(ErrorKind::invalid_argument, "matrix is not symmetric");
      }
    }
  }
}

/// Second-smallest eigenvalue of a symmetric matrix.
inline double lambda2(const Matrix& m) {
  require_symmetric(m);
  if (m.rows < 2) {
    throw Error(ErrorKind::invalid_argument, "lambda2 needs dimension >= 2");
  }
  return symmetric_eigenvalues(m)[1];
}

/// Comparison Laplacian (1/m) sum_j w_j E_j (k_j I - 11^T) E_j^T; with
/// `scaled`, each term carries an extra 1/k_j.
inline Matrix build_pl_laplacian(const ChoiceDataset& cds, bool scaled) {
  if (cds.empty() || cds.total_weight() <= 0) {
    throw Error(ErrorKind::empty_dataset, "laplacian of an empty dataset");
  }
  const auto n = static_cast<std::size_t>(cds.n());
  Matrix lap(n, n);
  const auto m = static_cast<double>(cds.total_weight());
  for (std::size_t o = 0; o < cds.size(); ++o) {
    const auto obs = cds[o];
    const auto k = static_cast<double>(obs.choice_set.size());
    const double f = static_cast<double>(obs.weight) / m * (scaled ? 1.0 / k : 1.0);
    for (Item x : obs.choice_set) {
      for (Item y : obs.choice_set) {
        lap(x, y) += (x == y) ? f * (k - 1.0) : -f;
      }
    }
  }
  return lap;
}

/// Design-matrix Gram (1/m) sum_j w_j E_j (I - 11^T / k_j) E_j^T of the full
/// CDM over the n(n-1) pair slots. Since I - 11^T/k is idempotent, each term
/// is E E^T - (1/k)(E 1)(E 1)^T: +1 between slots that share a chooser y,
/// and -1/k between any two slots (y, z) with y, z in the set.
inline Matrix build_cdm_gram(const ChoiceDataset& cds) {
  if (cds.empty() || cds.total_weight() <= 0) {
    throw Error(ErrorKind::empty_dataset, "gram of an empty dataset");
  }
  const int n = cds.n();
  const auto dim = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1);
  if (dim > kMaxGramDim) {
    throw Error(ErrorKind::dimension_guard,
                "CDM gram dimension " + std::to_string(dim) + " exceeds " +
                    std::to_string(kMaxGramDim));
  }
  Matrix gram(dim, dim);
  const auto m = static_cast<double>(cds.total_weight());
  std::vector<std::size_t> slots;
  std::vector<Item> owner;
  for (std::size_t o = 0; o < cds.size(); ++o) {
    const auto obs = cds[o];
    const auto set = obs.choice_set;
    const auto k = static_cast<double>(set.size());
    const double f = static_cast<double>(obs.weight) / m;
    slots.clear();
    owner.clear();
    for (Item y : set) {
      for (Item z : set) {
        if (y == z) continue;
        slots.push_back(pair_index(y, z, n));
        owner.push_back(y);
      }
    }
    for (std::size_t a = 0; a < slots.size(); ++a) {
      double* row = gram.row(slots[a]);
      for (std::size_t b = 0; b < slots.size(); ++b) {
        row[slots[b]] += f * ((owner[a] == owner[b] ? 1.0 : 0.0) - 1.0 / k);
      }
    }
  }
  return gram;
}

// ---------------------------------------------------------------------------
// Certificates

enum class MatrixKind { pl_laplacian, pl_laplacian_hat, cdm_gram };

inline std::string_view to_string(MatrixKind k) {
  switch (k) {
    case MatrixKind::pl_laplacian: return "pl_laplacian";
    case MatrixKind::pl_laplacian_hat: return "pl_laplacian_hat";
    case MatrixKind::cdm_gram: return "cdm_gram";
  }
  return "?";
}

struct BoundCheck {
  std::string name;
  double bound_value = 0.0;
  bool holds = false;
};

struct SpectralCertificate {
  MatrixKind matrix_kind = MatrixKind::pl_laplacian;
  std::size_t dim = 0;
  double lambda2 = 0.0;
  double lambda_max = 0.0;
  bool connected_or_identified = false;
  std::vector<BoundCheck> bound_checks;
};

/// 1 / (4 (1 + 2 e^{3B})): the constant in the high-probability lower bound
/// lambda2(L) >= alpha_B n for PL data drawn within the B-ball.
inline double alpha_b(double b) { return 1.0 / (4.0 * (1.0 + 2.0 * std::exp(3.0 * b))); }

/// Lower bound on lambda2 of the (1/m)-normalized CDM gram for CRS data
/// within the B-ball: 1 / (4 n^3 (n-1) e^{2B}).
inline double cdm_gram_bound(int n, double b) {
  const double nn = n;
  return 1.0 / (4.0 * nn * nn * nn * (nn - 1.0) * std::exp(2.0 * b));
}

inline SpectralCertificate certify(const ChoiceDataset& cds, ModelKind kind,
                                   double b = 1.5) {
  SpectralCertificate cert;
  const int n = cds.n();
  Matrix mat;
  if (kind == ModelKind::pl) {
    cert.matrix_kind = MatrixKind::pl_laplacian;
    mat = build_pl_laplacian(cds, false);
  } else if (kind == ModelKind::crs_full || kind == ModelKind::crs_factor) {
    cert.matrix_kind = MatrixKind::cdm_gram;
    mat = build_cdm_gram(cds);
  } else {
    throw Error(ErrorKind::unsupported, "no spectral certificate for mallows");
  }
  cert.dim = mat.rows;
  const auto eig = symmetric_eigenvalues(mat);
  cert.lambda2 = eig[1];
  cert.lambda_max = eig.back();
  cert.connected_or_identified = cert.lambda2 > kConnectivityThreshold;

  auto check = [&](std::string name, double bound) {
    cert.bound_checks.push_back(
        {std::move(name), bound, cert.lambda2 >= bound - 1e-9 && cert.connected_or_identified});
  };
  if (kind == ModelKind::pl) {
    check("crude_n_over_n_minus_1", static_cast<double>(n) / (n - 1));
    check("alpha_B_n", alpha_b(b) * n);
  } else {
    check("cdm_gram_B", cdm_gram_bound(n, b));
  }
  return cert;
}

inline SpectralCertificate certify(const RankingDataset& ds, ModelKind kind,
                                   double b = 1.5) {
  return certify(repeated_selection(ds), kind, b);
}

/// The choice sets of the deterministic CDM construction: the universe set
/// with weight n and each (n-1)-subset with weight 1 (2n choices in total).
/// Winners are arbitrary; the gram depends only on the sets.
inline ChoiceDataset universe_and_leave_one_out(int n) {
  ChoiceDataset cds{Universe(n)};
  std::vector<Item> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Item{0});
  cds.add(all.front(), all, n);
  for (Item x = 0; x < n; ++x) {
    std::vector<Item> rest;
    for (Item y : all) {
      if (y != x) rest.push_back(y);
    }
    cds.add(rest.front(), rest, 1);
  }
  return cds;
}

/// Closed-form lambda2 of that construction's gram:
/// (a - sqrt(b)) / (4n(n-1)) with a = 2n^3 - 7n^2 + 8n - 1 and
/// b = 4n^6 - 28n^5 + 81n^4 - 116n^3 + 74n^2 - 12n + 1, evaluated as
/// 1 / (a + sqrt(b)) since a^2 - b = 4n(n-1).
inline double universe_and_leave_one_out_lambda2(int n) {
  const double x = n;
  const double a = 2 * x * x * x - 7 * x * x + 8 * x - 1;
  const double b = 4 * std::pow(x, 6) - 28 * std::pow(x, 5) + 81 * std::pow(x, 4) -
                   116 * x * x * x + 74 * x * x - 12 * x + 1;
  return 1.0 / (a + std::sqrt(b));
}

}  // namespace rsrank
