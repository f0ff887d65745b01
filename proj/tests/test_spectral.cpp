#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "rsrank/models.hpp"
#include "rsrank/spectral.hpp"

using namespace rsrank;

namespace {

Matrix from_eigen(const Eigen::MatrixXd& m) {
  Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  }
  return out;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = m(i, j);
  }
  return out;
}

// The gram assembled literally from design matrices E_S (slot x member) and
// the centering projector M_k = I - 11^T / k.
Eigen::MatrixXd gram_oracle(const ChoiceDataset& cds) {
  const int n = cds.n();
  const int dim = n * (n - 1);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t o = 0; o < cds.size(); ++o) {
    const auto obs = cds[o];
    const auto k = static_cast<Eigen::Index>(obs.choice_set.size());
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(dim, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      for (Eigen::Index b = 0; b < k; ++b) {
        if (a != b) {
          e(static_cast<Eigen::Index>(
                pair_index(obs.choice_set[a], obs.choice_set[b], n)),
            a) = 1.0;
        }
      }
    }
    const Eigen::MatrixXd mk = Eigen::MatrixXd::Identity(k, k) -
                               Eigen::MatrixXd::Constant(k, k, 1.0 / static_cast<double>(k));
    g += static_cast<double>(obs.weight) * e * mk * e.transpose();
  }
  return g / static_cast<double>(cds.total_weight());
}

ChoiceDataset random_choices(int n, int m, std::uint64_t seed) {
  Rng rng(seed);
  ChoiceDataset cds{Universe(n)};
  while (static_cast<int>(cds.size()) < m) {
    std::vector<Item> set;
    for (Item x = 0; x < n; ++x) {
      if (rng.uniform() < 0.6) set.push_back(x);
    }
    if (set.size() < 2) continue;
    cds.add(set.front(), set, 1 + static_cast<std::int64_t>(rng.below(3)));
  }
  return cds;
}

ChoiceDataset one_ranking(int n) {
  std::vector<Item> items(static_cast<std::size_t>(n));
  std::iota(items.begin(), items.end(), Item{0});
  return repeated_selection(RankingDataset{Universe(n), {{items}}});
}

}  // namespace

TEST(Jacobi, MatchesPlantedSpectrum) {
  for (int n : {1, 2, 5, 12, 30}) {
    Eigen::MatrixXd q =
        Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(n, n)).householderQ();
    Eigen::VectorXd lambda(n);
    for (int i = 0; i < n; ++i) lambda(i) = (i % 3 == 0 ? 0.0 : 1.0) + 0.37 * i - 2.0;
    const Eigen::MatrixXd a = q * lambda.asDiagonal() * q.transpose();
    const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    const auto eig = symmetric_eigenvalues(from_eigen(sym));
    std::vector<double> expect(lambda.data(), lambda.data() + n);
    std::sort(expect.begin(), expect.end());
    ASSERT_EQ(eig.size(), expect.size());
    for (int i = 0; i < n; ++i) EXPECT_NEAR(eig[i], expect[i], 1e-9);
  }
}

TEST(Jacobi, RepeatedEigenvalues) {
  const auto eig = symmetric_eigenvalues(Matrix::identity(6));
  for (double e : eig) EXPECT_EQ(e, 1.0);
}

TEST(Lambda2, Examples) {
  Matrix k5(5, 5);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) k5(i, j) = i == j ? 4.0 : -1.0;
  }
  EXPECT_NEAR(lambda2(k5), 5.0, 1e-12);
  Matrix d(3, 3);
  d(2, 2) = 1.0;
  EXPECT_NEAR(lambda2(d), 0.0, 1e-15);
  Matrix asym(2, 2);
  asym(0, 1) = 1.0;
  EXPECT_THROW(lambda2(asym), Error);
}

TEST(PlLaplacian, PairwiseObservation) {
  ChoiceDataset cds{Universe(2)};
  cds.add(ChoiceObservation{1, {0, 1}});
  const auto lap = build_pl_laplacian(cds, false);
  EXPECT_EQ(lap(0, 0), 1.0);
  EXPECT_EQ(lap(0, 1), -1.0);
  EXPECT_EQ(lap(1, 1), 1.0);
  EXPECT_NEAR(lambda2(lap), 2.0, 1e-12);
}

TEST(PlLaplacian, SingleFullRanking) {
  const auto lap = build_pl_laplacian(one_ranking(3), false);
  EXPECT_NEAR(lambda2(lap), 1.5, 1e-9);
  EXPECT_GE(lambda2(lap), 3.0 / 2.0 - 1e-12);
}

TEST(PlLaplacian, RowsSumToZeroAndScaledRelation) {
  const auto cds = random_choices(6, 50, 3);
  const auto lap = build_pl_laplacian(cds, false);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) s += lap(i, j);
    EXPECT_NEAR(s, 0.0, 1e-12);
  }
  ChoiceDataset uniform_k{Universe(5)};
  uniform_k.add(0, std::vector<Item>{0, 1, 2}, 2);
  uniform_k.add(3, std::vector<Item>{1, 3, 4}, 1);
  const auto a = build_pl_laplacian(uniform_k, false);
  const auto b = build_pl_laplacian(uniform_k, true);
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(b.data[i], a.data[i] / 3.0, 1e-15);
}

TEST(PlLaplacian, DisconnectedCliques) {
  ChoiceDataset cds{Universe(4)};
  cds.add(ChoiceObservation{0, {0, 1}});
  cds.add(ChoiceObservation{3, {2, 3}});
  const auto cert = certify(cds, ModelKind::pl);
  EXPECT_NEAR(cert.lambda2, 0.0, 1e-12);
  EXPECT_FALSE(cert.connected_or_identified);
  for (const auto& b : cert.bound_checks) EXPECT_FALSE(b.holds) << b.name;
}

TEST(PlLaplacian, EmptyDataset) {
  EXPECT_THROW(build_pl_laplacian(ChoiceDataset{Universe(3)}, false), Error);
}

TEST(CdmGram, MatchesDesignMatrixOracle) {
  for (int n : {2, 3, 4}) {
    const auto cds = random_choices(n, 15, static_cast<std::uint64_t>(n));
    const auto fast = to_eigen(build_cdm_gram(cds));
    const auto slow = gram_oracle(cds);
    EXPECT_LE((fast - slow).cwiseAbs().maxCoeff(), 1e-14) << "n=" << n;
  }
}

TEST(CdmGram, PositiveSemidefinite) {
  const auto eig = symmetric_eigenvalues(build_cdm_gram(random_choices(5, 40, 9)));
  EXPECT_GE(eig.front(), -1e-10);
}

TEST(CdmGram, SingleRankingNotIdentified) {
  for (int n : {3, 4, 6}) {
    const auto cert = certify(one_ranking(n), ModelKind::crs_full);
    EXPECT_NEAR(cert.lambda2, 0.0, 1e-10);
    EXPECT_FALSE(cert.connected_or_identified);
  }
}

TEST(CdmGram, UniverseAndLeaveOneOutClosedForm) {
  EXPECT_NEAR(universe_and_leave_one_out_lambda2(3), (14.0 - std::sqrt(172.0)) / 4.0 / 6.0,
              1e-12);
  for (int n = 3; n <= 10; ++n) {
    const auto cds = universe_and_leave_one_out(n);
    const double l2 = lambda2(build_cdm_gram(cds));
    EXPECT_NEAR(l2, universe_and_leave_one_out_lambda2(n), 1e-8) << "n=" << n;
    EXPECT_GT(l2, 1.0 / (4.0 * n * n * n));
  }
}

TEST(CdmGram, DimensionGuard) {
  try {
    build_cdm_gram(one_ranking(33));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension_guard);
  }
}

TEST(Certify, SingleRankingPlCrudeBound) {
  for (int n : {3, 5, 8}) {
    const auto cert = certify(one_ranking(n), ModelKind::pl);
    ASSERT_FALSE(cert.bound_checks.empty());
    EXPECT_EQ(cert.bound_checks[0].name, "crude_n_over_n_minus_1");
    EXPECT_TRUE(cert.bound_checks[0].holds);
    EXPECT_TRUE(cert.connected_or_identified);
  }
}

TEST(Certify, SampledPlReportsAlphaBound) {
  Rng rng(12);
  PlParams truth = make_pl(6);
  for (double& x : truth.theta) x = rng.truncated_normal(1.5);
  const auto ds = sample_rankings(truth, Universe(6), {4, 200});
  const auto cert = certify(ds, ModelKind::pl, 1.5);
  EXPECT_TRUE(cert.bound_checks[0].holds);
  EXPECT_EQ(cert.bound_checks[1].name, "alpha_B_n");
  EXPECT_NEAR(cert.bound_checks[1].bound_value, 6.0 / (4.0 * (1.0 + 2.0 * std::exp(4.5))),
              1e-15);
  EXPECT_EQ(cert.bound_checks[1].holds, cert.lambda2 >= cert.bound_checks[1].bound_value);
}

TEST(Certify, MallowsUnsupported) {
  EXPECT_THROW(certify(one_ranking(3), ModelKind::mallows), Error);
}
