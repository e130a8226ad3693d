#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ilde/function_class.hpp"
#include "ilde/rng.hpp"
#include "df_oracle.hpp"

using namespace ilde;
using namespace ilde::testing;

namespace {

// regularized squared loss of weights w on a dataset
double ridge_loss(const LinearFunctionClass& cls,
                  const std::vector<std::tuple<int, int, double>>& data,
                  const Eigen::VectorXd& w, double lambda_ed) {
  double acc = lambda_ed * w.squaredNorm();
  for (const auto& [s, a, y] : data) {
    double r = cls.feature_map.dot(s, a, w) - y;
    acc += r * r;
  }
  return acc;
}

}  // namespace

TEST_CASE("least_squares_fit: tabular empirical mean and zero data") {
  FeatureMap fm = FeatureMap::make_tabular(3, 2);
  LinearFunctionClass cls{fm, 10.0, 10.0};
  std::vector<std::tuple<int, int, double>> data(5, {1, 0, 1.0});
  Eigen::VectorXd w = least_squares_fit(cls, data, 0.0);
  CHECK(cls.evaluate(w, 1, 0) == doctest::Approx(1.0).epsilon(1e-10));

  std::vector<std::tuple<int, int, double>> zeros = {{0, 0, 0.0}, {1, 1, 0.0}, {2, 0, 0.0}};
  Eigen::VectorXd w0 = least_squares_fit(cls, zeros, 0.0);
  CHECK(w0.norm() == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(least_squares_fit(cls, {}, 0.0), std::invalid_argument);
}

TEST_CASE("least_squares_fit matches a projected-gradient oracle on dense d=4") {
  Rng rng(77);
  FeatureMap fm = random_dense_features(rng, 5, 3, 4);
  LinearFunctionClass cls{fm, 50.0, 50.0};
  const double lambda_ed = 0.3;
  std::vector<std::tuple<int, int, double>> data;
  for (int i = 0; i < 30; ++i)
    data.emplace_back(rng.uniform_int(5), rng.uniform_int(3), 2.0 * rng.uniform() - 1.0);
  Eigen::VectorXd w = least_squares_fit(cls, data, lambda_ed);

  Eigen::VectorXd v = Eigen::VectorXd::Zero(4);  // gradient-descent oracle
  for (int it = 0; it < 200000; ++it) {
    Eigen::VectorXd grad = 2.0 * lambda_ed * v;
    for (const auto& [s, a, y] : data)
      grad += 2.0 * (fm.dot(s, a, v) - y) * fm.features(s, a);
    v -= 0.005 * grad;
  }
  CHECK(std::abs(ridge_loss(cls, data, w, lambda_ed) - ridge_loss(cls, data, v, lambda_ed)) < 1e-6);
  CHECK((w - v).norm() < 1e-4);
}

TEST_CASE("least_squares_fit: no perturbation direction decreases the loss") {
  Rng rng(91);
  FeatureMap fm = random_dense_features(rng, 4, 2, 3);
  LinearFunctionClass cls{fm, 100.0, 100.0};
  const double lambda_ed = 0.5;
  std::vector<std::tuple<int, int, double>> data;
  for (int i = 0; i < 20; ++i)
    data.emplace_back(rng.uniform_int(4), rng.uniform_int(2), 2.0 * rng.uniform() - 1.0);
  Eigen::VectorXd w = least_squares_fit(cls, data, lambda_ed);
  double base = ridge_loss(cls, data, w, lambda_ed);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd dir = Eigen::VectorXd::NullaryExpr(3, [&](int) { return 2.0 * rng.uniform() - 1.0; });
    dir.normalize();
    CHECK(ridge_loss(cls, data, w + 1e-4 * dir, lambda_ed) >= base - 1e-10);
  }
}

TEST_CASE("d_f_uncertainty: frozen tabular values") {
  FeatureMap fm = FeatureMap::make_tabular(2, 2);
  LinearFunctionClass cls{fm, 1.0, 1.0};
  CHECK(d_f_uncertainty(cls, {0, 0}, {}, 1.0) == doctest::Approx(2.0).epsilon(1e-10));
  for (int k = 1; k <= 5; ++k) {
    std::vector<std::pair<int, int>> history(k, {0, 0});
    CHECK(d_f_uncertainty(cls, {0, 0}, history, 1.0) ==
          doctest::Approx(2.0 / std::sqrt(4.0 * k + 1.0)).epsilon(1e-10));
  }
  LinearFunctionClass constant{fm, 0.0, 1.0};
  CHECK(d_f_uncertainty(constant, {0, 0}, {{0, 0}}, 1.0) == 0.0);
  CHECK_THROWS_AS(d_f_uncertainty(cls, {0, 0}, {}, 0.0), std::invalid_argument);
}

TEST_CASE("d_f_uncertainty matches the grid-search sup on 50 random instances") {
  Rng rng(2025);
  for (int trial = 0; trial < 50; ++trial) {
    int d = 1 + rng.uniform_int(3);
    int S = 3, A = 2;
    FeatureMap fm = random_dense_features(rng, S, A, d);
    double B = 0.2 + 0.8 * rng.uniform();
    LinearFunctionClass cls{fm, B, 5.0};
    double lambda_ed = 0.5 + 1.5 * rng.uniform();
    std::vector<std::pair<int, int>> history;
    int len = rng.uniform_int(11);
    for (int i = 0; i < len; ++i) history.emplace_back(rng.uniform_int(S), rng.uniform_int(A));
    std::pair<int, int> query{rng.uniform_int(S), rng.uniform_int(A)};
    double closed = d_f_uncertainty(cls, query, history, lambda_ed);
    double oracle = df_grid_oracle(cls, query, history, lambda_ed);
    CHECK(std::abs(closed - oracle) < 2e-3);
  }
}

TEST_CASE("d_f_uncertainty: history growth never increases uncertainty") {
  Rng rng(13);
  FeatureMap fm = random_dense_features(rng, 4, 3, 3);
  LinearFunctionClass cls{fm, 1.0, 3.0};
  DfAccumulator acc(cls, 1.0);
  std::vector<double> prev(4 * 3, std::numeric_limits<double>::infinity());
  for (int step = 0; step < 30; ++step) {
    for (int s = 0; s < 4; ++s)
      for (int a = 0; a < 3; ++a) {
        double u = acc.uncertainty(s, a);
        CHECK(u <= prev[s * 3 + a] + 1e-9);
        prev[s * 3 + a] = u;
      }
    acc.add(rng.uniform_int(4), rng.uniform_int(3));
  }
}

TEST_CASE("estimate_eluder_dim: frozen cases and elliptic-potential growth") {
  FeatureMap fm = FeatureMap::make_tabular(2, 2);
  LinearFunctionClass cls{fm, 1.0, 1.0};
  CHECK(estimate_eluder_dim(cls, {{0, 0}}, 1.0) == doctest::Approx(1.0));  // min(1, 4)
  LinearFunctionClass constant{fm, 0.0, 1.0};
  CHECK(estimate_eluder_dim(constant, {{0, 0}, {1, 1}}, 1.0) == 0.0);
  CHECK_THROWS_AS(estimate_eluder_dim(cls, {}, 1.0), std::invalid_argument);

  // m distinct tabular pairs once each: each contributes min(1, 4) = 1
  FeatureMap fm6 = FeatureMap::make_tabular(3, 2);
  LinearFunctionClass cls6{fm6, 1.0, 1.0};
  std::vector<std::pair<int, int>> seq;
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 2; ++a) seq.emplace_back(s, a);
  CHECK(estimate_eluder_dim(cls6, seq, 1.0) == doctest::Approx(6.0).epsilon(1e-10));

  Rng rng(5);
  std::vector<std::pair<int, int>> long_seq;
  for (int i = 0; i < 200; ++i) long_seq.emplace_back(rng.uniform_int(3), rng.uniform_int(2));
  double dim = estimate_eluder_dim(cls6, long_seq, 1.0);
  CHECK(dim <= 6.0 * 8.0 * std::log(200.0));
}

TEST_CASE("exploration_bonus: zero cases and the 2/sqrt(4k+1) decay") {
  FeatureMap fm = FeatureMap::make_tabular(2, 2);
  LinearFunctionClass cls{fm, 1.0, 1.0};
  BonusConfig cfg;
  cfg.lambda_ed = 1.0;
  cfg.beta_bonus = 0.0;
  CHECK(exploration_bonus(cfg, cls, {0, 0}, {{0, 1}}) == 0.0);

  cfg.beta_bonus = 1.0;
  LinearFunctionClass constant{fm, 0.0, 1.0};
  CHECK(exploration_bonus(cfg, constant, {0, 0}, {}) == 0.0);

  std::vector<std::pair<int, int>> history;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 100; ++k) {
    double b = exploration_bonus(cfg, cls, {0, 0}, history);
    CHECK(b == doctest::Approx(2.0 / std::sqrt(4.0 * k + 1.0)).epsilon(1e-9));
    CHECK(b < prev);
    prev = b;
    history.emplace_back(0, 0);
  }
}

TEST_CASE("default_beta_bonus follows the pinned formula") {
  FeatureMap fm = FeatureMap::make_tabular(2, 2);
  LinearFunctionClass cls{fm, 2.0, 3.0};
  const double eps = 0.01, delta = 0.05, gamma = 9.0;
  const int n = 50;
  double log_nf = 4.0 * std::log(1.0 + 4.0 * 2.0 * 3.0 / eps);
  CHECK(log_covering_surrogate(4, 2.0, 3.0, eps) == doctest::Approx(log_nf).epsilon(1e-12));
  double expected =
      std::sqrt(8.0 * 9.0 * (std::log(3.0) + log_nf - std::log(delta)) + 4.0 * eps * n + gamma);
  CHECK(default_beta_bonus(cls, eps, delta, gamma, n) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("BonusConfig validation and feature-map serialization") {
  BonusConfig cfg;
  cfg.lambda_ed = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  Rng rng(3);
  FeatureMap dense = random_dense_features(rng, 3, 2, 2);
  KvWriter w;
  write_feature_map(w, dense);
  FeatureMap back = read_feature_map(KvReader::from_string(w.str()));
  CHECK(back.dim == dense.dim);
  CHECK(back.tabular == dense.tabular);
  CHECK(back.matrix == dense.matrix);

  std::vector<double> big = {2.0, 0.0};  // norm > 1
  CHECK_THROWS_AS(FeatureMap::make_dense(1, 1, 2, big), std::invalid_argument);
}
