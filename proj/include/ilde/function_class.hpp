#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "ilde/mdp.hpp"

namespace ilde {

/// Feature map phi(s, a) with ||phi||_2 <= 1. The tabular case is the
/// (|S| * |A|)-dimensional one-hot embedding.
struct FeatureMap {
  int dim = 0;
  int num_states = 0;
  int num_actions = 0;
  bool tabular = true;
  // Dense feature matrix, row (s * num_actions + a), only when !tabular.
  std::vector<double> matrix;

  static FeatureMap make_tabular(int num_states, int num_actions) {
    FeatureMap f;
    f.dim = num_states * num_actions;
    f.num_states = num_states;
    f.num_actions = num_actions;
    f.tabular = true;
    return f;
  }

  static FeatureMap make_dense(int num_states, int num_actions, int dim,
                               std::vector<double> matrix) {
    FeatureMap f;
    f.dim = dim;
    f.num_states = num_states;
    f.num_actions = num_actions;
    f.tabular = false;
    f.matrix = std::move(matrix);
    if (static_cast<int>(f.matrix.size()) != num_states * num_actions * dim)
      throw std::invalid_argument("FeatureMap: matrix size mismatch");
    for (int i = 0; i < num_states * num_actions; ++i) {
      double n2 = 0.0;
      for (int j = 0; j < dim; ++j) {
        double v = f.matrix[i * dim + j];
        if (!std::isfinite(v)) throw std::invalid_argument("FeatureMap: non-finite feature");
        n2 += v * v;
      }
      if (n2 > 1.0 + 1e-9) throw std::invalid_argument("FeatureMap: feature norm exceeds 1");
    }
    return f;
  }

  Eigen::VectorXd features(int s, int a) const {
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(dim);
    if (tabular) {
      phi[s * num_actions + a] = 1.0;
    } else {
      for (int j = 0; j < dim; ++j) phi[j] = matrix[(s * num_actions + a) * dim + j];
    }
    return phi;
  }

  double dot(int s, int a, const Eigen::VectorXd& w) const {
    if (tabular) return w[s * num_actions + a];
    double acc = 0.0;
    for (int j = 0; j < dim; ++j) acc += matrix[(s * num_actions + a) * dim + j] * w[j];
    return acc;
  }
};

/// Members f_w(s, a) = clip(<w, phi(s, a)>, -H, H) with ||w||_2 <= B.
struct LinearFunctionClass {
  FeatureMap feature_map;
  double weight_bound = 1.0;  // B
  double output_clip = 1.0;   // H

  double evaluate(const Eigen::VectorXd& w, int s, int a) const {
    return std::clamp(feature_map.dot(s, a, w), -output_clip, output_clip);
  }
};

/// Constants of the OPE exploration bonus b_h = beta * D_F.
struct BonusConfig {
  double lambda_ed = 1.0;
  double gamma_reg = 1.0;     // gamma, H^2 in the theory configuration
  double beta_bonus = 1.0;
  double epsilon_f = 1e-2;
  double delta = 0.05;

  void validate() const {
    if (lambda_ed < 0 || gamma_reg < 0 || beta_bonus < 0 || epsilon_f < 0 || delta < 0)
      throw std::invalid_argument("BonusConfig: fields must be nonnegative");
    if (!std::isfinite(beta_bonus)) throw std::invalid_argument("BonusConfig: beta not finite");
  }
};

/// log-covering-number surrogate for the linear class: d * log(1 + 4 B H / eps).
inline double log_covering_surrogate(int dim, double weight_bound, double output_clip,
                                     double epsilon_f) {
  return dim * std::log(1.0 + 4.0 * weight_bound * output_clip / epsilon_f);
}

/// Bonus multiplier sqrt(8 H^2 log(H N_F(eps)/delta) + 4 eps N + gamma) with
/// the covering number replaced by the linear-class surrogate.
inline double default_beta_bonus(const LinearFunctionClass& cls, double epsilon_f, double delta,
                                 double gamma_reg, int batch_size) {
  const double H = cls.output_clip;
  double log_nf = log_covering_surrogate(cls.feature_map.dim, cls.weight_bound, H, epsilon_f);
  double inside = 8.0 * H * H * (std::log(H) + log_nf - std::log(delta)) +
                  4.0 * epsilon_f * batch_size + gamma_reg;
  return std::sqrt(std::max(0.0, inside));
}

/// Ridge least-squares fit over the class; the weight is radially projected
/// onto the B-ball if needed. lambda_ed = 0 falls back to the minimum-norm
/// pseudo-solution.
inline Eigen::VectorXd least_squares_fit(const LinearFunctionClass& cls,
                                         const std::vector<std::tuple<int, int, double>>& dataset,
                                         double lambda_ed) {
  if (dataset.empty()) throw std::invalid_argument("least_squares_fit: empty dataset");
  const int d = cls.feature_map.dim;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (const auto& [s, a, target] : dataset) {
    Eigen::VectorXd phi = cls.feature_map.features(s, a);
    gram.noalias() += phi * phi.transpose();
    rhs.noalias() += target * phi;
  }
  Eigen::VectorXd w;
  if (lambda_ed > 0.0) {
    gram.diagonal().array() += lambda_ed;
    w = gram.ldlt().solve(rhs);
  } else {
    w = gram.completeOrthogonalDecomposition().solve(rhs);
  }
  double norm = w.norm();
  if (norm > cls.weight_bound && norm > 0.0) w *= cls.weight_bound / norm;
  return w;
}

/// Incremental Gram-matrix accumulator behind D_F. For the pre-clip linear
/// family with ||w|| <= B the sup over weight pairs has the elliptic closed
/// form D_F(z)^2 = phi(z)^T (Gram + lambda/(4B^2) I)^{-1} phi(z).
class DfAccumulator {
 public:
  DfAccumulator(const LinearFunctionClass& cls, double lambda_ed)
      : cls_(cls), lambda_ed_(lambda_ed), gram_(Eigen::MatrixXd::Zero(cls.feature_map.dim,
                                                                      cls.feature_map.dim)) {
    if (!(lambda_ed > 0.0))
      throw std::invalid_argument("D_F uncertainty requires lambda_ed > 0");
  }

  void add(int s, int a) {
    Eigen::VectorXd phi = cls_.feature_map.features(s, a);
    gram_.noalias() += phi * phi.transpose();
    dirty_ = true;
  }

  double uncertainty(int s, int a) const {
    const double B = cls_.weight_bound;
    if (B == 0.0) return 0.0;  // single constant function
    refresh();
    Eigen::VectorXd phi = cls_.feature_map.features(s, a);
    double q = phi.dot(solver_.solve(phi));
    double df = std::sqrt(std::max(0.0, q));
    return std::min(df, 2.0 * B / std::sqrt(lambda_ed_));
  }

 private:
  void refresh() const {
    if (!dirty_ && initialized_) return;
    Eigen::MatrixXd m = gram_;
    const double B = cls_.weight_bound;
    m.diagonal().array() += lambda_ed_ / (4.0 * B * B);
    solver_.compute(m);
    dirty_ = false;
    initialized_ = true;
  }

  const LinearFunctionClass& cls_;
  double lambda_ed_;
  Eigen::MatrixXd gram_;
  mutable Eigen::LDLT<Eigen::MatrixXd> solver_;
  mutable bool dirty_ = true;
  mutable bool initialized_ = false;
};

/// D_F(query; history) for the linear class.
inline double d_f_uncertainty(const LinearFunctionClass& cls, std::pair<int, int> query,
                              const std::vector<std::pair<int, int>>& history, double lambda_ed) {
  DfAccumulator acc(cls, lambda_ed);
  for (const auto& [s, a] : history) acc.add(s, a);
  return acc.uncertainty(query.first, query.second);
}

/// dim(F, Z) = sum_i min(1, D_F(z_i; z_{[i-1]})^2), computed incrementally.
inline double estimate_eluder_dim(const LinearFunctionClass& cls,
                                  const std::vector<std::pair<int, int>>& sequence,
                                  double lambda_ed) {
  if (sequence.empty()) throw std::invalid_argument("estimate_eluder_dim: empty sequence");
  DfAccumulator acc(cls, lambda_ed);
  double total = 0.0;
  for (const auto& [s, a] : sequence) {
    double df = acc.uncertainty(s, a);
    total += std::min(1.0, df * df);
    acc.add(s, a);
  }
  return total;
}

/// b_h(s, a) = beta_bonus * D_F((s, a); history_h).
inline double exploration_bonus(const BonusConfig& config, const LinearFunctionClass& cls,
                                std::pair<int, int> query,
                                const std::vector<std::pair<int, int>>& history_h) {
  config.validate();
  return config.beta_bonus * d_f_uncertainty(cls, query, history_h, config.lambda_ed);
}

inline void write_feature_map(KvWriter& w, const FeatureMap& f) {
  w.put("type", std::string("feature_map"));
  w.put("format_version", 1);
  w.put("num_states", f.num_states);
  w.put("num_actions", f.num_actions);
  w.put("dim", f.dim);
  w.put("tabular", f.tabular ? 1 : 0);
  if (!f.tabular) w.put("matrix", f.matrix);
}

inline FeatureMap read_feature_map(const KvReader& r) {
  if (r.get_string("type") != "feature_map")
    throw std::runtime_error("read_feature_map: wrong record type");
  int s = static_cast<int>(r.get_int("num_states"));
  int a = static_cast<int>(r.get_int("num_actions"));
  if (r.get_int("tabular") != 0) return FeatureMap::make_tabular(s, a);
  return FeatureMap::make_dense(s, a, static_cast<int>(r.get_int("dim")), r.get_vector("matrix"));
}

}  // namespace ilde
