#include "cbtshot/nn.hpp"

#include <algorithm>
#include <cmath>

namespace cbtshot {

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

MessagePassingLayer make_mp_layer(int fan_in, int fan_out, std::mt19937_64& rng) {
  MessagePassingLayer layer;
  layer.weight_msg = glorot(fan_in, fan_out, rng);
  layer.weight_self = glorot(fan_in, fan_out, rng);
  layer.bias = Matrix::Zero(1, fan_out);
  return layer;
}

ad::Var mp_forward(const ad::Var& adjacency, const ad::Var& features,
                   const ParamBinding& params, std::size_t offset) {
  const ad::Var& w = params.vars[offset];
  const ad::Var& u = params.vars[offset + 1];
  const ad::Var& b = params.vars[offset + 2];
  ad::Var msg = ad::matmul(ad::matmul(adjacency, features), w);
  ad::Var self = ad::matmul(features, u);
  return ad::tanh(ad::add_rowvec(ad::add(msg, self), b));
}

Matrix raw_row_features(const Matrix& weights) { return weights; }

Matrix sorted_row_features(const Matrix& weights) {
  Matrix f = weights;
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    std::vector<double> row(f.cols());
    for (Eigen::Index j = 0; j < f.cols(); ++j) row[j] = f(i, j);
    std::sort(row.begin(), row.end(), std::greater<>());
    for (Eigen::Index j = 0; j < f.cols(); ++j) f(i, j) = row[j];
  }
  return f;
}

Matrix offdiag_mask(int r) {
  Matrix m = Matrix::Ones(r, r);
  m.diagonal().setZero();
  return m;
}

ad::Var gaussian_kl_nodes(const ad::Var& pred, const ad::Var& truth) {
  const int r = static_cast<int>(pred.value().rows());
  if (truth.value().rows() != r || truth.value().cols() != r) {
    throw DimensionMismatch("gaussian_kl_nodes: shape mismatch");
  }
  if (r < 2) throw DimensionMismatch("gaussian_kl_nodes: need r >= 2");
  // Per node: fit N(mu, sigma) to the r-1 off-diagonal weights (maximum
  // likelihood, sigma floored at 1e-6), then sum the closed-form
  // KL(truth || pred) over nodes.
  const ad::Var count = ad::Var::constant(Matrix::Constant(r, 1, 1.0 / (r - 1)));
  auto moments = [&](const ad::Var& m) {
    ad::Var mu = ad::matmul(m, count);
    ad::Var second = ad::matmul(ad::cmul(m, m), count);
    ad::Var variance = ad::sub(second, ad::cmul(mu, mu));
    ad::Var sigma = ad::max_floor(ad::sqrt_floor(ad::max_floor(variance, 0.0), 1e-9), 1e-6);
    return std::make_pair(mu, sigma);
  };
  auto [mu_p, sigma_p] = moments(pred);
  auto [mu_t, sigma_t] = moments(truth);
  ad::Var log_ratio = ad::sub(ad::log(sigma_p), ad::log(sigma_t));
  ad::Var dmu = ad::sub(mu_t, mu_p);
  ad::Var numer = ad::add(ad::cmul(sigma_t, sigma_t), ad::cmul(dmu, dmu));
  ad::Var denom = ad::scale(ad::cmul(sigma_p, sigma_p), 2.0);
  ad::Var per_node = ad::add_const(ad::add(log_ratio, ad::cdiv(numer, denom)), -0.5);
  return ad::sum(per_node);
}

ad::Var upper_l1(const ad::Var& a, const ad::Var& b) {
  const int r = static_cast<int>(a.value().rows());
  Matrix upper = Matrix::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = i + 1; j < r; ++j) upper(i, j) = 1.0;
  }
  return ad::sum(ad::cmul(ad::abs(ad::sub(a, b)), ad::Var::constant(upper)));
}

}  // namespace cbtshot
