#include "cbtshot/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace cbtshot::ad {

namespace {

std::atomic<std::uint64_t> g_order{0};

using Mat = Eigen::MatrixXd;

Var make_op(Mat value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->order = ++g_order;
  bool needs = false;
  for (const auto& p : parents) {
    needs = needs || p.requires_grad();
    n->parents.push_back(p.node());
  }
  n->requires_grad = needs;
  if (needs) n->backprop = std::move(backprop);
  return Var::from_node(std::move(n));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var Var::make_leaf(Eigen::MatrixXd v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->order = ++g_order;
  n->requires_grad = requires_grad;
  return Var::from_node(std::move(n));
}

void backward(const Var& root) {
  if (root.value().rows() != 1 || root.value().cols() != 1) {
    throw std::invalid_argument("backward: root must be scalar");
  }
  // Collect the reachable subgraph, then replay in reverse creation order.
  std::vector<std::shared_ptr<Node>> nodes;
  std::unordered_set<Node*> seen;
  std::vector<std::shared_ptr<Node>> stack{root.node()};
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || seen.count(n.get())) continue;
    seen.insert(n.get());
    nodes.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p);
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->order > b->order; });
  root.node()->accumulate(Mat::Ones(1, 1));
  for (const auto& n : nodes) {
    if (n->backprop && n->grad.size() != 0) n->backprop(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().cols() != b.value().rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ");
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.value() * b.value(), {a, b}, [an, bn](Node& n) {
    if (an->requires_grad) an->accumulate(n.grad * bn->value.transpose());
    if (bn->requires_grad) bn->accumulate(an->value.transpose() * n.grad);
  });
}

Var transpose(const Var& a) {
  auto an = a.node();
  return make_op(a.value().transpose(), {a},
                 [an](Node& n) { an->accumulate(n.grad.transpose()); });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.value() + b.value(), {a, b}, [an, bn](Node& n) {
    if (an->requires_grad) an->accumulate(n.grad);
    if (bn->requires_grad) bn->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.value() - b.value(), {a, b}, [an, bn](Node& n) {
    if (an->requires_grad) an->accumulate(n.grad);
    if (bn->requires_grad) bn->accumulate(-n.grad);
  });
}

Var cmul(const Var& a, const Var& b) {
  check_same_shape(a, b, "cmul");
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [an, bn](Node& n) {
    if (an->requires_grad) an->accumulate(n.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) bn->accumulate(n.grad.cwiseProduct(an->value));
  });
}

Var cdiv(const Var& a, const Var& b) {
  check_same_shape(a, b, "cdiv");
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.value().cwiseQuotient(b.value()), {a, b}, [an, bn](Node& n) {
    if (an->requires_grad) an->accumulate(n.grad.cwiseQuotient(bn->value));
    if (bn->requires_grad) {
      Mat g = -n.grad.cwiseProduct(an->value).cwiseQuotient(bn->value.cwiseProduct(bn->value));
      bn->accumulate(g);
    }
  });
}

Var scale(const Var& a, double c) {
  auto an = a.node();
  return make_op(a.value() * c, {a}, [an, c](Node& n) { an->accumulate(n.grad * c); });
}

Var add_const(const Var& a, double c) {
  auto an = a.node();
  return make_op(a.value().array() + c, {a}, [an](Node& n) { an->accumulate(n.grad); });
}

Var sum(const Var& a) {
  auto an = a.node();
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return make_op(std::move(v), {a}, [an](Node& n) {
    an->accumulate(Mat::Constant(an->value.rows(), an->value.cols(), n.grad(0, 0)));
  });
}

Var pick(const Var& a, int i, int j) {
  auto an = a.node();
  Mat v(1, 1);
  v(0, 0) = a.value()(i, j);
  return make_op(std::move(v), {a}, [an, i, j](Node& n) {
    Mat g = Mat::Zero(an->value.rows(), an->value.cols());
    g(i, j) = n.grad(0, 0);
    an->accumulate(g);
  });
}

Var tanh(const Var& a) {
  auto an = a.node();
  Mat v = a.value().array().tanh();
  return make_op(std::move(v), {a}, [an](Node& n) {
    an->accumulate((n.grad.array() * (1.0 - n.value.array().square())).matrix());
  });
}

Var sigmoid(const Var& a) {
  auto an = a.node();
  Mat v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_op(std::move(v), {a}, [an](Node& n) {
    an->accumulate((n.grad.array() * n.value.array() * (1.0 - n.value.array())).matrix());
  });
}

Var elu(const Var& a) {
  auto an = a.node();
  Mat v = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return make_op(std::move(v), {a}, [an](Node& n) {
    Mat d = an->value.unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
    an->accumulate(n.grad.cwiseProduct(d));
  });
}

Var leaky_relu(const Var& a, double alpha) {
  auto an = a.node();
  Mat v = a.value().unaryExpr([alpha](double x) { return x > 0.0 ? x : alpha * x; });
  return make_op(std::move(v), {a}, [an, alpha](Node& n) {
    Mat d = an->value.unaryExpr([alpha](double x) { return x > 0.0 ? 1.0 : alpha; });
    an->accumulate(n.grad.cwiseProduct(d));
  });
}

Var log(const Var& a) {
  auto an = a.node();
  Mat v = a.value().array().log();
  return make_op(std::move(v), {a}, [an](Node& n) {
    an->accumulate(n.grad.cwiseQuotient(an->value));
  });
}

Var exp(const Var& a) {
  auto an = a.node();
  Mat v = a.value().array().exp();
  return make_op(std::move(v), {a}, [an](Node& n) {
    an->accumulate(n.grad.cwiseProduct(n.value));
  });
}

Var abs(const Var& a) {
  auto an = a.node();
  Mat v = a.value().array().abs();
  return make_op(std::move(v), {a}, [an](Node& n) {
    Mat s = an->value.unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    an->accumulate(n.grad.cwiseProduct(s));
  });
}

Var softplus(const Var& a) {
  auto an = a.node();
  Mat v = a.value().unaryExpr(
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return make_op(std::move(v), {a}, [an](Node& n) {
    Mat d = an->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    an->accumulate(n.grad.cwiseProduct(d));
  });
}

Var sqrt_floor(const Var& a, double eps) {
  auto an = a.node();
  Mat v = a.value().array().max(0.0).sqrt();
  return make_op(std::move(v), {a}, [an, eps](Node& n) {
    Mat d = n.value.unaryExpr([eps](double s) { return 0.5 / std::max(s, eps); });
    an->accumulate(n.grad.cwiseProduct(d));
  });
}

Var max_floor(const Var& a, double c) {
  auto an = a.node();
  Mat v = a.value().array().max(c);
  return make_op(std::move(v), {a}, [an, c](Node& n) {
    Mat d = an->value.unaryExpr([c](double x) { return x > c ? 1.0 : 0.0; });
    an->accumulate(n.grad.cwiseProduct(d));
  });
}

Var clamp01(const Var& a) {
  auto an = a.node();
  Mat v = a.value().array().max(0.0).min(1.0);
  return make_op(std::move(v), {a}, [an](Node& n) {
    Mat d = an->value.unaryExpr([](double x) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; });
    an->accumulate(n.grad.cwiseProduct(d));
  });
}

Var masked_softmax_rows(const Var& scores,
                        const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask) {
  const auto rows = scores.value().rows();
  const auto cols = scores.value().cols();
  if (mask.rows() != rows || mask.cols() != cols) {
    throw std::invalid_argument("masked_softmax_rows: mask shape mismatch");
  }
  Mat v = Mat::Zero(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (mask(i, j)) mx = std::max(mx, scores.value()(i, j));
    }
    if (!std::isfinite(mx)) {
      throw std::invalid_argument("masked_softmax_rows: row " + std::to_string(i) +
                                  " has an empty neighborhood");
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (mask(i, j)) z += std::exp(scores.value()(i, j) - mx);
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (mask(i, j)) v(i, j) = std::exp(scores.value()(i, j) - mx) / z;
    }
  }
  auto an = scores.node();
  auto msk = mask;
  return make_op(std::move(v), {scores}, [an, msk](Node& n) {
    Mat g = Mat::Zero(n.value.rows(), n.value.cols());
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      double dot = 0.0;
      for (Eigen::Index j = 0; j < n.value.cols(); ++j) {
        if (msk(i, j)) dot += n.grad(i, j) * n.value(i, j);
      }
      for (Eigen::Index j = 0; j < n.value.cols(); ++j) {
        if (msk(i, j)) g(i, j) = n.value(i, j) * (n.grad(i, j) - dot);
      }
    }
    an->accumulate(g);
  });
}

Var log_softmax_rows(const Var& a) {
  const auto rows = a.value().rows();
  const auto cols = a.value().cols();
  Mat v(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mx = a.value().row(i).maxCoeff();
    const double lse = std::log((a.value().row(i).array() - mx).exp().sum()) + mx;
    v.row(i) = a.value().row(i).array() - lse;
  }
  auto an = a.node();
  return make_op(std::move(v), {a}, [an](Node& n) {
    Mat g(n.value.rows(), n.value.cols());
    for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
      const double gsum = n.grad.row(i).sum();
      g.row(i) = n.grad.row(i).array() - n.value.row(i).array().exp() * gsum;
    }
    an->accumulate(g);
  });
}

Var pairwise_weighted_l1(const Var& z, const Var& w) {
  const auto r = z.value().rows();
  const auto d = z.value().cols();
  if (w.value().rows() != d || w.value().cols() != 1) {
    throw std::invalid_argument("pairwise_weighted_l1: w must be d x 1");
  }
  Mat v = Mat::Zero(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = i + 1; j < r; ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        s += w.value()(k, 0) * std::abs(z.value()(i, k) - z.value()(j, k));
      }
      v(i, j) = s;
      v(j, i) = s;
    }
  }
  auto zn = z.node();
  auto wn = w.node();
  return make_op(std::move(v), {z, w}, [zn, wn, r, d](Node& n) {
    Mat gz = Mat::Zero(r, d);
    Mat gw = Mat::Zero(d, 1);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < r; ++j) {
        if (i == j) continue;
        const double g = n.grad(i, j);
        if (g == 0.0) continue;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double diff = zn->value(i, k) - zn->value(j, k);
          const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
          gz(i, k) += g * wn->value(k, 0) * sgn;
          gz(j, k) -= g * wn->value(k, 0) * sgn;
          gw(k, 0) += g * std::abs(diff);
        }
      }
    }
    if (zn->requires_grad) zn->accumulate(gz);
    if (wn->requires_grad) wn->accumulate(gw);
  });
}

Var ones(int rows, int cols) { return Var::constant(Mat::Ones(rows, cols)); }

Var add_rowvec(const Var& h, const Var& b) {
  if (b.value().rows() != 1 || b.value().cols() != h.value().cols()) {
    throw std::invalid_argument("add_rowvec: b must be 1 x cols(h)");
  }
  return add(h, matmul(ones(static_cast<int>(h.value().rows()), 1), b));
}

Var row_mean(const Var& a) {
  const int c = static_cast<int>(a.value().cols());
  return matmul(a, Var::constant(Mat::Constant(c, 1, 1.0 / c)));
}

Var mean_rows(const Var& a) {
  const int r = static_cast<int>(a.value().rows());
  return matmul(Var::constant(Mat::Constant(1, r, 1.0 / r)), a);
}

Var frobenius_norm_diff(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return sqrt_floor(sum(cmul(d, d)), 1e-8);
}

}  // namespace cbtshot::ad
