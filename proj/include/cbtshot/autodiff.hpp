#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace cbtshot::ad {

// Minimal reverse-mode autodiff over dense double matrices. Graphs are
// built eagerly per forward pass and freed when the last Var handle goes
// out of scope. Scalars are 1x1 matrices. Not thread-safe within one
// graph; independent graphs on different threads are fine.
struct Node {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;  // allocated lazily, same shape as value
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
  bool requires_grad = false;
  std::uint64_t order = 0;  // creation index, defines topological order

  void accumulate(const Eigen::MatrixXd& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
public:
  Var() = default;

  static Var constant(Eigen::MatrixXd v) { return make_leaf(std::move(v), false); }
  static Var param(Eigen::MatrixXd v) { return make_leaf(std::move(v), true); }
  static Var scalar(double v, bool requires_grad = false) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return make_leaf(std::move(m), requires_grad);
  }

  bool valid() const { return node_ != nullptr; }
  const Eigen::MatrixXd& value() const { return node_->value; }
  // Zero matrix if backward never reached this node.
  Eigen::MatrixXd grad() const {
    if (node_->grad.size() == 0) {
      return Eigen::MatrixXd::Zero(node_->value.rows(), node_->value.cols());
    }
    return node_->grad;
  }
  double scalar_value() const { return node_->value(0, 0); }
  bool requires_grad() const { return node_->requires_grad; }

  std::shared_ptr<Node> node() const { return node_; }

  static Var from_node(std::shared_ptr<Node> n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

private:
  static Var make_leaf(Eigen::MatrixXd v, bool requires_grad);
  std::shared_ptr<Node> node_;
};

// Runs backpropagation from a scalar root (1x1). Accumulates grads in every
// reachable node with requires_grad set.
void backward(const Var& root);

// ---- primitive ops ----
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var cmul(const Var& a, const Var& b);  // elementwise product
Var cdiv(const Var& a, const Var& b);  // elementwise quotient
Var scale(const Var& a, double c);
Var add_const(const Var& a, double c);
Var sum(const Var& a);                 // 1x1
Var pick(const Var& a, int i, int j);  // 1x1

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var elu(const Var& a);                    // alpha = 1
Var leaky_relu(const Var& a, double alpha);
Var log(const Var& a);
Var exp(const Var& a);
Var abs(const Var& a);
Var softplus(const Var& a);               // log(1 + e^x), overflow-safe
// sqrt with the backward denominator floored at eps (value is exact sqrt).
Var sqrt_floor(const Var& a, double eps);
// max(x, c) elementwise; gradient passes only where x > c.
Var max_floor(const Var& a, double c);
// clamp to [0, 1]; gradient passes strictly inside the interval.
Var clamp01(const Var& a);

// Row-wise softmax restricted to mask-true entries; masked-out entries are
// exactly zero. Every row must have at least one true entry.
Var masked_softmax_rows(const Var& scores,
                        const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask);
// Numerically stable log-softmax over each full row.
Var log_softmax_rows(const Var& a);

// C[i][j] = sum_k w_k |Z(i,k) - Z(j,k)|; Z is r x d, w is d x 1.
// Symmetric with zero diagonal by construction.
Var pairwise_weighted_l1(const Var& z, const Var& w);

// ---- composition helpers ----
Var ones(int rows, int cols);
// H + 1 * b with b a 1 x c row vector.
Var add_rowvec(const Var& h, const Var& b);
// Column vector of row means (1/c) * A * 1.
Var row_mean(const Var& a);
// 1 x c mean over rows.
Var mean_rows(const Var& a);
// ||a - b||_F as a 1x1 Var, with gradient floor for the zero-distance case.
Var frobenius_norm_diff(const Var& a, const Var& b);

}  // namespace cbtshot::ad
