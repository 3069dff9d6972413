#pragma once

#include <random>
#include <vector>

#include "cbtshot/autodiff.hpp"
#include "cbtshot/graph_core.hpp"

namespace cbtshot {

// Edge-conditioned message passing shared by the template estimator and the
// trajectory GAN models: H' = tanh(A H W + H U + 1 b), where A is the graph
// whose edge weights scale messages.
struct MessagePassingLayer {
  Matrix weight_msg;   // F x F'
  Matrix weight_self;  // F x F'
  Matrix bias;         // 1 x F'
};

MessagePassingLayer make_mp_layer(int fan_in, int fan_out, std::mt19937_64& rng);

Matrix glorot(int rows, int cols, std::mt19937_64& rng);

// Binds a model's parameter matrices to autodiff leaves for one step.
struct ParamBinding {
  std::vector<ad::Var> vars;

  explicit ParamBinding(const std::vector<Matrix*>& params, bool requires_grad = true) {
    vars.reserve(params.size());
    for (const auto* p : params) {
      vars.push_back(requires_grad ? ad::Var::param(*p) : ad::Var::constant(*p));
    }
  }

  std::vector<Matrix> grads() const {
    std::vector<Matrix> g;
    g.reserve(vars.size());
    for (const auto& v : vars) g.push_back(v.grad());
    return g;
  }
};

// Applies one message-passing layer; `offset` indexes the three parameter
// slots (W, U, b) of this layer inside `params`.
ad::Var mp_forward(const ad::Var& adjacency, const ad::Var& features,
                   const ParamBinding& params, std::size_t offset);

// Node features as the rows of the connectivity matrix.
Matrix raw_row_features(const Matrix& weights);

// Node features as each row sorted descending. Invariant under node
// permutation (the sorted multiset of a node's weights does not depend on
// neighbor order), which makes models built on them exactly
// permutation-equivariant.
Matrix sorted_row_features(const Matrix& weights);

// Constant mask with zeros on the diagonal, ones elsewhere.
Matrix offdiag_mask(int r);

// Per-node Gaussian KL between edge-weight distributions; see
// kl_alignment_loss for the contract. Inputs are r x r Vars with zero
// diagonals.
ad::Var gaussian_kl_nodes(const ad::Var& pred, const ad::Var& truth);

// Sum of |a-b| over the strict upper triangle as a Var.
ad::Var upper_l1(const ad::Var& a, const ad::Var& b);

}  // namespace cbtshot
