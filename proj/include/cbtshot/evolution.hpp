#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cbtshot/graph_core.hpp"
#include "cbtshot/nn.hpp"

namespace cbtshot {

struct EvolutionHyperparams {
  double lambda1 = 2.0;    // adversarial weight
  double lambda2 = 2.0;    // l1 weight
  double lambda3 = 0.001;  // KL weight
  double gen_lr_initial = 0.01;
  double gen_lr_final = 0.1;
  double disc_lr = 0.0002;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int epochs = 300;
  std::uint64_t rng_seed = 0;
  // Ablation switch: feed stage i>1 the ground-truth graph at t_{i-1}
  // instead of the previous stage's prediction.
  bool train_on_ground_truth_inputs = false;

  void validate() const;
};

// Graph-conditioned generator: message passing over the input graph from
// permutation-covariant node features, then a symmetric residual head. The
// output satisfies the connectivity invariants (symmetric, zero diagonal,
// entries in [0,1]) for any parameter values; with the head at zero the
// output is the clamped input itself.
class GeneratorModel {
public:
  GeneratorModel(int num_rois, const std::vector<int>& hidden_dims, std::mt19937_64& rng);

  std::vector<Matrix*> parameters();
  ad::Var forward(const Matrix& input, const ParamBinding& params) const;
  ConnectivityMatrix predict(const ConnectivityMatrix& input) const;

  int num_rois() const { return num_rois_; }
  void zero_output_head();

  std::vector<MessagePassingLayer> layers;
  Matrix head_sum;  // d x 1, edge score a.(z_i + z_j)
  Matrix head_abs;  // d x 1, edge score b.|z_i - z_j|

private:
  int num_rois_;
};

// Graph-conditioned encoder with mean-pool readout to a realness score.
class DiscriminatorModel {
public:
  DiscriminatorModel(int num_rois, const std::vector<int>& hidden_dims, std::mt19937_64& rng);

  std::vector<Matrix*> parameters();
  // Pre-sigmoid realness of `graph`; message passing is conditioned on the
  // Var's value, gradients flow through `graph` when it carries them.
  ad::Var logit(const ad::Var& graph, const ParamBinding& params) const;
  double score(const ConnectivityMatrix& graph) const;  // sigmoid(logit), in (0,1)

  int num_rois() const { return num_rois_; }

  std::vector<MessagePassingLayer> layers;
  Matrix readout_weight;  // d x 1
  Matrix readout_bias;    // 1 x 1

private:
  int num_rois_;
};

struct CascadeStage {
  GeneratorModel generator;
  DiscriminatorModel discriminator;
};

// T generator/discriminator pairs; stage i maps the graph at t_{i-1} to t_i.
struct CascadeModel {
  std::vector<CascadeStage> stages;

  int num_stages() const { return static_cast<int>(stages.size()); }
  int num_rois() const { return stages.front().generator.num_rois(); }
};

// Sum of absolute differences over the strict upper triangle.
double l1_loss(const ConnectivityMatrix& pred, const ConnectivityMatrix& truth);

// Per-node Gaussian KL between predicted and ground-truth edge-weight
// distributions (closed form, sigma floored at 1e-6), summed over nodes.
double kl_alignment_loss(const ConnectivityMatrix& pred, const ConnectivityMatrix& truth);

// One cascade stage's training batch, for loss assembly.
struct StageBatch {
  std::vector<ConnectivityMatrix> predictions;
  std::vector<ConnectivityMatrix> truths;
  std::vector<double> disc_scores;  // discriminator outputs on predictions, in (0,1)
};

// Full objective across stages: per stage
// lambda1 * mean(-log D(pred)) + (lambda2/n) * sum l1 + (lambda3/n) * sum KL.
double composite_loss(const std::vector<StageBatch>& stages, const EvolutionHyperparams& hp);

// Trains the stage-i pair to map the (predicted) graph at t_{i-1} to the
// ground truth at t_i, alternating discriminator/generator steps.
CascadeModel train_cascade(const std::vector<Trajectory>& train,
                           const EvolutionHyperparams& hp);

// Feeds the baseline through the cascade, collecting one graph per stage.
std::vector<ConnectivityMatrix> predict_trajectory(const CascadeModel& model,
                                                   const ConnectivityMatrix& baseline);

// Hidden embedding widths used for cascade models.
inline const std::vector<int> kGeneratorHiddenDims = {16, 8};
inline const std::vector<int> kDiscriminatorHiddenDims = {16, 8};

}  // namespace cbtshot
