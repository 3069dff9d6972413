#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cbtshot/graph_core.hpp"
#include "cbtshot/nn.hpp"

namespace cbtshot {

struct GatLayerParams {
  Matrix weight;     // F x F'
  Matrix attention;  // 2F' x 1, split into the source/target halves
  double leaky_relu_alpha = 0.2;
};

struct ClassifierConfig {
  double learning_rate = 0.0001;
  double weight_decay = 0.0005;
  int epochs = 300;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Architecture knobs kept identical across benchmark strategies.
struct GatArchitecture {
  std::vector<int> hidden_dims = {16, 8};
  double dropout_rate = 0.6;
  double leaky_relu_alpha = 0.2;
};

class GatModel {
public:
  GatModel(int num_rois, const GatArchitecture& arch, std::array<std::string, 2> classes,
           std::mt19937_64& rng);

  std::vector<Matrix*> parameters();

  // Log class scores (1x2) for one graph. Dropout masks are applied only
  // when `dropout_rng` is non-null (training).
  ad::Var forward(const ConnectivityMatrix& g, const ParamBinding& params,
                  std::mt19937_64* dropout_rng) const;

  int num_rois() const { return num_rois_; }
  const std::array<std::string, 2>& classes() const { return classes_; }
  double dropout_rate() const { return dropout_rate_; }

  std::vector<GatLayerParams> layers;
  Matrix readout_weight;  // d x 2
  Matrix readout_bias;    // 1 x 2

private:
  int num_rois_;
  double dropout_rate_;
  std::array<std::string, 2> classes_;
};

// e_ij = LeakyReLU(a . [W h_i || W h_j]) on mask-adjacent pairs (the mask is
// augmented with self-loops), softmax-normalized over each neighborhood.
// Rows sum to 1 on the neighborhood; non-neighbors are exactly zero.
Matrix attention_coefficients(const Matrix& features, const GatLayerParams& params,
                              const AdjacencyMask& mask);

// h'_i = ELU(sum_j alpha_ij W h_j) over the self-loop-augmented mask.
Matrix gat_layer_forward(const Matrix& features, const GatLayerParams& params,
                         const AdjacencyMask& mask);

struct Classification {
  std::string label;
  std::array<double, 2> probabilities;  // aligned with model.classes()
};

// Mean-thresholded mask plus self-loops, sorted-row node features, masked
// attention layers, mean-pool readout. Ties break toward the first class.
Classification classify(const GatModel& model, const ConnectivityMatrix& g);

// Cross-entropy training with decoupled weight decay and feature dropout
// (training only). The population must contain exactly two classes; works
// equally on full training folds and on a single template per class.
GatModel train_classifier(const Population& train, const ClassifierConfig& cfg,
                          const GatArchitecture& arch = {});

}  // namespace cbtshot
