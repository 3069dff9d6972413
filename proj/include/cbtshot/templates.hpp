#pragma once

#include <cstdint>
#include <vector>

#include "cbtshot/graph_core.hpp"
#include "cbtshot/nn.hpp"

namespace cbtshot {

// A connectivity matrix standing in for a whole population or class.
using Template = ConnectivityMatrix;

struct TemplateConfig {
  int subset_size = 10;           // |S|, clamped to the population size
  double learning_rate = 0.0005;
  int max_epochs = 100;
  int early_stop_patience = 10;
  std::vector<int> embedding_dims = {32, 16, 8};
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Message-passing network that embeds every node of every member and reads
// a candidate template off the pairwise embedding distances.
class DgnModel {
public:
  DgnModel(int num_rois, const std::vector<int>& embedding_dims, std::mt19937_64& rng);

  std::vector<Matrix*> parameters();

  // Candidate template from the population: members are embedded
  // individually, embeddings averaged, edges read off as L1 distances
  // between node embeddings. Symmetric, nonnegative, zero diagonal by
  // construction.
  ad::Var candidate(const Population& pop, const ParamBinding& params) const;

  int num_rois() const { return num_rois_; }

private:
  int num_rois_;
  std::vector<MessagePassingLayer> layers_;
};

// Elementwise mean of the population.
Template linear_average_template(const Population& pop);

// Uniform member draw, deterministic under seed.
std::size_t random_one_shot_select(const Population& pop, std::uint64_t seed);

// Mean Frobenius distance from t to every member.
double centeredness(const Template& t, const Population& pop);

// Learns a centered template: trains the embedding network against the
// Frobenius objective on a freshly resampled member subset each epoch and
// returns the candidate with the lowest full-population centeredness seen.
Template estimate_cbt(const Population& pop, const TemplateConfig& cfg);

}  // namespace cbtshot
