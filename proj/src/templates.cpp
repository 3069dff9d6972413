#include "cbtshot/templates.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "cbtshot/optim.hpp"
#include "cbtshot/rng.hpp"

namespace cbtshot {

void TemplateConfig::validate() const {
  if (subset_size < 1) throw InvalidSpec("subset_size must be positive");
  if (learning_rate <= 0.0) throw InvalidSpec("learning_rate must be positive");
  if (max_epochs < 1) throw InvalidSpec("max_epochs must be positive");
  if (early_stop_patience < 1) throw InvalidSpec("early_stop_patience must be positive");
  if (embedding_dims.empty()) throw InvalidSpec("embedding_dims must be nonempty");
  for (int d : embedding_dims) {
    if (d < 1) throw InvalidSpec("embedding_dims entries must be positive");
  }
}

DgnModel::DgnModel(int num_rois, const std::vector<int>& embedding_dims,
                   std::mt19937_64& rng)
    : num_rois_(num_rois) {
  int fan_in = num_rois;  // input features are the connectivity rows
  for (int dim : embedding_dims) {
    layers_.push_back(make_mp_layer(fan_in, dim, rng));
    fan_in = dim;
  }
}

std::vector<Matrix*> DgnModel::parameters() {
  std::vector<Matrix*> ps;
  for (auto& l : layers_) {
    ps.push_back(&l.weight_msg);
    ps.push_back(&l.weight_self);
    ps.push_back(&l.bias);
  }
  return ps;
}

ad::Var DgnModel::candidate(const Population& pop, const ParamBinding& params) const {
  ad::Var mean_embedding;
  const double inv_n = 1.0 / static_cast<double>(pop.size());
  for (const auto& member : pop.members()) {
    ad::Var adj = ad::Var::constant(member.weights());
    ad::Var h = ad::Var::constant(raw_row_features(member.weights()));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = mp_forward(adj, h, params, 3 * l);
    }
    ad::Var scaled = ad::scale(h, inv_n);
    mean_embedding = mean_embedding.valid() ? ad::add(mean_embedding, scaled) : scaled;
  }
  const int d = static_cast<int>(mean_embedding.value().cols());
  return ad::pairwise_weighted_l1(mean_embedding, ad::Var::constant(Matrix::Ones(d, 1)));
}

Template linear_average_template(const Population& pop) {
  Matrix acc = Matrix::Zero(pop.num_rois(), pop.num_rois());
  for (const auto& m : pop.members()) acc += m.weights();
  acc /= static_cast<double>(pop.size());
  return ConnectivityMatrix::validate(acc);
}

std::size_t random_one_shot_select(const Population& pop, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> dist(0, pop.size() - 1);
  return dist(rng);
}

double centeredness(const Template& t, const Population& pop) {
  double sum = 0.0;
  for (const auto& m : pop.members()) sum += frobenius_distance(t, m);
  return sum / static_cast<double>(pop.size());
}

Template estimate_cbt(const Population& pop, const TemplateConfig& cfg) {
  cfg.validate();
  int subset = cfg.subset_size;
  if (subset > static_cast<int>(pop.size())) {
    std::cerr << "estimate_cbt: subset_size " << subset << " clamped to population size "
              << pop.size() << "\n";
    subset = static_cast<int>(pop.size());
  }

  auto rng = make_rng(derive_seed(cfg.rng_seed, "estimate_cbt"));
  DgnModel model(pop.num_rois(), cfg.embedding_dims, rng);
  AdamW opt(model.parameters(),
            {.lr = cfg.learning_rate, .beta1 = 0.9, .beta2 = 0.999});

  std::vector<std::size_t> indices(pop.size());
  std::iota(indices.begin(), indices.end(), 0);

  Matrix best_candidate;
  double best_center = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    ParamBinding params(model.parameters());
    ad::Var candidate = model.candidate(pop, params);

    // fresh random subset S each epoch
    std::shuffle(indices.begin(), indices.end(), rng);
    ad::Var loss;
    for (int s = 0; s < subset; ++s) {
      ad::Var term = ad::frobenius_norm_diff(
          candidate, ad::Var::constant(pop[indices[s]].weights()));
      loss = loss.valid() ? ad::add(loss, term) : term;
    }
    if (!std::isfinite(loss.scalar_value())) {
      throw NonConvergence("estimate_cbt: loss became non-finite at epoch " +
                           std::to_string(epoch));
    }
    ad::backward(loss);
    opt.step(params.grads());

    // track by full-population centeredness; candidate edges are already
    // symmetric, nonnegative, zero-diagonal
    Template snapshot = ConnectivityMatrix::validate(candidate.value());
    const double center = centeredness(snapshot, pop);
    if (center < best_center) {
      best_center = center;
      best_candidate = snapshot.weights();
      epochs_since_improvement = 0;
    } else if (++epochs_since_improvement >= cfg.early_stop_patience) {
      break;
    }
  }
  if (best_candidate.size() == 0) {
    throw NonConvergence("estimate_cbt: no finite candidate produced");
  }
  return ConnectivityMatrix::validate(best_candidate.cwiseMax(0.0));
}

}  // namespace cbtshot
