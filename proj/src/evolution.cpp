#include "cbtshot/evolution.hpp"

#include <cmath>
#include <string>

#include "cbtshot/optim.hpp"
#include "cbtshot/rng.hpp"

namespace cbtshot {

void EvolutionHyperparams::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw InvalidSpec("lambda weights must be nonnegative");
  }
  if (gen_lr_initial <= 0.0 || gen_lr_final <= 0.0 || disc_lr <= 0.0) {
    throw InvalidSpec("learning rates must be positive");
  }
  if (adam_beta1 <= 0.0 || adam_beta1 >= 1.0 || adam_beta2 <= 0.0 || adam_beta2 >= 1.0) {
    throw InvalidSpec("adam betas must lie in (0,1)");
  }
  if (epochs < 1) throw InvalidSpec("epochs must be positive");
}

GeneratorModel::GeneratorModel(int num_rois, const std::vector<int>& hidden_dims,
                               std::mt19937_64& rng)
    : num_rois_(num_rois) {
  int fan_in = num_rois;
  for (int dim : hidden_dims) {
    layers.push_back(make_mp_layer(fan_in, dim, rng));
    fan_in = dim;
  }
  head_sum = glorot(fan_in, 1, rng) * 0.1;
  head_abs = glorot(fan_in, 1, rng) * 0.1;
}

std::vector<Matrix*> GeneratorModel::parameters() {
  std::vector<Matrix*> ps;
  for (auto& l : layers) {
    ps.push_back(&l.weight_msg);
    ps.push_back(&l.weight_self);
    ps.push_back(&l.bias);
  }
  ps.push_back(&head_sum);
  ps.push_back(&head_abs);
  return ps;
}

void GeneratorModel::zero_output_head() {
  head_sum.setZero();
  head_abs.setZero();
}

ad::Var GeneratorModel::forward(const Matrix& input, const ParamBinding& params) const {
  ad::Var adj = ad::Var::constant(input);
  ad::Var h = ad::Var::constant(sorted_row_features(input));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = mp_forward(adj, h, params, 3 * l);
  }
  const std::size_t head_offset = 3 * layers.size();
  const ad::Var& a = params.vars[head_offset];
  const ad::Var& b = params.vars[head_offset + 1];
  const int r = num_rois_;
  const int d = static_cast<int>(h.value().cols());

  // symmetric residual: delta_ij = a.(z_i + z_j) + b.|z_i - z_j|
  ad::Var u = ad::matmul(h, a);  // r x 1
  ad::Var delta_sum = ad::add(ad::matmul(u, ad::ones(1, r)), ad::matmul(ad::ones(r, 1), ad::transpose(u)));
  ad::Var delta_abs = ad::pairwise_weighted_l1(h, b);
  (void)d;
  ad::Var raw = ad::add(adj, ad::add(delta_sum, delta_abs));
  ad::Var symmetric = ad::scale(ad::add(raw, ad::transpose(raw)), 0.5);
  return ad::clamp01(ad::cmul(symmetric, ad::Var::constant(offdiag_mask(r))));
}

ConnectivityMatrix GeneratorModel::predict(const ConnectivityMatrix& input) const {
  if (input.num_rois() != num_rois_) {
    throw DimensionMismatch("generator expects r=" + std::to_string(num_rois_));
  }
  auto self = const_cast<GeneratorModel*>(this);
  ParamBinding params(self->parameters(), /*requires_grad=*/false);
  return ConnectivityMatrix::validate(forward(input.weights(), params).value());
}

DiscriminatorModel::DiscriminatorModel(int num_rois, const std::vector<int>& hidden_dims,
                                       std::mt19937_64& rng)
    : num_rois_(num_rois) {
  int fan_in = num_rois;
  for (int dim : hidden_dims) {
    layers.push_back(make_mp_layer(fan_in, dim, rng));
    fan_in = dim;
  }
  readout_weight = glorot(fan_in, 1, rng);
  readout_bias = Matrix::Zero(1, 1);
}

std::vector<Matrix*> DiscriminatorModel::parameters() {
  std::vector<Matrix*> ps;
  for (auto& l : layers) {
    ps.push_back(&l.weight_msg);
    ps.push_back(&l.weight_self);
    ps.push_back(&l.bias);
  }
  ps.push_back(&readout_weight);
  ps.push_back(&readout_bias);
  return ps;
}

ad::Var DiscriminatorModel::logit(const ad::Var& graph, const ParamBinding& params) const {
  ad::Var h = graph;  // rows of the judged graph are its node features
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = mp_forward(graph, h, params, 3 * l);
  }
  const std::size_t off = 3 * layers.size();
  ad::Var pooled = ad::mean_rows(h);  // 1 x d
  return ad::add(ad::matmul(pooled, params.vars[off]), params.vars[off + 1]);
}

double DiscriminatorModel::score(const ConnectivityMatrix& graph) const {
  auto self = const_cast<DiscriminatorModel*>(this);
  ParamBinding params(self->parameters(), /*requires_grad=*/false);
  const double z = logit(ad::Var::constant(graph.weights()), params).scalar_value();
  return 1.0 / (1.0 + std::exp(-z));
}

double l1_loss(const ConnectivityMatrix& pred, const ConnectivityMatrix& truth) {
  if (pred.num_rois() != truth.num_rois()) {
    throw DimensionMismatch("l1_loss: r mismatch");
  }
  double sum = 0.0;
  const int r = pred.num_rois();
  for (int i = 0; i < r; ++i) {
    for (int j = i + 1; j < r; ++j) sum += std::abs(pred(i, j) - truth(i, j));
  }
  return sum;
}

double kl_alignment_loss(const ConnectivityMatrix& pred, const ConnectivityMatrix& truth) {
  if (pred.num_rois() != truth.num_rois()) {
    throw DimensionMismatch("kl_alignment_loss: r mismatch");
  }
  return gaussian_kl_nodes(ad::Var::constant(pred.weights()),
                           ad::Var::constant(truth.weights()))
      .scalar_value();
}

double composite_loss(const std::vector<StageBatch>& stages, const EvolutionHyperparams& hp) {
  hp.validate();
  if (stages.empty()) throw EmptyBatch("composite_loss: no stages");
  double total = 0.0;
  for (const auto& stage : stages) {
    const std::size_t n = stage.predictions.size();
    if (n == 0) throw EmptyBatch("composite_loss: empty stage batch");
    if (stage.truths.size() != n || stage.disc_scores.size() != n) {
      throw DimensionMismatch("composite_loss: misaligned stage batch");
    }
    double adv = 0.0, l1 = 0.0, kl = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      adv += -std::log(std::min(std::max(stage.disc_scores[s], 1e-12), 1.0 - 1e-12));
      l1 += l1_loss(stage.predictions[s], stage.truths[s]);
      kl += kl_alignment_loss(stage.predictions[s], stage.truths[s]);
    }
    total += hp.lambda1 * (adv / static_cast<double>(n)) +
             (hp.lambda2 / static_cast<double>(n)) * l1 +
             (hp.lambda3 / static_cast<double>(n)) * kl;
  }
  return total;
}

namespace {

double scheduled_lr(const EvolutionHyperparams& hp, int epoch) {
  if (hp.epochs <= 1) return hp.gen_lr_initial;
  const double t = static_cast<double>(epoch) / static_cast<double>(hp.epochs - 1);
  return hp.gen_lr_initial + t * (hp.gen_lr_final - hp.gen_lr_initial);
}

// One stage of adversarial training: inputs at t_{i-1}, truths at t_i.
void train_stage(CascadeStage& stage, const std::vector<ConnectivityMatrix>& inputs,
                 const std::vector<ConnectivityMatrix>& truths,
                 const EvolutionHyperparams& hp, int stage_index) {
  const std::size_t n = inputs.size();
  AdamW gen_opt(stage.generator.parameters(),
                {.lr = hp.gen_lr_initial, .beta1 = hp.adam_beta1, .beta2 = hp.adam_beta2});
  AdamW disc_opt(stage.discriminator.parameters(),
                 {.lr = hp.disc_lr, .beta1 = hp.adam_beta1, .beta2 = hp.adam_beta2});

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    gen_opt.set_lr(scheduled_lr(hp, epoch));

    // discriminator step: maximize log D(truth) + log(1 - D(pred)),
    // predictions detached
    {
      ParamBinding dparams(stage.discriminator.parameters());
      ad::Var loss;
      for (std::size_t s = 0; s < n; ++s) {
        ConnectivityMatrix pred = stage.generator.predict(inputs[s]);
        ad::Var z_truth =
            stage.discriminator.logit(ad::Var::constant(truths[s].weights()), dparams);
        ad::Var z_pred =
            stage.discriminator.logit(ad::Var::constant(pred.weights()), dparams);
        ad::Var term = ad::add(ad::softplus(ad::scale(z_truth, -1.0)), ad::softplus(z_pred));
        loss = loss.valid() ? ad::add(loss, term) : term;
      }
      loss = ad::scale(loss, 1.0 / static_cast<double>(n));
      if (!std::isfinite(loss.scalar_value())) {
        throw NonConvergence("train_cascade: discriminator loss non-finite at stage " +
                             std::to_string(stage_index) + " epoch " + std::to_string(epoch));
      }
      ad::backward(loss);
      disc_opt.step(dparams.grads());
    }

    // generator step: lambda1 * mean(-log D(pred)) + (lambda2/n) sum l1
    // + (lambda3/n) sum KL
    {
      ParamBinding gparams(stage.generator.parameters());
      ParamBinding dparams(stage.discriminator.parameters(), /*requires_grad=*/false);
      ad::Var adv, l1, kl;
      for (std::size_t s = 0; s < n; ++s) {
        ad::Var pred = stage.generator.forward(inputs[s].weights(), gparams);
        ad::Var z_pred = stage.discriminator.logit(pred, dparams);
        ad::Var adv_term = ad::softplus(ad::scale(z_pred, -1.0));
        ad::Var truth = ad::Var::constant(truths[s].weights());
        ad::Var l1_term = upper_l1(pred, truth);
        ad::Var kl_term = gaussian_kl_nodes(pred, truth);
        adv = adv.valid() ? ad::add(adv, adv_term) : adv_term;
        l1 = l1.valid() ? ad::add(l1, l1_term) : l1_term;
        kl = kl.valid() ? ad::add(kl, kl_term) : kl_term;
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      ad::Var loss = ad::add(ad::scale(adv, hp.lambda1 * inv_n),
                             ad::add(ad::scale(l1, hp.lambda2 * inv_n),
                                     ad::scale(kl, hp.lambda3 * inv_n)));
      if (!std::isfinite(loss.scalar_value())) {
        throw NonConvergence("train_cascade: generator loss non-finite at stage " +
                             std::to_string(stage_index) + " epoch " + std::to_string(epoch));
      }
      ad::backward(loss);
      gen_opt.step(gparams.grads());
    }
  }
}

}  // namespace

CascadeModel train_cascade(const std::vector<Trajectory>& train,
                           const EvolutionHyperparams& hp) {
  hp.validate();
  if (train.empty()) throw EmptyTrainingSet("train_cascade: no trajectories");
  const int followups = train.front().num_followups();
  const int r = train.front().num_rois();
  for (const auto& t : train) {
    if (t.num_followups() != followups) {
      throw InconsistentTrajectoryLength("trajectory '" + t.subject_id() +
                                         "' has a different number of timepoints");
    }
    if (t.num_rois() != r) throw DimensionMismatch("trajectories mix matrix sizes");
  }

  auto rng = make_rng(derive_seed(hp.rng_seed, "train_cascade"));
  CascadeModel model;
  model.stages.reserve(followups);
  for (int i = 0; i < followups; ++i) {
    model.stages.push_back(CascadeStage{
        GeneratorModel(r, kGeneratorHiddenDims, rng),
        DiscriminatorModel(r, kDiscriminatorHiddenDims, rng)});
  }

  std::vector<ConnectivityMatrix> inputs;
  inputs.reserve(train.size());
  for (const auto& t : train) inputs.push_back(t.baseline());

  for (int i = 0; i < followups; ++i) {
    std::vector<ConnectivityMatrix> truths;
    truths.reserve(train.size());
    for (const auto& t : train) truths.push_back(t.states()[i + 1]);

    train_stage(model.stages[i], inputs, truths, hp, i);

    // the stage's predictions become the next stage's inputs
    if (i + 1 < followups) {
      if (hp.train_on_ground_truth_inputs) {
        inputs = truths;
      } else {
        std::vector<ConnectivityMatrix> next;
        next.reserve(inputs.size());
        for (const auto& in : inputs) next.push_back(model.stages[i].generator.predict(in));
        inputs = std::move(next);
      }
    }
  }
  return model;
}

std::vector<ConnectivityMatrix> predict_trajectory(const CascadeModel& model,
                                                   const ConnectivityMatrix& baseline) {
  if (baseline.num_rois() != model.num_rois()) {
    throw DimensionMismatch("predict_trajectory: baseline r mismatch");
  }
  std::vector<ConnectivityMatrix> out;
  out.reserve(model.stages.size());
  ConnectivityMatrix current = baseline;
  for (const auto& stage : model.stages) {
    current = stage.generator.predict(current);
    out.push_back(current);
  }
  return out;
}

}  // namespace cbtshot
