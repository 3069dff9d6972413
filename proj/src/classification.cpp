#include "cbtshot/classification.hpp"

#include <algorithm>
#include <cmath>

#include "cbtshot/optim.hpp"
#include "cbtshot/rng.hpp"

namespace cbtshot {

void ClassifierConfig::validate() const {
  if (learning_rate <= 0.0) throw InvalidSpec("learning_rate must be positive");
  if (weight_decay < 0.0) throw InvalidSpec("weight_decay must be nonnegative");
  if (epochs < 1) throw InvalidSpec("epochs must be positive");
}

namespace {

BoolMatrix with_self_loops(const AdjacencyMask& mask) {
  BoolMatrix m = mask.mask();
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, i) = true;
  return m;
}

// Attention scores and coefficients for one layer as autodiff values.
// params layout per layer: [weight, attention].
ad::Var attention_var(const ad::Var& transformed, const ad::Var& attention_vec,
                      double leaky_alpha, const BoolMatrix& neighborhood) {
  const int r = static_cast<int>(transformed.value().rows());
  const int fp = static_cast<int>(transformed.value().cols());
  // split a into its source and target halves via constant selectors
  Matrix pick_src = Matrix::Zero(2 * fp, fp);
  Matrix pick_dst = Matrix::Zero(2 * fp, fp);
  for (int k = 0; k < fp; ++k) {
    pick_src(k, k) = 1.0;
    pick_dst(fp + k, k) = 1.0;
  }
  ad::Var a_src = ad::matmul(ad::transpose(ad::Var::constant(pick_src)), attention_vec);
  ad::Var a_dst = ad::matmul(ad::transpose(ad::Var::constant(pick_dst)), attention_vec);
  ad::Var s_src = ad::matmul(transformed, a_src);  // r x 1
  ad::Var s_dst = ad::matmul(transformed, a_dst);  // r x 1
  ad::Var scores = ad::add(ad::matmul(s_src, ad::ones(1, r)),
                           ad::matmul(ad::ones(r, 1), ad::transpose(s_dst)));
  return ad::masked_softmax_rows(ad::leaky_relu(scores, leaky_alpha), neighborhood);
}

ad::Var gat_layer_var(const ad::Var& features, const ad::Var& weight,
                      const ad::Var& attention_vec, double leaky_alpha,
                      const BoolMatrix& neighborhood) {
  ad::Var transformed = ad::matmul(features, weight);
  ad::Var alpha = attention_var(transformed, attention_vec, leaky_alpha, neighborhood);
  return ad::elu(ad::matmul(alpha, transformed));
}

}  // namespace

Matrix attention_coefficients(const Matrix& features, const GatLayerParams& params,
                              const AdjacencyMask& mask) {
  if (features.rows() != mask.num_rois()) {
    throw DimensionMismatch("attention_coefficients: feature/mask row mismatch");
  }
  if (params.weight.rows() != features.cols()) {
    throw DimensionMismatch("attention_coefficients: W fan-in mismatch");
  }
  if (params.attention.rows() != 2 * params.weight.cols() || params.attention.cols() != 1) {
    throw DimensionMismatch("attention_coefficients: attention vector must be 2F' x 1");
  }
  ad::Var transformed = ad::matmul(ad::Var::constant(features), ad::Var::constant(params.weight));
  return attention_var(transformed, ad::Var::constant(params.attention),
                       params.leaky_relu_alpha, with_self_loops(mask))
      .value();
}

Matrix gat_layer_forward(const Matrix& features, const GatLayerParams& params,
                         const AdjacencyMask& mask) {
  if (features.rows() != mask.num_rois()) {
    throw DimensionMismatch("gat_layer_forward: feature/mask row mismatch");
  }
  if (params.weight.rows() != features.cols()) {
    throw DimensionMismatch("gat_layer_forward: W fan-in mismatch");
  }
  return gat_layer_var(ad::Var::constant(features), ad::Var::constant(params.weight),
                       ad::Var::constant(params.attention), params.leaky_relu_alpha,
                       with_self_loops(mask))
      .value();
}

GatModel::GatModel(int num_rois, const GatArchitecture& arch,
                   std::array<std::string, 2> classes, std::mt19937_64& rng)
    : num_rois_(num_rois), dropout_rate_(arch.dropout_rate), classes_(std::move(classes)) {
  if (arch.dropout_rate < 0.0 || arch.dropout_rate >= 1.0) {
    throw InvalidSpec("dropout_rate must lie in [0,1)");
  }
  int fan_in = num_rois;
  for (int dim : arch.hidden_dims) {
    GatLayerParams layer;
    layer.weight = glorot(fan_in, dim, rng);
    layer.attention = glorot(2 * dim, 1, rng);
    layer.leaky_relu_alpha = arch.leaky_relu_alpha;
    layers.push_back(std::move(layer));
    fan_in = dim;
  }
  readout_weight = glorot(fan_in, 2, rng);
  readout_bias = Matrix::Zero(1, 2);
}

std::vector<Matrix*> GatModel::parameters() {
  std::vector<Matrix*> ps;
  for (auto& l : layers) {
    ps.push_back(&l.weight);
    ps.push_back(&l.attention);
  }
  ps.push_back(&readout_weight);
  ps.push_back(&readout_bias);
  return ps;
}

ad::Var GatModel::forward(const ConnectivityMatrix& g, const ParamBinding& params,
                          std::mt19937_64* dropout_rng) const {
  if (g.num_rois() != num_rois_) {
    throw DimensionMismatch("classify: expected r=" + std::to_string(num_rois_));
  }
  const BoolMatrix neighborhood = with_self_loops(threshold_by_mean(g));
  ad::Var h = ad::Var::constant(sorted_row_features(g.weights()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (dropout_rng && dropout_rate_ > 0.0) {
      std::bernoulli_distribution keep(1.0 - dropout_rate_);
      Matrix mask(h.value().rows(), h.value().cols());
      for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        for (Eigen::Index j = 0; j < mask.cols(); ++j) {
          mask(i, j) = keep(*dropout_rng) ? 1.0 / (1.0 - dropout_rate_) : 0.0;
        }
      }
      h = ad::cmul(h, ad::Var::constant(mask));
    }
    h = gat_layer_var(h, params.vars[2 * l], params.vars[2 * l + 1],
                      layers[l].leaky_relu_alpha, neighborhood);
  }
  const std::size_t off = 2 * layers.size();
  ad::Var pooled = ad::mean_rows(h);
  ad::Var scores = ad::add(ad::matmul(pooled, params.vars[off]), params.vars[off + 1]);
  return ad::log_softmax_rows(scores);
}

Classification classify(const GatModel& model, const ConnectivityMatrix& g) {
  auto self = const_cast<GatModel*>(&model);
  ParamBinding params(self->parameters(), /*requires_grad=*/false);
  const Matrix log_probs = model.forward(g, params, nullptr).value();
  const std::array<double, 2> probs{std::exp(log_probs(0, 0)), std::exp(log_probs(0, 1))};
  // argmax, ties toward the first declared class
  const int winner = probs[1] > probs[0] ? 1 : 0;
  return Classification{model.classes()[winner], probs};
}

GatModel train_classifier(const Population& train, const ClassifierConfig& cfg,
                          const GatArchitecture& arch) {
  cfg.validate();
  if (!train.labeled()) throw MissingClass("train_classifier: population is unlabeled");
  const auto classes = train.classes();
  if (classes.size() != 2) {
    throw MissingClass("train_classifier: expected exactly 2 classes, found " +
                       std::to_string(classes.size()));
  }
  auto rng = make_rng(derive_seed(cfg.rng_seed, "train_classifier"));
  auto dropout_rng = make_rng(derive_seed(cfg.rng_seed, "classifier_dropout"));
  GatModel model(train.num_rois(), arch, {classes[0], classes[1]}, rng);
  AdamW opt(model.parameters(), {.lr = cfg.learning_rate,
                                 .beta1 = 0.9,
                                 .beta2 = 0.999,
                                 .weight_decay = cfg.weight_decay});

  std::vector<int> targets(train.size());
  for (std::size_t s = 0; s < train.size(); ++s) {
    targets[s] = train.labels()[s] == classes[0] ? 0 : 1;
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ParamBinding params(model.parameters());
    ad::Var loss;
    for (std::size_t s = 0; s < train.size(); ++s) {
      ad::Var log_probs = model.forward(train[s], params, &dropout_rng);
      ad::Var nll = ad::scale(ad::pick(log_probs, 0, targets[s]), -1.0);
      loss = loss.valid() ? ad::add(loss, nll) : nll;
    }
    loss = ad::scale(loss, 1.0 / static_cast<double>(train.size()));
    if (!std::isfinite(loss.scalar_value())) {
      throw NonConvergence("train_classifier: loss non-finite at epoch " +
                           std::to_string(epoch));
    }
    ad::backward(loss);
    opt.step(params.grads());
  }
  return model;
}

}  // namespace cbtshot
