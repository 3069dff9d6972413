#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cbtshot {

// AdamW with decoupled weight decay. Holds non-owning pointers to the
// parameter matrices it updates; moment buffers live here.
class AdamW {
public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(std::vector<Eigen::MatrixXd*> params, Config cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
      m_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      v_.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

  // grads must be aligned with the params passed at construction.
  void step(const std::vector<Eigen::MatrixXd>& grads) {
    if (grads.size() != params_.size()) {
      throw std::invalid_argument("AdamW::step: gradient count mismatch");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
      Eigen::ArrayXXd mhat = m_[i].array() / bc1;
      Eigen::ArrayXXd vhat = v_[i].array() / bc2;
      *params_[i] -=
          (cfg_.lr * (mhat / (vhat.sqrt() + cfg_.eps) + cfg_.weight_decay * params_[i]->array()))
              .matrix();
    }
  }

private:
  std::vector<Eigen::MatrixXd*> params_;
  std::vector<Eigen::MatrixXd> m_, v_;
  long t_ = 0;
  Config cfg_;
};

}  // namespace cbtshot
