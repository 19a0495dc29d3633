#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ptsd/nn/tape.hpp"
#include "ptsd/rng.hpp"

namespace ptsd {
namespace nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

// Owns all trainable parameters in a stable registration order (checkpoints
// and the optimizer both rely on that order).
template <typename Real>
class ParamStore {
 public:
  Parameter<Real>& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (by_name_.count(name)) throw std::runtime_error("duplicate parameter: " + name);
    auto p = std::make_unique<Parameter<Real>>();
    p->name = name;
    p->value = Mat<Real>::Zero(rows, cols);
    Parameter<Real>* raw = p.get();
    params_.push_back(std::move(p));
    by_name_[name] = raw;
    return *raw;
  }

  Parameter<Real>& xavier(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                          Rng& rng) {
    auto& p = create(name, rows, cols);
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) p.value(i, j) = static_cast<Real>(rng.uniform(-a, a));
    return p;
  }

  Parameter<Real>& zeros(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    return create(name, rows, cols);
  }

  Parameter<Real>& ones(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    auto& p = create(name, rows, cols);
    p.value.setOnes();
    return p;
  }

  Parameter<Real>& get(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::runtime_error("no parameter named " + name);
    return *it->second;
  }

  const Parameter<Real>& get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::runtime_error("no parameter named " + name);
    return *it->second;
  }

  bool has(const std::string& name) const { return by_name_.count(name) > 0; }

  const std::vector<std::unique_ptr<Parameter<Real>>>& all() const { return params_; }
  std::vector<std::unique_ptr<Parameter<Real>>>& all() { return params_; }

  long total_size() const {
    long n = 0;
    for (const auto& p : params_) n += static_cast<long>(p->value.size());
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  double grad_norm() const {
    double acc = 0.0;
    for (const auto& p : params_) {
      if (p->grad.size() == 0) continue;
      acc += static_cast<double>(p->grad.template cast<double>().squaredNorm());
    }
    return std::sqrt(acc);
  }

  // One Adam update over every parameter. step_count() feeds the bias
  // correction and is part of checkpointed state.
  void adam_step(const AdamConfig& cfg) {
    double scale = 1.0;
    if (cfg.clip_norm > 0.0) {
      const double norm = grad_norm();
      if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& p : params_) {
      if (p->grad.size() == 0) p->zero_grad();
      if (p->m.size() == 0) {
        p->m = Mat<Real>::Zero(p->value.rows(), p->value.cols());
        p->v = Mat<Real>::Zero(p->value.rows(), p->value.cols());
      }
      Mat<Real> g = p->grad * static_cast<Real>(scale);
      p->m = static_cast<Real>(cfg.beta1) * p->m + static_cast<Real>(1.0 - cfg.beta1) * g;
      p->v = static_cast<Real>(cfg.beta2) * p->v +
             static_cast<Real>(1.0 - cfg.beta2) * g.cwiseProduct(g);
      const Real lr1 = static_cast<Real>(cfg.lr / bc1);
      const Real bc2r = static_cast<Real>(std::sqrt(bc2));
      p->value.array() -=
          lr1 * p->m.array() / (p->v.array().sqrt() / bc2r + static_cast<Real>(cfg.eps));
    }
  }

  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }

 private:
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
  std::map<std::string, Parameter<Real>*> by_name_;
  long step_ = 0;
};

}  // namespace nn
}  // namespace ptsd
