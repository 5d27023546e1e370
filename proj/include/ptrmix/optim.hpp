#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptrmix/rng.hpp"
#include "ptrmix/tensor.hpp"

namespace ptrmix {

// First/second moment buffers for one parameter.
template <class Real>
struct AdamState {
  std::vector<Real> m;
  std::vector<Real> v;
  std::uint64_t step = 0;
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);
};

// A named trainable tensor with its gradient accumulator and Adam moments.
template <class Real>
struct Param {
  std::string name;
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  AdamState<Real> adam;

  std::size_t numel() const { return value.size(); }
};

template <class Real>
class ParamStore {
 public:
  Param<Real>& add(const std::string& name, Shape shape, std::vector<Real> init) {
    if (shape_numel(shape) != init.size())
      throw ShapeError("param " + name + ": shape " + shape_str(shape) +
                       " does not match init of " + std::to_string(init.size()));
    Param<Real> p;
    p.name = name;
    p.shape = std::move(shape);
    p.value = std::move(init);
    p.grad.assign(p.value.size(), Real(0));
    p.adam.m.assign(p.value.size(), Real(0));
    p.adam.v.assign(p.value.size(), Real(0));
    params_.push_back(std::move(p));
    return params_.back();
  }

  Param<Real>& add_uniform(const std::string& name, Shape shape, Rng& rng, double half_range) {
    std::vector<Real> init(shape_numel(shape));
    for (auto& v : init) v = static_cast<Real>(rng.uniform(-half_range, half_range));
    return add(name, std::move(shape), std::move(init));
  }

  Param<Real>& add_zeros(const std::string& name, Shape shape) {
    return add(name, shape, std::vector<Real>(shape_numel(shape), Real(0)));
  }

  Param<Real>& operator[](std::size_t i) { return params_[i]; }
  const Param<Real>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Param<Real>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), Real(0));
  }

 private:
  // deque keeps references returned by add() valid across later insertions
  std::deque<Param<Real>> params_;
};

// Global L2 norm over every gradient buffer, accumulated in double.
template <class Real>
double global_grad_norm(const ParamStore<Real>& params) {
  double acc = 0;
  for (const auto& p : params)
    for (Real g : p.grad) acc += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(acc);
}

// If the global norm exceeds max_norm, rescale every gradient by
// max_norm / norm. Returns the pre-clip norm.
template <class Real>
double clip_global_norm(ParamStore<Real>& params, double max_norm) {
  if (max_norm <= 0) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    // scale in double and round once per element, so the clipped norm is
    // exact up to one rounding of each stored gradient
    const double scale = max_norm / norm;
    for (auto& p : params)
      for (Real& g : p.grad) g = static_cast<Real>(static_cast<double>(g) * scale);
  }
  return norm;
}

// One Adam update with bias correction: p -= lr * m_hat / (sqrt(v_hat) + eps).
template <class Real>
void adam_step(Param<Real>& p, Real lr) {
  auto& st = p.adam;
  ++st.step;
  const Real bc1 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(st.beta1),
                                                        static_cast<double>(st.step)));
  const Real bc2 = Real(1) - static_cast<Real>(std::pow(static_cast<double>(st.beta2),
                                                        static_cast<double>(st.step)));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const Real g = p.grad[i];
    st.m[i] = st.beta1 * st.m[i] + (Real(1) - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (Real(1) - st.beta2) * g * g;
    const Real m_hat = st.m[i] / bc1;
    const Real v_hat = st.v[i] / bc2;
    p.value[i] -= lr * m_hat / (std::sqrt(v_hat) + st.epsilon);
  }
}

template <class Real>
void adam_step(ParamStore<Real>& params, Real lr) {
  for (auto& p : params) adam_step(p, lr);
}

}  // namespace ptrmix
