#pragma once

#include <cmath>
#include <string>
#include <unordered_map>

#include "fineray/params.hpp"
#include "fineray/tensor.hpp"

namespace fineray {

/// First/second-moment accumulators mirroring a parameter store, plus the
/// bias-correction step counter.
template <class Real>
struct AdamState {
  ParameterStore<Real> m, v;
  int64_t t = 0;

  static AdamState zeros_like(const ParameterStore<Real>& params) {
    AdamState s;
    for (const std::string& name : params.names()) {
      s.m.add_zeros(name, params.get(name).shape);
      s.v.add_zeros(name, params.get(name).shape);
    }
    return s;
  }

  void reset() {
    for (const std::string& name : m.names()) {
      for (Real& x : m.get(name).data) x = Real(0);
      for (Real& x : v.get(name).data) x = Real(0);
    }
    t = 0;
  }
};

/// One Adam update over every parameter, in store order. Parameters without an
/// entry in `grads` are treated as having zero gradient (their moments still
/// decay). Non-finite gradients abort with the parameter's name.
template <class Real>
void adam_step(ParameterStore<Real>& params,
               const std::unordered_map<std::string, Tensor<Real>>& grads, AdamState<Real>& state,
               Real lr, Real beta1 = Real(0.9), Real beta2 = Real(0.999),
               Real eps = Real(1e-8)) {
  state.t += 1;
  Real bc1 = Real(1) - std::pow(beta1, Real(state.t));
  Real bc2 = Real(1) - std::pow(beta2, Real(state.t));
  for (const std::string& name : params.names()) {
    Tensor<Real>& p = params.get(name);
    Tensor<Real>& m = state.m.get(name);
    Tensor<Real>& v = state.v.get(name);
    auto it = grads.find(name);
    const Tensor<Real>* g = it == grads.end() ? nullptr : &it->second;
    if (g && !g->same_shape(p))
      throw Error("adam_step: gradient shape mismatch for parameter '" + name + "'");
    for (int64_t i = 0; i < p.size(); ++i) {
      Real gi = g ? g->data[i] : Real(0);
      if (!std::isfinite(gi))
        throw NumericalError("adam_step: non-finite gradient for parameter '" + name + "'");
      m.data[i] = beta1 * m.data[i] + (Real(1) - beta1) * gi;
      v.data[i] = beta2 * v.data[i] + (Real(1) - beta2) * gi * gi;
      Real mhat = m.data[i] / bc1;
      Real vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace fineray
