#include "ssrl/optimizer.hpp"

#include <cmath>

namespace ssrl {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ModelParams<T>& params) {
  AdamState s;
  for (const auto& p : params.tensors) {
    s.m.emplace_back(p.value->size(), T(0));
    s.v.emplace_back(p.value->size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(ModelParams<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
  if (state.m.size() != params.tensors.size() || state.v.size() != params.tensors.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match the parameters");
  }
  for (const auto& p : params.tensors) {
    if (!p.value->has_grad()) continue;
    for (T gv : p.value->grad()) {
      if (!std::isfinite(gv)) throw NonFiniteGradientError(p.name);
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.lr);
  const T eps = static_cast<T>(cfg.eps);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& tensor = *params.tensors[i].value;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != tensor.size() || v.size() != tensor.size()) {
      throw std::invalid_argument("adam_step: moment buffer size mismatch for " +
                                  params.tensors[i].name);
    }
    const bool has_grad = tensor.has_grad();
    auto w = tensor.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const T g = has_grad ? tensor.grad()[k] : T(0);
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const T mhat = m[k] / c1;
      const T vhat = v[k] / c2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ModelParams<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step(ModelParams<double>&, AdamState<double>&, const AdamConfig&);

}  // namespace ssrl
