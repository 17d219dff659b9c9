#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ssrl/graph.hpp"

namespace ssrl::test {

inline TensorRef<double> uniform_tensor(Shape s, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0,
                                        bool track = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  auto t = make_tensor<double>(s, 0.0, track);
  for (auto& v : t->data()) v = u(rng);
  return t;
}

inline LabelMap random_labels(std::size_t n, std::size_t h, std::size_t w, std::mt19937_64& rng,
                              int classes = 9) {
  LabelMap m(n, h, w);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(rng() % static_cast<unsigned>(classes));
  return m;
}

/// Relative error of the directional derivative along a random direction:
/// analytic <grad, d> against (f(x + eps d) - f(x - eps d)) / (2 eps).
template <typename T>
double jvp_error(const std::vector<TensorRef<T>>& inputs,
                 const std::function<TensorRef<T>(Graph<T>&)>& build, std::mt19937_64& rng,
                 double eps = 1e-4) {
  for (const auto& x : inputs) x->drop_grad();
  Graph<T> g;
  g.backward(build(g));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<T>> dirs;
  double analytic = 0.0;
  for (const auto& x : inputs) {
    std::vector<T> d(x->size());
    for (auto& v : d) v = static_cast<T>(n(rng));
    for (std::size_t i = 0; i < d.size(); ++i) {
      analytic += static_cast<double>(x->has_grad() ? x->grad()[i] : T(0)) * static_cast<double>(d[i]);
    }
    dirs.push_back(std::move(d));
  }
  auto shifted = [&](double sign) {
    std::vector<std::vector<T>> keep;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto data = inputs[k]->data();
      keep.emplace_back(data.begin(), data.end());
      for (std::size_t i = 0; i < data.size(); ++i) data[i] += static_cast<T>(sign * eps) * dirs[k][i];
    }
    Graph<T> off(false);
    const double v = static_cast<double>(build(off)->item());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto data = inputs[k]->data();
      std::copy(keep[k].begin(), keep[k].end(), data.begin());
    }
    return v;
  };
  const double numeric = (shifted(1.0) - shifted(-1.0)) / (2 * eps);
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  return scale == 0.0 ? 0.0 : std::abs(analytic - numeric) / scale;
}

}  // namespace ssrl::test
