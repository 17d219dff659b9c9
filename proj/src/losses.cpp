#include "ssrl/losses.hpp"

#include <algorithm>
#include <cmath>

namespace ssrl {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropy:
      return "ce";
    case LossKind::kBetaCrossEntropy:
      return "beta_ce";
    case LossKind::kThresholdedCrossEntropy:
      return "thresholded_ce";
    case LossKind::kConsistencyL2:
      return "consistency_l2";
  }
  return "unknown";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "ce") return LossKind::kCrossEntropy;
  if (name == "beta_ce") return LossKind::kBetaCrossEntropy;
  if (name == "thresholded_ce") return LossKind::kThresholdedCrossEntropy;
  if (name == "consistency_l2") return LossKind::kConsistencyL2;
  throw LossError("unknown loss kind '" + name + "'");
}

void LossConfig::validate() const {
  if (!(beta > 0.0)) throw LossError("beta must be positive, got " + std::to_string(beta));
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw LossError("tau must lie in [0, 1], got " + std::to_string(tau));
  }
}

namespace {

template <typename T>
void check_labels(const Tensor<T>& prob, const LabelMap& labels, const char* who) {
  const Shape s = prob.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w) {
    throw ShapeError(std::string(who) + ": labels (" + std::to_string(labels.n) + "," +
                     std::to_string(labels.h) + "," + std::to_string(labels.w) +
                     ") do not match probabilities " + to_string(s));
  }
  for (std::uint8_t y : labels.data) {
    if (y >= s.c) {
      throw LossError(std::string(who) + ": label " + std::to_string(y) + " out of range for " +
                      std::to_string(s.c) + " classes");
    }
  }
}

template <typename T>
std::size_t pixel_count(const Shape& s) {
  const std::size_t n = s.n * s.plane();
  if (n == 0) throw ShapeError("loss over an empty probability map " + to_string(s));
  return n;
}

}  // namespace

template <typename T>
TensorRef<T> ce_loss(Graph<T>& g, const TensorRef<T>& prob, const LabelMap& labels) {
  check_labels(*prob, labels, "ce_loss");
  const Shape s = prob->shape();
  const std::size_t hw = s.plane();
  const std::size_t count = pixel_count<T>(s);
  const T clamp = static_cast<T>(kLogClamp);
  const T* p = prob->data().data();
  T total = T(0);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const T py = p[b * s.sample() + labels.data[b * hw + i] * hw + i];
      total -= std::log(std::max(py, clamp));
    }
  }
  auto out = make_scalar<T>(total / static_cast<T>(count), prob->tracks_grad());
  if (out->tracks_grad()) {
    g.record("ce_loss", [prob, labels, out, count, clamp]() {
      if (!out->has_grad()) return;
      const Shape s = prob->shape();
      const std::size_t hw = s.plane();
      const T scale = out->grad()[0] / static_cast<T>(count);
      const T* p = prob->data().data();
      T* dp = prob->grad().data();
      for (std::size_t b = 0; b < s.n; ++b) {
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t k = b * s.sample() + labels.data[b * hw + i] * hw + i;
          dp[k] -= scale / std::max(p[k], clamp);
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> beta_ce(Graph<T>& g, const TensorRef<T>& prob, const LabelMap& labels, T beta) {
  if (!(beta > T(0))) throw LossError("beta_ce: beta must be positive, got " + std::to_string(beta));
  check_labels(*prob, labels, "beta_ce");
  const Shape s = prob->shape();
  const std::size_t hw = s.plane();
  const std::size_t count = pixel_count<T>(s);
  const T* p = prob->data().data();
  const T lead = (beta + T(1)) / beta;
  T total = T(0);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t base = b * s.sample() + i;
      const T py = p[base + labels.data[b * hw + i] * hw];
      // 1 - p^b via expm1 keeps the small-beta limit accurate.
      const T one_minus = -std::expm1(beta * std::log(std::max(py, static_cast<T>(kLogClamp))));
      T power_sum = T(0);
      for (std::size_t c = 0; c < s.c; ++c) power_sum += std::pow(p[base + c * hw], beta + T(1));
      total += lead * one_minus + power_sum - T(1);
    }
  }
  auto out = make_scalar<T>(total / static_cast<T>(count), prob->tracks_grad());
  if (out->tracks_grad()) {
    g.record("beta_ce", [prob, labels, out, count, beta]() {
      if (!out->has_grad()) return;
      const Shape s = prob->shape();
      const std::size_t hw = s.plane();
      const T scale = out->grad()[0] / static_cast<T>(count);
      const T* p = prob->data().data();
      T* dp = prob->grad().data();
      const T bp1 = beta + T(1);
      const T clamp = static_cast<T>(kLogClamp);
      for (std::size_t b = 0; b < s.n; ++b) {
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t base = b * s.sample() + i;
          for (std::size_t c = 0; c < s.c; ++c) {
            dp[base + c * hw] += scale * bp1 * std::pow(p[base + c * hw], beta);
          }
          const std::size_t ky = base + labels.data[b * hw + i] * hw;
          dp[ky] -= scale * bp1 * std::pow(std::max(p[ky], clamp), beta - T(1));
        }
      }
    });
  }
  return out;
}

template <typename T>
PseudoLabels<T> pseudo_label(const Tensor<T>& prob) {
  const Shape s = prob.shape();
  const std::size_t hw = s.plane();
  PseudoLabels<T> out{LabelMap(s.n, s.h, s.w), std::vector<T>(s.n * hw)};
  const T* p = prob.data().data();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t base = b * s.sample() + i;
      std::size_t best = 0;
      for (std::size_t c = 1; c < s.c; ++c) {
        if (p[base + c * hw] > p[base + best * hw]) best = c;
      }
      out.labels.data[b * hw + i] = static_cast<std::uint8_t>(best);
      out.confidence[b * hw + i] = p[base + best * hw];
    }
  }
  return out;
}

template <typename T>
TensorRef<T> thresholded_ce(Graph<T>& g, const TensorRef<T>& prob, const PseudoLabels<T>& pseudo,
                            T tau) {
  check_labels(*prob, pseudo.labels, "thresholded_ce");
  if (pseudo.confidence.size() != pseudo.labels.size()) {
    throw ShapeError("thresholded_ce: confidence map size does not match the pseudo-labels");
  }
  const Shape s = prob->shape();
  const std::size_t hw = s.plane();
  const std::size_t count = pixel_count<T>(s);
  const T clamp = static_cast<T>(kLogClamp);
  const T* p = prob->data().data();
  // Flat probability index of each contributing pixel's pseudo-class.
  auto active = std::make_shared<std::vector<std::size_t>>();
  T total = T(0);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      if (!(pseudo.confidence[b * hw + i] > tau)) continue;
      const std::size_t k = b * s.sample() + pseudo.labels.data[b * hw + i] * hw + i;
      active->push_back(k);
      total -= std::log(std::max(p[k], clamp));
    }
  }
  auto out = make_scalar<T>(total / static_cast<T>(count), prob->tracks_grad());
  if (out->tracks_grad()) {
    g.record("thresholded_ce", [prob, active, out, count, clamp]() {
      if (!out->has_grad() || active->empty()) return;
      const T scale = out->grad()[0] / static_cast<T>(count);
      const T* p = prob->data().data();
      T* dp = prob->grad().data();
      for (std::size_t k : *active) dp[k] -= scale / std::max(p[k], clamp);
    });
  }
  return out;
}

template <typename T>
TensorRef<T> consistency_l2(Graph<T>& g, const TensorRef<T>& prob_a, const TensorRef<T>& prob_b) {
  if (prob_a->shape() != prob_b->shape()) {
    throw ShapeError("consistency_l2: " + to_string(prob_a->shape()) + " vs " +
                     to_string(prob_b->shape()));
  }
  const std::size_t count = pixel_count<T>(prob_a->shape());
  auto a = prob_a->data();
  auto b = prob_b->data();
  T total = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] - b[i];
    total += d * d;
  }
  const bool track = prob_a->tracks_grad() || prob_b->tracks_grad();
  auto out = make_scalar<T>(total / static_cast<T>(count), track);
  if (track) {
    g.record("consistency_l2", [prob_a, prob_b, out, count]() {
      if (!out->has_grad()) return;
      const T scale = T(2) * out->grad()[0] / static_cast<T>(count);
      auto a = prob_a->data();
      auto b = prob_b->data();
      if (prob_a->tracks_grad()) {
        auto da = prob_a->grad();
        for (std::size_t i = 0; i < a.size(); ++i) da[i] += scale * (a[i] - b[i]);
      }
      if (prob_b->tracks_grad()) {
        auto db = prob_b->grad();
        for (std::size_t i = 0; i < a.size(); ++i) db[i] -= scale * (a[i] - b[i]);
      }
    });
  }
  return out;
}

template <typename T>
TensorRef<T> combined_loss(Graph<T>& g, const TensorRef<T>& loss_x, const TensorRef<T>& loss_u) {
  return scale(g, add(g, loss_x, loss_u), T(0.5));
}

#define SSRL_INSTANTIATE(T)                                                                      \
  template TensorRef<T> ce_loss(Graph<T>&, const TensorRef<T>&, const LabelMap&);               \
  template TensorRef<T> beta_ce(Graph<T>&, const TensorRef<T>&, const LabelMap&, T);            \
  template PseudoLabels<T> pseudo_label(const Tensor<T>&);                                       \
  template TensorRef<T> thresholded_ce(Graph<T>&, const TensorRef<T>&, const PseudoLabels<T>&,   \
                                       T);                                                       \
  template TensorRef<T> consistency_l2(Graph<T>&, const TensorRef<T>&, const TensorRef<T>&);     \
  template TensorRef<T> combined_loss(Graph<T>&, const TensorRef<T>&, const TensorRef<T>&);

SSRL_INSTANTIATE(float)
SSRL_INSTANTIATE(double)

#undef SSRL_INSTANTIATE

}  // namespace ssrl
