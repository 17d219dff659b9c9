#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ssrl/graph.hpp"

namespace ssrl {

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LossKind { kCrossEntropy, kBetaCrossEntropy, kThresholdedCrossEntropy, kConsistencyL2 };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::kCrossEntropy;
  double beta = 0.5;
  double tau = 0.95;

  /// Throws LossError unless beta > 0 and tau lies in [0, 1].
  void validate() const;
};

/// Lower clamp applied to probabilities before taking logarithms.
inline constexpr double kLogClamp = 1e-12;

/// Argmax class and its probability, per pixel. Plain data: nothing here
/// is connected to a graph.
template <typename T>
struct PseudoLabels {
  LabelMap labels;
  std::vector<T> confidence;
};

// All losses take per-pixel class probabilities of shape (B, K, H, W) and
// return a (1,1,1,1) tensor averaged over the B*H*W pixels.

/// Mean of -ln p(y|x).
template <typename T>
TensorRef<T> ce_loss(Graph<T>& g, const TensorRef<T>& prob, const LabelMap& labels);

/// Robust beta cross-entropy, shifted by -1 so a one-hot correct prediction scores 0:
///   (b+1)/b * (1 - p_y^b) + sum_k p_k^(b+1) - 1
template <typename T>
TensorRef<T> beta_ce(Graph<T>& g, const TensorRef<T>& prob, const LabelMap& labels, T beta);

/// Argmax with ties resolved toward the lowest class index.
template <typename T>
PseudoLabels<T> pseudo_label(const Tensor<T>& prob);

/// Cross-entropy against pseudo-labels, counted only where confidence > tau.
/// The denominator stays B*H*W whether or not pixels pass.
template <typename T>
TensorRef<T> thresholded_ce(Graph<T>& g, const TensorRef<T>& prob, const PseudoLabels<T>& pseudo,
                            T tau);

/// Mean over pixels of the squared L2 distance between the two class-probability vectors.
template <typename T>
TensorRef<T> consistency_l2(Graph<T>& g, const TensorRef<T>& prob_a, const TensorRef<T>& prob_b);

/// (loss_x + loss_u) / 2
template <typename T>
TensorRef<T> combined_loss(Graph<T>& g, const TensorRef<T>& loss_x, const TensorRef<T>& loss_u);

}  // namespace ssrl
