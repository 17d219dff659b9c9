#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssrl/model.hpp"

namespace ssrl {

class NonFiniteGradientError : public std::runtime_error {
 public:
  explicit NonFiniteGradientError(const std::string& tensor)
      : std::runtime_error("non-finite gradient in " + tensor), tensor_(tensor) {}
  const std::string& tensor() const { return tensor_; }

 private:
  std::string tensor_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one per parameter tensor, plus the update count.
template <typename T>
struct AdamState {
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState zeros_like(const ModelParams<T>& params);
};

/// One bias-corrected Adam update from the gradients stored on `params`.
/// Parameters without a gradient buffer are treated as having zero gradient.
/// Throws NonFiniteGradientError, before touching anything, if any gradient
/// element is NaN or infinite.
template <typename T>
void adam_step(ModelParams<T>& params, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace ssrl
