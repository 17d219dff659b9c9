#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssrl/graph.hpp"

namespace ssrl {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Encoder-decoder with skip connections.
///
/// Level i of the encoder runs two 3x3 conv+ReLU blocks at base * 2^i
/// channels and max-pools; the bottleneck runs two more at base * 2^depth.
/// Each decoder level upsamples, concatenates the matching encoder output and
/// runs two 3x3 conv+ReLU blocks back down to base * 2^i channels. A 1x1 conv
/// maps base channels to class logits.
struct UNetConfig {
  std::size_t in_channels = 1;
  std::size_t base_channels = 8;
  std::size_t depth = 2;
  std::size_t num_classes = 9;

  void validate() const;
  /// Spatial extents must be divisible by this.
  std::size_t stride() const { return std::size_t{1} << depth; }
};

template <typename T>
struct NamedTensor {
  std::string name;
  TensorRef<T> value;
};

/// Weight/bias pairs in execution order.
template <typename T>
struct ModelParams {
  std::vector<NamedTensor<T>> tensors;

  std::size_t scalar_count() const;
  void zero_grad();
  /// Deep copy (fresh tensors, no gradients).
  ModelParams clone() const;
};

/// Exact number of scalars: sum over 3x3 layers of out*in*9 + out, plus
/// classes*base + classes for the 1x1 head.
std::size_t param_count(const UNetConfig& cfg);

/// He-normal weights (variance 2 / fan_in), zero biases.
template <typename T>
ModelParams<T> init_params(const UNetConfig& cfg, std::uint64_t seed);

/// Logits of shape (B, num_classes, H, W).
template <typename T>
TensorRef<T> forward(Graph<T>& g, const ModelParams<T>& params, const UNetConfig& cfg,
                     const TensorRef<T>& batch);

}  // namespace ssrl
