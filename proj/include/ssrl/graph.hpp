#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ssrl/tensor.hpp"

namespace ssrl {

/// Tape of executed operations. Each op records a closure that pushes the
/// output gradient back into its inputs; backward() replays the tape once,
/// newest first, and then clears it.
template <typename T>
class Graph {
 public:
  /// A non-recording graph evaluates ops without keeping anything for backward.
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  void record(std::string op, std::function<void()> backward_fn);

  /// Seeds d(loss)/d(loss) = 1 and replays every recorded op in reverse.
  /// Returns the number of ops visited.
  std::size_t backward(const TensorRef<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t i) const { return nodes_[i].op; }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::string op;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
};

// Differentiable operations. Each one records onto the graph only when at
// least one input tracks gradients; the output then tracks gradients too.

/// 3x3 (stride 1, zero padding 1) or 1x1 convolution, chosen from the kernel extent.
template <typename T>
TensorRef<T> conv2d(Graph<T>& g, const TensorRef<T>& input, const TensorRef<T>& weight,
                    const TensorRef<T>& bias);

template <typename T>
TensorRef<T> relu(Graph<T>& g, const TensorRef<T>& input);

/// Per-pixel softmax over the channel axis, max-shifted for stability.
template <typename T>
TensorRef<T> softmax_channels(Graph<T>& g, const TensorRef<T>& logits);

/// 2x2 max pooling; the gradient goes to the first maximal element in row-major order.
template <typename T>
TensorRef<T> downsample2(Graph<T>& g, const TensorRef<T>& input);

/// Nearest-neighbour 2x upsampling.
template <typename T>
TensorRef<T> upsample2(Graph<T>& g, const TensorRef<T>& input);

template <typename T>
TensorRef<T> concat_channels(Graph<T>& g, const TensorRef<T>& a, const TensorRef<T>& b);

/// Stacks tensors along the batch axis (torch.cat on dim 0).
template <typename T>
TensorRef<T> concat_batch(Graph<T>& g, const std::vector<TensorRef<T>>& parts);

/// Splits along the batch axis into chunks of the given sizes, which must sum
/// to the batch extent.
template <typename T>
std::vector<TensorRef<T>> split_batch(Graph<T>& g, const TensorRef<T>& input,
                                      const std::vector<std::size_t>& sizes);

template <typename T>
TensorRef<T> add(Graph<T>& g, const TensorRef<T>& a, const TensorRef<T>& b);

template <typename T>
TensorRef<T> mul(Graph<T>& g, const TensorRef<T>& a, const TensorRef<T>& b);

template <typename T>
TensorRef<T> scale(Graph<T>& g, const TensorRef<T>& a, T factor);

template <typename T>
TensorRef<T> sum(Graph<T>& g, const TensorRef<T>& a);

template <typename T>
TensorRef<T> mean(Graph<T>& g, const TensorRef<T>& a);

}  // namespace ssrl
