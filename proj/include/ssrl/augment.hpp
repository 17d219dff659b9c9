#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ssrl/rng.hpp"
#include "ssrl/tensor.hpp"

namespace ssrl {

class AugmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Additive Gaussian noise on a random subset of pixels.
struct WeakAugConfig {
  double sigma = 0.05;
  double pixel_prob = 0.5;

  void validate() const;
};

/// Low-frequency Fourier amplitude mixing. `radius` defaults to min(H, W) / 8
/// when unset.
struct StrongAugConfig {
  double lambda = 0.5;
  std::optional<std::size_t> radius;

  void validate() const;
  std::size_t radius_for(std::size_t h, std::size_t w) const;
};

/// A single-channel image plane of extents (h, w), row-major.
template <typename T>
struct ImageView {
  std::span<const T> pixels;
  std::size_t h = 0;
  std::size_t w = 0;
};

template <typename T>
std::vector<T> weak_gaussian(ImageView<T> image, const WeakAugConfig& cfg, Rng& rng);

/// Replaces the content amplitude spectrum inside the centred square
/// |fy|, |fx| <= radius by (1 - lambda) * A_content + lambda * A_style, keeps
/// the content phase, and returns the clamped real part of the inverse DFT.
template <typename T>
std::vector<T> strong_style(ImageView<T> content, ImageView<T> style, const StrongAugConfig& cfg);

template <typename T>
struct Views {
  Tensor<T> weak;
  Tensor<T> strong;
};

/// Weak view of each image, then a strong view of the weak view styled by an
/// image drawn uniformly from `style_pool` (a (P,1,H,W) tensor). When the pool
/// is the batch itself, the image's own index is excluded from the draw.
template <typename T>
Views<T> apply_views(const Tensor<T>& batch, const WeakAugConfig& weak, const StrongAugConfig& strong,
                     const Tensor<T>& style_pool, Rng& rng, bool pool_is_batch = true);

/// Weak view of every image in a (B,1,H,W) batch.
template <typename T>
Tensor<T> weak_batch(const Tensor<T>& batch, const WeakAugConfig& cfg, Rng& rng);

/// Strong view of every image in a (B,1,H,W) batch, styled from within the batch.
template <typename T>
Tensor<T> strong_batch(const Tensor<T>& batch, const StrongAugConfig& cfg, Rng& rng);

}  // namespace ssrl
