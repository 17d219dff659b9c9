#include "ssrl/augment.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <string>

namespace ssrl {

void WeakAugConfig::validate() const {
  if (!(sigma >= 0.0)) throw AugmentError("weak augmentation sigma must be >= 0");
  if (!(pixel_prob >= 0.0 && pixel_prob <= 1.0)) {
    throw AugmentError("weak augmentation pixel_prob must lie in [0, 1]");
  }
}

void StrongAugConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw AugmentError("style lambda must lie in [0, 1]");
}

std::size_t StrongAugConfig::radius_for(std::size_t h, std::size_t w) const {
  return radius.value_or(std::min(h, w) / 8);
}

namespace {

struct FftwFree {
  void operator()(fftw_complex* p) const { fftw_free(p); }
};
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

ComplexBuffer alloc_complex(std::size_t n) {
  return ComplexBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

class Plan {
 public:
  Plan(std::size_t h, std::size_t w, fftw_complex* buf, int sign)
      : plan_(fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf, buf, sign,
                               FFTW_ESTIMATE)) {}
  ~Plan() { fftw_destroy_plan(plan_); }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void run() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

template <typename T>
ComplexBuffer forward_dft(ImageView<T> img) {
  const std::size_t n = img.h * img.w;
  auto buf = alloc_complex(n);
  Plan plan(img.h, img.w, buf.get(), FFTW_FORWARD);
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = static_cast<double>(img.pixels[i]);
    buf[i][1] = 0.0;
  }
  plan.run();
  return buf;
}

long signed_frequency(std::size_t k, std::size_t n) {
  return k <= n / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(n);
}

template <typename T>
T clamp01(double v) {
  return static_cast<T>(std::clamp(v, 0.0, 1.0));
}

template <typename T>
void check_batch(const Tensor<T>& batch, const char* who) {
  if (batch.shape().c != 1) {
    throw ShapeError(std::string(who) + " expects single-channel images, got " +
                     to_string(batch.shape()));
  }
}

template <typename T>
ImageView<T> image_at(const Tensor<T>& batch, std::size_t i) {
  const Shape s = batch.shape();
  return {batch.data().subspan(i * s.plane(), s.plane()), s.h, s.w};
}

}  // namespace

template <typename T>
std::vector<T> weak_gaussian(ImageView<T> image, const WeakAugConfig& cfg, Rng& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<T> out(image.pixels.begin(), image.pixels.end());
  for (T& v : out) {
    if (coin(rng) < cfg.pixel_prob) v = clamp01<T>(static_cast<double>(v) + cfg.sigma * noise(rng));
  }
  return out;
}

template <typename T>
std::vector<T> strong_style(ImageView<T> content, ImageView<T> style, const StrongAugConfig& cfg) {
  cfg.validate();
  if (content.h != style.h || content.w != style.w) {
    throw ShapeError("strong_style: content " + std::to_string(content.h) + "x" +
                     std::to_string(content.w) + " vs style " + std::to_string(style.h) + "x" +
                     std::to_string(style.w));
  }
  const std::size_t h = content.h;
  const std::size_t w = content.w;
  const std::size_t n = h * w;
  if (n == 0) return {};

  auto spec = forward_dft(content);
  auto style_spec = forward_dft(style);
  const long r = static_cast<long>(cfg.radius_for(h, w));
  const double lambda = cfg.lambda;
  for (std::size_t u = 0; u < h; ++u) {
    if (std::labs(signed_frequency(u, h)) > r) continue;
    for (std::size_t v = 0; v < w; ++v) {
      if (std::labs(signed_frequency(v, w)) > r) continue;
      const std::size_t k = u * w + v;
      const std::complex<double> c(spec[k][0], spec[k][1]);
      const std::complex<double> s(style_spec[k][0], style_spec[k][1]);
      const double amp = (1.0 - lambda) * std::abs(c) + lambda * std::abs(s);
      const std::complex<double> mixed = std::polar(amp, std::arg(c));
      spec[k][0] = mixed.real();
      spec[k][1] = mixed.imag();
    }
  }

  Plan inverse(h, w, spec.get(), FFTW_BACKWARD);
  inverse.run();
  std::vector<T> out(n);
  const double norm = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = clamp01<T>(spec[i][0] * norm);
  return out;
}

template <typename T>
Tensor<T> weak_batch(const Tensor<T>& batch, const WeakAugConfig& cfg, Rng& rng) {
  check_batch(batch, "weak augmentation");
  Tensor<T> out(batch.shape());
  const std::size_t plane = batch.shape().plane();
  for (std::size_t i = 0; i < batch.shape().n; ++i) {
    auto noisy = weak_gaussian(image_at(batch, i), cfg, rng);
    std::copy(noisy.begin(), noisy.end(), out.data().begin() + i * plane);
  }
  return out;
}

template <typename T>
Tensor<T> strong_batch(const Tensor<T>& batch, const StrongAugConfig& cfg, Rng& rng) {
  check_batch(batch, "strong augmentation");
  const std::size_t n = batch.shape().n;
  const std::size_t plane = batch.shape().plane();
  Tensor<T> out(batch.shape());
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i;
    if (n > 1) {
      j = std::uniform_int_distribution<std::size_t>(0, n - 2)(rng);
      if (j >= i) ++j;
    }
    auto styled = strong_style(image_at(batch, i), image_at(batch, j), cfg);
    std::copy(styled.begin(), styled.end(), out.data().begin() + i * plane);
  }
  return out;
}

template <typename T>
Views<T> apply_views(const Tensor<T>& batch, const WeakAugConfig& weak, const StrongAugConfig& strong,
                     const Tensor<T>& style_pool, Rng& rng, bool pool_is_batch) {
  check_batch(batch, "apply_views");
  check_batch(style_pool, "apply_views style pool");
  const std::size_t pool = style_pool.shape().n;
  if (pool == 0) throw AugmentError("apply_views: empty style pool");
  if (style_pool.shape().h != batch.shape().h || style_pool.shape().w != batch.shape().w) {
    throw ShapeError("apply_views: style pool " + to_string(style_pool.shape()) +
                     " does not match batch " + to_string(batch.shape()));
  }
  Views<T> views{weak_batch(batch, weak, rng), Tensor<T>(batch.shape())};
  const std::size_t plane = batch.shape().plane();
  const bool exclude_self = pool_is_batch && pool == batch.shape().n && pool > 1;
  for (std::size_t i = 0; i < batch.shape().n; ++i) {
    std::size_t j;
    if (exclude_self) {
      j = std::uniform_int_distribution<std::size_t>(0, pool - 2)(rng);
      if (j >= i) ++j;
    } else {
      j = std::uniform_int_distribution<std::size_t>(0, pool - 1)(rng);
    }
    auto styled = strong_style(image_at(views.weak, i), image_at(style_pool, j), strong);
    std::copy(styled.begin(), styled.end(), views.strong.data().begin() + i * plane);
  }
  return views;
}

#define SSRL_INSTANTIATE(T)                                                                     \
  template std::vector<T> weak_gaussian(ImageView<T>, const WeakAugConfig&, Rng&);              \
  template std::vector<T> strong_style(ImageView<T>, ImageView<T>, const StrongAugConfig&);     \
  template Tensor<T> weak_batch(const Tensor<T>&, const WeakAugConfig&, Rng&);                  \
  template Tensor<T> strong_batch(const Tensor<T>&, const StrongAugConfig&, Rng&);              \
  template Views<T> apply_views(const Tensor<T>&, const WeakAugConfig&, const StrongAugConfig&, \
                                const Tensor<T>&, Rng&, bool);

SSRL_INSTANTIATE(float)
SSRL_INSTANTIATE(double)

#undef SSRL_INSTANTIATE

}  // namespace ssrl
