#include "ssrl/model.hpp"

#include <cmath>

#include "ssrl/rng.hpp"

namespace ssrl {

void UNetConfig::validate() const {
  if (in_channels == 0 || base_channels == 0 || num_classes == 0) {
    throw ModelError("UNetConfig: channel counts must be positive");
  }
  if (depth == 0 || depth > 8) throw ModelError("UNetConfig: depth must lie in [1, 8]");
  if (num_classes > 255) throw ModelError("UNetConfig: at most 255 classes");
}

namespace {

struct ConvSpec {
  std::string name;
  std::size_t in;
  std::size_t out;
  std::size_t kernel;
};

std::vector<ConvSpec> layer_specs(const UNetConfig& cfg) {
  std::vector<ConvSpec> specs;
  auto width = [&](std::size_t level) { return cfg.base_channels << level; };
  std::size_t in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::string p = "enc" + std::to_string(i);
    specs.push_back({p + ".conv0", in, width(i), 3});
    specs.push_back({p + ".conv1", width(i), width(i), 3});
    in = width(i);
  }
  specs.push_back({"mid.conv0", in, width(cfg.depth), 3});
  specs.push_back({"mid.conv1", width(cfg.depth), width(cfg.depth), 3});
  for (std::size_t i = cfg.depth; i-- > 0;) {
    const std::string p = "dec" + std::to_string(i);
    specs.push_back({p + ".conv0", width(i + 1) + width(i), width(i), 3});
    specs.push_back({p + ".conv1", width(i), width(i), 3});
  }
  specs.push_back({"head", cfg.base_channels, cfg.num_classes, 1});
  return specs;
}

}  // namespace

template <typename T>
std::size_t ModelParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value->size();
  return n;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto& t : tensors) t.value->zero_grad();
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  ModelParams copy;
  for (const auto& t : tensors) {
    copy.tensors.push_back(
        {t.name, make_tensor<T>(t.value->shape(), std::vector<T>(t.value->data().begin(),
                                                                  t.value->data().end()),
                                t.value->tracks_grad())});
  }
  return copy;
}

std::size_t param_count(const UNetConfig& cfg) {
  cfg.validate();
  std::size_t n = 0;
  for (const auto& s : layer_specs(cfg)) n += s.out * s.in * s.kernel * s.kernel + s.out;
  return n;
}

template <typename T>
ModelParams<T> init_params(const UNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(seed, "init");
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelParams<T> params;
  for (const auto& s : layer_specs(cfg)) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(s.in * s.kernel * s.kernel));
    auto weight = make_tensor<T>(Shape{s.out, s.in, s.kernel, s.kernel}, T(0), true);
    for (T& v : weight->data()) v = static_cast<T>(stddev * normal(rng));
    params.tensors.push_back({s.name + ".weight", std::move(weight)});
    params.tensors.push_back({s.name + ".bias", make_tensor<T>(Shape{s.out, 1, 1, 1}, T(0), true)});
  }
  return params;
}

template <typename T>
TensorRef<T> forward(Graph<T>& g, const ModelParams<T>& params, const UNetConfig& cfg,
                     const TensorRef<T>& batch) {
  const Shape s = batch->shape();
  if (s.c != cfg.in_channels) {
    throw ShapeError("forward: input " + to_string(s) + " but model expects " +
                     std::to_string(cfg.in_channels) + " channels");
  }
  if (s.h == 0 || s.w == 0 || s.h % cfg.stride() != 0 || s.w % cfg.stride() != 0) {
    throw ShapeError("forward: spatial extents of " + to_string(s) + " must be divisible by " +
                     std::to_string(cfg.stride()));
  }
  if (params.tensors.size() != 2 * (4 * cfg.depth + 3)) {
    throw ModelError("forward: parameter set does not match the configured depth");
  }
  std::size_t cursor = 0;
  auto conv = [&](const TensorRef<T>& x) {
    const auto& w = params.tensors[cursor++].value;
    const auto& b = params.tensors[cursor++].value;
    return conv2d(g, x, w, b);
  };
  auto block = [&](TensorRef<T> x) {
    x = relu(g, conv(x));
    return relu(g, conv(x));
  };

  std::vector<TensorRef<T>> skips;
  TensorRef<T> x = batch;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    x = block(x);
    skips.push_back(x);
    x = downsample2(g, x);
  }
  x = block(x);
  for (std::size_t i = cfg.depth; i-- > 0;) {
    x = concat_channels(g, upsample2(g, x), skips[i]);
    x = block(x);
  }
  return conv(x);
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_params(const UNetConfig&, std::uint64_t);
template ModelParams<double> init_params(const UNetConfig&, std::uint64_t);
template TensorRef<float> forward(Graph<float>&, const ModelParams<float>&, const UNetConfig&,
                                  const TensorRef<float>&);
template TensorRef<double> forward(Graph<double>&, const ModelParams<double>&, const UNetConfig&,
                                   const TensorRef<double>&);

}  // namespace ssrl
