#include "ssrl/phantom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "ssrl/rng.hpp"

namespace ssrl {

const std::array<std::string_view, kNumClasses>& class_names() {
  static constexpr std::array<std::string_view, kNumClasses> names = {
      "background", "wm", "gm", "csf", "bones", "skin", "cavities", "eyes", "ventricles"};
  return names;
}

// background, WM, GM, CSF, bone, skin, cavity, eye, ventricle
const std::array<double, kNumClasses>& class_intensity_means() {
  static constexpr std::array<double, kNumClasses> means = {0.00, 0.80, 0.55, 0.15, 0.30,
                                                            0.65, 0.05, 0.40, 0.20};
  return means;
}

void PhantomConfig::validate() const {
  if (size == 0 || size % 4 != 0) {
    throw std::invalid_argument("phantom size must be a positive multiple of 4, got " +
                                std::to_string(size));
  }
  if (!(intensity_noise >= 0.0) || !(geometry_jitter >= 0.0) || geometry_jitter >= 0.5) {
    throw std::invalid_argument("phantom noise must be >= 0 and jitter in [0, 0.5)");
  }
}

namespace {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
};

// All lengths in normalised image coordinates: [-1, 1] across, y pointing down.
struct HeadGeometry {
  Ellipse skin, bone, csf, gm, wm, ventricle, cavity;
  std::array<Ellipse, 2> eyes;
  Ellipse face;  ///< skin shrunk inward; eyes and cavity are clipped to it
};

HeadGeometry make_geometry(double jitter, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto jit = [&](double scale = 1.0) { return 1.0 + scale * jitter * unit(rng); };

  const double s = 0.95 * jit(0.5);
  const double cx = 0.03 * unit(rng);
  const double cy = 0.03 * unit(rng);
  const double bcy = cy - 0.14 * s;

  HeadGeometry g{};
  g.bone = {cx, bcy, 0.60 * s * jit(0.5), 0.64 * s * jit(0.5)};
  const double t_bone = 0.08 * jit();
  const double t_csf = 0.07 * jit();
  const double t_gm = 0.12 * jit();
  g.csf = {cx, bcy, g.bone.rx - t_bone, g.bone.ry - t_bone};
  g.gm = {cx, bcy, g.csf.rx - t_csf, g.csf.ry - t_csf};
  g.wm = {cx, bcy, g.gm.rx - t_gm, g.gm.ry - t_gm};
  g.ventricle = {cx + 0.02 * unit(rng), bcy - 0.02 * s, 0.10 * s * jit(), 0.16 * s * jit()};

  // The skin sits lower than the skull so the face band below it is thick
  // enough to hold the eyes and the cavity.
  const double skin_cy = cy + 0.05 * s;
  g.skin = {cx, skin_cy, g.bone.rx + 0.10 * jit(), (skin_cy - bcy) + g.bone.ry + 0.09 * jit()};
  // Keeps an unbroken band of skin outside the eyes and the cavity.
  constexpr double kSkinBand = 0.09;
  g.face = {cx, skin_cy, g.skin.rx - kSkinBand, g.skin.ry - kSkinBand};
  const double face_top = bcy + g.bone.ry;
  const double face_bottom = skin_cy + g.skin.ry;
  const double face_mid = 0.5 * (face_top + face_bottom);
  const double eye_dx = 0.28 * s * jit(0.5);
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? -1.0 : 1.0;
    g.eyes[side] = {cx + sign * eye_dx, face_mid + 0.01 * unit(rng), 0.11 * s * jit(),
                    0.08 * s * jit()};
  }
  g.cavity = {cx + 0.01 * unit(rng), face_mid - 0.02 * s, 0.06 * s * jit(), 0.11 * s * jit()};
  return g;
}

Tissue classify(const HeadGeometry& g, double x, double y) {
  if (!g.skin.contains(x, y)) return Tissue::kBackground;
  if (!g.bone.contains(x, y)) {
    if (!g.face.contains(x, y)) return Tissue::kSkin;
    if (g.eyes[0].contains(x, y) || g.eyes[1].contains(x, y)) return Tissue::kEye;
    if (g.cavity.contains(x, y)) return Tissue::kCavity;
    return Tissue::kSkin;
  }
  if (!g.csf.contains(x, y)) return Tissue::kBone;
  if (!g.gm.contains(x, y)) return Tissue::kCsf;
  if (!g.wm.contains(x, y)) return Tissue::kGrayMatter;
  if (g.ventricle.contains(x, y)) return Tissue::kVentricle;
  return Tissue::kWhiteMatter;
}

}  // namespace

PhantomSample generate_one(const PhantomConfig& cfg, std::uint64_t index) {
  cfg.validate();
  Rng geometry_rng = make_rng(cfg.seed, "phantom.geometry", index);
  Rng texture_rng = make_rng(cfg.seed, "phantom.texture", index);
  const HeadGeometry g = make_geometry(cfg.geometry_jitter, geometry_rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto& means = class_intensity_means();

  const std::size_t n = cfg.size;
  PhantomSample s{n, n, std::vector<float>(n * n), std::vector<std::uint8_t>(n * n)};
  for (std::size_t row = 0; row < n; ++row) {
    const double y = (static_cast<double>(row) + 0.5) / static_cast<double>(n) * 2.0 - 1.0;
    for (std::size_t col = 0; col < n; ++col) {
      const double x = (static_cast<double>(col) + 0.5) / static_cast<double>(n) * 2.0 - 1.0;
      const auto tissue = static_cast<std::uint8_t>(classify(g, x, y));
      const double v = means[tissue] + cfg.intensity_noise * noise(texture_rng);
      s.labels[row * n + col] = tissue;
      s.image[row * n + col] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return s;
}

std::vector<PhantomSample> generate(const PhantomConfig& cfg, std::size_t n) {
  if (n == 0) throw std::invalid_argument("generate: need at least one sample");
  std::vector<PhantomSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_one(cfg, i));
  return out;
}

void corrupt_labels(std::vector<PhantomSample>& samples, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("corrupt_labels: fraction must lie in [0, 1]");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng = make_rng(seed, "label_noise", i);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> other(1, static_cast<int>(kNumClasses) - 1);
    for (auto& y : samples[i].labels) {
      if (coin(rng) < fraction) y = static_cast<std::uint8_t>((y + other(rng)) % kNumClasses);
    }
  }
}

void UnlabeledPool::labels(std::size_t i) const {
  ++forbidden_attempts_;
  throw ForbiddenAccessError("ground truth of unlabeled sample " + std::to_string(i) +
                             " is reserved for evaluation");
}

DatasetSplit split(const std::vector<PhantomSample>& dataset, double labeled_fraction,
                   std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("split: empty dataset");
  if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0)) {
    throw std::invalid_argument("split: labeled fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_labeled = static_cast<std::size_t>(
      std::llround(labeled_fraction * static_cast<double>(dataset.size())));

  DatasetSplit out;
  std::vector<PhantomSample> unlabeled;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_labeled ? out.labeled : unlabeled).push_back(dataset[order[k]]);
  }
  out.unlabeled = UnlabeledPool(std::move(unlabeled));
  return out;
}

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'S', 'R', 'L'};
constexpr std::uint8_t kVersion = 0x01;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw DatasetError(DatasetError::Kind::kSizeMismatch, std::string(what) + " too large");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const std::vector<PhantomSample>& samples) {
  const std::size_t h = samples.empty() ? 0 : samples.front().h;
  const std::size_t w = samples.empty() ? 0 : samples.front().w;
  std::vector<std::uint8_t> out;
  out.reserve(dataset_file_size(samples.size(), h, w));
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.insert(out.end(), 3, 0x00);
  put_u32(out, checked_u32(samples.size(), "sample count"));
  put_u32(out, checked_u32(h, "height"));
  put_u32(out, checked_u32(w, "width"));
  put_u32(out, static_cast<std::uint32_t>(kNumClasses));
  for (const auto& s : samples) {
    if (s.h != h || s.w != w || s.image.size() != h * w || s.labels.size() != h * w) {
      throw DatasetError(DatasetError::Kind::kSizeMismatch,
                         "encode_dataset: samples must share one spatial extent");
    }
    for (float v : s.image) put_u32(out, std::bit_cast<std::uint32_t>(v));
    out.insert(out.end(), s.labels.begin(), s.labels.end());
  }
  return out;
}

std::vector<PhantomSample> decode_dataset(std::span<const std::uint8_t> bytes) {
  using Kind = DatasetError::Kind;
  if (bytes.size() < kDatasetHeaderBytes) {
    throw DatasetError(Kind::kTruncated, "dataset truncated: header needs " +
                                             std::to_string(kDatasetHeaderBytes) + " bytes, got " +
                                             std::to_string(bytes.size()));
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DatasetError(Kind::kBadMagic, "dataset has bad magic (expected SSRL)");
  }
  if (bytes[4] != kVersion) {
    throw DatasetError(Kind::kBadVersion,
                       "dataset has unsupported version " + std::to_string(bytes[4]));
  }
  const std::size_t n = get_u32(bytes, 8);
  const std::size_t h = get_u32(bytes, 12);
  const std::size_t w = get_u32(bytes, 16);
  const std::size_t k = get_u32(bytes, 20);
  if (k != kNumClasses) {
    throw DatasetError(Kind::kSizeMismatch,
                       "dataset declares " + std::to_string(k) + " classes, expected 9");
  }
  const std::size_t expected = dataset_file_size(n, h, w);
  if (bytes.size() < expected) {
    throw DatasetError(Kind::kTruncated, "dataset truncated: expected " + std::to_string(expected) +
                                             " bytes, got " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw DatasetError(Kind::kSizeMismatch, "dataset size mismatch: expected " +
                                                std::to_string(expected) + " bytes, got " +
                                                std::to_string(bytes.size()));
  }
  std::vector<PhantomSample> out(n);
  std::size_t at = kDatasetHeaderBytes;
  for (auto& s : out) {
    s.h = h;
    s.w = w;
    s.image.resize(h * w);
    for (auto& v : s.image) {
      v = std::bit_cast<float>(get_u32(bytes, at));
      at += 4;
    }
    s.labels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                    bytes.begin() + static_cast<std::ptrdiff_t>(at + h * w));
    at += h * w;
    for (auto y : s.labels) {
      if (y >= kNumClasses) {
        throw DatasetError(Kind::kSizeMismatch, "dataset label " + std::to_string(y) + " out of range");
      }
    }
  }
  return out;
}

void save_dataset(const std::vector<PhantomSample>& samples, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(samples);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DatasetError(DatasetError::Kind::kIo, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DatasetError(DatasetError::Kind::kIo, "failed writing " + path.string());
}

std::vector<PhantomSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DatasetError(DatasetError::Kind::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const PhantomSample*>& samples) {
  if (samples.empty()) throw ShapeError("images_to_tensor: empty batch");
  const std::size_t h = samples.front()->h;
  const std::size_t w = samples.front()->w;
  Tensor<T> out(Shape{samples.size(), 1, h, w});
  auto dst = out.data().begin();
  for (const auto* s : samples) {
    if (s->h != h || s->w != w) throw ShapeError("images_to_tensor: mixed image extents");
    dst = std::transform(s->image.begin(), s->image.end(), dst,
                         [](float v) { return static_cast<T>(v); });
  }
  return out;
}

LabelMap labels_to_map(const std::vector<const PhantomSample*>& samples) {
  if (samples.empty()) throw ShapeError("labels_to_map: empty batch");
  LabelMap out(samples.size(), samples.front()->h, samples.front()->w);
  auto dst = out.data.begin();
  for (const auto* s : samples) {
    if (s->labels.size() != out.plane()) throw ShapeError("labels_to_map: mixed extents");
    dst = std::copy(s->labels.begin(), s->labels.end(), dst);
  }
  return out;
}

template Tensor<float> images_to_tensor(const std::vector<const PhantomSample*>&);
template Tensor<double> images_to_tensor(const std::vector<const PhantomSample*>&);

}  // namespace ssrl
