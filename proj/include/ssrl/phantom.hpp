#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ssrl/tensor.hpp"

namespace ssrl {

/// Tissue classes and their stable integer codes.
enum class Tissue : std::uint8_t {
  kBackground = 0,
  kWhiteMatter = 1,
  kGrayMatter = 2,
  kCsf = 3,
  kBone = 4,
  kSkin = 5,
  kCavity = 6,
  kEye = 7,
  kVentricle = 8,
};

inline constexpr std::size_t kNumClasses = 9;

/// Short lowercase names in code order: background, wm, gm, csf, bones, skin,
/// cavities, eyes, ventricles.
const std::array<std::string_view, kNumClasses>& class_names();

/// Mean intensity of each tissue, in code order. Classes that share a boundary
/// differ by at least 0.1.
const std::array<double, kNumClasses>& class_intensity_means();

struct PhantomConfig {
  std::size_t size = 64;
  double intensity_noise = 0.03;
  double geometry_jitter = 0.08;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PhantomSample {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<float> image;          ///< intensities in [0, 1]
  std::vector<std::uint8_t> labels;  ///< codes in [0, 9)

  friend bool operator==(const PhantomSample&, const PhantomSample&) = default;
};

/// Sample `index` of the stream defined by cfg; a pure function of (cfg, index).
PhantomSample generate_one(const PhantomConfig& cfg, std::uint64_t index);

std::vector<PhantomSample> generate(const PhantomConfig& cfg, std::size_t n);

/// Replaces each pixel label, with probability `fraction`, by a different class
/// drawn uniformly from the remaining K - 1.
void corrupt_labels(std::vector<PhantomSample>& samples, double fraction, std::uint64_t seed);

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kBadVersion, kTruncated, kSizeMismatch };
  DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Raised when training code asks for ground truth of an unlabeled sample.
class ForbiddenAccessError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Counters reported in run manifests.
struct AccessAudit {
  std::size_t labeled_label_reads = 0;
  std::size_t forbidden_attempts = 0;
};

/// Tag type that unlocks ground truth of unlabeled samples; only evaluation
/// code constructs one.
struct OracleKey {
  explicit OracleKey() = default;
};

/// Images without usable labels. Ground truth is retained for evaluation only.
class UnlabeledPool {
 public:
  UnlabeledPool() = default;
  explicit UnlabeledPool(std::vector<PhantomSample> samples) : samples_(std::move(samples)) {}

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::span<const float> image(std::size_t i) const { return samples_.at(i).image; }
  std::size_t height() const { return samples_.empty() ? 0 : samples_.front().h; }
  std::size_t width() const { return samples_.empty() ? 0 : samples_.front().w; }

  /// Always throws ForbiddenAccessError and records the attempt.
  [[noreturn]] void labels(std::size_t i) const;
  const std::vector<std::uint8_t>& oracle_labels(std::size_t i, OracleKey) const {
    return samples_.at(i).labels;
  }
  std::size_t forbidden_attempts() const { return forbidden_attempts_; }

 private:
  std::vector<PhantomSample> samples_;
  mutable std::size_t forbidden_attempts_ = 0;
};

struct DatasetSplit {
  std::vector<PhantomSample> labeled;
  UnlabeledPool unlabeled;
};

/// Deterministic shuffled partition; round(fraction * n) samples are labeled.
DatasetSplit split(const std::vector<PhantomSample>& dataset, double labeled_fraction,
                   std::uint64_t seed);

/// Dataset file: "SSRL", version 0x01, three zero pad bytes, then little-endian
/// u32 n, H, W, K and n records of H*W float32 intensities followed by H*W
/// label bytes.
void save_dataset(const std::vector<PhantomSample>& samples, const std::filesystem::path& path);
std::vector<PhantomSample> load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const std::vector<PhantomSample>& samples);
std::vector<PhantomSample> decode_dataset(std::span<const std::uint8_t> bytes);

inline constexpr std::size_t kDatasetHeaderBytes = 24;
constexpr std::size_t dataset_file_size(std::size_t n, std::size_t h, std::size_t w) {
  return kDatasetHeaderBytes + n * (h * w * 4 + h * w);
}

/// Stacks images into a (B,1,H,W) tensor.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const PhantomSample*>& samples);

LabelMap labels_to_map(const std::vector<const PhantomSample*>& samples);

}  // namespace ssrl
