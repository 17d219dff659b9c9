#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssrl/model.hpp"
#include "ssrl/phantom.hpp"

namespace ssrl {

/// Dice of class k between two label grids of equal size. Both masks empty
/// counts as perfect agreement (1.0).
double dice_per_class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                      std::size_t k);
double dice_per_class(const LabelMap& pred, const LabelMap& gt, std::size_t k);

/// Pooled per-class counts; dice is computed from the totals (micro aggregation).
struct OverlapCounts {
  std::array<std::uint64_t, kNumClasses> intersection{};
  std::array<std::uint64_t, kNumClasses> predicted{};
  std::array<std::uint64_t, kNumClasses> truth{};
  std::uint64_t correct = 0;
  std::uint64_t pixels = 0;

  void accumulate(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
  double dice(std::size_t k) const;
};

struct MetricsReport {
  std::array<double, kNumClasses> dice{};
  double mean_dice = 0.0;
  double mean_foreground_dice = 0.0;  ///< classes 1..8
  double pixel_accuracy = 0.0;
  std::size_t samples = 0;

  static MetricsReport from_counts(const OverlapCounts& counts, std::size_t samples);
};

/// Argmax prediction for every test image, pooled into one report.
template <typename T>
MetricsReport evaluate(const ModelParams<T>& params, const UNetConfig& cfg,
                       const std::vector<PhantomSample>& test_set, std::size_t chunk = 16);

/// Argmax labels for a batch of logits or probabilities (B, K, H, W).
template <typename T>
LabelMap argmax_labels(const Tensor<T>& scores);

/// model,background,wm,gm,csf,bones,skin,cavities,eyes,ventricles,mean
std::string csv_header();
/// One row with three decimals; `mean` is the mean over the nine classes.
std::string csv_row(const std::string& model, const MetricsReport& report);
/// Markdown rendering of the same columns.
std::string markdown_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace ssrl
