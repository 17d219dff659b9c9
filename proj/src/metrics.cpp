#include "ssrl/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "ssrl/runtime.hpp"

namespace ssrl {

double dice_per_class(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                      std::size_t k) {
  if (k >= kNumClasses) {
    throw std::out_of_range("dice_per_class: class " + std::to_string(k) + " out of range");
  }
  if (pred.size() != gt.size()) {
    throw ShapeError("dice_per_class: " + std::to_string(pred.size()) + " vs " +
                     std::to_string(gt.size()) + " pixels");
  }
  std::uint64_t both = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == k;
    const bool g = gt[i] == k;
    np += p;
    ng += g;
    both += p && g;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

double dice_per_class(const LabelMap& pred, const LabelMap& gt, std::size_t k) {
  if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w) {
    throw ShapeError("dice_per_class: label maps differ in shape");
  }
  return dice_per_class(std::span<const std::uint8_t>(pred.data),
                        std::span<const std::uint8_t>(gt.data), k);
}

void OverlapCounts::accumulate(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) throw ShapeError("OverlapCounts: prediction/truth size mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::uint8_t p = pred[i];
    const std::uint8_t g = gt[i];
    if (p >= kNumClasses || g >= kNumClasses) {
      throw std::out_of_range("OverlapCounts: label out of range");
    }
    ++predicted[p];
    ++truth[g];
    if (p == g) {
      ++intersection[p];
      ++correct;
    }
  }
  pixels += pred.size();
}

double OverlapCounts::dice(std::size_t k) const {
  const std::uint64_t denom = predicted.at(k) + truth.at(k);
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(intersection[k]) / static_cast<double>(denom);
}

MetricsReport MetricsReport::from_counts(const OverlapCounts& counts, std::size_t samples) {
  MetricsReport r;
  double total = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    r.dice[k] = counts.dice(k);
    total += r.dice[k];
  }
  r.mean_dice = total / static_cast<double>(kNumClasses);
  r.mean_foreground_dice = (total - r.dice[0]) / static_cast<double>(kNumClasses - 1);
  r.pixel_accuracy =
      counts.pixels == 0 ? 0.0 : static_cast<double>(counts.correct) / static_cast<double>(counts.pixels);
  r.samples = samples;
  return r;
}

template <typename T>
LabelMap argmax_labels(const Tensor<T>& scores) {
  const Shape s = scores.shape();
  const std::size_t hw = s.plane();
  LabelMap out(s.n, s.h, s.w);
  const T* x = scores.data().data();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t base = b * s.sample() + i;
      std::size_t best = 0;
      for (std::size_t c = 1; c < s.c; ++c) {
        if (x[base + c * hw] > x[base + best * hw]) best = c;
      }
      out.data[b * hw + i] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template <typename T>
MetricsReport evaluate(const ModelParams<T>& params, const UNetConfig& cfg,
                       const std::vector<PhantomSample>& test_set, std::size_t chunk) {
  if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (chunk == 0) chunk = 1;
  FlushSubnormals flush;
  OverlapCounts counts;
  Graph<T> g(false);
  for (std::size_t start = 0; start < test_set.size(); start += chunk) {
    const std::size_t end = std::min(test_set.size(), start + chunk);
    std::vector<const PhantomSample*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&test_set[i]);
    auto x = std::make_shared<Tensor<T>>(images_to_tensor<T>(batch));
    auto logits = forward(g, params, cfg, x);
    const LabelMap pred = argmax_labels(*logits);
    const LabelMap gt = labels_to_map(batch);
    counts.accumulate(pred.data, gt.data);
  }
  return MetricsReport::from_counts(counts, test_set.size());
}

std::string csv_header() {
  std::string h = "model";
  for (auto name : class_names()) {
    h += ',';
    h += name;
  }
  return h + ",mean";
}

namespace {
std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}
}  // namespace

std::string csv_row(const std::string& model, const MetricsReport& report) {
  std::string row = model;
  for (double d : report.dice) row += "," + fixed3(d);
  return row + "," + fixed3(report.mean_dice);
}

std::string markdown_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::string out = "| Model |";
  for (auto name : class_names()) {
    out += ' ';
    out += name;
    out += " |";
  }
  out += " mean |\n|---|";
  for (std::size_t k = 0; k <= kNumClasses; ++k) out += "---|";
  out += '\n';
  for (const auto& [model, r] : rows) {
    out += "| " + model + " |";
    for (double d : r.dice) out += ' ' + fixed3(d) + " |";
    out += ' ' + fixed3(r.mean_dice) + " |\n";
  }
  return out;
}

template LabelMap argmax_labels(const Tensor<float>&);
template LabelMap argmax_labels(const Tensor<double>&);
template MetricsReport evaluate(const ModelParams<float>&, const UNetConfig&,
                                const std::vector<PhantomSample>&, std::size_t);
template MetricsReport evaluate(const ModelParams<double>&, const UNetConfig&,
                                const std::vector<PhantomSample>&, std::size_t);

}  // namespace ssrl
