#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssrl/augment.hpp"
#include "ssrl/checkpoint.hpp"
#include "ssrl/losses.hpp"
#include "ssrl/metrics.hpp"
#include "ssrl/model.hpp"
#include "ssrl/optimizer.hpp"
#include "ssrl/phantom.hpp"

namespace ssrl {

enum class Mode { kBaseline, kWeakAug, kStrongAug, kSemiThreshold, kSemiBce };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);
constexpr bool is_semi(Mode m) { return m == Mode::kSemiThreshold || m == Mode::kSemiBce; }

struct TrainConfig {
  Mode mode = Mode::kBaseline;
  std::size_t steps = 2000;
  double lr = 1e-3;
  std::size_t batch_labeled = 8;
  std::size_t batch_unlabeled = 8;
  double tau = 0.95;
  double beta = 0.5;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  ///< 0 disables periodic evaluation
  /// Loss on the labeled batch. Cross-entropy unless set to beta_ce.
  LossKind supervised_loss = LossKind::kCrossEntropy;
  WeakAugConfig weak;
  StrongAugConfig strong;
  UNetConfig model;

  void validate() const;
};

struct StepLog {
  std::size_t step = 0;
  double loss_x = 0.0;
  double loss_u = 0.0;
  double loss = 0.0;
};

/// Everything the semi-supervised forward pass produces before backward.
template <typename T>
struct SemiForward {
  TensorRef<T> prob_labeled;
  TensorRef<T> prob_weak;
  TensorRef<T> prob_strong;
  PseudoLabels<T> pseudo;
  TensorRef<T> loss_x;
  TensorRef<T> loss_u;
  TensorRef<T> loss;
};

/// The semi-supervised objective on one labeled and one unlabeled batch:
/// weak view of x_l, weak view x_w of x_u, strong view of x_w styled from
/// x_u, a single forward over the three stacked views, argmax pseudo-labels
/// from the weak view, loss = (loss_x + loss_u) / 2.
template <typename T>
SemiForward<T> semi_forward(Graph<T>& g, const ModelParams<T>& params, const TrainConfig& cfg,
                            const Tensor<T>& x_labeled, const LabelMap& gt,
                            const Tensor<T>& x_unlabeled, Rng& aug_labeled, Rng& aug_unlabeled);

template <typename T>
StepLog train_step_semi(ModelParams<T>& params, AdamState<T>& state, const TrainConfig& cfg,
                        const Tensor<T>& x_labeled, const LabelMap& gt, const Tensor<T>& x_unlabeled,
                        Rng& aug_labeled, Rng& aug_unlabeled);

/// The semi-supervised objective with an empty unlabeled batch: weak view of
/// x_l, loss = (loss_x + 0) / 2. Semi modes fall back to this when there is no
/// unlabeled data.
template <typename T>
StepLog train_step_labeled_only(ModelParams<T>& params, AdamState<T>& state, const TrainConfig& cfg,
                                const Tensor<T>& x_labeled, const LabelMap& gt, Rng& aug_labeled);

/// Baseline: raw images. weak_aug: weak view. strong_aug: strong view styled
/// within the batch. Loss is the configured supervised loss.
template <typename T>
StepLog train_step_supervised(ModelParams<T>& params, AdamState<T>& state, const TrainConfig& cfg,
                              const Tensor<T>& images, const LabelMap& gt, Rng& aug);

/// Owns the data, parameters and optimizer state of one run. Batches and
/// augmentation noise for step s come from streams derived from (seed, s),
/// so a run restored from a checkpoint continues exactly where it stopped.
template <typename T>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<PhantomSample> labeled, UnlabeledPool unlabeled);

  StepLog step();
  /// Runs until `cfg.steps` steps have been taken. The callback, if set, sees
  /// every step log.
  std::vector<StepLog> run(const std::function<void(const StepLog&)>& on_step = {});

  MetricsReport evaluate(const std::vector<PhantomSample>& test_set) const;

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

  const TrainConfig& config() const { return cfg_; }
  const ModelParams<T>& params() const { return params_; }
  std::size_t current_step() const { return step_; }
  /// True when a semi mode had no unlabeled data and ran labeled-only steps.
  bool fell_back_to_supervised() const { return fallback_; }
  AccessAudit audit() const;
  const UnlabeledPool& unlabeled() const { return unlabeled_; }

 private:
  std::vector<const PhantomSample*> sample_labeled(std::size_t step) const;
  std::vector<std::size_t> sample_unlabeled(std::size_t step) const;

  TrainConfig cfg_;
  std::vector<PhantomSample> labeled_;
  UnlabeledPool unlabeled_;
  ModelParams<T> params_;
  AdamState<T> state_;
  std::size_t step_ = 0;
  bool fallback_ = false;
  std::size_t labeled_reads_ = 0;
};

}  // namespace ssrl
