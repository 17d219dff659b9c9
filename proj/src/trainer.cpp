#include "ssrl/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "ssrl/rng.hpp"
#include "ssrl/runtime.hpp"

namespace ssrl {

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kBaseline:
      return "baseline";
    case Mode::kWeakAug:
      return "weak_aug";
    case Mode::kStrongAug:
      return "strong_aug";
    case Mode::kSemiThreshold:
      return "semi_threshold";
    case Mode::kSemiBce:
      return "semi_bce";
  }
  return "unknown";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::kBaseline, Mode::kWeakAug, Mode::kStrongAug, Mode::kSemiThreshold,
                 Mode::kSemiBce}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown mode '" + name +
                              "' (expected baseline, weak_aug, strong_aug, semi_threshold, semi_bce)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_labeled == 0) throw std::invalid_argument("batch_labeled must be positive");
  if (is_semi(mode) && batch_unlabeled == 0) {
    throw std::invalid_argument("semi-supervised modes need batch_unlabeled > 0");
  }
  if (supervised_loss != LossKind::kCrossEntropy && supervised_loss != LossKind::kBetaCrossEntropy) {
    throw std::invalid_argument("supervised loss must be ce or beta_ce");
  }
  LossConfig{LossKind::kCrossEntropy, beta, tau}.validate();
  weak.validate();
  strong.validate();
  model.validate();
}

namespace {

template <typename T>
TensorRef<T> supervised_loss(Graph<T>& g, const TrainConfig& cfg, const TensorRef<T>& prob,
                             const LabelMap& gt) {
  if (cfg.supervised_loss == LossKind::kBetaCrossEntropy) {
    return beta_ce(g, prob, gt, static_cast<T>(cfg.beta));
  }
  return ce_loss(g, prob, gt);
}

AdamConfig adam_config(const TrainConfig& cfg) {
  AdamConfig a;
  a.lr = cfg.lr;
  return a;
}

std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t batch, Rng rng) {
  std::vector<std::size_t> out;
  if (batch <= pool) {
    std::vector<std::size_t> order(pool);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(pick(rng));
  }
  return out;
}

}  // namespace

template <typename T>
SemiForward<T> semi_forward(Graph<T>& g, const ModelParams<T>& params, const TrainConfig& cfg,
                            const Tensor<T>& x_labeled, const LabelMap& gt,
                            const Tensor<T>& x_unlabeled, Rng& aug_labeled, Rng& aug_unlabeled) {
  if (x_unlabeled.shape().n == 0) throw std::invalid_argument("semi step with an empty unlabeled batch");
  auto x_l = std::make_shared<Tensor<T>>(weak_batch(x_labeled, cfg.weak, aug_labeled));
  auto views = apply_views(x_unlabeled, cfg.weak, cfg.strong, x_unlabeled, aug_unlabeled);
  auto x_w = std::make_shared<Tensor<T>>(std::move(views.weak));
  auto x_s = std::make_shared<Tensor<T>>(std::move(views.strong));

  auto logits = forward(g, params, cfg.model, concat_batch<T>(g, {x_l, x_w, x_s}));
  auto prob = softmax_channels(g, logits);
  const std::size_t bl = x_labeled.shape().n;
  const std::size_t bu = x_unlabeled.shape().n;
  auto parts = split_batch(g, prob, {bl, bu, bu});

  SemiForward<T> out;
  out.prob_labeled = parts[0];
  out.prob_weak = parts[1];
  out.prob_strong = parts[2];
  out.pseudo = pseudo_label(*out.prob_weak);
  out.loss_x = supervised_loss(g, cfg, out.prob_labeled, gt);
  if (cfg.mode == Mode::kSemiBce) {
    out.loss_u = beta_ce(g, out.prob_strong, out.pseudo.labels, static_cast<T>(cfg.beta));
  } else {
    out.loss_u = thresholded_ce(g, out.prob_strong, out.pseudo, static_cast<T>(cfg.tau));
  }
  out.loss = combined_loss(g, out.loss_x, out.loss_u);
  return out;
}

template <typename T>
StepLog train_step_semi(ModelParams<T>& params, AdamState<T>& state, const TrainConfig& cfg,
                        const Tensor<T>& x_labeled, const LabelMap& gt, const Tensor<T>& x_unlabeled,
                        Rng& aug_labeled, Rng& aug_unlabeled) {
  if (!is_semi(cfg.mode)) throw std::invalid_argument("train_step_semi in a supervised mode");
  FlushSubnormals flush;
  Graph<T> g;
  auto f = semi_forward(g, params, cfg, x_labeled, gt, x_unlabeled, aug_labeled, aug_unlabeled);
  params.zero_grad();
  g.backward(f.loss);
  adam_step(params, state, adam_config(cfg));
  return StepLog{state.t, f.loss_x->item(), f.loss_u->item(), f.loss->item()};
}

template <typename T>
StepLog train_step_supervised(ModelParams<T>& params, AdamState<T>& state, const TrainConfig& cfg,
                              const Tensor<T>& images, const LabelMap& gt, Rng& aug) {
  FlushSubnormals flush;
  TensorRef<T> x;
  switch (cfg.mode) {
    case Mode::kBaseline:
      x = std::make_shared<Tensor<T>>(images);
      break;
    case Mode::kWeakAug:
      x = std::make_shared<Tensor<T>>(weak_batch(images, cfg.weak, aug));
      break;
    case Mode::kStrongAug:
      x = std::make_shared<Tensor<T>>(strong_batch(images, cfg.strong, aug));
      break;
    default:
      throw std::invalid_argument("train_step_supervised in a semi-supervised mode");
  }
  Graph<T> g;
  auto prob = softmax_channels(g, forward(g, params, cfg.model, x));
  auto loss = supervised_loss(g, cfg, prob, gt);
  params.zero_grad();
  g.backward(loss);
  adam_step(params, state, adam_config(cfg));
  const double value = loss->item();
  return StepLog{state.t, value, 0.0, value};
}

template <typename T>
StepLog train_step_labeled_only(ModelParams<T>& params, AdamState<T>& state, const TrainConfig& cfg,
                                const Tensor<T>& x_labeled, const LabelMap& gt, Rng& aug_labeled) {
  FlushSubnormals flush;
  auto x_l = std::make_shared<Tensor<T>>(weak_batch(x_labeled, cfg.weak, aug_labeled));
  Graph<T> g;
  auto prob = softmax_channels(g, forward(g, params, cfg.model, x_l));
  auto loss_x = supervised_loss(g, cfg, prob, gt);
  auto loss = combined_loss(g, loss_x, make_scalar<T>(T(0)));
  params.zero_grad();
  g.backward(loss);
  adam_step(params, state, adam_config(cfg));
  return StepLog{state.t, loss_x->item(), 0.0, loss->item()};
}

template <typename T>
Trainer<T>::Trainer(TrainConfig cfg, std::vector<PhantomSample> labeled, UnlabeledPool unlabeled)
    : cfg_(std::move(cfg)), labeled_(std::move(labeled)), unlabeled_(std::move(unlabeled)) {
  cfg_.validate();
  if (labeled_.empty()) throw std::invalid_argument("Trainer needs at least one labeled sample");
  params_ = init_params<T>(cfg_.model, cfg_.seed);
  state_ = AdamState<T>::zeros_like(params_);
  fallback_ = is_semi(cfg_.mode) && unlabeled_.empty();
}

template <typename T>
std::vector<const PhantomSample*> Trainer<T>::sample_labeled(std::size_t step) const {
  std::vector<const PhantomSample*> batch;
  for (std::size_t i :
       sample_indices(labeled_.size(), cfg_.batch_labeled, make_rng(cfg_.seed, "batch.labeled", step))) {
    batch.push_back(&labeled_[i]);
  }
  return batch;
}

template <typename T>
std::vector<std::size_t> Trainer<T>::sample_unlabeled(std::size_t step) const {
  return sample_indices(unlabeled_.size(), cfg_.batch_unlabeled,
                        make_rng(cfg_.seed, "batch.unlabeled", step));
}

template <typename T>
StepLog Trainer<T>::step() {
  const auto batch = sample_labeled(step_);
  const Tensor<T> x = images_to_tensor<T>(batch);
  const LabelMap gt = labels_to_map(batch);
  labeled_reads_ += batch.size();
  Rng aug_labeled = make_rng(cfg_.seed, "aug.labeled", step_);

  StepLog log;
  if (is_semi(cfg_.mode) && !fallback_) {
    const auto idx = sample_unlabeled(step_);
    const std::size_t h = unlabeled_.height();
    const std::size_t w = unlabeled_.width();
    Tensor<T> xu(Shape{idx.size(), 1, h, w});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto img = unlabeled_.image(idx[k]);
      std::transform(img.begin(), img.end(), xu.data().begin() + k * h * w,
                     [](float v) { return static_cast<T>(v); });
    }
    Rng aug_unlabeled = make_rng(cfg_.seed, "aug.unlabeled", step_);
    log = train_step_semi(params_, state_, cfg_, x, gt, xu, aug_labeled, aug_unlabeled);
  } else if (fallback_) {
    log = train_step_labeled_only(params_, state_, cfg_, x, gt, aug_labeled);
  } else {
    log = train_step_supervised(params_, state_, cfg_, x, gt, aug_labeled);
  }
  ++step_;
  log.step = step_;
  return log;
}

template <typename T>
std::vector<StepLog> Trainer<T>::run(const std::function<void(const StepLog&)>& on_step) {
  std::vector<StepLog> logs;
  while (step_ < cfg_.steps) {
    logs.push_back(step());
    if (on_step) on_step(logs.back());
  }
  return logs;
}

template <typename T>
MetricsReport Trainer<T>::evaluate(const std::vector<PhantomSample>& test_set) const {
  return ::ssrl::evaluate(params_, cfg_.model, test_set);
}

template <typename T>
Checkpoint Trainer<T>::checkpoint() const {
  return make_checkpoint(static_cast<std::uint32_t>(step_), params_, state_);
}

template <typename T>
void Trainer<T>::restore(const Checkpoint& ckpt) {
  restore_checkpoint(ckpt, params_, state_);
  step_ = ckpt.step;
}

template <typename T>
AccessAudit Trainer<T>::audit() const {
  return AccessAudit{labeled_reads_, unlabeled_.forbidden_attempts()};
}

#define SSRL_INSTANTIATE(T)                                                                      \
  template SemiForward<T> semi_forward(Graph<T>&, const ModelParams<T>&, const TrainConfig&,     \
                                       const Tensor<T>&, const LabelMap&, const Tensor<T>&, Rng&, \
                                       Rng&);                                                    \
  template StepLog train_step_semi(ModelParams<T>&, AdamState<T>&, const TrainConfig&,           \
                                   const Tensor<T>&, const LabelMap&, const Tensor<T>&, Rng&,    \
                                   Rng&);                                                        \
  template StepLog train_step_labeled_only(ModelParams<T>&, AdamState<T>&, const TrainConfig&,   \
                                           const Tensor<T>&, const LabelMap&, Rng&);             \
  template StepLog train_step_supervised(ModelParams<T>&, AdamState<T>&, const TrainConfig&,     \
                                         const Tensor<T>&, const LabelMap&, Rng&);               \
  template class Trainer<T>;

SSRL_INSTANTIATE(float)
SSRL_INSTANTIATE(double)

#undef SSRL_INSTANTIATE

}  // namespace ssrl
