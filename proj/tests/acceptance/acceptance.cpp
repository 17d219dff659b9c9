// Acceptance suite: one PASS/FAIL line per criterion. Run with no arguments
// for all nine, or `--criterion N` (repeatable) for a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssrl/checkpoint.hpp"
#include "ssrl/losses.hpp"
#include "ssrl/metrics.hpp"
#include "ssrl/phantom.hpp"
#include "ssrl/runtime.hpp"
#include "ssrl/trainer.hpp"

using namespace ssrl;

namespace {

// Pinned tolerances and budgets.
constexpr double kFdEpsilon = 1e-4;
constexpr double kFdRelTol = 1e-5;
constexpr std::size_t kFdInstances = 20;
constexpr double kBetaLimit = 1e-6;
constexpr double kBetaLimitTol = 1e-4;
constexpr std::size_t kBetaLimitVectors = 1000;
constexpr double kTau1Tol = 1e-6;
constexpr std::size_t kTau1Steps = 100;
constexpr double kOverfitDice = 0.95;
constexpr std::size_t kOverfitSteps = 200;
constexpr std::size_t kBenefitPhantoms = 200;
constexpr std::size_t kBenefitTestPhantoms = 100;
constexpr std::size_t kBenefitSteps = 2000;
constexpr double kBenefitVsHalf = 0.02;
constexpr double kBenefitVsFull = 0.05;
constexpr double kNoiseFraction = 0.30;
constexpr std::size_t kNoiseSteps = 1000;
constexpr std::size_t kNoiseSeeds = 3;
constexpr std::size_t kResumeSteps = 10;
constexpr std::size_t kDicePairs = 50;

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point t0) {
  return std::chrono::duration<double>(clk::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
  double budget_seconds = 0.0;  ///< 0: no runtime limit
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Finite-difference gradients

/// Norm-wise relative error ||a - n|| / max(||a||, ||n||); 0 when both vanish.
double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Central differences of `loss` with respect to every element of `xs`.
std::vector<double> numeric_grad(const std::vector<TensorRef<double>>& xs,
                                 const std::function<double()>& loss) {
  std::vector<double> out;
  for (const auto& x : xs) {
    auto d = x->data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double keep = d[i];
      d[i] = keep + kFdEpsilon;
      const double up = loss();
      d[i] = keep - kFdEpsilon;
      const double down = loss();
      d[i] = keep;
      out.push_back((up - down) / (2 * kFdEpsilon));
    }
  }
  return out;
}

std::vector<double> analytic_grad(const std::vector<TensorRef<double>>& xs) {
  std::vector<double> out;
  for (const auto& x : xs) {
    if (x->has_grad()) {
      out.insert(out.end(), x->grad().begin(), x->grad().end());
    } else {
      out.insert(out.end(), x->size(), 0.0);
    }
  }
  return out;
}

TensorRef<double> random_tensor(Shape s, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, sd);
  auto t = make_tensor<double>(s, 0.0, true);
  for (auto& v : t->data()) v = n(rng);
  return t;
}

LabelMap random_labels(std::size_t n, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  LabelMap m(n, h, w);
  std::uniform_int_distribution<int> k(0, static_cast<int>(kNumClasses) - 1);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(k(rng));
  return m;
}

/// Builds the loss on the given graph.
using LossBuilder = std::function<TensorRef<double>(Graph<double>&)>;

double check_instance(const std::vector<TensorRef<double>>& xs, const LossBuilder& build) {
  for (const auto& x : xs) x->drop_grad();
  Graph<double> g;
  auto loss = build(g);
  g.backward(loss);
  const auto a = analytic_grad(xs);
  const auto n = numeric_grad(xs, [&] {
    Graph<double> fresh(false);
    return build(fresh)->item();
  });
  return rel_error(a, n);
}

/// With the ReLU and max-pool patterns held fixed the logits are affine in any
/// single weight, so a nonzero second difference of the logits over the
/// stencil means it straddles a switch and the central difference is not an
/// oracle there. Such coordinates are skipped and counted.
double check_model_instance(ModelParams<double>& params, const UNetConfig& cfg,
                            const TensorRef<double>& x, const LabelMap& seg, std::size_t& kinked) {
  params.zero_grad();
  Graph<double> g;
  g.backward(ce_loss(g, softmax_channels(g, forward(g, params, cfg, x)), seg));
  auto logits = [&] {
    Graph<double> off(false);
    auto z = forward(off, params, cfg, x);
    return std::vector<double>(z->data().begin(), z->data().end());
  };
  auto loss = [&] {
    Graph<double> off(false);
    return ce_loss(off, softmax_channels(off, forward(off, params, cfg, x)), seg)->item();
  };
  const auto z0 = logits();
  double zscale = 1.0;
  for (double v : z0) zscale = std::max(zscale, std::abs(v));
  std::vector<double> a, n;
  for (auto& p : params.tensors) {
    auto d = p.value->data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double keep = d[i];
      d[i] = keep + kFdEpsilon;
      const auto zu = logits();
      const double up = loss();
      d[i] = keep - kFdEpsilon;
      const auto zd = logits();
      const double down = loss();
      d[i] = keep;
      double curvature = 0.0;
      for (std::size_t j = 0; j < z0.size(); ++j) {
        curvature = std::max(curvature, std::abs(zu[j] - 2 * z0[j] + zd[j]));
      }
      if (curvature > 1e-10 * zscale) {
        ++kinked;
        continue;
      }
      a.push_back(p.value->grad()[i]);
      n.push_back((up - down) / (2 * kFdEpsilon));
    }
  }
  return rel_error(a, n);
}

Outcome criterion_gradients() {
  std::mt19937_64 rng(1234);
  std::map<std::string, double> worst;
  std::size_t kinked = 0;
  auto note = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };
  for (std::size_t inst = 0; inst < kFdInstances; ++inst) {
    const Shape s{2, kNumClasses, 3, 4};
    auto logits = random_tensor(s, rng, 2.0);
    const LabelMap gt = random_labels(s.n, s.h, s.w, rng);
    note("ce", check_instance({logits}, [&](Graph<double>& g) {
           return ce_loss(g, softmax_channels(g, logits), gt);
         }));
    const double beta = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    note("beta_ce", check_instance({logits}, [&](Graph<double>& g) {
           return beta_ce(g, softmax_channels(g, logits), gt, beta);
         }));

    // Pseudo-labels from an independent weak view; a threshold near the
    // median confidence leaves some pixels in and some out.
    auto weak = random_tensor(s, rng, 3.0);
    Graph<double> off(false);
    const auto pseudo = pseudo_label(*softmax_channels(off, weak));
    std::vector<double> conf = pseudo.confidence;
    std::nth_element(conf.begin(), conf.begin() + conf.size() / 2, conf.end());
    const double tau = conf[conf.size() / 2];
    note("thresholded_ce", check_instance({logits}, [&](Graph<double>& g) {
           return thresholded_ce(g, softmax_channels(g, logits), pseudo, tau);
         }));

    auto other = random_tensor(s, rng, 2.0);
    note("consistency_l2", check_instance({logits, other}, [&](Graph<double>& g) {
           return consistency_l2(g, softmax_channels(g, logits), softmax_channels(g, other));
         }));

    UNetConfig cfg;
    cfg.base_channels = 2;
    cfg.depth = 1;
    auto params = init_params<double>(cfg, 100 + inst);
    for (auto& p : params.tensors) {
      // Nonzero biases so the check does not sit on the init symmetry.
      if (p.name.ends_with(".bias")) {
        for (auto& v : p.value->data()) v = std::normal_distribution<double>(0.0, 0.1)(rng);
      }
    }
    auto x = random_tensor({2, 1, 8, 8}, rng, 1.0);
    x->set_track_grad(false);
    const LabelMap seg = random_labels(2, 8, 8, rng);
    note("end_to_end", check_model_instance(params, cfg, x, seg, kinked));
  }
  Outcome o;
  o.pass = true;
  o.budget_seconds = 60.0;
  std::ostringstream d;
  d << kFdInstances << " instances each, max rel err:";
  for (const auto& [name, e] : worst) {
    d << ' ' << name << '=' << fmt("%.2e", e);
    o.pass = o.pass && e <= kFdRelTol;
  }
  d << " (tol " << fmt("%.0e", kFdRelTol) << "); " << kinked
    << " weight stencils crossing a ReLU/max-pool switch excluded";
  o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------------------
// 2. beta -> 0 limit

Outcome criterion_beta_limit() {
  std::mt19937_64 rng(99);
  std::exponential_distribution<double> expo(1.0);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(kNumClasses) - 1);
  double worst = 0.0;
  for (std::size_t i = 0; i < kBetaLimitVectors; ++i) {
    // Dirichlet(1, ..., 1) draw: normalised unit exponentials.
    auto p = make_tensor<double>(Shape{1, kNumClasses, 1, 1});
    double total = 0.0;
    for (auto& v : p->data()) total += (v = expo(rng));
    for (auto& v : p->data()) v /= total;
    LabelMap y(1, 1, 1, static_cast<std::uint8_t>(cls(rng)));
    Graph<double> g(false);
    const double b = beta_ce(g, p, y, kBetaLimit)->item();
    const double c = ce_loss(g, p, y)->item();
    worst = std::max(worst, std::abs(b - c));
  }
  return {worst < kBetaLimitTol,
          std::to_string(kBetaLimitVectors) + " vectors, max |beta_ce - ce| = " + fmt("%.3e", worst) +
              " (tol " + fmt("%.0e", kBetaLimitTol) + ")",
          10.0};
}

// ---------------------------------------------------------------------------
// 3. Bounded robust gradient

Outcome criterion_bounded_gradient() {
  const double py = 1e-6;
  auto make_prob = [&] {
    auto p = make_tensor<double>(Shape{1, kNumClasses, 1, 1}, 0.0, true);
    p->data()[0] = py;
    for (std::size_t k = 1; k < kNumClasses; ++k) p->data()[k] = (1.0 - py) / (kNumClasses - 1);
    return p;
  };
  const LabelMap y(1, 1, 1, 0);
  auto p_ce = make_prob();
  Graph<double> g1;
  g1.backward(ce_loss(g1, p_ce, y));
  auto p_b = make_prob();
  Graph<double> g2;
  g2.backward(beta_ce(g2, p_b, y, 1.0));
  const double ce_mag = std::abs(p_ce->grad()[0]);
  const double b_mag = std::abs(p_b->grad()[0]);
  return {b_mag < ce_mag,
          "at p(y|x)=1e-6: |d beta_ce/dp_y| = " + fmt("%.6g", b_mag) + " < |d ce/dp_y| = " +
              fmt("%.6g", ce_mag),
          10.0};
}

// ---------------------------------------------------------------------------
// 4. tau = 1 degenerates to the labeled-only objective

Outcome criterion_tau_one() {
  PhantomConfig pc;
  pc.seed = 41;
  const auto data = generate(pc, 40);
  const auto parts = split(data, 0.5, 41);
  TrainConfig cfg;
  cfg.mode = Mode::kSemiThreshold;
  cfg.tau = 1.0;
  cfg.steps = kTau1Steps;
  cfg.seed = 41;
  Trainer<double> semi(cfg, parts.labeled, parts.unlabeled);
  Trainer<double> labeled_only(cfg, parts.labeled, UnlabeledPool{});
  double max_loss_u = 0.0, max_diff = 0.0;
  for (std::size_t s = 0; s < kTau1Steps; ++s) {
    const StepLog a = semi.step();
    const StepLog b = labeled_only.step();
    max_loss_u = std::max(max_loss_u, std::abs(a.loss_u));
    max_diff = std::max({max_diff, std::abs(a.loss - b.loss), std::abs(a.loss_x - b.loss_x)});
  }
  const bool ok = max_loss_u == 0.0 && max_diff <= kTau1Tol && labeled_only.fell_back_to_supervised();
  return {ok,
          std::to_string(kTau1Steps) + " steps f64: max |loss_u| = " + fmt("%.3g", max_loss_u) +
              ", max trajectory diff vs labeled-only run = " + fmt("%.3g", max_diff) + " (tol " +
              fmt("%.0e", kTau1Tol) + ")",
          120.0};
}

// ---------------------------------------------------------------------------
// 5. Overfit four images

Outcome criterion_overfit() {
  PhantomConfig pc;
  pc.seed = 5;
  const auto data = generate(pc, 4);
  TrainConfig cfg;
  cfg.mode = Mode::kBaseline;
  cfg.steps = kOverfitSteps;
  cfg.batch_labeled = 4;
  cfg.seed = 5;
  Trainer<float> t(cfg, data, UnlabeledPool{});
  t.run();
  const MetricsReport r = t.evaluate(data);
  return {r.mean_foreground_dice >= kOverfitDice,
          "baseline, 4 images, " + std::to_string(kOverfitSteps) +
              " steps: training mean foreground dice = " + fmt("%.4f", r.mean_foreground_dice) +
              " (need >= " + fmt("%.2f", kOverfitDice) + ")",
          60.0};
}

// ---------------------------------------------------------------------------
// 6. Semi-supervised benefit

double train_and_score(TrainConfig cfg, const std::vector<PhantomSample>& labeled,
                       const UnlabeledPool& unlabeled, const std::vector<PhantomSample>& test,
                       double& worst_row_seconds) {
  const auto t0 = clk::now();
  Trainer<float> t(std::move(cfg), labeled, unlabeled);
  t.run();
  const double dice = t.evaluate(test).mean_foreground_dice;
  worst_row_seconds = std::max(worst_row_seconds, seconds_since(t0));
  if (t.audit().forbidden_attempts != 0) throw std::logic_error("unlabeled ground truth was read");
  return dice;
}

Outcome criterion_semi_benefit() {
  PhantomConfig pc;
  pc.seed = 600;
  const auto data = generate(pc, kBenefitPhantoms);
  PhantomConfig tc;
  tc.seed = 601;
  const auto test = generate(tc, kBenefitTestPhantoms);
  const auto parts = split(data, 0.5, 600);

  TrainConfig cfg;
  cfg.steps = kBenefitSteps;
  cfg.seed = 600;
  double worst_row = 0.0;
  cfg.mode = Mode::kSemiThreshold;
  const double semi = train_and_score(cfg, parts.labeled, parts.unlabeled, test, worst_row);
  cfg.mode = Mode::kBaseline;
  const double half = train_and_score(cfg, parts.labeled, UnlabeledPool{}, test, worst_row);
  const double full = train_and_score(cfg, data, UnlabeledPool{}, test, worst_row);

  const bool a = semi >= half - kBenefitVsHalf;
  const bool b = semi >= full - kBenefitVsFull;
  const bool fast = worst_row < 600.0;
  return {a && b && fast,
          "test mean fg dice: semi_threshold=" + fmt("%.4f", semi) + " baseline50=" + fmt("%.4f", half) +
              " baseline100=" + fmt("%.4f", full) + "; (a) " + (a ? "ok" : "FAILED") + " (b) " +
              (b ? "ok" : "FAILED") + "; slowest row " + fmt("%.0f", worst_row) + " s (limit 600)",
          0.0};
}

// ---------------------------------------------------------------------------
// 7. Robust loss under label noise

Outcome criterion_label_noise() {
  std::vector<double> bce, thr;
  std::ostringstream per_seed;
  for (std::size_t k = 0; k < kNoiseSeeds; ++k) {
    const std::uint64_t seed = 700 + k;
    PhantomConfig pc;
    pc.seed = seed;
    const auto data = generate(pc, kBenefitPhantoms);
    PhantomConfig tc;
    tc.seed = seed + 1000;
    const auto test = generate(tc, kBenefitTestPhantoms);
    auto parts = split(data, 0.5, seed);
    corrupt_labels(parts.labeled, kNoiseFraction, seed);

    TrainConfig cfg;
    cfg.steps = kNoiseSteps;
    cfg.seed = seed;
    double unused = 0.0;
    cfg.mode = Mode::kSemiBce;
    cfg.beta = 0.5;
    bce.push_back(train_and_score(cfg, parts.labeled, parts.unlabeled, test, unused));
    cfg.mode = Mode::kSemiThreshold;
    thr.push_back(train_and_score(cfg, parts.labeled, parts.unlabeled, test, unused));
    per_seed << " seed" << seed << "(bce " << fmt("%.4f", bce.back()) << ", thr "
             << fmt("%.4f", thr.back()) << ")";
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double mb = median(bce);
  const double mt = median(thr);
  return {mb >= mt,
          "30% label noise, " + std::to_string(kNoiseSteps) + " steps: median test fg dice semi_bce=" +
              fmt("%.4f", mb) + " vs semi_threshold=" + fmt("%.4f", mt) + ";" + per_seed.str(),
          1800.0};
}

// ---------------------------------------------------------------------------
// 8. Determinism and formats

Outcome criterion_determinism() {
  std::vector<std::string> failures;
  PhantomConfig pc;
  pc.seed = 7;
  const auto a = encode_dataset(generate(pc, 20));
  const auto b = encode_dataset(generate(pc, 20));
  if (a != b) failures.push_back("dataset regeneration differs");
  if (a.size() != dataset_file_size(20, 64, 64)) failures.push_back("dataset size formula");
  if (decode_dataset(a) != generate(pc, 20)) failures.push_back("dataset round trip");

  const auto data = generate(pc, 24);
  const auto parts = split(data, 0.5, 7);
  TrainConfig cfg;
  cfg.mode = Mode::kSemiBce;
  cfg.steps = kResumeSteps;
  cfg.seed = 7;

  Trainer<double> straight(cfg, parts.labeled, parts.unlabeled);
  const auto logs = straight.run();

  Trainer<double> first(cfg, parts.labeled, parts.unlabeled);
  std::vector<StepLog> resumed_logs;
  for (std::size_t s = 0; s < kResumeSteps / 2; ++s) resumed_logs.push_back(first.step());
  const auto bytes = encode_checkpoint(first.checkpoint());
  const Checkpoint back = decode_checkpoint(bytes);
  if (!(back == first.checkpoint())) failures.push_back("f64 checkpoint round trip");
  Trainer<double> second(cfg, parts.labeled, parts.unlabeled);
  second.restore(back);
  while (second.current_step() < kResumeSteps) resumed_logs.push_back(second.step());
  for (std::size_t s = 0; s < kResumeSteps; ++s) {
    if (logs[s].loss != resumed_logs[s].loss) {
      failures.push_back("resumed loss differs at step " + std::to_string(s + 1));
      break;
    }
  }
  if (!(straight.checkpoint() == second.checkpoint())) failures.push_back("resumed weights differ");

  TrainConfig small = cfg;
  small.mode = Mode::kBaseline;
  Trainer<float> f32(small, parts.labeled, UnlabeledPool{});
  f32.step();
  const Checkpoint c32 = f32.checkpoint();
  if (!(decode_checkpoint(encode_checkpoint(c32)) == c32)) failures.push_back("f32 checkpoint round trip");

  MetricsReport r;
  for (std::size_t k = 0; k < kNumClasses; ++k) r.dice[k] = static_cast<double>(k) / 8.0;
  r.mean_dice = 0.5;
  const std::string golden_header = "model,background,wm,gm,csf,bones,skin,cavities,eyes,ventricles,mean";
  const std::string golden_row = "golden,0.000,0.125,0.250,0.375,0.500,0.625,0.750,0.875,1.000,0.500";
  if (csv_header() != golden_header) failures.push_back("csv header");
  if (csv_row("golden", r) != golden_row) failures.push_back("csv row");

  std::string detail = "dataset bytes, checkpoint round trips, " + std::to_string(kResumeSteps) +
                       "-step resume (f64), csv golden";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail, 60.0};
}

// ---------------------------------------------------------------------------
// 9. Dice against a counting oracle

double oracle_dice(const LabelMap& pred, const LabelMap& gt, std::size_t k) {
  std::uint64_t both = 0, in_pred = 0, in_gt = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] == k;
    const bool g = gt.data[i] == k;
    both += p && g;
    in_pred += p;
    in_gt += g;
  }
  if (in_pred + in_gt == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(in_pred + in_gt);
}

Outcome criterion_dice_oracle() {
  std::mt19937_64 rng(9);
  std::size_t mismatches = 0, empties = 0;
  for (std::size_t pair = 0; pair < kDicePairs; ++pair) {
    const std::size_t h = 1 + rng() % 24;
    const std::size_t w = 1 + rng() % 24;
    // A random subset of classes per pair, so some are absent from both maps.
    const int top = 1 + static_cast<int>(rng() % kNumClasses);
    std::uniform_int_distribution<int> cls(0, top - 1);
    LabelMap p(1, h, w), g(1, h, w);
    for (auto& v : p.data) v = static_cast<std::uint8_t>(cls(rng));
    for (auto& v : g.data) v = static_cast<std::uint8_t>(cls(rng));
    if (pair % 5 == 0) g = p;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      const double expect = oracle_dice(p, g, k);
      empties += static_cast<std::size_t>(k >= static_cast<std::size_t>(top));
      if (dice_per_class(p, g, k) != expect) ++mismatches;
    }
  }
  return {mismatches == 0,
          std::to_string(kDicePairs) + " pairs x 9 classes (" + std::to_string(empties) +
              " empty-empty cases): " + std::to_string(mismatches) + " mismatches",
          10.0};
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--criterion", only, "Run only these criteria (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  keep_freed_memory();

  const std::vector<Criterion> all = {
      {1, "gradient correctness", criterion_gradients},
      {2, "beta-CE limit", criterion_beta_limit},
      {3, "robust-gradient boundedness", criterion_bounded_gradient},
      {4, "thresholded-loss degeneration", criterion_tau_one},
      {5, "overfit smoke test", criterion_overfit},
      {6, "semi-supervised benefit", criterion_semi_benefit},
      {7, "robust loss under label noise", criterion_label_noise},
      {8, "determinism and formats", criterion_determinism},
      {9, "dice oracle equivalence", criterion_dice_oracle},
  };
  const std::set<int> wanted(only.begin(), only.end());
  bool all_pass = true;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = clk::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what(), 0.0};
    }
    const double secs = seconds_since(t0);
    const bool in_time = o.budget_seconds == 0.0 || secs < o.budget_seconds;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.title << "): " << o.detail
              << " [" << fmt("%.1f", secs) << " s";
    if (o.budget_seconds > 0.0) std::cout << ", limit " << fmt("%.0f", o.budget_seconds) << " s";
    std::cout << "]" << std::endl;
  }
  return all_pass ? 0 : 1;
}
