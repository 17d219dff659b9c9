#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ssrl/cli/commands.hpp"
#include "ssrl/losses.hpp"
#include "ssrl/metrics.hpp"
#include "ssrl/model.hpp"
#include "ssrl/phantom.hpp"
#include "ssrl/runtime.hpp"
#include "ssrl/trainer.hpp"

namespace py = pybind11;
using namespace ssrl;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Shape prob_shape(const F64Array& a) {
  if (a.ndim() != 4) throw std::invalid_argument("probabilities must have shape (B, K, H, W)");
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
          static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
}

TensorRef<double> to_tensor(const F64Array& a) {
  const Shape s = prob_shape(a);
  return make_tensor<double>(s, std::vector<double>(a.data(), a.data() + a.size()), true);
}

LabelMap to_labels(const U8Array& a) {
  if (a.ndim() != 3) throw std::invalid_argument("labels must have shape (B, H, W)");
  LabelMap m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
             static_cast<std::size_t>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::array_t<double> grad_array(const Tensor<double>& t) {
  const Shape s = t.shape();
  py::array_t<double> out({s.n, s.c, s.h, s.w});
  const auto g = t.grad();
  // No gradient reached this input (e.g. every pixel masked out).
  if (g.empty()) std::fill_n(out.mutable_data(), out.size(), 0.0);
  else std::copy(g.begin(), g.end(), out.mutable_data());
  return out;
}

/// Loss value and its gradient with respect to every probability input.
template <typename Build>
py::tuple value_and_grad(const std::vector<TensorRef<double>>& inputs, Build build) {
  Graph<double> g;
  const auto loss = build(g);
  g.backward(loss);
  py::tuple out(inputs.size() + 1);
  out[0] = loss->item();
  for (std::size_t i = 0; i < inputs.size(); ++i) out[i + 1] = grad_array(*inputs[i]);
  return out;
}

std::vector<PhantomSample> to_samples(const F32Array& images, const U8Array& labels) {
  if (images.ndim() != 3 || labels.ndim() != 3) throw std::invalid_argument("expected (N, H, W) arrays");
  for (int d = 0; d < 3; ++d)
    if (images.shape(d) != labels.shape(d)) throw std::invalid_argument("images and labels differ in shape");
  const auto n = static_cast<std::size_t>(images.shape(0));
  const auto h = static_cast<std::size_t>(images.shape(1));
  const auto w = static_cast<std::size_t>(images.shape(2));
  std::vector<PhantomSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].h = h;
    out[i].w = w;
    out[i].image.assign(images.data() + i * h * w, images.data() + (i + 1) * h * w);
    out[i].labels.assign(labels.data() + i * h * w, labels.data() + (i + 1) * h * w);
  }
  return out;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  py::dict dice;
  for (std::size_t k = 0; k < kNumClasses; ++k) dice[py::str(std::string(class_names()[k]))] = r.dice[k];
  d["dice"] = dice;
  d["mean_dice"] = r.mean_dice;
  d["mean_foreground_dice"] = r.mean_foreground_dice;
  d["pixel_accuracy"] = r.pixel_accuracy;
  d["samples"] = r.samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ssrl, m) {
  m.doc() = "Semi-supervised segmentation of synthetic head phantoms";

  m.def("class_names", [] {
    std::vector<std::string> out;
    for (auto n : class_names()) out.emplace_back(n);
    return out;
  });

  m.def(
      "generate_phantoms",
      [](std::size_t n, std::size_t size, std::uint64_t seed, double intensity_noise, double geometry_jitter) {
        PhantomConfig cfg;
        cfg.size = size;
        cfg.seed = seed;
        cfg.intensity_noise = intensity_noise;
        cfg.geometry_jitter = geometry_jitter;
        const auto samples = generate(cfg, n);
        py::array_t<float> images({n, size, size});
        py::array_t<std::uint8_t> labels({n, size, size});
        const std::size_t px = size * size;
        for (std::size_t i = 0; i < n; ++i) {
          std::copy(samples[i].image.begin(), samples[i].image.end(), images.mutable_data() + i * px);
          std::copy(samples[i].labels.begin(), samples[i].labels.end(), labels.mutable_data() + i * px);
        }
        return py::make_tuple(images, labels);
      },
      py::arg("n"), py::arg("size") = 64, py::arg("seed") = 0, py::arg("intensity_noise") = 0.03,
      py::arg("geometry_jitter") = 0.08, "Returns (images float32 (N,H,W), labels uint8 (N,H,W)).");

  m.def(
      "ce_loss",
      [](const F64Array& prob, const U8Array& labels) {
        const auto p = to_tensor(prob);
        const auto y = to_labels(labels);
        return value_and_grad({p}, [&](Graph<double>& g) { return ce_loss(g, p, y); });
      },
      py::arg("prob"), py::arg("labels"), "Returns (loss, d loss / d prob).");

  m.def(
      "beta_ce",
      [](const F64Array& prob, const U8Array& labels, double beta) {
        const auto p = to_tensor(prob);
        const auto y = to_labels(labels);
        return value_and_grad({p}, [&](Graph<double>& g) { return beta_ce(g, p, y, beta); });
      },
      py::arg("prob"), py::arg("labels"), py::arg("beta") = 0.5, "Returns (loss, d loss / d prob).");

  m.def(
      "thresholded_ce",
      [](const F64Array& prob_weak, const F64Array& prob_strong, double tau) {
        const auto weak = make_tensor<double>(prob_shape(prob_weak),
                                              std::vector<double>(prob_weak.data(), prob_weak.data() + prob_weak.size()));
        const auto pseudo = pseudo_label(*weak);
        const auto p = to_tensor(prob_strong);
        return value_and_grad({p}, [&](Graph<double>& g) { return thresholded_ce(g, p, pseudo, tau); });
      },
      py::arg("prob_weak"), py::arg("prob_strong"), py::arg("tau") = 0.95,
      "Pseudo-labels from the weak view, loss on the strong view. Returns (loss, d loss / d prob_strong).");

  m.def(
      "consistency_l2",
      [](const F64Array& a, const F64Array& b) {
        const auto pa = to_tensor(a);
        const auto pb = to_tensor(b);
        return value_and_grad({pa, pb}, [&](Graph<double>& g) { return consistency_l2(g, pa, pb); });
      },
      py::arg("prob_a"), py::arg("prob_b"), "Returns (loss, d loss / d prob_a, d loss / d prob_b).");

  m.def(
      "dice_per_class",
      [](const U8Array& pred, const U8Array& gt, std::size_t k) {
        if (pred.size() != gt.size()) throw std::invalid_argument("label arrays differ in size");
        return dice_per_class(std::span<const std::uint8_t>(pred.data(), static_cast<std::size_t>(pred.size())),
                              std::span<const std::uint8_t>(gt.data(), static_cast<std::size_t>(gt.size())), k);
      },
      py::arg("pred"), py::arg("gt"), py::arg("k"));

  m.def(
      "param_count",
      [](std::size_t base_channels, std::size_t depth) {
        UNetConfig cfg;
        cfg.base_channels = base_channels;
        cfg.depth = depth;
        return param_count(cfg);
      },
      py::arg("base_channels") = 8, py::arg("depth") = 2);

  m.def(
      "train",
      [](const F32Array& images, const U8Array& labels, const std::string& mode, std::size_t steps,
         double labeled_fraction, const F32Array& test_images, const U8Array& test_labels, std::uint64_t seed,
         double lr, std::size_t batch, std::size_t base_channels, std::size_t depth, double tau, double beta) {
        keep_freed_memory();
        TrainConfig cfg;
        cfg.mode = parse_mode(mode);
        cfg.steps = steps;
        cfg.seed = seed;
        cfg.lr = lr;
        cfg.batch_labeled = batch;
        cfg.batch_unlabeled = batch;
        cfg.tau = tau;
        cfg.beta = beta;
        cfg.model.base_channels = base_channels;
        cfg.model.depth = depth;
        auto parts = split(to_samples(images, labels), labeled_fraction, seed);
        const auto test = to_samples(test_images, test_labels);
        std::vector<StepLog> logs;
        MetricsReport report;
        bool fell_back = false;
        std::size_t forbidden = 0;
        {
          py::gil_scoped_release release;
          Trainer<float> trainer(cfg, std::move(parts.labeled), std::move(parts.unlabeled));
          logs = trainer.run();
          report = trainer.evaluate(test);
          fell_back = trainer.fell_back_to_supervised();
          forbidden = trainer.audit().forbidden_attempts;
        }
        std::vector<double> losses;
        for (const auto& l : logs) losses.push_back(l.loss);
        py::dict out = report_dict(report);
        out["losses"] = losses;
        out["fell_back_to_supervised"] = fell_back;
        out["forbidden_attempts"] = forbidden;
        return out;
      },
      py::arg("images"), py::arg("labels"), py::arg("mode") = "baseline", py::arg("steps") = 2000,
      py::arg("labeled_fraction") = 0.5, py::arg("test_images"), py::arg("test_labels"), py::arg("seed") = 0,
      py::arg("lr") = 1e-3, py::arg("batch") = 8, py::arg("base_channels") = 8, py::arg("depth") = 2,
      py::arg("tau") = 0.95, py::arg("beta") = 0.5,
      "Trains a 32-bit model on a labeled/unlabeled split of the images and evaluates it on the test set.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full{"ssrl"};
        full.insert(full.end(), args.begin(), args.end());
        std::vector<const char*> argv;
        for (const auto& a : full) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process. Returns (exit code, stdout, stderr).");
}
