#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "ssrl/losses.hpp"

using namespace ssrl;
using ssrl::test::jvp_error;
using ssrl::test::random_labels;
using ssrl::test::uniform_tensor;

namespace {

TensorRef<double> prob_of(std::size_t k, std::vector<double> values, bool track = false) {
  // Channel-major single-row map: values are given pixel by pixel, k per pixel.
  const std::size_t pixels = values.size() / k;
  auto t = make_tensor<double>(Shape{1, k, 1, pixels}, 0.0, track);
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t c = 0; c < k; ++c) (*t)(0, c, 0, p) = values[p * k + c];
  return t;
}

TensorRef<double> random_prob(Shape s, std::mt19937_64& rng) {
  Graph<double> g(false);
  auto p = softmax_channels(g, uniform_tensor(s, rng, -3, 3, false));
  return make_tensor<double>(s, std::vector<double>(p->data().begin(), p->data().end()));
}

/// Independent per-pixel evaluation of the shifted beta cross-entropy.
double beta_ce_oracle(const Tensor<double>& p, const LabelMap& y, double beta) {
  const auto s = p.shape();
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t r = 0; r < s.h; ++r)
      for (std::size_t c = 0; c < s.w; ++c) {
        double acc = (beta + 1.0) / beta * (1.0 - std::pow(p(n, y(n, r, c), r, c), beta)) - 1.0;
        for (std::size_t k = 0; k < s.c; ++k) acc += std::pow(p(n, k, r, c), beta + 1.0);
        total += acc;
      }
  return total / static_cast<double>(s.n * s.h * s.w);
}

}  // namespace

TEST_CASE("ce_loss examples") {
  Graph<double> g(false);
  CHECK(ce_loss(g, prob_of(3, {0, 1, 0, 1, 0, 0}), LabelMap(1, 1, 2, 0))->item() > 0.0);
  LabelMap y(1, 1, 2);
  y.data = {1, 0};
  CHECK(ce_loss(g, prob_of(3, {0, 1, 0, 1, 0, 0}), y)->item() == 0.0);
  CHECK(ce_loss(g, make_tensor<double>({2, 9, 3, 3}, 1.0 / 9.0), LabelMap(2, 3, 3, 4))->item() ==
        doctest::Approx(std::log(9.0)).epsilon(1e-14));
  CHECK(ce_loss(g, prob_of(3, {0.5, 0.25, 0.25}), LabelMap(1, 1, 1, 0))->item() ==
        doctest::Approx(0.69315).epsilon(1e-5));
}

TEST_CASE("ce_loss clamps zero probabilities and rejects bad labels") {
  Graph<double> g(false);
  const double v = ce_loss(g, prob_of(2, {0.0, 1.0}), LabelMap(1, 1, 1, 0))->item();
  CHECK(v == doctest::Approx(-std::log(kLogClamp)).epsilon(1e-12));
  CHECK_THROWS_AS(ce_loss(g, prob_of(2, {0.5, 0.5}), LabelMap(1, 1, 1, 2)), LossError);
  CHECK_THROWS_AS(ce_loss(g, prob_of(2, {0.5, 0.5}), LabelMap(1, 1, 2, 0)), ShapeError);
}

TEST_CASE("beta_ce examples") {
  Graph<double> g(false);
  CHECK(beta_ce(g, prob_of(3, {0, 0, 1}), LabelMap(1, 1, 1, 2), 0.5)->item() == doctest::Approx(0.0));
  CHECK(beta_ce(g, prob_of(2, {0.5, 0.5}), LabelMap(1, 1, 1, 0), 1.0)->item() ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(beta_ce(g, prob_of(2, {0.5, 0.5}), LabelMap(1, 1, 1, 0), 0.0), LossError);
  CHECK_THROWS_AS(beta_ce(g, prob_of(2, {0.5, 0.5}), LabelMap(1, 1, 1, 0), -1.0), LossError);
}

TEST_CASE("beta_ce agrees with a per-pixel oracle") {
  std::mt19937_64 rng(21);
  for (double beta : {0.1, 0.5, 1.0, 2.0}) {
    auto p = random_prob({2, 9, 3, 4}, rng);
    const LabelMap y = random_labels(2, 3, 4, rng);
    Graph<double> g(false);
    CHECK(beta_ce(g, p, y, beta)->item() == doctest::Approx(beta_ce_oracle(*p, y, beta)).epsilon(1e-12));
  }
}

TEST_CASE("beta_ce approaches ce as beta shrinks") {
  std::mt19937_64 rng(22);
  for (int rep = 0; rep < 20; ++rep) {
    auto p = random_prob({1, 9, 4, 4}, rng);
    const LabelMap y = random_labels(1, 4, 4, rng);
    Graph<double> g(false);
    CHECK(std::abs(beta_ce(g, p, y, 1e-6)->item() - ce_loss(g, p, y)->item()) < 1e-4);
  }
}

TEST_CASE("beta_ce gradient stays bounded where the ce gradient blows up") {
  auto p1 = prob_of(2, {1e-6, 1.0 - 1e-6}, true);
  auto p2 = prob_of(2, {1e-6, 1.0 - 1e-6}, true);
  const LabelMap y(1, 1, 1, 0);
  Graph<double> g;
  g.backward(ce_loss(g, p1, y));
  g.backward(beta_ce(g, p2, y, 1.0));
  CHECK(p1->grad()[0] == doctest::Approx(-1e6).epsilon(1e-9));
  // d/dp_y [2 (1 - p_y) + p_y^2 + p_other^2] = -2 + 2 p_y
  CHECK(p2->grad()[0] == doctest::Approx(-2.0 + 2e-6).epsilon(1e-12));
  CHECK(std::abs(p2->grad()[0]) < std::abs(p1->grad()[0]));
}

TEST_CASE("pseudo_label examples") {
  SUBCASE("one-hot") {
    const auto r = pseudo_label(*prob_of(3, {0, 0, 1}));
    CHECK(r.labels.data[0] == 2);
    CHECK(r.confidence[0] == 1.0);
  }
  SUBCASE("uniform ties go to class 0") {
    const auto r = pseudo_label(*make_tensor<double>({1, 9, 1, 1}, 1.0 / 9.0));
    CHECK(r.labels.data[0] == 0);
    CHECK(r.confidence[0] == doctest::Approx(1.0 / 9.0));
  }
  SUBCASE("argmax") {
    const auto r = pseudo_label(*prob_of(3, {0.2, 0.7, 0.1}));
    CHECK(r.labels.data[0] == 1);
    CHECK(r.confidence[0] == 0.7);
  }
}

TEST_CASE("pseudo-labels carry no gradient into the weak view") {
  std::mt19937_64 rng(23);
  auto logits_w = uniform_tensor({1, 9, 3, 3}, rng);
  auto logits_s = uniform_tensor({1, 9, 3, 3}, rng);
  Graph<double> g;
  auto pw = softmax_channels(g, logits_w);
  auto ps = softmax_channels(g, logits_s);
  const auto pseudo = pseudo_label(*pw);
  g.backward(thresholded_ce(g, ps, pseudo, 0.0));
  CHECK_FALSE(logits_w->has_grad());
  bool any = false;
  for (double v : logits_s->grad()) any = any || v != 0.0;
  CHECK(any);
}

TEST_CASE("thresholded_ce examples") {
  std::mt19937_64 rng(24);
  auto strong = random_prob({2, 9, 3, 3}, rng);
  const auto pseudo = pseudo_label(*random_prob({2, 9, 3, 3}, rng));
  Graph<double> g(false);
  CHECK(thresholded_ce(g, strong, pseudo, 1.0)->item() == 0.0);
  CHECK(thresholded_ce(g, strong, pseudo, 0.0)->item() == ce_loss(g, strong, pseudo.labels)->item());

  PseudoLabels<double> two{LabelMap(1, 1, 2, 0), {0.9, 0.5}};
  auto p = prob_of(2, {0.5, 0.5, 0.1, 0.9});
  CHECK(thresholded_ce(g, p, two, 0.8)->item() == doctest::Approx(0.34657).epsilon(1e-5));
  CHECK(thresholded_ce(g, p, two, 0.8)->item() == doctest::Approx(std::log(2.0) / 2).epsilon(1e-15));
}

TEST_CASE("thresholded_ce never increases with tau") {
  std::mt19937_64 rng(25);
  auto strong = random_prob({2, 9, 4, 4}, rng);
  const auto pseudo = pseudo_label(*random_prob({2, 9, 4, 4}, rng));
  Graph<double> g(false);
  double prev = thresholded_ce(g, strong, pseudo, 0.0)->item();
  for (int i = 1; i <= 100; ++i) {
    const double cur = thresholded_ce(g, strong, pseudo, i / 100.0)->item();
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("consistency_l2 examples") {
  Graph<double> g(false);
  std::mt19937_64 rng(26);
  auto p = random_prob({1, 9, 3, 3}, rng);
  CHECK(consistency_l2(g, p, p)->item() == 0.0);
  CHECK(consistency_l2(g, prob_of(2, {1, 0}), prob_of(2, {0, 1}))->item() == 2.0);
  CHECK(consistency_l2(g, prob_of(2, {0.6, 0.4}), prob_of(2, {0.4, 0.6}))->item() ==
        doctest::Approx(0.08).epsilon(1e-14));
  CHECK_THROWS_AS(consistency_l2(g, prob_of(2, {1, 0}), prob_of(2, {1, 0, 0, 1})), ShapeError);
}

TEST_CASE("combined_loss examples") {
  Graph<double> g(false);
  auto c = [&](double a, double b) { return combined_loss(g, make_scalar(a), make_scalar(b))->item(); };
  CHECK(c(0, 0) == 0.0);
  CHECK(c(1.0, 0) == 0.5);
  CHECK(c(0.7, 0.3) == doctest::Approx(0.5).epsilon(1e-15));
  auto a = make_scalar(1.0, true);
  auto b = make_scalar(2.0, true);
  Graph<double> gg;
  gg.backward(combined_loss(gg, a, b));
  CHECK(a->grad()[0] == 0.5);
  CHECK(b->grad()[0] == 0.5);
}

TEST_CASE("losses are nonnegative on random inputs and zero at agreement") {
  std::mt19937_64 rng(27);
  for (int rep = 0; rep < 20; ++rep) {
    auto a = random_prob({1, 9, 3, 3}, rng);
    auto b = random_prob({1, 9, 3, 3}, rng);
    const LabelMap y = random_labels(1, 3, 3, rng);
    const auto pseudo = pseudo_label(*b);
    Graph<double> g(false);
    CHECK(ce_loss(g, a, y)->item() >= 0.0);
    CHECK(beta_ce(g, a, y, 0.5)->item() >= -1e-15);
    CHECK(thresholded_ce(g, a, pseudo, 0.3)->item() >= 0.0);
    CHECK(consistency_l2(g, a, b)->item() >= 0.0);
  }
  auto onehot = make_tensor<double>({1, 9, 2, 2});
  LabelMap y(1, 2, 2);
  y.data = {3, 0, 8, 5};
  for (std::size_t i = 0; i < 4; ++i) (*onehot)(0, y.data[i], i / 2, i % 2) = 1.0;
  Graph<double> g(false);
  CHECK(ce_loss(g, onehot, y)->item() == 0.0);
  CHECK(beta_ce(g, onehot, y, 0.5)->item() == doctest::Approx(0.0));
  CHECK(thresholded_ce(g, onehot, pseudo_label(*onehot), 0.5)->item() == 0.0);
}

TEST_CASE("loss gradients through softmax match finite differences") {
  std::mt19937_64 rng(28);
  for (int rep = 0; rep < 20; ++rep) {
    auto z = uniform_tensor({2, 9, 3, 3}, rng);
    auto z2 = uniform_tensor({2, 9, 3, 3}, rng);
    const LabelMap y = random_labels(2, 3, 3, rng);
    Graph<double> off(false);
    const auto pseudo = pseudo_label(*softmax_channels(off, uniform_tensor({2, 9, 3, 3}, rng, -2, 2, false)));
    using B = std::function<TensorRef<double>(Graph<double>&)>;
    const B ce = [&](Graph<double>& g) { return ce_loss(g, softmax_channels(g, z), y); };
    const B bce = [&](Graph<double>& g) { return beta_ce(g, softmax_channels(g, z), y, 0.5); };
    const B thr = [&](Graph<double>& g) { return thresholded_ce(g, softmax_channels(g, z), pseudo, 0.3); };
    const B l2 = [&](Graph<double>& g) {
      return consistency_l2(g, softmax_channels(g, z), softmax_channels(g, z2));
    };
    CHECK(jvp_error<double>({z}, ce, rng) <= 1e-5);
    CHECK(jvp_error<double>({z}, bce, rng) <= 1e-5);
    CHECK(jvp_error<double>({z}, thr, rng) <= 1e-5);
    CHECK(jvp_error<double>({z, z2}, l2, rng) <= 1e-5);
  }
}

TEST_CASE("loss config validation and names") {
  CHECK_NOTHROW(LossConfig{}.validate());
  CHECK_THROWS_AS((LossConfig{LossKind::kCrossEntropy, 0.0, 0.5}.validate()), LossError);
  CHECK_THROWS_AS((LossConfig{LossKind::kCrossEntropy, 0.5, 1.5}.validate()), LossError);
  for (auto k : {LossKind::kCrossEntropy, LossKind::kBetaCrossEntropy, LossKind::kThresholdedCrossEntropy,
                 LossKind::kConsistencyL2}) {
    CHECK(parse_loss_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_loss_kind("focal"), LossError);
}
