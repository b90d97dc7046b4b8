#include <cmath>
#include <limits>

#include "doctest.h"
#include "rvit/attack.hpp"
#include "rvit/error.hpp"
#include "rvit/kernels.hpp"
#include "test_util.hpp"

using namespace rvit;
using namespace rvit::attack;
using rvit::testing::random_tensor;

namespace {

vit::ViTConfig tiny() {
  vit::ViTConfig c;
  c.hidden_dim = 16;
  c.num_heads = 2;
  c.num_layers = 2;
  c.ffn_hidden = 32;
  return c;
}

Tensor image(std::uint64_t seed) { return random_tensor({32, 32, 3}, seed, 0.0, 1.0); }

AttackConfig ours_cfg() {
  AttackConfig c;
  c.method = Method::ours;
  c.steps = 4;
  c.seed = 5;
  c.ops.sparsify.r = 0.2;
  c.ops.permute = {0.5, 0.5};
  c.ops.clean.r = 0.25;
  c.ops.moe = {3, 0.1};
  c.robust.count = 2;
  c.robust.outer_steps = 2;
  c.robust.inner_steps = 2;
  return c;
}

}  // namespace

TEST_CASE("clip_project examples") {
  Tensor x({3}, {0.5, 0.01, 0.3});
  Tensor xa({3}, {0.9, -0.2, 0.31});
  const double eps = 16.0 / 255.0;
  Tensor p = clip_project(xa, x, eps);
  CHECK(p[0] == doctest::Approx(0.562745).epsilon(1e-6));
  CHECK(p[0] == 0.5 + eps);
  CHECK(p[1] == 0.0);
  CHECK(p[2] == 0.31);
  CHECK(bit_identical(clip_project(xa, x, 0.0), x));
  CHECK_THROWS_AS(clip_project(Tensor({2}), x, eps), DimensionError);
}

TEST_CASE("check_constraints") {
  Tensor x({2}, {0.5, 0.5});
  const double eps = 16.0 / 255.0;
  CHECK_NOTHROW(check_constraints(Tensor({2}, {0.5 + eps, 0.5 - eps}), x, eps));
  CHECK_THROWS_AS(check_constraints(Tensor({2}, {0.5 + eps + 1e-9, 0.5}), x, eps), ContractError);
  CHECK_THROWS_AS(check_constraints(Tensor({2}, {0.5, 0.5}), Tensor({2}, {1.05, 0.5}), 0.1), ContractError);
}

TEST_CASE("momentum grows linearly under a constant gradient direction") {
  Tensor x = random_tensor({10}, 1, 0.2, 0.8);
  Tensor dir = random_tensor({10}, 2, -1.0, 1.0);
  for (int steps : {1, 2, 5, 10, 25}) {
    int call = 0;
    MiTrace tr = mi_fgsm(x, {0.5, steps, 0.01, 1.0}, [&](const Tensor&, int) {
      Tensor g = dir;
      for (double& v : g.storage()) v *= 1.0 + call;  // magnitude varies, direction does not
      ++call;
      return LossGrad{0.0, g};
    });
    double l1 = 0;
    for (double v : tr.momentum.data()) l1 += std::abs(v);
    CHECK(std::abs(l1 - steps) < 1e-9);
  }
}

TEST_CASE("two-pixel hand trace") {
  // grad = (0.53 - x0, x1): the raw sign of pixel 0 flips at step 2 but momentum keeps it
  Tensor x({2}, {0.5, 0.2});
  MiTrace tr = mi_fgsm(x, {0.2, 2, 0.06, 1.0}, [](const Tensor& xa, int) {
    return LossGrad{xa[1], Tensor({2}, {0.53 - xa[0], xa[1]})};
  });
  CHECK(tr.x_adv[0] == doctest::Approx(0.62).epsilon(1e-15));
  CHECK(tr.x_adv[1] == doctest::Approx(0.32).epsilon(1e-15));
  // g1 = (0.03, 0.2) / 0.23; g2 = g1 + (-0.03, 0.26) / 0.29
  CHECK(tr.momentum[0] == doctest::Approx(0.03 / 0.23 - 0.03 / 0.29).epsilon(1e-12));
  CHECK(tr.momentum[1] == doctest::Approx(0.2 / 0.23 + 0.26 / 0.29).epsilon(1e-12));
  REQUIRE(tr.losses.size() == 2);
  CHECK(tr.losses[0] == 0.2);
  CHECK(tr.losses[1] == doctest::Approx(0.26).epsilon(1e-15));
}

TEST_CASE("zero gradients, epsilon zero and non-finite gradients") {
  Tensor x = random_tensor({6}, 3, 0.1, 0.9);
  MiTrace zero = mi_fgsm(x, {0.1, 3, 0.05, 1.0}, [](const Tensor& xa, int) { return LossGrad{0.0, Tensor(xa.shape())}; });
  CHECK(bit_identical(zero.x_adv, x));

  MiTrace still = mi_fgsm(x, {0.0, 3, 0.05, 1.0}, [](const Tensor& xa, int) {
    return LossGrad{0.0, Tensor::full(xa.shape(), 1.0)};
  });
  CHECK(bit_identical(still.x_adv, x));

  CHECK_THROWS_AS(mi_fgsm(x, {0.1, 3, 0.05, 1.0},
                          [](const Tensor& xa, int t) {
                            Tensor g = Tensor::full(xa.shape(), 1.0);
                            if (t == 1) g[2] = std::numeric_limits<double>::quiet_NaN();
                            return LossGrad{0.0, g};
                          }),
                  NumericError);
}

TEST_CASE("single step equals one signed gradient step on a ViT") {
  vit::VisionTransformer model(tiny(), 10);
  Tensor x = image(11);
  AttackConfig cfg;
  cfg.steps = 1;
  for (double mu : {0.0, 1.0, 3.5}) {
    cfg.mu = mu;
    Tensor adv = mi_fgsm_attack(x, 4, model, cfg);
    Tensor g = classifier_input_gradient(model, x, 4).grad;
    Tensor step = x;
    for (std::size_t i = 0; i < x.size(); ++i) step[i] += cfg.step_size() * (g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0));
    CHECK(bit_identical(adv, clip_project(step, x, cfg.epsilon)));
  }
  cfg.epsilon = 0.0;
  cfg.steps = 10;
  CHECK(bit_identical(mi_fgsm_attack(x, 4, model, cfg), x));
}

TEST_CASE("attack config defaults, round trip and validation") {
  AttackConfig d;
  CHECK(d.epsilon == 16.0 / 255.0);
  CHECK(d.steps == 10);
  CHECK(d.mu == 1.0);
  CHECK(d.step_size() == doctest::Approx(1.6 / 255.0));
  AttackConfig c = ours_cfg();
  c.alpha = 0.01;
  CHECK(AttackConfig::from_json(c.to_json()) == c);
  auto j = c.to_json();
  j["gamma"] = 1;
  CHECK_THROWS_AS(AttackConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["method"] = "pgd";
  CHECK_THROWS_AS(AttackConfig::from_json(j), ConfigError);
  AttackConfig bad;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.epsilon = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("neutral redundant attack is bit-identical to MI-FGSM") {
  vit::VisionTransformer model(tiny(), 20);
  AttackConfig mi;
  mi.steps = 5;
  AttackConfig ours = mi;
  ours.method = Method::ours;
  ours.robust.count = 0;
  ours.policy.pool = {ops::OpKind::identity};
  ours.policy.ops_per_block = 1;
  ours.ops.sparsify.r = 0.5;  // never sampled
  for (std::uint64_t i = 0; i < 3; ++i) {
    Tensor x = image(21 + i);
    int y = static_cast<int>(i * 3 % 10);
    RedundantResult r = run_redundant_attack(x, y, model, ours, i);
    CHECK(bit_identical(r.x_adv, mi_fgsm_attack(x, y, model, mi)));
    CHECK(r.losses.size() == 5);
    CHECK(!r.tokens.enabled());
  }

  // every op present but at its neutral setting
  AttackConfig all = ours;
  all.policy = {};
  all.policy.ops_per_block = 5;
  all.ops = {};
  all.ops.permute = {0.0, 1.0};
  Tensor x = image(30);
  CHECK(bit_identical(run_redundant_attack(x, 2, model, all, 0).x_adv, mi_fgsm_attack(x, 2, model, mi)));
}

TEST_CASE("redundant attack respects the constraints and is deterministic") {
  vit::VisionTransformer model(tiny(), 40);
  AttackConfig cfg = ours_cfg();
  Tensor x = image(41);
  RedundantResult a = run_redundant_attack(x, 3, model, cfg, 7);
  RedundantResult b = run_redundant_attack(x, 3, model, cfg, 7);
  CHECK(bit_identical(a.x_adv, b.x_adv));
  CHECK(a.losses == b.losses);
  CHECK_NOTHROW(check_constraints(a.x_adv, x, cfg.epsilon));
  CHECK(a.tokens.enabled());
  CHECK(a.tokens.z.shape() == Shape{2, 16});
  CHECK(a.policy.layers() == 2);
  CHECK(a.policy.baseline() != 0.0);
  CHECK(!bit_identical(run_redundant_attack(x, 3, model, cfg, 8).x_adv, a.x_adv));

  AttackConfig mi = cfg;
  mi.method = Method::mi;
  CHECK_THROWS_AS(run_redundant_attack(x, 3, model, mi, 0), ConfigError);
  AttackConfig global = cfg;
  global.robust.mode = robust::Mode::global;
  CHECK_THROWS_AS(run_redundant_attack(x, 3, model, global, 0), StateError);
  robust::RobustTokens wrong;
  wrong.count = 3;
  wrong.z = Tensor({3, 16});
  CHECK_THROWS_AS(run_redundant_attack(x, 3, model, global, 0, &wrong), DimensionError);
}

TEST_CASE("batch attack equals the per-image sequential run") {
  vit::VisionTransformer model(tiny(), 50);
  AttackConfig cfg = ours_cfg();
  cfg.steps = 2;
  cfg.robust.count = 0;
  std::vector<Tensor> xs{image(51), image(52), image(53)};
  std::vector<int> ys{1, 5, 9};
  std::vector<std::uint64_t> ids{10, 11, 12};
  auto prev = kernels::execution();
  kernels::set_execution(kernels::Exec::parallel);
  BatchResult par = attack_batch(xs, ys, model, cfg, ids);
  kernels::set_execution(kernels::Exec::serial);
  BatchResult ser = attack_batch(xs, ys, model, cfg, ids);
  kernels::set_execution(prev);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(bit_identical(par.x_adv[i], ser.x_adv[i]));
    CHECK(bit_identical(par.x_adv[i], run_redundant_attack(xs[i], ys[i], model, cfg, ids[i]).x_adv));
    CHECK_NOTHROW(check_constraints(par.x_adv[i], xs[i], cfg.epsilon));
  }
  CHECK(par.last_policy.has_value());

  std::vector<int> short_labels{1};
  CHECK_THROWS_AS(attack_batch(xs, short_labels, model, cfg), InputError);
}
