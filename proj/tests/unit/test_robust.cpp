#include <cmath>

#include "doctest.h"
#include "rvit/dataset.hpp"
#include "rvit/error.hpp"
#include "rvit/gradcheck.hpp"
#include "rvit/pipeline.hpp"
#include "rvit/robust.hpp"
#include "rvit/train.hpp"
#include "test_util.hpp"

using namespace rvit;
using namespace rvit::robust;
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

RobustConfig small(int count, int outer) {
  RobustConfig c;
  c.count = count;
  c.outer_steps = outer;
  c.inner_steps = 2;
  return c;
}

}  // namespace

TEST_CASE("config defaults and json") {
  RobustConfig d;
  CHECK(d.count == 16);
  CHECK(d.inner_steps == 5);
  CHECK(d.outer_steps == 10);
  CHECK(d.epochs == 3);
  CHECK(d.lr == 0.05);
  CHECK(d.init_std == 0.02);
  RobustConfig c = small(4, 3);
  c.mode = Mode::global;
  CHECK(RobustConfig::from_json(c.to_json()) == c);
  auto j = c.to_json();
  j["momentum"] = 0.9;
  CHECK_THROWS_AS(RobustConfig::from_json(j), ConfigError);
  RobustConfig bad;
  bad.count = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(mode_from_name(mode_name(Mode::global)) == Mode::global);
}

TEST_CASE("init is seeded with the configured scale") {
  Tensor a = init_tokens(64, 32, 0.02, 7), b = init_tokens(64, 32, 0.02, 7);
  CHECK(bit_identical(a, b));
  CHECK(!bit_identical(a, init_tokens(64, 32, 0.02, 8)));
  double sq = 0;
  for (double v : a.data()) sq += v * v;
  CHECK(std::sqrt(sq / a.size()) == doctest::Approx(0.02).epsilon(0.05));
  CHECK(init_tokens(0, 32, 0.02, 7).empty());
}

TEST_CASE("appending tokens extends the sequence behind the patches") {
  vit::ViTConfig cfg;
  vit::VisionTransformer model(cfg, 1);
  Tensor z = init_tokens(16, 32, 0.02, 3);
  ad::Tape tape;
  auto w = vit::bind(tape, model.params(), false);
  vit::TokenSequence seq = vit::append_robust_tokens(vit::patch_embed(cfg, w, tape.constant(image(2))), tape.constant(z));
  CHECK(seq.size() == 33);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t d = 0; d < 32; ++d) CHECK(seq.tokens.value().at(17 + i, d) == z.at(i, d));
}

TEST_CASE("J = 0 returns the initialization and N_r = 0 disables") {
  vit::VisionTransformer model(tiny(), 2);
  RobustTokens rt = robustify_dynamic(image(3), 1, model, small(4, 0), {}, 9);
  CHECK(bit_identical(rt.z, init_tokens(4, 16, 0.02, 9)));
  CHECK(rt.steps == 0);
  RobustTokens off = robustify_dynamic(image(3), 1, model, small(0, 3), {}, 9);
  CHECK(!off.enabled());
  CHECK(off.z.empty());
}

TEST_CASE("token gradient matches finite differences") {
  vit::ViTConfig cfg = pipeline::gradcheck_vit_config();
  vit::ViTParams p = vit::init_params(cfg, 4);
  Tensor img = random_tensor({8, 8, 3}, 5, 0.0, 1.0);
  Tensor z = init_tokens(3, 8, 0.5, 6);
  auto f = [&](ad::Tape& tape, const ad::Var& leaf) {
    auto mods = ops::neutral_schedule(2);
    return ad::cross_entropy(vit::vit_forward(cfg, vit::bind(tape, p, false), tape.constant(img), mods, leaf), 2);
  };
  auto r = ad::finite_diff_check(f, z, 1e-6);
  auto e = ad::split_errors(r, 1e-3);
  CHECK(e.max_rel_error < 1e-5);
  CHECK(e.max_abs_error_below < 1e-8);
  TokenGrad tg = token_gradient(cfg, p, img, 2, z);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(tg.grad[i] == r.analytic_values[i]);
}

TEST_CASE("robustification only touches the tokens and is reproducible") {
  vit::VisionTransformer model(tiny(), 10);
  vit::ViTParams before = model.params();
  Tensor x = image(11);
  RobustTokens a = robustify_dynamic(x, 6, model, small(4, 3), {}, 12);
  RobustTokens b = robustify_dynamic(x, 6, model, small(4, 3), {}, 12);
  CHECK(bit_identical(a.z, b.z));
  CHECK(a.steps == 3);
  CHECK(!bit_identical(a.z, init_tokens(4, 16, 0.02, 12)));
  bool same = true;
  vit::ViTParams after = model.params();
  vit::ViTParams::visit(before, [&](const std::string& name, const Tensor& t) {
    vit::ViTParams::visit(after, [&](const std::string& n2, const Tensor& t2) {
      if (n2 == name) same = same && bit_identical(t, t2);
    });
  });
  CHECK(same);

  std::vector<Tensor> xs{x, image(13)};
  std::vector<int> ys{6, 2};
  RobustConfig g = small(4, 0);
  g.mode = Mode::global;
  g.epochs = 2;
  g.batch = 2;
  RobustTokens ga = robustify_global(xs, ys, model, g, {}, 12);
  RobustTokens gb = robustify_global(xs, ys, model, g, {}, 12);
  CHECK(bit_identical(ga.z, gb.z));
  CHECK(ga.steps == 2);
}

TEST_CASE("global over one image matches the dynamic trajectory") {
  vit::VisionTransformer model(tiny(), 20);
  Tensor x = image(21);
  RobustConfig d = small(3, 4);
  RobustConfig g = d;
  g.mode = Mode::global;
  g.epochs = 4;
  g.batch = 1;
  std::vector<Tensor> xs{x};
  std::vector<int> ys{3};
  CHECK(bit_identical(robustify_global(xs, ys, model, g, {}, 22).z, robustify_dynamic(x, 3, model, d, {}, 22).z));
  CHECK_THROWS_AS(robustify_global({}, {}, model, g, {}, 22), InputError);
}

TEST_CASE("global batch gradient is the mean of per-image gradients") {
  vit::VisionTransformer model(tiny(), 30);
  std::vector<Tensor> xs{image(31), image(32), image(33)};
  std::vector<int> ys{0, 4, 8};
  RobustConfig g = small(2, 0);
  g.mode = Mode::global;
  g.epochs = 1;
  g.batch = 3;
  InnerAttack inner;
  RobustTokens out = robustify_global(xs, ys, model, g, inner, 34);
  Tensor z0 = init_tokens(2, 16, 0.02, 34);
  Tensor expect = z0;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor adv = inner_attack(model.config(), model.params(), xs[i], ys[i], z0, g.inner_steps, inner);
    Tensor gi = token_gradient(model.config(), model.params(), adv, ys[i], z0).grad;
    for (std::size_t k = 0; k < expect.size(); ++k) expect[k] -= g.lr * gi[k] / 3.0;
  }
  CHECK(max_abs_diff(out.z, expect) < 1e-15);
}

TEST_CASE("dynamic tokens lower the loss on fresh adversarial examples") {
  vit::ViTConfig cfg = tiny();
  vit::VisionTransformer model(cfg, 40);
  data::Dataset d = data::generate_shapes_dataset(600, 41);
  train::TrainConfig tc;
  tc.epochs = 2;
  train::train_model(model, d, tc, 42);
  auto test = d.indices(data::Split::test);
  REQUIRE(test.size() >= 50);
  RobustConfig rc = small(4, 5);
  rc.inner_steps = 5;
  InnerAttack inner;
  int better = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const Tensor& x = d.images[test[i]];
    const int y = d.labels[test[i]];
    RobustTokens rt = robustify_dynamic(x, y, model, rc, inner, 100 + i);
    Tensor z0 = init_tokens(4, cfg.hidden_dim, rc.init_std, 100 + i);
    Tensor fresh = inner_attack(cfg, model.params(), x, y, rt.z, rc.inner_steps, inner);
    better += token_gradient(cfg, model.params(), fresh, y, rt.z).loss <=
              token_gradient(cfg, model.params(), fresh, y, z0).loss;
  }
  INFO("instances with lower loss: " << better);
  CHECK(better >= 40);
}
