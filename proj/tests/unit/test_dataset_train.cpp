#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "rvit/convnet.hpp"
#include "rvit/dataset.hpp"
#include "rvit/error.hpp"
#include "rvit/kernels.hpp"
#include "rvit/gradcheck.hpp"
#include "rvit/train.hpp"
#include "rvit/vit.hpp"
#include "test_util.hpp"

using namespace rvit;
using namespace rvit::data;

namespace {

vit::ViTConfig tiny() {
  vit::ViTConfig c;
  c.hidden_dim = 16;
  c.num_heads = 2;
  c.num_layers = 2;
  c.ffn_hidden = 32;
  return c;
}

bool same_params(Classifier& a, Classifier& b) {
  auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!bit_identical(*pa[i].tensor, *pb[i].tensor)) return false;
  return true;
}

}  // namespace

TEST_CASE("shapes dataset examples") {
  Dataset a = generate_shapes_dataset(1000, 3);
  Dataset b = generate_shapes_dataset(1000, 3);
  REQUIRE(a.size() == 1000);
  std::vector<int> per_class(10, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bit_identical(a.images[i], b.images[i]));
    CHECK(a.labels[i] == b.labels[i]);
    ++per_class[static_cast<std::size_t>(a.labels[i])];
    CHECK(a.images[i].shape() == Shape{32, 32, 3});
    auto [lo, hi] = std::minmax_element(a.images[i].data().begin(), a.images[i].data().end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= 1.0);
  }
  for (int c : per_class) CHECK(c == 100);
  CHECK(a.indices(Split::test).size() == 200);
  CHECK(a.indices(Split::train).size() == 800);
  CHECK(!bit_identical(a.images[0], generate_shapes_dataset(10, 4).images[0]));
  CHECK(shape_class_names().size() == 10);

  CHECK_THROWS_AS(generate_shapes_dataset(995, 3), InputError);
  CHECK_THROWS_AS(generate_shapes_dataset(0, 3), InputError);
}

TEST_CASE("images carry visible foreground") {
  Dataset d = generate_shapes_dataset(100, 5);
  for (const Tensor& img : d.images) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t p = 0; p < 32 * 32; ++p) {
      double lum = (img[p * 3] + img[p * 3 + 1] + img[p * 3 + 2]) / 3.0;
      lo = std::min(lo, lum);
      hi = std::max(hi, lum);
    }
    CHECK(hi - lo > 0.3);
  }
}

TEST_CASE("subset keeps the selected examples") {
  Dataset d = generate_shapes_dataset(50, 6);
  Dataset s = d.subset({3, 17, 42});
  CHECK(s.size() == 3);
  CHECK(s.labels[1] == d.labels[17]);
  CHECK(bit_identical(s.images[2], d.images[42]));
}

TEST_CASE("record file loader") {
  auto path = (std::filesystem::temp_directory_path() / "rvit_records.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    for (int r = 0; r < 6; ++r) {
      out.put(static_cast<char>(r % 10));
      for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 1024; ++p) out.put(static_cast<char>((p + 50 * c + r) % 256));
    }
  }
  Dataset d = load_record_file(path);
  REQUIRE(d.size() == 6);
  CHECK(d.labels[3] == 3);
  CHECK(d.images[2][5 * 3 + 1] == doctest::Approx((5 + 50 + 2) / 255.0));
  CHECK(d.splits[4] == Split::test);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put(1);
  }
  CHECK_THROWS_AS(load_record_file(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_record_file(path), IoError);
}

TEST_CASE("zero epochs stays near chance") {
  Dataset d = generate_shapes_dataset(500, 7);
  train::TrainConfig cfg;
  cfg.epochs = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    vit::VisionTransformer model(vit::ViTConfig{}, derive(seed, {2}));
    double acc = train::train_model(model, d, cfg, seed).val_accuracy;
    CHECK(acc >= 0.02);
    CHECK(acc <= 0.25);
  }
}

TEST_CASE("training is deterministic and execution independent") {
  Dataset d = generate_shapes_dataset(200, 8);
  train::TrainConfig cfg;
  cfg.epochs = 1;
  vit::VisionTransformer a(tiny(), 9), b(tiny(), 9), c(tiny(), 9);
  auto ra = train::train_model(a, d, cfg, 10);
  auto rb = train::train_model(b, d, cfg, 10);
  CHECK(same_params(a, b));
  CHECK(ra.epoch_loss == rb.epoch_loss);
  CHECK(ra.val_accuracy == rb.val_accuracy);
  auto prev = kernels::execution();
  kernels::set_execution(prev == kernels::Exec::serial ? kernels::Exec::parallel : kernels::Exec::serial);
  train::train_model(c, d, cfg, 10);
  kernels::set_execution(prev);
  CHECK(same_params(a, c));
  vit::VisionTransformer e(tiny(), 9);
  train::train_model(e, d, cfg, 11);
  CHECK(!same_params(a, e));
}

TEST_CASE("training lowers the loss") {
  Dataset d = generate_shapes_dataset(1000, 12);
  train::TrainConfig cfg;
  cfg.epochs = 3;
  vit::VisionTransformer model(tiny(), 13);
  auto r = train::train_model(model, d, cfg, 14);
  REQUIRE(r.epoch_loss.size() == 3);
  CHECK(r.epoch_loss[2] < r.epoch_loss[0]);
  CHECK(r.val_accuracy > 0.1);
}

TEST_CASE("divergence and invalid configs raise") {
  Dataset d = generate_shapes_dataset(100, 15);
  train::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.lr = 1e12;
  cfg.grad_clip = 0;
  vit::VisionTransformer model(tiny(), 16);
  try {
    train::train_model(model, d, cfg, 17);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("\"lr\"") != std::string::npos);
  }
  train::TrainConfig bad;
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  train::TrainConfig rt;
  rt.epochs = 3;
  CHECK(train::TrainConfig::from_json(rt.to_json()) == rt);
  auto j = rt.to_json();
  j["decay"] = 1;
  CHECK_THROWS_AS(train::TrainConfig::from_json(j), ConfigError);
}

TEST_CASE("convnet shapes, im2col and input gradient") {
  int out = 0;
  auto idx = cnn::im2col_index(4, 2, 2, &out);
  CHECK(out == 2);
  CHECK(idx.size() == 4u * 9 * 2);
  // output (0,0), kernel offset (-1,-1) is padding; offset (0,0) reads pixel (0,0)
  CHECK(idx[0] == -1);
  CHECK(idx[4 * 2] == 0);

  cnn::ConvConfig cc;
  cc.widths = {4, 6, 8};
  cnn::ConvNet net(cc, 18);
  CHECK(net.logits(testing::random_tensor({32, 32, 3}, 19, 0, 1)).size() == 10);
  cnn::ConvConfig back = cnn::ConvConfig::from_json(cc.to_json());
  CHECK(back.widths == cc.widths);
  CHECK(make_classifier(net.config_json())->kind() == "cnn");

  Tensor img = testing::random_tensor({32, 32, 3}, 20, 0, 1);
  auto f = [&](ad::Tape& tape, const ad::Var& x) {
    return ad::cross_entropy(net.forward(tape, net.bind(tape, false), x), 3);
  };
  Stream s(21);
  std::vector<std::size_t> coords;
  for (int i = 0; i < 40; ++i) coords.push_back(s.below(img.size()));
  auto e = ad::split_errors(ad::finite_diff_check(f, img, 1e-6, coords), 1e-3);
  CHECK(e.max_rel_error < 1e-5);
  CHECK(e.max_abs_error_below < 1e-8);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  std::vector<double> v{1.0, 3.0, 3.0, 2.0};
  CHECK(argmax(v) == 1);
  std::vector<double> flat(5, 0.0);
  CHECK(argmax(flat) == 0);
}
