// Acceptance run: one PASS/FAIL line per criterion, measurements in
// <workdir>/acceptance.json. Exit status is 0 only when every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "rvit/attack.hpp"
#include "rvit/checkpoint.hpp"
#include "rvit/config.hpp"
#include "rvit/error.hpp"
#include "rvit/eval.hpp"
#include "rvit/pipeline.hpp"
#include "rvit/policy.hpp"
#include "rvit/probe.hpp"
#include "rvit/report.hpp"

using namespace rvit;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
  nlohmann::json data = nlohmann::json::object();
};

struct Slice {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<std::uint64_t> ids;
};

Slice take(const data::Dataset& d, const std::vector<std::size_t>& idx) {
  Slice s;
  for (std::size_t i : idx) {
    s.images.push_back(d.images[i]);
    s.labels.push_back(d.labels[i]);
    s.ids.push_back(i);
  }
  return s;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

struct Lab {
  io::ExperimentConfig cfg;
  data::Dataset data;
  std::vector<eval::ZooMember> zoo;
  std::string zoo_dir;

  const vit::VisionTransformer& surrogate() const {
    return dynamic_cast<const vit::VisionTransformer&>(*zoo.front().model);
  }
  std::vector<eval::NamedModel> victims() const {
    std::vector<eval::NamedModel> v;
    for (std::size_t i = 1; i < zoo.size(); ++i) v.push_back({zoo[i].name, zoo[i].model.get()});
    return v;
  }
};

// Trains the default zoo once; later runs reuse the checkpoints while the
// dataset, zoo and training sections are unchanged.
void prepare_zoo(Lab& lab) {
  const nlohmann::json key_json{{"dataset", lab.cfg.to_json()["dataset"]},
                                {"zoo", lab.cfg.to_json()["zoo"]},
                                {"train", lab.cfg.train.to_json()}};
  const std::string key = io::config_hash(key_json);
  const std::string key_path = lab.zoo_dir + "/cache_key";
  std::string cached;
  if (std::ifstream in(key_path); in) in >> cached;
  if (cached == key) {
    try {
      lab.zoo = pipeline::load_zoo(lab.cfg, lab.zoo_dir);
      progress("reusing zoo in " + lab.zoo_dir);
      return;
    } catch (const Error& e) {
      progress(std::string("cached zoo unusable: ") + e.what());
    }
  }
  fs::create_directories(lab.zoo_dir);
  const auto t0 = Clock::now();
  progress("training zoo");
  pipeline::train_zoo(lab.cfg, lab.zoo_dir, [](const std::string& m) { progress(m); });
  io::write_text(key_path, key + "\n");
  lab.zoo = pipeline::load_zoo(lab.cfg, lab.zoo_dir);
  progress(fmt("zoo trained in %.0f s", since(t0)));
}

// Per-victim ASR averaged over image-subset seeds.
std::vector<double> seed_mean(const Lab& lab, const attack::AttackConfig& base, std::size_t n,
                              std::span<const std::uint64_t> seeds, const robust::RobustTokens* global = nullptr) {
  auto victims = lab.victims();
  std::vector<double> acc(victims.size(), 0.0);
  for (std::uint64_t seed : seeds) {
    Slice s = take(lab.data, eval::sample_test_subset(lab.data, n, seed));
    attack::AttackConfig cfg = base;
    cfg.seed = seed;
    auto br = attack::attack_batch(s.images, s.labels, lab.surrogate(), cfg, s.ids, global);
    for (std::size_t v = 0; v < victims.size(); ++v)
      acc[v] += eval::attack_success_rate(*victims[v].model, br.x_adv, s.labels) / static_cast<double>(seeds.size());
  }
  return acc;
}

double mean(std::span<const double> xs) { return eval::row_average(xs); }

// ---- criteria ----

Outcome gradient_integrity() {
  const auto t0 = Clock::now();
  auto entries = pipeline::gradcheck_suite(0);
  const double secs = since(t0);
  Outcome o;
  double worst_rel = 0.0, worst_abs = 0.0;
  std::string failed;
  for (const auto& e : entries) {
    worst_rel = std::max(worst_rel, e.max_rel_error);
    worst_abs = std::max(worst_abs, e.max_abs_error);
    if (!e.passed()) failed += " " + e.name;
    o.data["entries"].push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error},
                                 {"max_abs_error", e.max_abs_error}, {"checked", e.checked}});
  }
  o.pass = failed.empty() && secs < 120.0;
  o.detail = fmt("%zu checks, max rel %.2e (|g| >= %.0e), max abs %.2e below, %.1f s", entries.size(), worst_rel,
                 pipeline::kGradFloor, worst_abs, secs);
  if (!failed.empty()) o.detail += ", failing:" + failed;
  o.data["seconds"] = secs;
  return o;
}

Outcome neutral_equivalence(const Lab& lab) {
  const auto& model = lab.surrogate();
  const auto& vc = model.config();
  const std::size_t L = static_cast<std::size_t>(vc.num_layers);
  Slice s = take(lab.data, eval::sample_test_subset(lab.data, 20, 99));

  ops::OpParams neutral;
  neutral.permute = {0.0, 1.0};
  neutral.moe = {1, 0.0};
  auto logits = [&](const Tensor& img, const ops::BlockModSchedule& mods, const ops::CleanContext* clean) {
    ad::Tape tape;
    vit::ViTVars w = vit::bind(tape, model.params(), false);
    vit::ForwardOptions opt;
    opt.clean = clean;
    return vit::vit_forward(vc, w, tape.constant(img), mods, std::nullopt, opt).value();
  };

  int checks = 0, mismatches = 0;
  auto expect = [&](bool same) {
    ++checks;
    mismatches += same ? 0 : 1;
  };
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    const Tensor& img = s.images[i];
    const Tensor base = model.logits(img);
    expect(bit_identical(logits(img, ops::neutral_schedule(L), nullptr), base));
    ops::CleanContext ctx = vit::capture_clean_context(vc, model.params(), img, nullptr);
    for (ops::OpKind k : ops::kOpPool) {
      ops::BlockModSchedule mods(L);
      for (std::size_t l = 0; l < L; ++l)
        mods[l] = ops::compose_block_mods({{k, neutral, op_stream_key(5, i, 0, l, static_cast<std::uint64_t>(k))}});
      expect(bit_identical(logits(img, mods, &ctx), base));
    }
    ops::BlockModSchedule all(L);
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<ops::OpInstance> v;
      for (ops::OpKind k : ops::kOpPool) v.push_back({k, neutral, op_stream_key(5, i, 1, l, static_cast<std::uint64_t>(k))});
      all[l] = ops::compose_block_mods(v);
    }
    expect(bit_identical(logits(img, all, &ctx), base));

    // an all-identity policy draws empty blocks even with strong op settings
    policy::PolicyConfig pc;
    pc.pool = {ops::OpKind::identity};
    pc.ops_per_block = 1;
    auto pol = policy::init_policy(vc.num_layers, pc);
    Stream rng(derive(5, {i}));
    auto sched = policy::sample_schedule(pol, rng, ops::default_attack_params(), 5, i, 0);
    expect(bit_identical(logits(img, sched.schedule, nullptr), base));
  }

  attack::AttackConfig mi;
  attack::AttackConfig identity_only = mi;
  identity_only.method = attack::Method::ours;
  identity_only.robust.count = 0;
  identity_only.policy.pool = {ops::OpKind::identity};
  identity_only.policy.ops_per_block = 1;
  identity_only.ops = ops::default_attack_params();
  attack::AttackConfig all_neutral = identity_only;
  all_neutral.policy = {};
  all_neutral.policy.ops_per_block = static_cast<int>(ops::kOpPool.size());
  all_neutral.ops = neutral;
  int attacks = 0;
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    const Tensor ref = attack::mi_fgsm_attack(s.images[i], s.labels[i], model, mi);
    for (const auto* c : {&identity_only, &all_neutral}) {
      expect(bit_identical(attack::run_redundant_attack(s.images[i], s.labels[i], model, *c, s.ids[i]).x_adv, ref));
      ++attacks;
    }
  }
  Outcome o;
  o.pass = mismatches == 0;
  o.detail = fmt("%d comparisons (%d forward, %d attacks), %d mismatches", checks, checks - attacks, attacks,
                 mismatches);
  o.data = {{"checks", checks}, {"mismatches", mismatches}};
  return o;
}

Outcome constraint_exactness(const Lab& lab) {
  const double eps = lab.cfg.attack.epsilon;
  auto test = lab.data.indices(data::Split::test);
  if (test.size() > 1000) test.resize(1000);
  Slice s = take(lab.data, test);
  std::size_t violations = 0, attacked = 0;
  double worst = 0.0;
  auto audit = [&](const std::vector<Tensor>& adv, const Slice& src) {
    for (std::size_t i = 0; i < adv.size(); ++i) {
      ++attacked;
      bool bad = false;
      for (std::size_t k = 0; k < adv[i].size(); ++k) {
        const double a = adv[i][k], d = std::abs(a - src.images[i][k]);
        worst = std::max(worst, d);
        bad = bad || !(d <= eps + 1e-12) || !(a >= 0.0 && a <= 1.0);
      }
      violations += bad ? 1 : 0;
    }
  };
  attack::AttackConfig mi = lab.cfg.attack;
  mi.method = attack::Method::mi;
  audit(attack::attack_batch(s.images, s.labels, lab.surrogate(), mi, s.ids).x_adv, s);

  // the full method on a further slice
  attack::AttackConfig ours = lab.cfg.attack;
  ours.method = attack::Method::ours;
  Slice f = take(lab.data, eval::sample_test_subset(lab.data, 100, 77));
  audit(attack::attack_batch(f.images, f.labels, lab.surrogate(), ours, f.ids).x_adv, f);

  Outcome o;
  o.pass = s.images.size() >= 1000 && violations == 0;
  o.detail = fmt("%zu images (%zu mi, %zu full method), %zu violations, max |x_adv - x| = %.17g (eps %.17g)", attacked,
                 s.images.size(), f.images.size(), violations, worst, eps);
  o.data = {{"attacked", attacked}, {"violations", violations}, {"max_linf", worst}};
  return o;
}

// Victim that misclassifies the first `wrong` images of a slice.
class FixedErrorVictim final : public Classifier {
 public:
  explicit FixedErrorVictim(int wrong) : wrong_(wrong) {}
  std::string kind() const override { return "fixed"; }
  int num_classes() const override { return 2; }
  Shape input_shape() const override { return {1}; }
  nlohmann::json config_json() const override { return {{"kind", "fixed"}}; }
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<FixedErrorVictim>(*this); }
  std::vector<NamedTensor> parameters() override { return {}; }
  ad::Var forward(ad::Tape& tape, std::span<const ad::Var>, const ad::Var& image) const override {
    const bool fooled = image.value()[0] < wrong_;
    return tape.constant(Tensor({2}, {fooled ? 1.0 : 0.0, fooled ? 0.0 : 1.0}));
  }

 private:
  int wrong_;
};

Outcome aggregation() {
  // per-victim success rates in percent, eight victims each
  const std::vector<double> ours{77.7, 90.6, 91.1, 79.9, 99.7, 78.9, 83.5, 93.5};
  const std::vector<double> mi{39.4, 58.4, 57.9, 42.2, 97.4, 40.4, 42.0, 55.0};
  std::vector<Tensor> adv;
  for (int i = 0; i < 1000; ++i) adv.push_back(Tensor({1}, {static_cast<double>(i)}));
  const std::vector<int> labels(1000, 1);

  eval::TransferReport rep;
  rep.surrogates = {"ours", "mi"};
  for (const auto* row : {&ours, &mi}) {
    std::vector<double> rates;
    for (double pct : *row) {
      FixedErrorVictim v(static_cast<int>(std::lround(pct * 10)));
      rates.push_back(100.0 * eval::attack_success_rate(v, adv, labels));
    }
    rep.asr.push_back(rates);
  }
  for (std::size_t i = 0; i < ours.size(); ++i) rep.victims.push_back("v" + std::to_string(i));
  rep.recompute_averages();
  const double a = rep.averages[0], b = rep.averages[1];
  const bool csv_ok = io::transfer_csv(rep).find(fmt("%.6g", a)) != std::string::npos;
  Outcome o;
  o.pass = std::abs(std::round(a * 10) / 10 - 86.9) < 0.05 && std::abs(a - 86.9) < 0.05 &&
           std::abs(std::round(b * 100) / 100 - 54.09) < 0.05 && std::abs(b - 54.09) < 0.05 && csv_ok;
  o.detail = fmt("full-method row mean %.4f (86.9), MI row mean %.4f (54.09)", a, b);
  o.data = {{"ours", a}, {"mi", b}};
  return o;
}

Outcome white_box(const Lab& lab) {
  Slice s = take(lab.data, eval::sample_test_subset(lab.data, 500, 1));
  const double clean = train::accuracy(lab.surrogate(), lab.data, eval::sample_test_subset(lab.data, 500, 1));
  const double full_clean = lab.zoo.front().clean_accuracy;
  attack::AttackConfig mi = lab.cfg.attack;
  mi.method = attack::Method::mi;
  const auto t0 = Clock::now();
  auto br = attack::attack_batch(s.images, s.labels, lab.surrogate(), mi, s.ids);
  const double secs = since(t0);
  const double asr = eval::attack_success_rate(lab.surrogate(), br.x_adv, s.labels);
  std::size_t rose = 0;
  for (std::size_t i = 0; i < s.images.size(); ++i) {
    const double final_loss = attack::classifier_input_gradient(lab.surrogate(), br.x_adv[i], s.labels[i]).loss;
    rose += final_loss > br.losses[i].front() ? 1 : 0;
  }
  const double rose_frac = static_cast<double>(rose) / static_cast<double>(s.images.size());
  Outcome o;
  o.pass = asr >= 0.95 && full_clean >= 0.8 && secs < 300.0;
  o.detail = fmt("white-box ASR %.3f on 500 images, surrogate clean accuracy %.3f (slice %.3f), loss rose on %.3f, %.1f s",
                 asr, full_clean, clean, rose_frac, secs);
  o.data = {{"asr", asr}, {"clean_accuracy", full_clean}, {"slice_clean", clean}, {"loss_rose", rose_frac},
            {"seconds", secs}};
  return o;
}

Outcome transfer_lift(const Lab& lab) {
  attack::AttackConfig full = lab.cfg.attack;
  full.method = attack::Method::ours;
  auto victims = lab.victims();
  const auto t0 = Clock::now();
  auto c = eval::compare_methods(lab.surrogate(), victims, lab.data, static_cast<std::size_t>(lab.cfg.eval.images), full,
                                 lab.cfg.eval.seeds);
  const double secs = since(t0);
  std::string per;
  for (std::size_t v = 0; v < victims.size(); ++v)
    per += fmt(" %s %.3f->%.3f", victims[v].name.c_str(), c.mi_mean[v], c.ours_mean[v]);
  Outcome o;
  o.pass = c.victims_improved() >= 3 && c.mean_lift() >= 0.02 && secs < 1800.0;
  o.detail = fmt("mean black-box ASR mi %.4f, full %.4f, lift %+.2f pp, %d/4 victims improved,", c.mi_avg, c.ours_avg,
                 100.0 * c.mean_lift(), c.victims_improved()) +
             per + fmt(", %.0f s", secs);
  o.data = c.to_json();
  o.data["seconds"] = secs;
  return o;
}

Outcome sparsity_dose(const Lab& lab, std::size_t n) {
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  attack::AttackConfig cfg = lab.cfg.attack;
  cfg.method = attack::Method::ours;
  cfg.robust.count = 0;
  cfg.policy.pool = {ops::OpKind::sparsify};
  cfg.policy.ops_per_block = 1;
  cfg.ops = {};
  nlohmann::json curve = nlohmann::json::array();
  std::vector<double> asr;
  for (int k = 0; k <= 9; ++k) {
    cfg.ops.sparsify.r = k / 10.0;
    asr.push_back(mean(seed_mean(lab, cfg, n, seeds)));
    curve.push_back({{"r", k / 10.0}, {"asr", asr.back()}});
    progress(fmt("sparsify r=%.1f mean victim ASR %.4f", k / 10.0, asr.back()));
  }
  const double peak = *std::max_element(asr.begin() + 1, asr.begin() + 6);
  Outcome o;
  o.pass = peak > asr[0] && asr[9] < peak;
  std::string pts;
  for (double a : asr) pts += fmt(" %.3f", a);
  o.detail = fmt("r=0..0.9:%s; max over [0.1, 0.5] %.4f vs r=0 %.4f, r=0.9 %.4f (%zu images x 3 seeds)", pts.c_str(),
                 peak, asr[0], asr[9], n);
  o.data = {{"curve", curve}, {"images_per_seed", n}};
  return o;
}

Outcome policy_concentration() {
  const int layers = 4;
  bool all_ok = true;
  bool rows_valid = true;
  std::string reach;
  for (int winner = 0; winner < static_cast<int>(ops::kOpPool.size()); ++winner) {
    policy::PolicyConfig pc;
    pc.ops_per_block = 1;
    pc.lr = 0.05;
    pc.prob_floor = 0.01;
    auto p = policy::init_policy(layers, pc);
    Stream rng(derive(11, {static_cast<std::uint64_t>(winner)}));
    int reached = -1;
    for (int i = 0; i < 500; ++i) {
      auto sampled = policy::sample_ops(p, rng);
      double reward = 0.0;
      for (const auto& b : sampled) reward += b[0] == winner ? 1.0 / layers : 0.0;
      policy::reinforce_update(p, sampled, reward);
      bool all = true;
      for (int l = 0; l < layers; ++l) {
        double sum = 0.0;
        for (int c = 0; c < p.pool_size(); ++c) {
          sum += p.prob(l, c);
          rows_valid = rows_valid && p.prob(l, c) >= p.prob_floor() - 1e-15;
        }
        rows_valid = rows_valid && std::abs(sum - 1.0) <= 1e-12;
        all = all && p.prob(l, winner) > 0.9;
      }
      if (all && reached < 0) reached = i + 1;
    }
    all_ok = all_ok && reached > 0;
    reach += fmt(" %s@%d", std::string(ops::op_name(ops::kOpPool[static_cast<std::size_t>(winner)])).c_str(), reached);
  }
  Outcome o;
  o.pass = all_ok && rows_valid;
  o.detail = "winner above 0.9 in every row after" + reach + " updates, rows valid: " + (rows_valid ? "yes" : "no");
  return o;
}

Outcome robust_effect(const Lab& lab, std::size_t n) {
  const std::vector<std::uint64_t> seeds = lab.cfg.eval.seeds;
  attack::AttackConfig cfg = lab.cfg.attack;
  cfg.method = attack::Method::ours;
  cfg.policy.pool = {ops::OpKind::identity};
  cfg.policy.ops_per_block = 1;
  cfg.robust.mode = robust::Mode::dynamic;
  nlohmann::json grid = nlohmann::json::array();
  std::vector<double> asr;
  const std::vector<int> counts{0, 1, 4, 16, 64};
  for (int k : counts) {
    const auto t0 = Clock::now();
    cfg.robust.count = k;
    asr.push_back(mean(seed_mean(lab, cfg, n, seeds)));
    grid.push_back({{"count", k}, {"asr", asr.back()}});
    progress(fmt("robust tokens N_r=%d mean victim ASR %.4f (%.0f s)", k, asr.back(), since(t0)));
  }
  const double best = *std::max_element(asr.begin() + 1, asr.end());
  bool changed = false;
  for (std::size_t i = 1; i < asr.size(); ++i) changed = changed || asr[i] != asr[0];

  // global tokens: train, persist, reload, evaluate
  io::ExperimentConfig gc = lab.cfg;
  gc.attack.method = attack::Method::ours;
  gc.attack.policy = cfg.policy;
  gc.attack.robust.mode = robust::Mode::global;
  gc.attack.robust.count = 16;
  gc.calibration = 128;
  pipeline::robustify(gc, lab.zoo_dir);
  const std::string path = lab.zoo_dir + "/" + gc.zoo.surrogate + "_robust.rvit";
  io::Checkpoint ck = io::load_checkpoint(path);
  const bool persisted = ck.robust_tokens && ck.robust_tokens->mode == robust::Mode::global &&
                         ck.robust_tokens->z.shape() == Shape{16, static_cast<std::size_t>(lab.surrogate().config().hidden_dim)} &&
                         ck.robust_tokens->z.all_finite() && io::restore(ck)->kind() == "vit";
  double global_asr = std::nan("");
  if (persisted) global_asr = mean(seed_mean(lab, gc.attack, n, seeds, &*ck.robust_tokens));
  Outcome o;
  std::string pts;
  for (std::size_t i = 0; i < counts.size(); ++i) pts += fmt(" %d:%.4f", counts[i], asr[i]);
  o.pass = changed && best - asr[0] >= 0.01 && persisted && std::isfinite(global_asr);
  o.detail = fmt("mean victim ASR by N_r%s; best N_r>0 %+.2f pp; global 16 tokens (128 calibration, reloaded) %.4f "
                 "(%zu images x 5 seeds)",
                 pts.c_str(), 100.0 * (best - asr[0]), global_asr, n);
  o.data = {{"grid", grid}, {"global_asr", global_asr}, {"persisted", persisted}, {"images_per_seed", n}};
  return o;
}

Outcome probes(const Lab& lab, const std::string& dir) {
  fs::create_directories(dir);
  auto idx = eval::sample_test_subset(lab.data, static_cast<std::size_t>(lab.cfg.probe.images), 1);
  Slice s = take(lab.data, idx);
  const double clean = train::accuracy(lab.surrogate(), lab.data, idx);
  bool ok = true;
  std::string detail = fmt("clean %.3f;", clean);
  nlohmann::json curves = nlohmann::json::object();
  for (probe::ProbeKind k : probe::kAllProbes) {
    auto curve = probe::redundancy_probe(lab.surrogate(), k, lab.cfg.probe.ratios, s.images, s.labels, 0,
                                         lab.cfg.probe.draws);
    const std::string name(probe::probe_name(k));
    io::write_text(dir + "/" + name + ".csv", probe::curve_csv(curve));
    auto at = [&](double r) {
      for (const auto& p : curve)
        if (std::abs(p.ratio - r) < 1e-12) return p.accuracy;
      throw ConfigError("probe ratio missing");
    };
    const bool zero_ok = at(0.0) == clean;
    const bool mono = (k != probe::ProbeKind::token_drop && k != probe::ProbeKind::ffn_drop) || at(0.3) >= at(0.9);
    ok = ok && zero_ok && mono && fs::file_size(dir + "/" + name + ".csv") > 0;
    detail += fmt(" %s acc(0)=%.3f acc(0.3)=%.3f acc(0.9)=%.3f;", name.c_str(), at(0.0), at(0.3), at(0.9));
    curves[name] = probe::curve_json(curve);
  }
  Outcome o;
  o.pass = ok;
  o.detail = detail + " csv in " + dir;
  o.data = curves;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_reproducibility(const std::string& cli, const std::string& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string config = dir + "/config.json";
  const nlohmann::json small{
      {"dataset", {{"n", 300}, {"seed", 4}}},
      {"zoo",
       {{"accuracy_gate", 0.0},
        {"surrogate", "surrogate"},
        {"models",
         {{{"name", "surrogate"},
           {"seed", 21},
           {"model", {{"kind", "vit"}, {"num_layers", 2}, {"hidden_dim", 16}, {"num_heads", 2}, {"ffn_hidden", 32}}}},
          {{"name", "victim"},
           {"seed", 22},
           {"model", {{"kind", "vit"}, {"num_layers", 2}, {"hidden_dim", 16}, {"num_heads", 2}, {"ffn_hidden", 32}}}},
          {{"name", "cnn"},
           {"seed", 23},
           {"model", {{"kind", "cnn"}, {"widths", {4, 8, 8}}, {"strides", {1, 2, 2}}}}}}}}},
      {"train", {{"epochs", 1}}},
      {"attack", {{"method", "ours"}, {"steps", 4}}},
      {"robust", {{"count", 4}, {"mode", "global"}, {"epochs", 1}, {"batch", 4}, {"inner_steps", 2}}},
      {"eval", {{"images", 12}, {"seeds", {1, 2}}}},
      {"probe", {{"images", 20}, {"ratios", {0.0, 0.3, 0.6}}, {"draws", 2}}},
      {"calibration", 8}};
  io::write_text(config, small.dump(2) + "\n");
  const char* commands[] = {"gen-data", "train-zoo", "robustify", "attack", "evaluate", "probe", "gradcheck"};
  auto run_all = [&](const std::string& out) {
    for (const char* c : commands) {
      const std::string line =
          "\"" + cli + "\" " + c + " --config \"" + config + "\" --seed 3 --out \"" + out + "\" -q > /dev/null 2>&1";
      if (std::system(line.c_str()) != 0) return std::string(c);
    }
    return std::string();
  };
  Outcome o;
  for (const char* run : {"a", "b"}) {
    const std::string failed = run_all(dir + "/" + run);
    if (!failed.empty()) {
      o.detail = "subcommand '" + failed + "' failed";
      return o;
    }
  }
  std::size_t files = 0, differ = 0;
  std::map<std::string, int> by_ext;
  for (const auto& e : fs::directory_iterator(dir + "/a")) {
    ++files;
    by_ext[e.path().extension().string()]++;
    const fs::path twin = fs::path(dir) / "b" / e.path().filename();
    if (!fs::exists(twin) || slurp(e.path()) != slurp(twin)) ++differ;
  }
  bool kinds = true;
  for (const char* ext : {".advb", ".rvit", ".json", ".csv"}) kinds = kinds && by_ext[ext] > 0;
  o.pass = differ == 0 && kinds && files >= 15;
  o.detail = fmt("7 subcommands run twice, %zu artifacts (%d advb, %d rvit, %d json, %d csv), %zu differ", files,
                 by_ext[".advb"], by_ext[".rvit"], by_ext[".json"], by_ext[".csv"], differ);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_work";
  std::string cli;
  std::size_t sweep_images = 500;
  std::size_t robust_images = 200;
  std::vector<int> only;
  app.add_option("--workdir", workdir, "scratch directory; the trained zoo is cached here");
  app.add_option("--cli", cli, "path to the rvit executable")->required();
  app.add_option("--sweep-images", sweep_images, "images per seed for the sparsify sweep");
  app.add_option("--robust-images", robust_images, "images per seed for the robust-token grid");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  Lab lab;
  lab.zoo_dir = workdir + "/zoo";
  lab.cfg.out_dir = lab.zoo_dir;
  auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };
  const bool needs_zoo = wanted(2) || wanted(3) || wanted(5) || wanted(6) || wanted(7) || wanted(9) || wanted(10);
  const auto start = Clock::now();
  if (needs_zoo) {
    lab.data = pipeline::load_dataset(lab.cfg);
    prepare_zoo(lab);
  }

  const std::vector<std::pair<int, std::pair<std::string, std::function<Outcome()>>>> criteria = {
      {1, {"gradient integrity", [&] { return gradient_integrity(); }}},
      {2, {"neutral-setting equivalence", [&] { return neutral_equivalence(lab); }}},
      {3, {"constraint exactness", [&] { return constraint_exactness(lab); }}},
      {4, {"aggregation arithmetic", [&] { return aggregation(); }}},
      {5, {"white-box potency", [&] { return white_box(lab); }}},
      {6, {"transfer lift", [&] { return transfer_lift(lab); }}},
      {7, {"sparsity dose-response", [&] { return sparsity_dose(lab, sweep_images); }}},
      {8, {"policy concentration", [&] { return policy_concentration(); }}},
      {9, {"robust-token effect", [&] { return robust_effect(lab, robust_images); }}},
      {10, {"redundancy probes", [&] { return probes(lab, workdir + "/probes"); }}},
      {11, {"cli reproducibility", [&] { return cli_reproducibility(cli, workdir + "/cli"); }}},
  };

  nlohmann::json record = nlohmann::json::object();
  int failed = 0;
  for (const auto& [id, entry] : criteria) {
    if (!wanted(id)) continue;
    const auto& [name, run] = entry;
    const auto t0 = Clock::now();
    progress("criterion " + std::to_string(id) + ": " + name);
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << o.detail << std::endl;
    record[std::to_string(id)] = {{"name", name}, {"pass", o.pass}, {"detail", o.detail}, {"data", o.data},
                                  {"seconds", since(t0)}};
  }
  record["seconds"] = since(start);
  io::write_text(workdir + "/acceptance.json", record.dump(2) + "\n");
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
