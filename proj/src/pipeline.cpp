#include "rvit/pipeline.hpp"

#include <cstdio>
#include <filesystem>

#include "rvit/advb.hpp"
#include "rvit/checkpoint.hpp"
#include "rvit/error.hpp"
#include "rvit/gradcheck.hpp"
#include "rvit/report.hpp"
#include "rvit/rng.hpp"

namespace rvit::pipeline {

using ad::Tape;
using ad::Var;

namespace {

Tensor uniform_tensor(const Shape& shape, std::uint64_t key, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  Stream rng(key);
  for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

Var contract(Tape& t, const Var& y, std::uint64_t key) {
  return ad::sum(ad::mul(y, t.constant(uniform_tensor(y.shape(), mix64(key ^ 0x5a5a)))));
}

struct Primitive {
  const char* name;
  Shape input;
  std::function<Var(Tape&, const Var&, std::uint64_t)> build;
};

std::vector<Primitive> primitives() {
  using namespace ad;
  return {
      {"matmul", {3, 4}, [](Tape& t, const Var& x, std::uint64_t s) { return matmul(x, t.constant(uniform_tensor({4, 2}, s + 1))); }},
      {"matmul_rhs", {4, 2}, [](Tape& t, const Var& x, std::uint64_t s) { return matmul(t.constant(uniform_tensor({3, 4}, s + 1)), x); }},
      {"transpose", {3, 2}, [](Tape&, const Var& x, std::uint64_t) { return transpose(x); }},
      {"add", {3, 3}, [](Tape& t, const Var& x, std::uint64_t s) { return add(x, t.constant(uniform_tensor({3, 3}, s + 2))); }},
      {"sub", {3, 3}, [](Tape& t, const Var& x, std::uint64_t s) { return sub(t.constant(uniform_tensor({3, 3}, s + 2)), x); }},
      {"mul", {3, 3}, [](Tape&, const Var& x, std::uint64_t) { return mul(x, x); }},
      {"add_row", {4}, [](Tape& t, const Var& x, std::uint64_t s) { return add_row(t.constant(uniform_tensor({3, 4}, s + 2)), x); }},
      {"mul_row", {2, 5}, [](Tape& t, const Var& x, std::uint64_t s) { return mul_row(x, t.constant(uniform_tensor({5}, s + 3))); }},
      {"scale", {4}, [](Tape&, const Var& x, std::uint64_t) { return scale(x, -2.5); }},
      {"mask_multiply", {3, 4}, [](Tape&, const Var& x, std::uint64_t s) {
         Tensor m = uniform_tensor({3, 4}, s + 9, 0.0, 1.0);
         for (double& v : m.data()) v = v < 0.5 ? 0.0 : 1.0;
         return mask_multiply(x, m);
       }},
      {"layer_norm", {3, 6}, [](Tape& t, const Var& x, std::uint64_t s) {
         return layer_norm(x, t.constant(uniform_tensor({6}, s + 4)), t.constant(uniform_tensor({6}, s + 5)));
       }},
      {"layer_norm_affine", {6}, [](Tape& t, const Var& x, std::uint64_t s) {
         return layer_norm(t.constant(uniform_tensor({3, 6}, s + 4)), x, x);
       }},
      {"gelu", {10}, [](Tape&, const Var& x, std::uint64_t) { return gelu(scale(x, 3.0)); }},
      {"relu", {8}, [](Tape&, const Var& x, std::uint64_t) { return relu(x); }},
      {"softmax_rows", {2, 3, 4}, [](Tape&, const Var& x, std::uint64_t) { return softmax_rows(x); }},
      {"cross_entropy", {6}, [](Tape&, const Var& x, std::uint64_t s) { return cross_entropy(scale(x, 3.0), static_cast<int>(s % 6)); }},
      {"sum", {3, 2}, [](Tape&, const Var& x, std::uint64_t) { return mul(sum(x), sum(x)); }},
      {"mean", {5, 2}, [](Tape&, const Var& x, std::uint64_t) { return mul(mean(x), mean(x)); }},
      {"concat", {2, 3}, [](Tape& t, const Var& x, std::uint64_t s) { return concat({x, t.constant(uniform_tensor({2, 2}, s)), x}, 1); }},
      {"slice", {4, 3}, [](Tape&, const Var& x, std::uint64_t) { return slice(x, 0, 1, 3); }},
      {"permute_blocks", {3, 2, 2}, [](Tape&, const Var& x, std::uint64_t) {
         const int perm[] = {2, 0, 1};
         return permute_blocks(x, perm);
       }},
      {"gather", {2, 3}, [](Tape&, const Var& x, std::uint64_t) {
         auto idx = std::make_shared<const std::vector<std::int64_t>>(std::vector<std::int64_t>{5, -1, 0, 0, 3, 2});
         return gather(x, idx, {3, 2});
       }},
      {"reshape", {2, 6}, [](Tape&, const Var& x, std::uint64_t) { return reshape(x, {3, 4}); }},
  };
}

void accumulate(GradcheckEntry& e, const ad::GradCheckResult& r) {
  const ad::ScaledErrors s = ad::split_errors(r, kGradFloor);
  e.max_rel_error = std::max(e.max_rel_error, s.max_rel_error);
  e.max_abs_error = std::max(e.max_abs_error, s.max_abs_error_below);
  e.checked += r.checked;
  e.below_floor += s.below;
}

GradcheckEntry entry(const std::string& name, const ad::GradCheckResult& r) {
  GradcheckEntry e{name};
  accumulate(e, r);
  return e;
}

struct VitCase {
  std::string name;
  ops::OpParams params;
  ops::OpKind kind = ops::OpKind::identity;
};

}  // namespace

vit::ViTConfig gradcheck_vit_config() {
  vit::ViTConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.hidden_dim = 8;
  c.num_heads = 2;
  c.num_layers = 2;
  c.ffn_hidden = 16;
  c.num_classes = 3;
  return c;
}

std::vector<GradcheckEntry> gradcheck_suite(std::uint64_t seed) {
  constexpr double h = 1e-6;
  std::vector<GradcheckEntry> out;
  for (const auto& p : primitives()) {
    GradcheckEntry e{p.name};
    for (std::uint64_t k = 0; k < 5; ++k) {
      const std::uint64_t s = derive(seed, {k});
      ad::ScalarFn f = [&p, s](Tape& t, const Var& x) { return contract(t, p.build(t, x, s), s); };
      accumulate(e, ad::finite_diff_check(f, uniform_tensor(p.input, s + 100), h));
    }
    out.push_back(e);
  }

  const vit::ViTConfig cfg = gradcheck_vit_config();
  const vit::ViTParams params = vit::init_params(cfg, derive(seed, {static_cast<std::uint64_t>(Domain::weight_init)}));
  const Shape img_shape{static_cast<std::size_t>(cfg.image_size), static_cast<std::size_t>(cfg.image_size),
                        static_cast<std::size_t>(cfg.channels)};
  const Tensor image = uniform_tensor(img_shape, derive(seed, {1}), 0.2, 0.8);
  const Tensor other = uniform_tensor(img_shape, derive(seed, {2}), 0.2, 0.8);
  const int label = 1;
  const ops::CleanContext clean = vit::capture_clean_context(cfg, params, other, nullptr);

  std::vector<VitCase> cases;
  cases.push_back({"vit.image", {}, ops::OpKind::identity});
  {
    VitCase c{"vit.image+sparsify", {}, ops::OpKind::sparsify};
    c.params.sparsify.r = 0.3;
    cases.push_back(c);
    c.name = "vit.image+sparsify_neginf";
    c.params.sparsify.mode = ops::MaskMode::neginf;
    cases.push_back(c);
  }
  {
    VitCase c{"vit.image+permute", {}, ops::OpKind::permute};
    c.params.permute = {1.0, 1.0};
    cases.push_back(c);
  }
  {
    VitCase c{"vit.image+clean", {}, ops::OpKind::clean};
    c.params.clean.r = 0.5;
    cases.push_back(c);
  }
  {
    VitCase c{"vit.image+moe", {}, ops::OpKind::ghost_moe};
    c.params.moe = {3, 0.3};
    cases.push_back(c);
  }
  for (const auto& c : cases) {
    ops::BlockModSchedule mods = ops::neutral_schedule(static_cast<std::size_t>(cfg.num_layers));
    if (c.kind != ops::OpKind::identity)
      for (std::size_t l = 0; l < mods.size(); ++l)
        mods[l].ops.push_back({c.kind, c.params, op_stream_key(seed, 0, 0, l, static_cast<std::uint64_t>(c.kind))});
    ad::ScalarFn f = [&](Tape& t, const Var& x) {
      vit::ViTVars w = vit::bind(t, params, false);
      vit::ForwardOptions opt;
      opt.clean = &clean;
      return ad::cross_entropy(vit::vit_forward(cfg, w, x, mods, std::nullopt, opt), label);
    };
    out.push_back(entry(c.name, ad::finite_diff_check(f, image, h)));
  }

  {
    const Tensor tokens = robust::init_tokens(2, cfg.hidden_dim, 0.5, seed);
    ops::BlockModSchedule mods = ops::neutral_schedule(static_cast<std::size_t>(cfg.num_layers));
    ad::ScalarFn f = [&](Tape& t, const Var& z) {
      vit::ViTVars w = vit::bind(t, params, false);
      return ad::cross_entropy(vit::vit_forward(cfg, w, t.constant(image), mods, z), label);
    };
    out.push_back(entry("vit.robust_tokens", ad::finite_diff_check(f, tokens, h)));
  }

  {
    const vit::ViTConfig full;
    const vit::ViTParams fp = vit::init_params(full, derive(seed, {static_cast<std::uint64_t>(Domain::weight_init), 1}));
    const Tensor x = uniform_tensor({32, 32, 3}, derive(seed, {3}), 0.0, 1.0);
    ops::BlockModSchedule mods = ops::neutral_schedule(static_cast<std::size_t>(full.num_layers));
    ad::ScalarFn f = [&](Tape& t, const Var& img) {
      return ad::cross_entropy(vit::vit_forward(full, vit::bind(t, fp, false), img, mods), label);
    };
    out.push_back(entry("vit.default.image", ad::finite_diff_check(f, x, h)));
  }

  for (const char* target : {"patch_embed", "cls_token", "pos_embed", "blocks.0.ln1.gamma", "blocks.0.attn.w_q",
                             "blocks.0.attn.w_o", "blocks.1.ffn.w1", "blocks.1.ffn.b2", "lnf.gamma", "head.w"}) {
    Tensor start;
    vit::ViTParams::visit(params, [&](const std::string& n, const Tensor& t) {
      if (n == target) start = t;
    });
    ops::BlockModSchedule mods = ops::neutral_schedule(static_cast<std::size_t>(cfg.num_layers));
    ad::ScalarFn f = [&](Tape& t, const Var& x) {
      vit::ViTVars w = vit::bind(t, params, false);
      vit::ViTVars::visit(w, [&](const std::string& n, Var& v) {
        if (n == target) v = x;
      });
      return ad::cross_entropy(vit::vit_forward(cfg, w, t.constant(image), mods), label);
    };
    out.push_back(entry(std::string("vit.param.") + target, ad::finite_diff_check(f, start, h)));
  }
  return out;
}

data::Dataset load_dataset(const io::ExperimentConfig& cfg) {
  if (!cfg.dataset.record_file.empty()) return data::load_record_file(cfg.dataset.record_file);
  return data::generate_shapes_dataset(cfg.dataset.n, cfg.dataset.seed);
}

namespace {

namespace fs = std::filesystem;

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

struct Stamp {
  std::string hash;
  std::uint64_t seed;
};

// config echo without paths
nlohmann::json echo(const io::ExperimentConfig& cfg) {
  nlohmann::json j = cfg.to_json();
  j.erase("paths");
  return j;
}

Stamp stamp(const io::ExperimentConfig& cfg) { return {io::config_hash(echo(cfg)), cfg.seed}; }

void write_json(Artifacts& a, const std::string& path, nlohmann::json j, const Stamp& st) {
  j["config_hash"] = st.hash;
  j["seed"] = st.seed;
  io::write_text(path, io::canonical_json(j) + "\n");
  a.files.push_back(path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::unique_ptr<Classifier> load_model(const std::string& path) { return io::restore(io::load_checkpoint(path)); }

const vit::VisionTransformer& as_vit(const Classifier& m, const std::string& what) {
  const auto* v = dynamic_cast<const vit::VisionTransformer*>(&m);
  if (!v) throw ConfigError(what + " must be a ViT");
  return *v;
}

struct Slice {
  std::vector<std::size_t> idx;
  std::vector<Tensor> images;
  std::vector<int> labels;
};

Slice take(const data::Dataset& d, std::vector<std::size_t> idx) {
  Slice s;
  for (std::size_t i : idx) {
    s.images.push_back(d.images[i]);
    s.labels.push_back(d.labels[i]);
  }
  s.idx = std::move(idx);
  return s;
}

}  // namespace

Artifacts gen_data(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log) {
  ensure_dir(out_dir);
  const Stamp st = stamp(cfg);
  data::Dataset d = load_dataset(cfg);
  Artifacts a;
  io::AdvBatch b;
  b.images = d.images;
  b.labels = d.labels;
  b.seed = cfg.dataset.seed;
  b.config_hash = st.hash;
  std::vector<int> split;
  for (auto s : d.splits) split.push_back(s == data::Split::test ? 1 : 0);
  b.extra = {{"kind", "clean"}, {"test_split", split}};
  const std::string path = join(out_dir, "dataset.advb");
  io::save_advb(b, path);
  a.files.push_back(path);
  std::vector<int> counts(data::kClasses, 0);
  for (int l : d.labels) ++counts[static_cast<std::size_t>(l)];
  a.summary = {{"n", d.size()},
               {"dataset_seed", cfg.dataset.seed},
               {"class_counts", counts},
               {"classes", data::shape_class_names()},
               {"train", d.indices(data::Split::train).size()},
               {"test", d.indices(data::Split::test).size()}};
  write_json(a, join(out_dir, "dataset.json"), a.summary, st);
  say(log, "wrote " + std::to_string(d.size()) + " images to " + path);
  return a;
}

Artifacts train_zoo(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log) {
  ensure_dir(out_dir);
  const Stamp st = stamp(cfg);
  data::Dataset d = load_dataset(cfg);
  Artifacts a;
  nlohmann::json models = nlohmann::json::array();
  for (const auto& spec : cfg.zoo.models) {
    auto zoo = eval::train_zoo(d, std::span(&spec, 1), cfg.train, cfg.zoo.accuracy_gate);
    auto& m = zoo.front();
    io::Checkpoint ck = io::snapshot(*m.model);
    ck.clean_accuracy = m.clean_accuracy;
    ck.meta = {{"name", m.name}, {"config_hash", st.hash}, {"seed", st.seed}, {"model_seed", spec.seed},
               {"train", cfg.train.to_json()}};
    const std::string path = join(out_dir, m.name + ".rvit");
    io::save_checkpoint(ck, path);
    a.files.push_back(path);
    models.push_back({{"name", m.name}, {"kind", m.model->kind()}, {"clean_accuracy", m.clean_accuracy}});
    say(log, m.name + ": clean accuracy " + std::to_string(m.clean_accuracy));
  }
  a.summary = {{"models", models}, {"accuracy_gate", cfg.zoo.accuracy_gate}};
  write_json(a, join(out_dir, "zoo.json"), a.summary, st);
  return a;
}

std::vector<eval::ZooMember> load_zoo(const io::ExperimentConfig& cfg, const std::string& out_dir) {
  std::vector<eval::ZooMember> zoo;
  for (const auto& spec : cfg.zoo.models) {
    io::Checkpoint ck = io::load_checkpoint(join(out_dir, spec.name + ".rvit"));
    zoo.push_back({spec.name, io::restore(ck), ck.clean_accuracy.value_or(0.0)});
  }
  return zoo;
}

Artifacts robustify(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log) {
  ensure_dir(out_dir);
  const Stamp st = stamp(cfg);
  if (cfg.attack.robust.count < 1) throw ConfigError("robustify needs robust.count >= 1");
  data::Dataset d = load_dataset(cfg);
  const std::string src = join(out_dir, cfg.zoo.surrogate + ".rvit");
  io::Checkpoint ck = io::load_checkpoint(src);
  auto model = io::restore(ck);
  const auto& v = as_vit(*model, "surrogate");
  auto train_idx = d.indices(data::Split::train);
  if (train_idx.size() > static_cast<std::size_t>(cfg.calibration)) train_idx.resize(static_cast<std::size_t>(cfg.calibration));
  Slice cal = take(d, train_idx);
  robust::RobustConfig rc = cfg.attack.robust;
  rc.mode = robust::Mode::global;
  robust::RobustTokens rt = robust::robustify_global(cal.images, cal.labels, v, rc, {cfg.attack.epsilon, cfg.attack.mu},
                                                     derive(cfg.seed, {static_cast<std::uint64_t>(Domain::robust_init)}));
  ck.robust_tokens = rt;
  ck.meta["config_hash"] = st.hash;
  ck.meta["seed"] = st.seed;
  ck.meta["calibration"] = cal.idx.size();
  Artifacts a;
  const std::string path = join(out_dir, cfg.zoo.surrogate + "_robust.rvit");
  io::save_checkpoint(ck, path);
  a.files.push_back(path);
  a.summary = {{"tokens", rt.meta_json()}, {"calibration", cal.idx.size()}, {"source", cfg.zoo.surrogate}};
  write_json(a, join(out_dir, "robustify.json"), a.summary, st);
  say(log, "trained " + std::to_string(rt.count) + " global robust tokens on " + std::to_string(cal.idx.size()) +
               " images");
  return a;
}

Artifacts attack(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log) {
  ensure_dir(out_dir);
  const Stamp st = stamp(cfg);
  data::Dataset d = load_dataset(cfg);
  auto model = load_model(join(out_dir, cfg.zoo.surrogate + ".rvit"));
  std::optional<robust::RobustTokens> global;
  if (cfg.attack.method == attack::Method::ours && cfg.attack.robust.count > 0 &&
      cfg.attack.robust.mode == robust::Mode::global) {
    io::Checkpoint rk = io::load_checkpoint(join(out_dir, cfg.zoo.surrogate + "_robust.rvit"));
    if (!rk.robust_tokens) throw StateError("surrogate_robust.rvit has no robust_tokens section");
    global = rk.robust_tokens;
  }
  Slice s = take(d, eval::sample_test_subset(d, static_cast<std::size_t>(cfg.eval.images), cfg.seed));
  std::vector<std::uint64_t> ids(s.idx.begin(), s.idx.end());
  attack::BatchResult br = attack::attack_batch(s.images, s.labels, *model, cfg.attack, ids, global ? &*global : nullptr);

  Artifacts a;
  io::AdvBatch b;
  b.images = br.x_adv;
  b.labels = s.labels;
  b.epsilon = cfg.attack.epsilon;
  b.seed = cfg.seed;
  b.config_hash = st.hash;
  b.extra = {{"kind", "adversarial"}, {"indices", s.idx}, {"surrogate", cfg.zoo.surrogate},
             {"method", attack::method_name(cfg.attack.method)}};
  const std::string path = join(out_dir, "adv.advb");
  io::save_advb(b, path);
  a.files.push_back(path);
  a.summary = {{"config", echo(cfg)}, {"indices", s.idx}, {"losses", br.losses}};
  if (br.last_policy) a.summary["policy"] = br.last_policy->matrix_json();
  write_json(a, join(out_dir, "attack.json"), a.summary, st);
  say(log, "attacked " + std::to_string(s.idx.size()) + " images with " +
               std::string(attack::method_name(cfg.attack.method)));
  return a;
}

Artifacts evaluate(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log) {
  ensure_dir(out_dir);
  const Stamp st = stamp(cfg);
  data::Dataset d = load_dataset(cfg);
  auto zoo = load_zoo(cfg, out_dir);
  io::AdvBatch adv = io::load_advb(join(out_dir, "adv.advb"));
  std::vector<Tensor> clean;
  for (std::size_t i : adv.extra.at("indices").get<std::vector<std::size_t>>()) clean.push_back(d.images.at(i));

  eval::TransferReport rep;
  rep.surrogates = {adv.extra.value("surrogate", cfg.zoo.surrogate)};
  std::vector<double> row;
  for (const auto& m : zoo) {
    rep.victims.push_back(m.name);
    row.push_back(eval::attack_success_rate(*m.model, adv.images, adv.labels, cfg.eval.filter, clean));
  }
  rep.asr.push_back(row);
  rep.recompute_averages();
  rep.config = echo(cfg);
  rep.seeds = {cfg.seed};
  rep.extra["filter"] = eval::filter_name(cfg.eval.filter);
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& m : zoo) acc[m.name] = m.clean_accuracy;
  rep.extra["clean_accuracy"] = acc;
  const std::string attack_json = join(out_dir, "attack.json");
  if (fs::exists(attack_json)) {
    auto bytes = io::read_file(attack_json);
    auto aj = nlohmann::json::parse(bytes.begin(), bytes.end());
    rep.extra["losses"] = aj.value("losses", nlohmann::json::array());
    if (aj.contains("policy")) rep.extra["policy"] = aj["policy"];
  }
  Artifacts a;
  const std::string jp = join(out_dir, "report.json"), cp = join(out_dir, "report.csv");
  io::write_report(rep, jp, io::ReportFormat::json, st.hash, st.seed);
  io::write_report(rep, cp, io::ReportFormat::csv, st.hash, st.seed);
  a.files = {jp, cp};
  a.summary = rep.to_json();
  for (std::size_t v = 0; v < rep.victims.size(); ++v)
    say(log, rep.victims[v] + ": ASR " + std::to_string(row[v]));
  return a;
}

Artifacts probe(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log) {
  ensure_dir(out_dir);
  const Stamp st = stamp(cfg);
  data::Dataset d = load_dataset(cfg);
  auto model = load_model(join(out_dir, cfg.zoo.surrogate + ".rvit"));
  const auto& v = as_vit(*model, "probe target");
  Slice s = take(d, eval::sample_test_subset(d, static_cast<std::size_t>(cfg.probe.images), cfg.seed));
  Artifacts a;
  nlohmann::json curves = nlohmann::json::object();
  for (auto kind : cfg.probe.kinds) {
    auto curve = probe::redundancy_probe(v, kind, cfg.probe.ratios, s.images, s.labels, cfg.seed, cfg.probe.draws);
    const std::string path = join(out_dir, "probe_" + std::string(probe::probe_name(kind)) + ".csv");
    io::write_text(path, "# config_hash=" + st.hash + " seed=" + std::to_string(st.seed) + "\n" + probe::curve_csv(curve));
    a.files.push_back(path);
    curves[std::string(probe::probe_name(kind))] = probe::curve_json(curve);
    say(log, std::string(probe::probe_name(kind)) + ": " + std::to_string(curve.size()) + " points");
  }
  a.summary = {{"curves", curves}, {"images", s.idx.size()}, {"draws", cfg.probe.draws}};
  write_json(a, join(out_dir, "probe.json"), a.summary, st);
  return a;
}

Artifacts gradcheck(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log) {
  ensure_dir(out_dir);
  const Stamp st = stamp(cfg);
  Artifacts a;
  nlohmann::json rows = nlohmann::json::array();
  bool ok = true;
  for (const auto& e : gradcheck_suite(cfg.seed)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s max_rel_error %.3e  max_abs_error(|g|<%.0e) %.3e  coords %zu", e.name.c_str(),
                  e.max_rel_error, kGradFloor, e.max_abs_error, e.checked);
    say(log, buf);
    ok = ok && e.passed();
    rows.push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}, {"max_abs_error", e.max_abs_error},
                    {"checked", e.checked}, {"below_floor", e.below_floor}, {"passed", e.passed()}});
  }
  a.summary = {{"entries", rows}, {"passed", ok}, {"h", 1e-6}, {"grad_floor", kGradFloor}};
  write_json(a, join(out_dir, "gradcheck.json"), a.summary, st);
  return a;
}

}  // namespace rvit::pipeline
