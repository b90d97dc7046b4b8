#include "rvit/vit.hpp"

#include <cmath>
#include <memory>

#include "rvit/error.hpp"

namespace rvit::vit {

using ad::Var;

void ViTConfig::validate() const {
  if (image_size <= 0 || channels <= 0 || patch_size <= 0 || hidden_dim <= 0 || num_layers <= 0 ||
      num_heads <= 0 || ffn_hidden <= 0 || num_classes <= 0 || !(ln_eps > 0))
    throw ConfigError("ViT config fields must be positive");
  if (image_size % patch_size != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                      std::to_string(patch_size));
  if (hidden_dim % num_heads != 0)
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) + " not divisible by num_heads " +
                      std::to_string(num_heads));
}

nlohmann::json ViTConfig::to_json() const {
  return {{"kind", "vit"},          {"image_size", image_size}, {"channels", channels},
          {"patch_size", patch_size}, {"hidden_dim", hidden_dim}, {"num_layers", num_layers},
          {"num_heads", num_heads},   {"ffn_hidden", ffn_hidden}, {"num_classes", num_classes},
          {"ln_eps", ln_eps}};
}

ViTConfig ViTConfig::from_json(const nlohmann::json& j) {
  ViTConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") {
      if (value != "vit") throw ConfigError("expected a vit config, got kind " + value.dump());
    } else if (key == "image_size") c.image_size = value.get<int>();
    else if (key == "channels") c.channels = value.get<int>();
    else if (key == "patch_size") c.patch_size = value.get<int>();
    else if (key == "hidden_dim") c.hidden_dim = value.get<int>();
    else if (key == "num_layers") c.num_layers = value.get<int>();
    else if (key == "num_heads") c.num_heads = value.get<int>();
    else if (key == "ffn_hidden") c.ffn_hidden = value.get<int>();
    else if (key == "num_classes") c.num_classes = value.get<int>();
    else if (key == "ln_eps") c.ln_eps = value.get<double>();
    else throw ConfigError("unknown vit config key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void fill_normal(Tensor& t, Stream& rng, double stddev) {
  for (double& v : t.storage()) v = stddev * rng.normal();
}

}  // namespace

ViTParams zero_params(const ViTConfig& cfg) {
  cfg.validate();
  const std::size_t d = sz(cfg.hidden_dim), f = sz(cfg.ffn_hidden);
  ViTParams p;
  p.patch_embed = Tensor({sz(cfg.patch_dim()), d});
  p.cls_token = Tensor({d});
  p.pos_embed = Tensor({sz(cfg.num_patches()), d});
  p.blocks.resize(sz(cfg.num_layers));
  for (auto& b : p.blocks) {
    b.ln1_gamma = Tensor({d});
    b.ln1_beta = Tensor({d});
    b.w_q = Tensor({d, d});
    b.w_k = Tensor({d, d});
    b.w_v = Tensor({d, d});
    b.w_o = Tensor({d, d});
    b.ln2_gamma = Tensor({d});
    b.ln2_beta = Tensor({d});
    b.w1 = Tensor({d, f});
    b.b1 = Tensor({f});
    b.w2 = Tensor({f, d});
    b.b2 = Tensor({d});
  }
  p.lnf_gamma = Tensor({d});
  p.lnf_beta = Tensor({d});
  p.head_w = Tensor({d, sz(cfg.num_classes)});
  p.head_b = Tensor({sz(cfg.num_classes)});
  return p;
}

ViTParams init_params(const ViTConfig& cfg, std::uint64_t seed) {
  ViTParams p = zero_params(cfg);
  Stream rng(derive(seed, {static_cast<std::uint64_t>(Domain::weight_init)}));
  const double d = cfg.hidden_dim;
  fill_normal(p.patch_embed, rng, 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())));
  fill_normal(p.cls_token, rng, 0.02);
  fill_normal(p.pos_embed, rng, 0.02);
  for (auto& b : p.blocks) {
    b.ln1_gamma = Tensor::full(b.ln1_gamma.shape(), 1.0);
    b.ln2_gamma = Tensor::full(b.ln2_gamma.shape(), 1.0);
    fill_normal(b.w_q, rng, 1.0 / std::sqrt(d));
    fill_normal(b.w_k, rng, 1.0 / std::sqrt(d));
    fill_normal(b.w_v, rng, 1.0 / std::sqrt(d));
    fill_normal(b.w_o, rng, 1.0 / std::sqrt(d));
    fill_normal(b.w1, rng, 1.0 / std::sqrt(d));
    fill_normal(b.w2, rng, 1.0 / std::sqrt(static_cast<double>(cfg.ffn_hidden)));
  }
  p.lnf_gamma = Tensor::full(p.lnf_gamma.shape(), 1.0);
  fill_normal(p.head_w, rng, 1.0 / std::sqrt(d));
  return p;
}

void check_params(const ViTConfig& cfg, const ViTParams& params) {
  ViTParams ref = zero_params(cfg);
  if (params.blocks.size() != ref.blocks.size())
    throw DimensionError("ViT params have " + std::to_string(params.blocks.size()) + " blocks, config " +
                         std::to_string(ref.blocks.size()));
  std::vector<std::pair<std::string, Shape>> expected;
  ViTParams::visit(ref, [&](const std::string& n, const Tensor& t) { expected.emplace_back(n, t.shape()); });
  std::size_t i = 0;
  ViTParams::visit(params, [&](const std::string& n, const Tensor& t) {
    if (t.shape() != expected[i].second)
      throw DimensionError("parameter " + n + " has shape " + shape_str(t.shape()) + ", expected " +
                           shape_str(expected[i].second));
    if (!t.all_finite()) throw NumericError("parameter " + n + " is not finite");
    ++i;
  });
}

ViTVars bind(ad::Tape& tape, const ViTParams& params, bool trainable) {
  ViTVars v;
  v.blocks.resize(params.blocks.size());
  std::vector<const Tensor*> src;
  ViTParams::visit(params, [&](const std::string&, const Tensor& t) { src.push_back(&t); });
  std::size_t i = 0;
  ViTVars::visit(v, [&](const std::string&, Var& var) {
    var = trainable ? tape.leaf(*src[i]) : tape.constant(*src[i]);
    ++i;
  });
  return v;
}

ViTVars bind(std::span<const Var> flat, std::size_t layers) {
  ViTVars v;
  v.blocks.resize(layers);
  std::size_t i = 0;
  ViTVars::visit(v, [&](const std::string&, Var& var) {
    if (i >= flat.size()) throw DimensionError("too few bound ViT parameters");
    var = flat[i++];
  });
  if (i != flat.size()) throw DimensionError("too many bound ViT parameters");
  return v;
}

std::vector<std::int64_t> patch_gather_index(const ViTConfig& cfg) {
  const int p = cfg.patch_size, c = cfg.channels, g = cfg.grid(), w = cfg.image_size;
  std::vector<std::int64_t> idx;
  idx.reserve(sz(cfg.num_patches() * cfg.patch_dim()));
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx)
      for (int py = 0; py < p; ++py)
        for (int px = 0; px < p; ++px)
          for (int ch = 0; ch < c; ++ch) {
            const int y = gy * p + py, x = gx * p + px;
            idx.push_back((static_cast<std::int64_t>(y) * w + x) * c + ch);
          }
  return idx;
}

TokenSequence patch_embed(const ViTConfig& cfg, const ViTVars& w, const Var& image) {
  const Shape expected{sz(cfg.image_size), sz(cfg.image_size), sz(cfg.channels)};
  if (image.shape() != expected)
    throw DimensionError("image shape " + shape_str(image.shape()) + " does not match config " +
                         shape_str(expected));
  static thread_local std::shared_ptr<const std::vector<std::int64_t>> cached;
  static thread_local ViTConfig cached_cfg{};
  if (!cached || !(cached_cfg == cfg)) {
    cached = std::make_shared<const std::vector<std::int64_t>>(patch_gather_index(cfg));
    cached_cfg = cfg;
  }
  const std::size_t n = sz(cfg.num_patches()), d = sz(cfg.hidden_dim);
  Var patches = ad::gather(image, cached, {n, sz(cfg.patch_dim())});
  Var embedded = ad::add(ad::matmul(patches, w.patch_embed), w.pos_embed);
  Var cls = ad::reshape(w.cls_token, {1, d});
  TokenSequence seq;
  seq.tokens = ad::concat({cls, embedded}, 0);
  seq.roles.assign(n + 1, TokenRole::patch);
  seq.roles[0] = TokenRole::cls;
  return seq;
}

TokenSequence append_robust_tokens(const TokenSequence& seq, const Var& robust_tokens) {
  const Shape& s = robust_tokens.shape();
  const std::size_t d = seq.tokens.shape()[1];
  if (s.size() != 2 || s[1] != d)
    throw DimensionError("robust tokens " + shape_str(s) + " do not match hidden dim " + std::to_string(d));
  TokenSequence out;
  out.tokens = ad::concat({seq.tokens, robust_tokens}, 0);
  out.roles = seq.roles;
  out.roles.insert(out.roles.end(), s[0], TokenRole::robust);
  return out;
}

Var mha_forward(const ViTConfig& cfg, const BlockWeights<Var>& w, const Var& x, const ops::BlockMods& mods,
                std::size_t layer, const ForwardOptions& opt) {
  const std::size_t t = x.shape()[0];
  const int heads = cfg.num_heads;
  const std::size_t dk = sz(cfg.head_dim());
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Var q = ad::matmul(x, w.w_q);
  Var k = ad::matmul(x, w.w_k);
  Var v = ad::matmul(x, w.w_v);

  std::vector<Var> head_logits;
  std::vector<Var> head_values;
  for (int h = 0; h < heads; ++h) {
    const std::size_t lo = sz(h) * dk, hi = lo + dk;
    Var qh = ad::slice(q, 1, lo, hi);
    Var kh = ad::slice(k, 1, lo, hi);
    head_values.push_back(ad::slice(v, 1, lo, hi));
    Var lh = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dk);
    head_logits.push_back(ad::reshape(lh, {1, t, t}));
  }
  Var logits = heads == 1 ? head_logits[0] : ad::concat(head_logits, 0);

  if (const auto* op = mods.find(ops::OpKind::permute)) {
    Stream rng(op->stream);
    logits = ops::permute_heads(logits, op->params.permute, rng);
  }
  if (const auto* op = mods.find(ops::OpKind::sparsify)) {
    Stream rng(op->stream);
    logits = ops::sparsify_attention(logits, op->params.sparsify, rng);
  }

  Var attn = ad::softmax_rows(logits);
  if (opt.attention) opt.attention->push_back(attn.value());

  const std::vector<int>* disabled = nullptr;
  if (opt.ablation && layer < opt.ablation->disabled_heads.size()) disabled = &opt.ablation->disabled_heads[layer];

  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var ah = heads == 1 ? ad::reshape(attn, {t, t}) : ad::reshape(ad::slice(attn, 0, sz(h), sz(h) + 1), {t, t});
    Var oh = ad::matmul(ah, head_values[sz(h)]);
    if (disabled && std::find(disabled->begin(), disabled->end(), h) != disabled->end()) oh = ad::scale(oh, 0.0);
    outs.push_back(oh);
  }
  Var merged = heads == 1 ? outs[0] : ad::concat(outs, 1);
  return ad::matmul(merged, w.w_o);
}

Var ffn_forward(const ViTConfig& cfg, const BlockWeights<Var>& w, const Var& x, const ops::BlockMods& mods,
                std::size_t layer, const ForwardOptions& opt) {
  (void)cfg;
  if (const auto* op = mods.find(ops::OpKind::ghost_moe)) {
    Stream rng(op->stream);
    return ops::ghost_moe(x, w.w1, w.b1, w.w2, w.b2, op->params.moe, rng);
  }
  Var h = ad::gelu(ad::add_row(ad::matmul(x, w.w1), w.b1));
  if (opt.ablation && layer < opt.ablation->ffn_unit_masks.size() && !opt.ablation->ffn_unit_masks[layer].empty()) {
    Var mask = x.tape()->constant(opt.ablation->ffn_unit_masks[layer]);
    h = ad::mul_row(h, mask);
  }
  return ad::add_row(ad::matmul(h, w.w2), w.b2);
}

TokenSequence block_forward(const ViTConfig& cfg, const ViTVars& w, const TokenSequence& z, std::size_t layer,
                            const ops::BlockMods& mods, const ForwardOptions& opt) {
  if (layer >= w.blocks.size())
    throw ContractError("block_forward: layer " + std::to_string(layer) + " out of range");
  const auto& b = w.blocks[layer];
  Var x = z.tokens;
  const std::size_t t = z.size();
  if (const auto* op = mods.find(ops::OpKind::clean)) {
    if (!opt.clean || opt.clean->empty()) throw StateError("clean-token injection requires a captured clean context");
    Stream rng(op->stream);
    x = ops::inject_clean_tokens(x, *opt.clean, layer, op->params.clean, rng);
  }
  Var a = ad::add(x, mha_forward(cfg, b, ad::layer_norm(x, b.ln1_gamma, b.ln1_beta, cfg.ln_eps), mods, layer, opt));
  Var out = ad::add(a, ffn_forward(cfg, b, ad::layer_norm(a, b.ln2_gamma, b.ln2_beta, cfg.ln_eps), mods, layer, opt));
  if (out.shape()[0] != t) out = ad::slice(out, 0, 0, t);
  return TokenSequence{out, z.roles};
}

Var vit_forward(const ViTConfig& cfg, const ViTVars& w, const Var& image, std::span<const ops::BlockMods> mods,
                std::optional<Var> robust_tokens, const ForwardOptions& opt) {
  if (mods.size() != sz(cfg.num_layers))
    throw ConfigError("expected " + std::to_string(cfg.num_layers) + " block schedules, got " +
                      std::to_string(mods.size()));
  TokenSequence seq = patch_embed(cfg, w, image);
  if (opt.ablation && opt.ablation->kept_patches) {
    const std::size_t d = sz(cfg.hidden_dim);
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    std::vector<std::size_t> rows{0};
    for (int p : *opt.ablation->kept_patches) {
      if (p < 1 || p > cfg.num_patches()) throw ContractError("kept patch index out of range");
      rows.push_back(sz(p));
    }
    for (std::size_t r : rows)
      for (std::size_t j = 0; j < d; ++j) idx->push_back(static_cast<std::int64_t>(r * d + j));
    seq.tokens = ad::gather(seq.tokens, idx, {rows.size(), d});
    seq.roles.assign(rows.size(), TokenRole::patch);
    seq.roles[0] = TokenRole::cls;
  }
  if (robust_tokens && robust_tokens->shape()[0] > 0) seq = append_robust_tokens(seq, *robust_tokens);
  if (opt.capture) {
    opt.capture->block_inputs.clear();
    opt.capture->patch_tokens = sz(cfg.num_patches());
  }
  for (std::size_t l = 0; l < mods.size(); ++l) {
    if (opt.capture) opt.capture->block_inputs.push_back(ad::slice(seq.tokens, 0, 0, 1 + sz(cfg.num_patches())).value());
    seq = block_forward(cfg, w, seq, l, mods[l], opt);
  }
  Var cls = ad::slice(seq.tokens, 0, 0, 1);
  Var normed = ad::layer_norm(cls, w.lnf_gamma, w.lnf_beta, cfg.ln_eps);
  Var logits = ad::add_row(ad::matmul(normed, w.head_w), w.head_b);
  return ad::reshape(logits, {sz(cfg.num_classes)});
}

ops::CleanContext capture_clean_context(const ViTConfig& cfg, const ViTParams& params, const Tensor& image,
                                        const Tensor* robust_tokens) {
  ad::Tape tape;
  ViTVars w = bind(tape, params, false);
  std::optional<Var> rt;
  if (robust_tokens && !robust_tokens->empty()) rt = tape.constant(*robust_tokens);
  ops::CleanContext ctx;
  ForwardOptions opt;
  opt.capture = &ctx;
  auto mods = ops::neutral_schedule(sz(cfg.num_layers));
  vit_forward(cfg, w, tape.constant(image), mods, rt, opt);
  return ctx;
}

// ---- VisionTransformer ----

VisionTransformer::VisionTransformer(ViTConfig cfg, ViTParams params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  check_params(cfg_, params_);
}

Shape VisionTransformer::input_shape() const {
  return {sz(cfg_.image_size), sz(cfg_.image_size), sz(cfg_.channels)};
}

nlohmann::json VisionTransformer::config_json() const { return cfg_.to_json(); }

std::unique_ptr<Classifier> VisionTransformer::clone() const {
  return std::make_unique<VisionTransformer>(*this);
}

std::vector<NamedTensor> VisionTransformer::parameters() {
  std::vector<NamedTensor> out;
  ViTParams::visit(params_, [&](const std::string& n, Tensor& t) { out.push_back({n, &t}); });
  return out;
}

Var VisionTransformer::forward(ad::Tape&, std::span<const Var> params, const Var& image) const {
  ViTVars w = vit::bind(params, params_.blocks.size());
  auto mods = ops::neutral_schedule(sz(cfg_.num_layers));
  return vit_forward(cfg_, w, image, mods);
}

}  // namespace rvit::vit
