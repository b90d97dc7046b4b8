#include "rvit/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rvit/error.hpp"

namespace rvit::ops {

using ad::Var;

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::identity: return "identity";
    case OpKind::sparsify: return "sparsify";
    case OpKind::permute: return "permute";
    case OpKind::clean: return "clean";
    case OpKind::ghost_moe: return "moe";
  }
  return "?";
}

OpKind op_from_name(std::string_view name) {
  for (OpKind k : kOpPool)
    if (op_name(k) == name) return k;
  throw ConfigError("unknown op '" + std::string(name) + "'");
}

int canonical_rank(OpKind kind) {
  switch (kind) {
    case OpKind::identity: return 0;
    case OpKind::clean: return 1;
    case OpKind::permute: return 2;
    case OpKind::sparsify: return 3;
    case OpKind::ghost_moe: return 4;
  }
  return 5;
}

namespace {

bool unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void OpParams::validate() const {
  if (!unit(sparsify.r)) throw ConfigError("sparsify.r must lie in [0, 1]");
  if (!unit(permute.p) || !unit(permute.r)) throw ConfigError("permute.p and permute.r must lie in [0, 1]");
  if (!unit(clean.r)) throw ConfigError("clean.r must lie in [0, 1]");
  if (moe.experts < 1) throw ConfigError("moe.E must be at least 1");
  if (!(moe.drop >= 0.0 && moe.drop < 1.0)) throw ConfigError("moe.d must lie in [0, 1)");
}

nlohmann::json OpParams::to_json() const {
  return {{"sparsify", {{"r", sparsify.r}, {"mode", sparsify.mode == MaskMode::neginf ? "neginf" : "multiplicative"}}},
          {"permute", {{"p", permute.p}, {"r", permute.r}}},
          {"clean", {{"r", clean.r}}},
          {"moe", {{"E", moe.experts}, {"d", moe.drop}}}};
}

namespace {

template <class F>
void each_key(const nlohmann::json& j, const std::string& where, F&& f) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (auto& [k, v] : j.items())
    if (!f(k, v)) throw ConfigError("unknown key '" + where + "." + k + "'");
}

}  // namespace

OpParams OpParams::from_json(const nlohmann::json& j) {
  OpParams p;
  each_key(j, "ops", [&](const std::string& op, const nlohmann::json& body) {
    if (op == "sparsify") {
      each_key(body, "ops.sparsify", [&](const std::string& k, const nlohmann::json& v) {
        if (k == "r") p.sparsify.r = v.get<double>();
        else if (k == "mode") {
          auto m = v.get<std::string>();
          if (m == "multiplicative") p.sparsify.mode = MaskMode::multiplicative;
          else if (m == "neginf") p.sparsify.mode = MaskMode::neginf;
          else throw ConfigError("unknown sparsify mode '" + m + "'");
        } else return false;
        return true;
      });
    } else if (op == "permute") {
      each_key(body, "ops.permute", [&](const std::string& k, const nlohmann::json& v) {
        if (k == "p") p.permute.p = v.get<double>();
        else if (k == "r") p.permute.r = v.get<double>();
        else return false;
        return true;
      });
    } else if (op == "clean") {
      each_key(body, "ops.clean", [&](const std::string& k, const nlohmann::json& v) {
        if (k == "r") p.clean.r = v.get<double>();
        else return false;
        return true;
      });
    } else if (op == "moe") {
      each_key(body, "ops.moe", [&](const std::string& k, const nlohmann::json& v) {
        if (k == "E") p.moe.experts = v.get<int>();
        else if (k == "d") p.moe.drop = v.get<double>();
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  p.validate();
  return p;
}

const OpInstance* BlockMods::find(OpKind kind) const {
  for (const auto& op : ops)
    if (op.kind == kind) return &op;
  return nullptr;
}

OpParams default_attack_params() {
  OpParams p;
  p.sparsify.r = 0.1;
  p.permute = {0.3, 0.5};
  p.clean.r = 0.25;
  p.moe = {4, 0.1};
  return p;
}

BlockModSchedule neutral_schedule(std::size_t layers) { return BlockModSchedule(layers); }

BlockMods compose_block_mods(std::vector<OpInstance> sampled) {
  for (std::size_t i = 0; i < sampled.size(); ++i)
    for (std::size_t j = i + 1; j < sampled.size(); ++j)
      if (sampled[i].kind == sampled[j].kind)
        throw ContractError("compose_block_mods: duplicate op '" + std::string(op_name(sampled[i].kind)) + "'");
  BlockMods out;
  for (auto& op : sampled) {
    op.params.validate();
    if (op.kind != OpKind::identity) out.ops.push_back(op);
  }
  std::stable_sort(out.ops.begin(), out.ops.end(),
                   [](const OpInstance& a, const OpInstance& b) { return canonical_rank(a.kind) < canonical_rank(b.kind); });
  return out;
}

int ratio_count(double r, int n) {
  const double x = r * static_cast<double>(n);
  return std::clamp(static_cast<int>(std::ceil(x - 1e-9)), 0, n);
}

Tensor draw_keep_mask(const Shape& shape, double r, Stream& rng) {
  Tensor m(shape);
  for (double& v : m.storage()) v = rng.uniform() >= r ? 1.0 : 0.0;
  return m;
}

std::vector<int> draw_head_permutation(int heads, double p, double r, Stream& rng) {
  std::vector<int> perm(static_cast<std::size_t>(heads));
  std::iota(perm.begin(), perm.end(), 0);
  if (!(rng.uniform() < p)) return perm;
  const int k = ratio_count(r, heads);
  if (k < 2) return perm;
  std::vector<int> chosen = rng.sample_without_replacement(heads, k);
  std::vector<int> sources = chosen;
  rng.shuffle(sources);
  for (std::size_t i = 0; i < chosen.size(); ++i) perm[static_cast<std::size_t>(chosen[i])] = sources[i];
  return perm;
}

std::vector<int> draw_clean_indices(int patch_tokens, double r, Stream& rng) {
  std::vector<int> idx = rng.sample_without_replacement(patch_tokens, ratio_count(r, patch_tokens));
  for (int& i : idx) ++i;
  return idx;
}

Var sparsify_attention(const Var& logits, const SparsifyParams& params, Stream& rng) {
  if (params.r == 0.0) return logits;
  Tensor keep = draw_keep_mask(logits.shape(), params.r, rng);
  Var masked = ad::mask_multiply(logits, keep);
  if (params.mode == MaskMode::multiplicative) return masked;
  Tensor offset(logits.shape());
  for (std::size_t i = 0; i < offset.size(); ++i) offset[i] = keep[i] == 0.0 ? -1e9 : 0.0;
  return ad::add(masked, logits.tape()->constant(std::move(offset)));
}

Var permute_heads(const Var& logits, const PermuteParams& params, Stream& rng) {
  if (params.p == 0.0) return logits;
  const auto heads = static_cast<int>(logits.shape()[0]);
  std::vector<int> perm = draw_head_permutation(heads, params.p, params.r, rng);
  bool identity = true;
  for (int h = 0; h < heads; ++h) identity = identity && perm[static_cast<std::size_t>(h)] == h;
  if (identity) return logits;
  return ad::permute_blocks(logits, perm);
}

Var inject_clean_tokens(const Var& z, const CleanContext& clean, std::size_t layer, const CleanParams& params,
                        Stream& rng) {
  if (params.r == 0.0) return z;
  if (layer >= clean.block_inputs.size())
    throw StateError("no clean context captured for layer " + std::to_string(layer));
  const Tensor& src = clean.block_inputs[layer];
  const std::size_t d = src.shape()[1];
  std::vector<int> idx = draw_clean_indices(static_cast<int>(clean.patch_tokens), params.r, rng);
  if (idx.empty()) return z;
  Tensor rows({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.data().data() + static_cast<std::size_t>(idx[i]) * d, d, rows.data().data() + i * d);
  return ad::concat({z, z.tape()->constant(std::move(rows))}, 0);
}

Var ghost_moe(const Var& z, const Var& w1, const Var& b1, const Var& w2, const Var& b2, const MoeParams& params,
              Stream& rng) {
  if (params.experts < 1 || !(params.drop >= 0.0 && params.drop < 1.0))
    throw ContractError("ghost_moe: need E >= 1 and d in [0, 1)");
  Var h = ad::gelu(ad::add_row(ad::matmul(z, w1), b1));
  if (params.experts == 1 && params.drop == 0.0) return ad::add_row(ad::matmul(h, w2), b2);

  const int q = rng.uniform_int(1, params.experts);
  const std::size_t hidden = w1.shape()[1];
  const double keep_scale = 1.0 / (1.0 - params.drop);
  Var total;
  for (int e = 0; e < q; ++e) {
    Tensor mask({hidden});
    for (double& v : mask.storage()) v = rng.uniform() >= params.drop ? keep_scale : 0.0;
    Var out = ad::add_row(ad::matmul(ad::mul_row(h, z.tape()->constant(std::move(mask))), w2), b2);
    total = e == 0 ? out : ad::add(total, out);
  }
  return q == 1 ? total : ad::scale(total, 1.0 / q);
}

}  // namespace rvit::ops
