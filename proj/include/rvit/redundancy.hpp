#pragma once

// Block-level redundancy operations applied inside the surrogate ViT during an
// attack: attention sparsification, head permutation, clean-token injection
// and the ghost mixture-of-experts FFN. Each op is a pure transform of its
// inputs and a dedicated RNG stream.

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "rvit/autodiff.hpp"
#include "rvit/rng.hpp"

namespace rvit::ops {

/// Pool order used by the policy matrix columns.
enum class OpKind : int { identity = 0, sparsify = 1, permute = 2, clean = 3, ghost_moe = 4 };

inline constexpr std::array<OpKind, 5> kOpPool = {OpKind::identity, OpKind::sparsify, OpKind::permute,
                                                  OpKind::clean, OpKind::ghost_moe};

std::string_view op_name(OpKind kind);
OpKind op_from_name(std::string_view name);

/// Position in the canonical in-block application order.
int canonical_rank(OpKind kind);

enum class MaskMode { multiplicative, neginf };

struct SparsifyParams {
  double r = 0.0;
  MaskMode mode = MaskMode::multiplicative;
  friend bool operator==(const SparsifyParams&, const SparsifyParams&) = default;
};
struct PermuteParams {
  double p = 0.0;
  double r = 0.0;
  friend bool operator==(const PermuteParams&, const PermuteParams&) = default;
};
struct CleanParams {
  double r = 0.0;
  friend bool operator==(const CleanParams&, const CleanParams&) = default;
};
struct MoeParams {
  int experts = 1;
  double drop = 0.0;
  friend bool operator==(const MoeParams&, const MoeParams&) = default;
};

struct OpParams {
  SparsifyParams sparsify;
  PermuteParams permute;
  CleanParams clean;
  MoeParams moe;

  /// Throws ConfigError when any parameter is outside its domain.
  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys throw ConfigError. Missing keys keep defaults.
  static OpParams from_json(const nlohmann::json& j);
  friend bool operator==(const OpParams&, const OpParams&) = default;
};

/// Strengths used by the full method when a config leaves ops unset.
OpParams default_attack_params();

struct OpInstance {
  OpKind kind = OpKind::identity;
  OpParams params;
  std::uint64_t stream = 0;
};

/// Active transforms of one block, in canonical order. Identity never appears.
struct BlockMods {
  std::vector<OpInstance> ops;

  const OpInstance* find(OpKind kind) const;
  bool empty() const { return ops.empty(); }
};

using BlockModSchedule = std::vector<BlockMods>;

BlockModSchedule neutral_schedule(std::size_t layers);

/// Sorts sampled ops into canonical order. Throws ContractError on duplicate kinds.
BlockMods compose_block_mods(std::vector<OpInstance> sampled);

/// Benign activations entering each block, captured from an unmodified
/// forward pass of the clean image. Used as constants.
struct CleanContext {
  std::vector<Tensor> block_inputs;  // per layer, (1 + N) x D
  std::size_t patch_tokens = 0;

  bool empty() const { return block_inputs.empty(); }
};

/// ceil(r * n) with a guard against representation error in r * n.
int ratio_count(double r, int n);

// ---- draws (exposed so tests can replay a stream) ----

/// Bernoulli(1 - r) keep-mask with the given shape.
Tensor draw_keep_mask(const Shape& shape, double r, Stream& rng);

/// Permutation over heads: identity unless the layer is selected with
/// probability p, in which case ceil(r * heads) heads are chosen and shuffled.
std::vector<int> draw_head_permutation(int heads, double p, double r, Stream& rng);

/// Patch-token indices (1-based, CLS excluded) chosen for clean injection.
std::vector<int> draw_clean_indices(int patch_tokens, double r, Stream& rng);

// ---- transforms ----

/// logits: H x T x T. Multiplies by a fresh mask or, in neginf mode, sets
/// dropped entries to -1e9.
ad::Var sparsify_attention(const ad::Var& logits, const SparsifyParams& params, Stream& rng);

/// logits: H x T x T. Exchanges whole per-head logit matrices.
ad::Var permute_heads(const ad::Var& logits, const PermuteParams& params, Stream& rng);

/// Appends ceil(r * N) clean patch activations of this layer as constant rows.
ad::Var inject_clean_tokens(const ad::Var& z, const CleanContext& clean, std::size_t layer,
                            const CleanParams& params, Stream& rng);

/// Average of q ~ U{1..E} dropout replicas of the FFN. Masks act on hidden
/// units after GELU, scaled by 1/(1-d), shared across tokens.
ad::Var ghost_moe(const ad::Var& z, const ad::Var& w1, const ad::Var& b1, const ad::Var& w2,
                  const ad::Var& b2, const MoeParams& params, Stream& rng);

}  // namespace rvit::ops
