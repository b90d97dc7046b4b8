#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rvit/model.hpp"
#include "rvit/redundancy.hpp"

namespace rvit::vit {

struct ViTConfig {
  int image_size = 32;
  int channels = 3;
  int patch_size = 8;
  int hidden_dim = 32;
  int num_layers = 4;
  int num_heads = 4;
  int ffn_hidden = 64;
  int num_classes = 10;
  double ln_eps = 1e-5;

  int head_dim() const { return hidden_dim / num_heads; }
  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * channels; }

  /// Throws ConfigError on non-positive fields or indivisible sizes.
  void validate() const;

  nlohmann::json to_json() const;
  static ViTConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

template <class T>
struct BlockWeights {
  T ln1_gamma, ln1_beta;
  T w_q, w_k, w_v, w_o;
  T ln2_gamma, ln2_beta;
  T w1, b1, w2, b2;

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "ln1.gamma", self.ln1_gamma);
    f(prefix + "ln1.beta", self.ln1_beta);
    f(prefix + "attn.w_q", self.w_q);
    f(prefix + "attn.w_k", self.w_k);
    f(prefix + "attn.w_v", self.w_v);
    f(prefix + "attn.w_o", self.w_o);
    f(prefix + "ln2.gamma", self.ln2_gamma);
    f(prefix + "ln2.beta", self.ln2_beta);
    f(prefix + "ffn.w1", self.w1);
    f(prefix + "ffn.b1", self.b1);
    f(prefix + "ffn.w2", self.w2);
    f(prefix + "ffn.b2", self.b2);
  }
};

/// All learnable weights. T = Tensor for storage, T = ad::Var once bound to a tape.
template <class T>
struct ViTWeights {
  T patch_embed;  // (P*P*C) x D
  T cls_token;    // D
  T pos_embed;    // N x D
  std::vector<BlockWeights<T>> blocks;
  T lnf_gamma, lnf_beta;
  T head_w;  // D x classes
  T head_b;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    f(std::string("patch_embed"), self.patch_embed);
    f(std::string("cls_token"), self.cls_token);
    f(std::string("pos_embed"), self.pos_embed);
    for (std::size_t l = 0; l < self.blocks.size(); ++l)
      BlockWeights<T>::visit(self.blocks[l], "blocks." + std::to_string(l) + ".", f);
    f(std::string("lnf.gamma"), self.lnf_gamma);
    f(std::string("lnf.beta"), self.lnf_beta);
    f(std::string("head.w"), self.head_w);
    f(std::string("head.b"), self.head_b);
  }
};

using ViTParams = ViTWeights<Tensor>;
using ViTVars = ViTWeights<ad::Var>;

/// Zero-valued parameters with the configured shapes.
ViTParams zero_params(const ViTConfig& cfg);
/// Seeded initialization: projections ~ N(0, 1/fan_in), embeddings ~ N(0, 0.02^2),
/// LN gamma = 1, biases 0.
ViTParams init_params(const ViTConfig& cfg, std::uint64_t seed);
/// Throws DimensionError when any tensor has the wrong shape.
void check_params(const ViTConfig& cfg, const ViTParams& params);

ViTVars bind(ad::Tape& tape, const ViTParams& params, bool trainable);
ViTVars bind(std::span<const ad::Var> flat, std::size_t layers);

enum class TokenRole : std::uint8_t { cls, patch, robust, injected_clean };

struct TokenSequence {
  ad::Var tokens;  // T x D
  std::vector<TokenRole> roles;

  std::size_t size() const { return roles.size(); }
};

/// Inference-time ablations used by the redundancy probes.
struct Ablation {
  std::optional<std::vector<int>> kept_patches;  // 1-based patch indices; unset keeps all
  std::vector<std::vector<int>> disabled_heads;  // per layer
  std::vector<Tensor> ffn_unit_masks;            // per layer, ffn_hidden entries in {0, 1}
};

struct ForwardOptions {
  const ops::CleanContext* clean = nullptr;  // required when any block injects clean tokens
  ops::CleanContext* capture = nullptr;      // receives each block's input when set
  const Ablation* ablation = nullptr;
  std::vector<Tensor>* attention = nullptr;  // receives post-softmax H x T x T per layer
};

/// Image (H x W x C) -> [CLS, E*patch_i + p_i].
TokenSequence patch_embed(const ViTConfig& cfg, const ViTVars& w, const ad::Var& image);

/// Patch-major flattening order shared by patch_embed and its oracle:
/// element (patch n, (py * P + px) * C + c).
std::vector<std::int64_t> patch_gather_index(const ViTConfig& cfg);

TokenSequence append_robust_tokens(const TokenSequence& seq, const ad::Var& robust_tokens);

/// Multi-head attention over already-normalized tokens x (T x D).
ad::Var mha_forward(const ViTConfig& cfg, const BlockWeights<ad::Var>& w, const ad::Var& x,
                    const ops::BlockMods& mods, std::size_t layer, const ForwardOptions& opt = {});

/// FFN over already-normalized tokens, or the ghost-MoE replacement.
ad::Var ffn_forward(const ViTConfig& cfg, const BlockWeights<ad::Var>& w, const ad::Var& x,
                    const ops::BlockMods& mods, std::size_t layer, const ForwardOptions& opt = {});

/// Pre-norm residual block; injected clean tokens are removed before returning.
TokenSequence block_forward(const ViTConfig& cfg, const ViTVars& w, const TokenSequence& z,
                            std::size_t layer, const ops::BlockMods& mods, const ForwardOptions& opt = {});

/// Logits (num_classes) read from the CLS token. mods must hold exactly L entries.
ad::Var vit_forward(const ViTConfig& cfg, const ViTVars& w, const ad::Var& image,
                    std::span<const ops::BlockMods> mods, std::optional<ad::Var> robust_tokens = {},
                    const ForwardOptions& opt = {});

/// Captures the clean context for an image (identity mods, robust tokens if given).
ops::CleanContext capture_clean_context(const ViTConfig& cfg, const ViTParams& params, const Tensor& image,
                                        const Tensor* robust_tokens);

class VisionTransformer final : public Classifier {
 public:
  VisionTransformer(ViTConfig cfg, ViTParams params);
  VisionTransformer(ViTConfig cfg, std::uint64_t seed) : VisionTransformer(cfg, init_params(cfg, seed)) {}

  const ViTConfig& config() const { return cfg_; }
  const ViTParams& params() const { return params_; }
  ViTParams& params() { return params_; }

  std::string kind() const override { return "vit"; }
  int num_classes() const override { return cfg_.num_classes; }
  Shape input_shape() const override;
  nlohmann::json config_json() const override;
  std::unique_ptr<Classifier> clone() const override;
  std::vector<NamedTensor> parameters() override;
  ad::Var forward(ad::Tape& tape, std::span<const ad::Var> params, const ad::Var& image) const override;

 private:
  ViTConfig cfg_;
  ViTParams params_;
};

}  // namespace rvit::vit
