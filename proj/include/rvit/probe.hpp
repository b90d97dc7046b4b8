#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvit/vit.hpp"

namespace rvit::probe {

enum class ProbeKind { token_drop, attn_zero, head_drop, ffn_drop };

inline constexpr ProbeKind kAllProbes[] = {ProbeKind::token_drop, ProbeKind::attn_zero, ProbeKind::head_drop,
                                           ProbeKind::ffn_drop};

std::string_view probe_name(ProbeKind k);
ProbeKind probe_from_name(std::string_view name);

struct ProbePoint {
  double ratio = 0.0;
  double accuracy = 0.0;  // mean over draws
  double stddev = 0.0;
};

/// Ablation for one draw: token-drop removes ceil(r N) patches (CLS kept),
/// head-drop disables ceil(r H) heads per layer, ffn-drop zeroes ceil(r F)
/// hidden units per layer. attn-zero is handled through sparsify mods.
vit::Ablation draw_ablation(const vit::ViTConfig& cfg, ProbeKind kind, double ratio, Stream& rng);

/// Accuracy curve, each point averaged over `draws` seeded mask draws.
/// Throws ConfigError for ratios outside [0, 1).
std::vector<ProbePoint> redundancy_probe(const vit::VisionTransformer& model, ProbeKind kind,
                                         std::span<const double> ratios, std::span<const Tensor> images,
                                         std::span<const int> labels, std::uint64_t seed, int draws = 3);

/// "ratio,accuracy,stddev" rows.
std::string curve_csv(std::span<const ProbePoint> curve);
nlohmann::json curve_json(std::span<const ProbePoint> curve);

}  // namespace rvit::probe
