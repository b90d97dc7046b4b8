#include "rvit/probe.hpp"

#include <cmath>
#include <cstdio>

#include "rvit/error.hpp"
#include "rvit/kernels.hpp"
#include "rvit/rng.hpp"

namespace rvit::probe {

std::string_view probe_name(ProbeKind k) {
  switch (k) {
    case ProbeKind::token_drop: return "token-drop";
    case ProbeKind::attn_zero: return "attn-zero";
    case ProbeKind::head_drop: return "head-drop";
    case ProbeKind::ffn_drop: return "ffn-drop";
  }
  return "?";
}

ProbeKind probe_from_name(std::string_view name) {
  for (ProbeKind k : kAllProbes)
    if (probe_name(k) == name) return k;
  throw ConfigError("unknown probe '" + std::string(name) + "'");
}

namespace {

std::vector<int> sorted_sample(int n, int k, Stream& rng) {
  std::vector<int> out;
  for (std::size_t i : rng.sample_without_replacement(static_cast<std::size_t>(n), static_cast<std::size_t>(k)))
    out.push_back(static_cast<int>(i));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

vit::Ablation draw_ablation(const vit::ViTConfig& cfg, ProbeKind kind, double ratio, Stream& rng) {
  vit::Ablation a;
  const int layers = cfg.num_layers;
  switch (kind) {
    case ProbeKind::token_drop: {
      const int n = cfg.num_patches();
      const int drop = ops::ratio_count(ratio, n);
      if (drop == 0) break;
      std::vector<int> dropped = sorted_sample(n, drop, rng);
      std::vector<int> kept;
      for (int p = 0; p < n; ++p)
        if (!std::binary_search(dropped.begin(), dropped.end(), p)) kept.push_back(p + 1);
      a.kept_patches = kept;
      break;
    }
    case ProbeKind::head_drop: {
      const int k = ops::ratio_count(ratio, cfg.num_heads);
      if (k == 0) break;
      for (int l = 0; l < layers; ++l) a.disabled_heads.push_back(sorted_sample(cfg.num_heads, k, rng));
      break;
    }
    case ProbeKind::ffn_drop: {
      const int k = ops::ratio_count(ratio, cfg.ffn_hidden);
      if (k == 0) break;
      for (int l = 0; l < layers; ++l) {
        Tensor mask = Tensor::full({static_cast<std::size_t>(cfg.ffn_hidden)}, 1.0);
        for (int u : sorted_sample(cfg.ffn_hidden, k, rng)) mask[static_cast<std::size_t>(u)] = 0.0;
        a.ffn_unit_masks.push_back(mask);
      }
      break;
    }
    case ProbeKind::attn_zero: break;
  }
  return a;
}

std::vector<ProbePoint> redundancy_probe(const vit::VisionTransformer& model, ProbeKind kind,
                                         std::span<const double> ratios, std::span<const Tensor> images,
                                         std::span<const int> labels, std::uint64_t seed, int draws) {
  if (images.size() != labels.size()) throw InputError("redundancy_probe: images and labels differ in length");
  if (images.empty()) throw InputError("redundancy_probe: empty test slice");
  if (draws < 1) throw ConfigError("redundancy_probe: draws must be >= 1");
  const auto& cfg = model.config();
  std::vector<ProbePoint> curve;
  for (std::size_t ri = 0; ri < ratios.size(); ++ri) {
    const double r = ratios[ri];
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("probe ratios must lie in [0, 1)");
    std::vector<double> accs;
    std::size_t total_correct = 0;
    for (int d = 0; d < draws; ++d) {
      const std::uint64_t key = derive(seed, {static_cast<std::uint64_t>(Domain::probe),
                                              static_cast<std::uint64_t>(kind), ri, static_cast<std::uint64_t>(d)});
      Stream rng(key);
      const vit::Ablation ablation = draw_ablation(cfg, kind, r, rng);
      std::vector<int> correct(images.size(), 0);
      kernels::parallel_for(images.size(), [&](std::size_t i) {
        ops::BlockModSchedule mods = ops::neutral_schedule(static_cast<std::size_t>(cfg.num_layers));
        if (kind == ProbeKind::attn_zero && r > 0.0) {
          for (std::size_t l = 0; l < mods.size(); ++l) {
            ops::OpParams p;
            p.sparsify.r = r;
            mods[l].ops.push_back({ops::OpKind::sparsify, p, derive(key, {i, l})});
          }
        }
        ad::Tape tape;
        vit::ViTVars w = vit::bind(tape, model.params(), false);
        vit::ForwardOptions opt;
        opt.ablation = &ablation;
        ad::Var logits = vit::vit_forward(cfg, w, tape.constant(images[i]), mods, std::nullopt, opt);
        correct[i] = argmax(logits.value().data()) == labels[i] ? 1 : 0;
      });
      std::size_t c = 0;
      for (int v : correct) c += static_cast<std::size_t>(v);
      total_correct += c;
      accs.push_back(static_cast<double>(c) / static_cast<double>(images.size()));
    }
    const double mean = static_cast<double>(total_correct) / static_cast<double>(images.size() * accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    curve.push_back({r, mean, std::sqrt(var / static_cast<double>(accs.size()))});
  }
  return curve;
}

std::string curve_csv(std::span<const ProbePoint> curve) {
  std::string out = "ratio,accuracy,stddev\n";
  char buf[96];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g\n", p.ratio, p.accuracy, p.stddev);
    out += buf;
  }
  return out;
}

nlohmann::json curve_json(std::span<const ProbePoint> curve) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : curve) j.push_back({{"ratio", p.ratio}, {"accuracy", p.accuracy}, {"stddev", p.stddev}});
  return j;
}

}  // namespace rvit::probe
