#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvit/config.hpp"
#include "rvit/dataset.hpp"
#include "rvit/eval.hpp"

namespace rvit::pipeline {

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;    // over coordinates with |grad| >= kGradFloor
  double max_abs_error = 0.0;    // over the remaining coordinates
  std::size_t checked = 0;
  std::size_t below_floor = 0;

  bool passed(double rel_tol = 1e-5, double abs_tol = 1e-8) const {
    return max_rel_error < rel_tol && max_abs_error < abs_tol;
  }
};

inline constexpr double kGradFloor = 1e-3;

/// Finite-difference checks (h = 1e-6) for every autodiff primitive and for a
/// small ViT: image gradients under each redundancy op with frozen streams,
/// robust tokens as leaves, and parameter gradients.
std::vector<GradcheckEntry> gradcheck_suite(std::uint64_t seed);

/// Small ViT used by the gradient suite.
vit::ViTConfig gradcheck_vit_config();

/// Shapes set or record file, per the dataset section.
data::Dataset load_dataset(const io::ExperimentConfig& cfg);

using Log = std::function<void(const std::string&)>;

/// Each command writes its artifacts into out_dir and returns their paths.
struct Artifacts {
  std::vector<std::string> files;
  nlohmann::json summary = nlohmann::json::object();
};

Artifacts gen_data(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log = {});
Artifacts train_zoo(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log = {});
/// Needs <out_dir>/<surrogate>.rvit (and surrogate_robust.rvit for global robust mode).
Artifacts attack(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log = {});
/// Needs the zoo checkpoints and adv.advb.
Artifacts evaluate(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log = {});
Artifacts probe(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log = {});
Artifacts robustify(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log = {});
Artifacts gradcheck(const io::ExperimentConfig& cfg, const std::string& out_dir, const Log& log = {});

/// Loads every zoo checkpoint from out_dir in config order.
std::vector<eval::ZooMember> load_zoo(const io::ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace rvit::pipeline
