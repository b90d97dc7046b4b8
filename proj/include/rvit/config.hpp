#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvit/attack.hpp"
#include "rvit/eval.hpp"
#include "rvit/probe.hpp"
#include "rvit/train.hpp"

namespace rvit::io {

struct DatasetConfig {
  int n = 5000;
  std::uint64_t seed = 1;
  std::string record_file;  // optional 3,073-byte record file instead of the shapes set
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct ZooConfig {
  std::vector<eval::ZooSpec> models = eval::default_zoo();
  std::string surrogate = "surrogate";
  double accuracy_gate = 0.8;
};

struct EvalConfig {
  int images = 500;
  eval::RateFilter filter = eval::RateFilter::all;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct ProbeConfig {
  std::vector<probe::ProbeKind> kinds{std::begin(probe::kAllProbes), std::end(probe::kAllProbes)};
  std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int images = 500;
  int draws = 3;
  friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

/// Attack section defaults: MI-FGSM, with the full-method op strengths preset.
attack::AttackConfig default_attack_config();

struct ExperimentConfig {
  DatasetConfig dataset;
  ZooConfig zoo;
  train::TrainConfig train;
  attack::AttackConfig attack = default_attack_config();  // carries ops, policy and robust sections
  EvalConfig eval;
  ProbeConfig probe;
  int calibration = 128;  // images for global robust tokens
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  /// Applies the global seed to every seeded component that follows it.
  void set_seed(std::uint64_t s);
  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys and type mismatches throw ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

ExperimentConfig load_config(const std::string& path);

/// FNV-1a 64 over the compact sorted-key JSON, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace rvit::io
