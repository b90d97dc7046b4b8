#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rvit/attack.hpp"
#include "rvit/dataset.hpp"
#include "rvit/model.hpp"
#include "rvit/train.hpp"

namespace rvit::eval {

enum class RateFilter { all, clean_correct };

std::string_view filter_name(RateFilter f);
RateFilter filter_from_name(std::string_view name);

/// Fraction of examples the victim misclassifies. clean_correct keeps only
/// examples whose clean image the victim gets right (clean must then be given).
/// Throws UndefinedRateError when the filtered set is empty.
double attack_success_rate(const Classifier& victim, std::span<const Tensor> adv, std::span<const int> labels,
                           RateFilter filter = RateFilter::all, std::span<const Tensor> clean = {});

/// Arithmetic mean; throws UndefinedRateError on an empty row.
double row_average(std::span<const double> row);

/// Population standard deviation.
double stddev(std::span<const double> xs);

struct NamedModel {
  std::string name;
  const Classifier* model;
};

struct TransferReport {
  std::vector<std::string> surrogates;
  std::vector<std::string> victims;
  std::vector<std::vector<double>> asr;  // surrogate rows, victim columns
  std::vector<double> averages;          // row means
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  nlohmann::json extra = nlohmann::json::object();  // policy, losses, probes, comparisons

  void recompute_averages();
  nlohmann::json to_json() const;
};

/// Attacks the slice once per surrogate and scores every victim.
TransferReport transfer_matrix(std::span<const NamedModel> surrogates, std::span<const NamedModel> victims,
                               std::span<const Tensor> images, std::span<const int> labels,
                               const attack::AttackConfig& cfg, RateFilter filter = RateFilter::all);

/// Test-split indices chosen without replacement by (seed, image_subset).
std::vector<std::size_t> sample_test_subset(const data::Dataset& data, std::size_t count, std::uint64_t seed);

struct ZooSpec {
  std::string name;
  nlohmann::json model;  // classifier config
  std::uint64_t seed = 0;
};

/// Default zoo: surrogate ViT (L4/D32) plus victims vit L4/D32, L6/D32, L4/D48 and the CNN.
std::vector<ZooSpec> default_zoo();

struct ZooMember {
  std::string name;
  std::unique_ptr<Classifier> model;
  double clean_accuracy = 0.0;
};

/// Trains every member; throws TrainingError naming the first model below gate.
std::vector<ZooMember> train_zoo(const data::Dataset& data, std::span<const ZooSpec> specs,
                                 const train::TrainConfig& cfg, double gate);

/// MI-FGSM vs the configured method over several image-subset seeds.
struct MethodComparison {
  std::vector<std::string> victims;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> mi;    // seed x victim
  std::vector<std::vector<double>> ours;  // seed x victim
  std::vector<double> mi_mean, ours_mean, mi_std, ours_std;
  double mi_avg = 0.0, ours_avg = 0.0;

  int victims_improved() const;
  double mean_lift() const { return ours_avg - mi_avg; }
  nlohmann::json to_json() const;
};

MethodComparison compare_methods(const vit::VisionTransformer& surrogate, std::span<const NamedModel> victims,
                                 const data::Dataset& data, std::size_t images_per_seed,
                                 const attack::AttackConfig& ours, std::span<const std::uint64_t> seeds,
                                 const robust::RobustTokens* global_tokens = nullptr);

/// Mean black-box ASR over victims for one attack config on one slice.
double mean_victim_asr(const Classifier& surrogate, std::span<const NamedModel> victims, std::span<const Tensor> images,
                       std::span<const int> labels, const attack::AttackConfig& cfg,
                       const robust::RobustTokens* global_tokens = nullptr);

}  // namespace rvit::eval
