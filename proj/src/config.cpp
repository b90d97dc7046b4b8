#include "rvit/config.hpp"

#include <cstdio>

#include "rvit/checkpoint.hpp"
#include "rvit/error.hpp"

namespace rvit::io {

namespace {

template <class F>
void for_keys(const nlohmann::json& j, const std::string& where, F&& f) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!f(k, v)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

nlohmann::json zoo_json(const ZooConfig& z) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : z.models) models.push_back({{"name", m.name}, {"model", m.model}, {"seed", m.seed}});
  return {{"models", models}, {"surrogate", z.surrogate}, {"accuracy_gate", z.accuracy_gate}};
}

ZooConfig zoo_from_json(const nlohmann::json& j) {
  ZooConfig z;
  for_keys(j, "zoo", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "models") {
      z.models.clear();
      for (const auto& m : v) {
        eval::ZooSpec s;
        for_keys(m, "zoo.models[]", [&](const std::string& mk, const nlohmann::json& mv) {
          if (mk == "name") s.name = mv.get<std::string>();
          else if (mk == "model") s.model = mv;
          else if (mk == "seed") s.seed = mv.get<std::uint64_t>();
          else return false;
          return true;
        });
        make_classifier(s.model);  // validates the model config
        z.models.push_back(s);
      }
    } else if (k == "surrogate") z.surrogate = v.get<std::string>();
    else if (k == "accuracy_gate") z.accuracy_gate = v.get<double>();
    else return false;
    return true;
  });
  return z;
}

}  // namespace

attack::AttackConfig default_attack_config() {
  attack::AttackConfig a;
  a.ops = ops::default_attack_params();
  return a;
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  attack.seed = s;
}

void ExperimentConfig::validate() const {
  if (dataset.record_file.empty() && (dataset.n <= 0 || dataset.n % 10 != 0))
    throw ConfigError("dataset.n must be a positive multiple of 10");
  if (zoo.models.empty()) throw ConfigError("zoo.models is empty");
  bool found = false;
  for (const auto& m : zoo.models) found = found || m.name == zoo.surrogate;
  if (!found) throw ConfigError("zoo.surrogate '" + zoo.surrogate + "' is not a zoo model");
  train.validate();
  attack.validate();
  if (eval.images < 1) throw ConfigError("eval.images must be >= 1");
  if (eval.seeds.empty()) throw ConfigError("eval.seeds is empty");
  if (probe.images < 1 || probe.draws < 1) throw ConfigError("probe.images and probe.draws must be >= 1");
  for (double r : probe.ratios)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("probe ratios must lie in [0, 1)");
  if (calibration < 1) throw ConfigError("calibration must be >= 1");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json a = attack.to_json();
  nlohmann::json ops = a["ops"], policy = a["policy"], robust = a["robust"];
  a.erase("ops");
  a.erase("policy");
  a.erase("robust");
  a.erase("seed");
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : probe.kinds) kinds.push_back(probe::probe_name(k));
  nlohmann::json ds{{"n", dataset.n}, {"seed", dataset.seed}};
  if (!dataset.record_file.empty()) ds["record_file"] = dataset.record_file;
  return {{"dataset", ds},
          {"zoo", zoo_json(zoo)},
          {"train", train.to_json()},
          {"attack", a},
          {"ops", ops},
          {"policy", policy},
          {"robust", robust},
          {"eval", {{"images", eval.images}, {"filter", eval::filter_name(eval.filter)}, {"seeds", eval.seeds}}},
          {"probe", {{"kinds", kinds}, {"ratios", probe.ratios}, {"images", probe.images}, {"draws", probe.draws}}},
          {"calibration", calibration},
          {"paths", {{"out_dir", out_dir}}},
          {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    nlohmann::json attack = nlohmann::json::object();
    for_keys(j, "", [&](const std::string& k, const nlohmann::json& v) {
      if (k == "dataset") {
        for_keys(v, "dataset", [&](const std::string& dk, const nlohmann::json& dv) {
          if (dk == "n") c.dataset.n = dv.get<int>();
          else if (dk == "seed") c.dataset.seed = dv.get<std::uint64_t>();
          else if (dk == "record_file") c.dataset.record_file = dv.get<std::string>();
          else return false;
          return true;
        });
      } else if (k == "zoo") c.zoo = zoo_from_json(v);
      else if (k == "train") c.train = train::TrainConfig::from_json(v);
      else if (k == "attack") {
        for_keys(v, "attack", [&](const std::string& ak, const nlohmann::json& av) {
          if (ak == "ops" || ak == "policy" || ak == "robust" || ak == "seed") return false;
          attack[ak] = av;
          return true;
        });
      } else if (k == "ops" || k == "policy" || k == "robust") attack[k] = v;
      else if (k == "eval") {
        for_keys(v, "eval", [&](const std::string& ek, const nlohmann::json& ev) {
          if (ek == "images") c.eval.images = ev.get<int>();
          else if (ek == "filter") c.eval.filter = eval::filter_from_name(ev.get<std::string>());
          else if (ek == "seeds") c.eval.seeds = ev.get<std::vector<std::uint64_t>>();
          else return false;
          return true;
        });
      } else if (k == "probe") {
        for_keys(v, "probe", [&](const std::string& pk, const nlohmann::json& pv) {
          if (pk == "kinds") {
            c.probe.kinds.clear();
            for (const auto& n : pv) c.probe.kinds.push_back(probe::probe_from_name(n.get<std::string>()));
          } else if (pk == "ratios") c.probe.ratios = pv.get<std::vector<double>>();
          else if (pk == "images") c.probe.images = pv.get<int>();
          else if (pk == "draws") c.probe.draws = pv.get<int>();
          else return false;
          return true;
        });
      } else if (k == "calibration") c.calibration = v.get<int>();
      else if (k == "paths") {
        for_keys(v, "paths", [&](const std::string& pk, const nlohmann::json& pv) {
          if (pk != "out_dir") return false;
          c.out_dir = pv.get<std::string>();
          return true;
        });
      } else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else return false;
      return true;
    });
    if (!attack.contains("ops")) attack["ops"] = ops::default_attack_params().to_json();
    c.attack = attack::AttackConfig::from_json(attack);
    c.set_seed(c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) { return a.to_json() == b.to_json(); }

ExperimentConfig load_config(const std::string& path) {
  auto bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rvit::io
