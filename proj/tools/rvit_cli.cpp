#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rvit/config.hpp"
#include "rvit/error.hpp"
#include "rvit/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "global seed, overrides the config");
  cmd->add_option("--out", c.out, "output directory, overrides paths.out_dir");
  cmd->add_flag("-q,--quiet", c.quiet, "suppress progress output");
}

rvit::io::ExperimentConfig resolve(const Common& c) {
  rvit::io::ExperimentConfig cfg = c.config.empty() ? rvit::io::ExperimentConfig{} : rvit::io::load_config(c.config);
  if (c.seed) cfg.set_seed(*c.seed);
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rvit: redundancy-driven transfer attacks on toy vision transformers"};
  app.require_subcommand(1);
  Common common;

  using Command = rvit::pipeline::Artifacts (*)(const rvit::io::ExperimentConfig&, const std::string&,
                                                const rvit::pipeline::Log&);
  struct Entry {
    const char* name;
    const char* help;
    Command run;
  };
  const Entry entries[] = {
      {"gen-data", "render the synthetic shapes dataset", rvit::pipeline::gen_data},
      {"train-zoo", "train surrogate and victim models", rvit::pipeline::train_zoo},
      {"attack", "craft adversarial examples on the surrogate", rvit::pipeline::attack},
      {"evaluate", "score adversarial examples on every zoo model", rvit::pipeline::evaluate},
      {"probe", "redundancy probes on the surrogate", rvit::pipeline::probe},
      {"robustify", "train global robust tokens on calibration images", rvit::pipeline::robustify},
      {"gradcheck", "finite-difference gradient suite", rvit::pipeline::gradcheck},
  };
  for (const auto& e : entries) add_common(app.add_subcommand(e.name, e.help), common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << app.help();
    return 1;
  }

  for (const auto& e : entries) {
    if (!app.got_subcommand(e.name)) continue;
    try {
      const auto cfg = resolve(common);
      rvit::pipeline::Log log;
      if (!common.quiet) log = [](const std::string& m) { std::cout << m << '\n' << std::flush; };
      const auto result = e.run(cfg, cfg.out_dir, log);
      if (std::string(e.name) == "gradcheck" && !result.summary.value("passed", false)) {
        std::cerr << "error: gradient check exceeded tolerance\n";
        return 2;
      }
      if (!common.quiet)
        for (const auto& f : result.files) std::cout << "wrote " << f << '\n';
      return 0;
    } catch (const std::exception& ex) {
      std::cerr << "error: " << ex.what() << '\n';
      return 2;
    }
  }
  return 1;
}
