#include <spdlog/spdlog.h>

#ifdef FUSENET_CLI11_PACKAGE
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <cstdlib>
#include <deque>
#include <filesystem>

#include "commands.hpp"
#include "fusenet/errors.hpp"

using namespace fusenet;
using namespace fusenet::cli;

namespace {

void configure_logging() {
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  const char* level = std::getenv("FUSENET_LOG_LEVEL");
  if (!level) return;
  const auto parsed = spdlog::level::from_str(level);
  // from_str maps unknown names to off; only "off" itself should silence.
  if (parsed == spdlog::level::off && std::string(level) != "off") {
    spdlog::warn("FUSENET_LOG_LEVEL='{}' not recognized; using info", level);
    return;
  }
  spdlog::set_level(parsed);
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Depth completion with 2D-3D fuse blocks"};
  app.require_subcommand(1);

  std::string config_path;
  bool paper_scale = false;
  app.add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_flag("--paper-scale", paper_scale, "full-size model, schedule, batch and crop");
  auto* synthetic = app.add_flag("--synthetic", "alias for --data.synthetic");

  // One flag per config key, named exactly like the key. Values are kept as
  // text and applied after the file so flags take precedence.
  std::deque<std::string> flag_values;
  std::vector<std::pair<const RunConfig::Key*, CLI::Option*>> key_flags;
  for (const auto& key : RunConfig::keys()) {
    const std::string name = "--" + key.name;
    const std::string help = key.help + " [" + key.default_value + "]";
    CLI::Option* opt = nullptr;
    if (key.kind == RunConfig::Kind::Bool) {
      opt = app.add_flag(name, flag_values.emplace_back(), help);
    } else {
      opt = app.add_option(name, flag_values.emplace_back(), help);
    }
    opt->group("Config keys");
    key_flags.emplace_back(&key, opt);
  }

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Sub subs[] = {
      {"train", "two-phase training with per-epoch checkpoints", cmd_train},
      {"eval", "metrics against ground truth", cmd_eval},
      {"predict", "16-bit depth PNGs (and colorized PNGs with --viz)", cmd_predict},
      {"gradcheck", "finite-difference gradient suite", cmd_gradcheck},
      {"bench", "timing report", cmd_bench},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_code::kOk : exit_code::kConfig;
  }

  try {
    RunConfig cfg;
    if (paper_scale) cfg.apply_paper_scale();
    if (!config_path.empty()) cfg.merge_file(config_path);
    for (std::size_t i = 0; i < key_flags.size(); ++i) {
      const auto& [key, opt] = key_flags[i];
      if (opt->count() == 0) continue;
      cfg.set(key->name, key->kind == RunConfig::Kind::Bool ? "true" : flag_values[i]);
    }
    if (synthetic->count() > 0) cfg.set("data.synthetic", "true");

    for (const auto& s : subs) {
      if (app.got_subcommand(s.name)) return s.run(cfg);
    }
    return exit_code::kFailure;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return exit_code::kConfig;
  } catch (const DataError& e) {
    spdlog::error("data: {}", e.what());
    return exit_code::kData;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("data: {}", e.what());
    return exit_code::kData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code::kFailure;
  }
}
