#include "bgm/commands.hpp"
#include "bgm/config.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

namespace {

struct Subcommand {
  const char* name;
  const char* help;
  int (*run)(const bgm::RunConfig&, std::ostream&);
};

constexpr Subcommand kSubcommands[] = {
    {"train", "fit a model to a CSV and write a checkpoint plus training trace", bgm::cmd_train},
    {"predict", "predict the B columns of each row from its A columns", bgm::cmd_predict},
    {"impute", "fill empty cells of a CSV with posterior means", bgm::cmd_impute},
    {"benchmark", "run the simulation benchmark and write a report", bgm::cmd_benchmark},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian generative modeling: train once, condition on any subset of columns"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> overrides;

  std::map<std::string, CLI::App*> subs;
  for (const Subcommand& s : kSubcommands) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "flat JSON config file");
    for (const std::string& key : bgm::config_keys())
      sub->add_option_function<std::string>(
          "--" + key, [&overrides, key](const std::string& v) { overrides[key] = v; },
          bgm::config_key_help(key));
    subs[s.name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return bgm::kExitInput;
  }

  bgm::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = bgm::load_config(config_path);
    for (const auto& [key, value] : overrides) bgm::set_config_text(cfg, key, value);
  } catch (const std::exception& e) {
    return bgm::exit_code_for(e, std::cerr);
  }

  for (const Subcommand& s : kSubcommands)
    if (subs[s.name]->parsed()) return s.run(cfg, std::cerr);
  return bgm::kExitInput;
}
