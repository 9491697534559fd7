#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "lino/errors.hpp"
#include "lino/workflows.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct Commands {
  std::string config;
  Overrides overrides;
};

// Each flag becomes a `key=value` override recorded as it is parsed, so later
// flags win over earlier ones and all of them win over the config file.
void add_setting(CLI::App* sub, Commands& cmds, const std::string& flag, const std::string& key,
                 const std::string& help) {
  sub->add_option_function<std::string>(
         flag, [&cmds, key](const std::string& v) { cmds.overrides.emplace_back(key, v); }, help)
      ->trigger_on_parse()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

void add_common(CLI::App* sub, Commands& cmds) {
  sub->add_option("--config", cmds.config, "key=value settings file (overridden by flags)");
  add_setting(sub, cmds, "--dataset", "dataset", "CSV path, or 'synth' for the built-in generator");
  add_setting(sub, cmds, "--target", "target", "comma-separated channels to keep");
  add_setting(sub, cmds, "--split", "split", "ratios | counts | ett_hourly | ett_minute");
  add_setting(sub, cmds, "--horizon", "horizon", "forecast horizon(s), comma-separated");
  add_setting(sub, cmds, "--lookback", "lookback", "lookback window length");
  add_setting(sub, cmds, "--blocks", "blocks", "number of LiNo blocks");
  add_setting(sub, cmds, "--dim", "dim", "embedding dimension");
  add_setting(sub, cmds, "--dropout", "dropout", "dropout rate");
  add_setting(sub, cmds, "--lr", "lr", "learning rate");
  add_setting(sub, cmds, "--batch", "batch", "batch size");
  add_setting(sub, cmds, "--epochs", "max_epochs", "maximum epochs");
  add_setting(sub, cmds, "--patience", "patience", "early-stopping patience");
  add_setting(sub, cmds, "--seed", "seed", "seed(s), comma-separated");
  add_setting(sub, cmds, "--variant", "variant", "lino | mu | raw | ln");
  add_setting(sub, cmds, "--ablate", "ablate", "full | no_li | no_no | no_te | no_fe | no_cd");
  add_setting(sub, cmds, "--alpha", "alpha", "noise coefficient(s), comma-separated");
  add_setting(sub, cmds, "--out", "out", "output root directory");
  add_setting(sub, cmds, "--name", "name", "run directory name under --out");
  add_setting(sub, cmds, "--checkpoint", "checkpoint", "checkpoint path");
  add_setting(sub, cmds, "--window", "window", "test window index (decompose)");
  add_setting(sub, cmds, "--channel", "channel", "channel index (decompose, probe)");
  sub->add_flag_callback("--unsafe-grid", [&cmds] { cmds.overrides.emplace_back("unsafe_grid", "true"); },
                         "allow settings outside the published search grid")
      ->trigger_on_parse();
  sub->add_option_function<std::vector<std::string>>(
         "--set",
         [&cmds](const std::vector<std::string>& items) {
           for (const auto& item : items) {
             const auto eq = item.find('=');
             if (eq == std::string::npos) throw lino::ConfigError("--set expects key=value, got '" + item + "'");
             cmds.overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
           }
         },
         "any config key as key=value")
      ->trigger_on_parse();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear/nonlinear residual decomposition forecaster"};
  app.require_subcommand(1);
  Commands cmds;
  const std::vector<std::pair<std::string, std::string>> subs{
      {"train", "train one model per horizon and seed"},
      {"evaluate", "test-split metrics of a checkpoint"},
      {"ablate", "train the full model and its five ablations"},
      {"noise", "train LiNo, Mu and RAW across noise levels"},
      {"decompose", "export per-level prediction components of one window"},
      {"probe", "recover the affine maps of the Li blocks and level predictions"},
      {"synth", "write the synthetic benchmark series"},
  };
  for (const auto& [name, help] : subs) add_common(app.add_subcommand(name, help), cmds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const lino::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto rc = lino::cli::build_run_config(command, cmds.config, cmds.overrides);
    lino::cli::run_command(rc, std::cout);
  } catch (const lino::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const lino::DimensionError& e) {
    std::cerr << "dimension error: " << e.what() << '\n';
    return 2;
  } catch (const lino::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const lino::IntegrityError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 3;
  } catch (const lino::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
