// Command-line front end for the experiment harness.
//
//   spinconc exact --model sk --n 12 --beta 1 --seed 7 --out results
//   spinconc concentration --config conc.cfg --samples 50
//   spinconc run --config any.cfg          (experiment taken from the file)
//   spinconc rerun --manifest results/gg/manifest.json
//
// Every flag has a config-file key of the same name (without dashes). Flags
// given on the command line override keys from --config.
//
// Exit status: 0 all audits passed, 1 an audit failed, 2 invalid
// configuration, 3 I/O or resource error, 4 rerun produced different files.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "spinconc/harness.hpp"

namespace {

struct Flag {
  const char* key;
  const char* help;
};

constexpr Flag kFlags[] = {
    {"model", "sk | field"},
    {"n", "system size"},
    {"ns", "comma-separated system sizes"},
    {"beta", "inverse temperature"},
    {"betas", "ladder START:STOP:STEP"},
    {"h", "field strength (model=field)"},
    {"c", "exponent c of lambda_N = N^-c"},
    {"cprime", "exponent c' of N^-c'"},
    {"lambda0", "lambda0 for the moment bound"},
    {"window", "half-width of the beta window"},
    {"eref", "reference energy: plugin | VALUE"},
    {"samples", "disorder samples"},
    {"kind", "audit kind: tail | moment | sandwich"},
    {"epsilons", "comma-separated epsilon grid"},
    {"lambdas", "comma-separated lambda grid"},
    {"beta-prime", "beta' <= beta for the sandwich audit"},
    {"replicas", "number of replicas n"},
    {"phi", "overlap function: 1 | r2 | abs | poly:a0,a1,... [@p,q]"},
    {"mode", "exact | mc | auto"},
    {"sweeps", "Monte Carlo sweeps"},
    {"chains", "independent chains (ladders)"},
    {"thin", "sweeps between retained samples"},
    {"burn-in", "burn-in fraction"},
    {"ti", "thermodynamic integration: true | false"},
    {"limit", "largest N for exact enumeration"},
    {"threads", "worker threads (0 = all cores)"},
    {"seed", "master seed"},
    {"out", "output root directory"},
    {"name", "run name (output subdirectory)"},
};

struct Invocation {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  CLI::Option* config_option = nullptr;
};

void add_flags(CLI::App* cmd, Invocation& inv) {
  for (const auto& f : kFlags) {
    inv.options[f.key] = cmd->add_option(std::string("--") + f.key, inv.values[f.key], f.help);
  }
  inv.config_option = cmd->add_option("--config", inv.config_path, "key = value configuration file");
}

spinconc::KeyValues collect(const Invocation& inv, const std::string& experiment) {
  spinconc::KeyValues kv;
  if (inv.config_option->count() > 0) kv = spinconc::parse_key_values(spinconc::read_text(inv.config_path));
  if (!experiment.empty()) {
    if (kv.contains("experiment") && kv["experiment"] != experiment) {
      throw spinconc::InvalidArgument("config file is for experiment '" + kv["experiment"] + "', not '" + experiment +
                                      "'");
    }
    kv["experiment"] = experiment;
  }
  for (const auto& [key, opt] : inv.options) {
    if (opt->count() == 0) continue;
    // a size on the command line replaces a size list from the file, and vice versa
    if (key == "n") kv.erase("ns");
    if (key == "ns") kv.erase("n");
    kv[key] = inv.values.at(key);
  }
  return kv;
}

int report(const spinconc::RunManifest& m) {
  std::cout << "wrote " << m.files.size() << " files and manifest.json to " << m.directory.string() << "\n";
  std::cout << "audits: " << m.audits.checked << " checked, " << m.audits.failed << " failed\n";
  for (const auto& f : m.audits.failures) std::cout << "  FAIL " << f << "\n";
  return m.audits.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-N concentration and replica-identity experiments for mean-field spin glasses"};
  app.set_version_flag("--version", std::string(spinconc::kSoftwareVersion));
  // --h is the field strength, so help is long-form only
  app.set_help_flag("--help", "print this help message and exit");
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> experiments{
      {"exact", "exact enumeration: free energy, energy moments, histogram"},
      {"concentration", "concentration-set audit over a disorder ensemble"},
      {"audit", "tail, moment or sandwich inequality audit"},
      {"gg", "Ghirlanda-Guerra residual and integration-by-parts check"},
      {"sample", "parallel-tempering sampling with traces"},
      {"sweep", "N-sweep trend tables"},
  };
  std::map<std::string, Invocation> invocations;
  std::map<std::string, CLI::App*> commands;
  for (const auto& [name, help] : experiments) {
    commands[name] = app.add_subcommand(name, help);
    add_flags(commands[name], invocations[name]);
  }
  auto* run = app.add_subcommand("run", "run the experiment named in a config file");
  add_flags(run, invocations["run"]);
  invocations["run"].config_option->required();

  std::string manifest_path;
  std::string rerun_out;
  auto* rerun = app.add_subcommand("rerun", "re-execute a manifest and compare output hashes");
  rerun->add_option("--manifest", manifest_path, "manifest.json of an earlier run")->required();
  auto* rerun_out_opt = rerun->add_option("--out", rerun_out, "output root for the rerun (default: original)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (rerun->parsed()) {
      const auto result = spinconc::rerun_from_manifest(
          manifest_path, rerun_out_opt->count() ? std::optional<std::string>(rerun_out) : std::nullopt);
      const int status = report(result.rerun);
      if (!result.identical()) {
        for (const auto& f : result.mismatches) std::cout << "  DIFFERS " << f << "\n";
        std::cout << "rerun: " << result.mismatches.size() << " files differ from the manifest\n";
        return 4;
      }
      std::cout << "rerun: all " << result.original.files.size() << " files byte-identical\n";
      return status;
    }
    for (auto& [name, inv] : invocations) {
      const bool selected = name == "run" ? run->parsed() : commands[name]->parsed();
      if (!selected) continue;
      const auto kv = collect(inv, name == "run" ? std::string() : name);
      const auto cfg = spinconc::ExperimentConfig::from_keys(kv);
      return report(spinconc::run_experiment(cfg));
    }
  } catch (const spinconc::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
