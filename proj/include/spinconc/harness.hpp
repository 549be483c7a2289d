#pragma once

// Experiment orchestration: key-value configuration, validation, the
// per-experiment pipelines, and the run manifest.
//
// Layout of a run: {out}/{name}/ holds the data files ({metric}-{N}.csv,
// {metric}-{N}.json, trend-{metric}.csv for N-sweeps) and manifest.json.
// Data files are assembled in memory after all samples finish and written by
// one thread, so their bytes depend only on the configuration.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spinconc/concentration.hpp"
#include "spinconc/error.hpp"
#include "spinconc/exact.hpp"
#include "spinconc/io.hpp"
#include "spinconc/mc.hpp"
#include "spinconc/model.hpp"
#include "spinconc/parallel.hpp"
#include "spinconc/replica.hpp"
#include "spinconc/rng.hpp"
#include "spinconc/stats.hpp"

#ifndef SPINCONC_VERSION
#define SPINCONC_VERSION "0.0.0"
#endif

namespace spinconc {

inline constexpr std::string_view kSoftwareVersion = SPINCONC_VERSION;

class ValidationError : public InvalidArgument {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : InvalidArgument(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string out = "invalid configuration:";
    for (const auto& s : p) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> problems_;
};

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; `#` starts a comment; blank lines ignored.
inline KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw InvalidArgument("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

inline std::string key_values_text(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

template <class T>
std::string join_numbers(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ',';
    if constexpr (std::is_floating_point_v<T>) out += format_double(xs[k]);
    else out += std::to_string(xs[k]);
  }
  return out;
}

}  // namespace detail

struct BetaRange {
  double start = 0.0;
  double stop = 0.0;
  double step = 0.0;

  static std::optional<BetaRange> parse(std::string_view s) {
    const auto parts = detail::split(s, ':');
    if (parts.size() != 3) return std::nullopt;
    const auto a = detail::parse_number<double>(parts[0]);
    const auto b = detail::parse_number<double>(parts[1]);
    const auto c = detail::parse_number<double>(parts[2]);
    if (!a || !b || !c) return std::nullopt;
    return BetaRange{*a, *b, *c};
  }
  std::string str() const { return format_double(start) + ":" + format_double(stop) + ":" + format_double(step); }
  TemperatureLadder ladder() const { return TemperatureLadder::range(start, stop, step); }
};

enum class Mode { Exact, MonteCarlo, Auto };

/// Every field corresponds to one CLI flag and one config-file key.
struct ExperimentConfig {
  std::string experiment;  // exact | concentration | audit | gg | sample | sweep
  std::string name;        // output subdirectory; defaults to `experiment`
  std::string model = "sk";
  double h = 1.0;
  std::vector<std::size_t> ns;
  double beta = 1.0;
  std::optional<BetaRange> betas;
  double c = kDefaultExponent;
  double cprime = kDefaultExponent;
  double lambda0 = 0.1;
  double window = kDefaultWindow;
  std::string eref = "plugin";
  std::size_t samples = 1;
  std::string kind = "tail";
  std::vector<double> epsilons{0.05, 0.1, 0.2, 0.3, 0.5};
  std::vector<double> lambdas{0.05, 0.1, 0.2, 0.3, 0.4};
  std::optional<double> beta_prime;
  std::size_t replicas = 2;
  std::string phi = "r2";
  std::string mode = "auto";
  std::size_t sweeps = 4000;
  std::size_t chains = 4;
  std::size_t thin = 1;
  double burn_in = kDefaultBurnInFraction;
  bool ti = false;
  std::size_t limit = kDefaultEnumerationLimit;
  unsigned threads = 0;
  std::uint64_t seed = 1;
  std::string out = "out";

  static constexpr std::string_view kExperiments[] = {"exact", "concentration", "audit", "gg", "sample", "sweep"};

  std::string run_name() const { return name.empty() ? experiment : name; }

  Mode parsed_mode() const {
    if (mode == "exact") return Mode::Exact;
    if (mode == "mc") return Mode::MonteCarlo;
    return Mode::Auto;
  }

  /// Auto selects exact enumeration iff N <= limit.
  bool use_exact(std::size_t n) const {
    switch (parsed_mode()) {
      case Mode::Exact: return true;
      case Mode::MonteCarlo: return false;
      case Mode::Auto: return n <= limit;
    }
    return true;
  }

  std::optional<double> supplied_eref() const {
    if (eref == "plugin") return std::nullopt;
    return detail::parse_number<double>(eref);
  }
  ReferenceEnergy reference() const {
    const auto v = supplied_eref();
    return v ? ReferenceEnergy::supplied(*v) : ReferenceEnergy::plug_in();
  }

  McReplicaParams mc_params() const { return {chains, sweeps, thin, seed, burn_in}; }

  EnumerationOptions enumeration() const {
    EnumerationOptions o;
    o.limit = limit;
    o.threads = threads;
    return o;
  }

  /// Canonical echo of every field, suitable for from_keys.
  KeyValues keys() const {
    KeyValues kv;
    kv["experiment"] = experiment;
    kv["name"] = run_name();
    kv["model"] = model;
    kv["h"] = format_double(h);
    kv["ns"] = detail::join_numbers(ns);
    kv["beta"] = format_double(beta);
    if (betas) kv["betas"] = betas->str();
    kv["c"] = format_double(c);
    kv["cprime"] = format_double(cprime);
    kv["lambda0"] = format_double(lambda0);
    kv["window"] = format_double(window);
    kv["eref"] = eref;
    kv["samples"] = std::to_string(samples);
    kv["kind"] = kind;
    kv["epsilons"] = detail::join_numbers(epsilons);
    kv["lambdas"] = detail::join_numbers(lambdas);
    if (beta_prime) kv["beta-prime"] = format_double(*beta_prime);
    kv["replicas"] = std::to_string(replicas);
    kv["phi"] = phi;
    kv["mode"] = mode;
    kv["sweeps"] = std::to_string(sweeps);
    kv["chains"] = std::to_string(chains);
    kv["thin"] = std::to_string(thin);
    kv["burn-in"] = format_double(burn_in);
    kv["ti"] = ti ? "true" : "false";
    kv["limit"] = std::to_string(limit);
    kv["threads"] = std::to_string(threads);
    kv["seed"] = std::to_string(seed);
    kv["out"] = out;
    return kv;
  }

  /// Builds a config from keys; every malformed or unknown key is reported
  /// together in one ValidationError. Semantic checks are in validate().
  static ExperimentConfig from_keys(const KeyValues& kv) {
    ExperimentConfig cfg;
    std::vector<std::string> problems;
    const auto bad = [&](const std::string& key, const std::string& why) {
      problems.push_back(key + ": " + why);
    };
    const auto real = [&](const std::string& key, double& slot) {
      if (auto v = detail::parse_number<double>(kv.at(key))) slot = *v;
      else bad(key, "expected a number, got '" + kv.at(key) + "'");
    };
    const auto count = [&](const std::string& key, auto& slot) {
      using T = std::decay_t<decltype(slot)>;
      if (auto v = detail::parse_number<T>(kv.at(key))) slot = *v;
      else bad(key, "expected a non-negative integer, got '" + kv.at(key) + "'");
    };
    const auto real_list = [&](const std::string& key, std::vector<double>& slot) {
      slot.clear();
      for (const auto& part : detail::split(kv.at(key), ',')) {
        if (auto v = detail::parse_number<double>(part)) slot.push_back(*v);
        else bad(key, "expected a comma-separated list of numbers");
      }
    };

    if (kv.contains("n") && kv.contains("ns")) bad("n", "give either n or ns, not both");
    for (const auto& [key, value] : kv) {
      if (key == "experiment") cfg.experiment = value;
      else if (key == "name") cfg.name = value;
      else if (key == "model") cfg.model = value;
      else if (key == "h") real(key, cfg.h);
      else if (key == "n" || key == "ns") {
        cfg.ns.clear();
        for (const auto& part : detail::split(value, ',')) {
          if (auto v = detail::parse_number<std::size_t>(part)) cfg.ns.push_back(*v);
          else bad(key, "expected a comma-separated list of sizes");
        }
      } else if (key == "beta") real(key, cfg.beta);
      else if (key == "betas") {
        cfg.betas = BetaRange::parse(value);
        if (!cfg.betas) bad(key, "expected START:STOP:STEP");
      } else if (key == "c") real(key, cfg.c);
      else if (key == "cprime") real(key, cfg.cprime);
      else if (key == "lambda0") real(key, cfg.lambda0);
      else if (key == "window") real(key, cfg.window);
      else if (key == "eref") cfg.eref = value;
      else if (key == "samples") count(key, cfg.samples);
      else if (key == "kind") cfg.kind = value;
      else if (key == "epsilons") real_list(key, cfg.epsilons);
      else if (key == "lambdas") real_list(key, cfg.lambdas);
      else if (key == "beta-prime") {
        double v = 0.0;
        real(key, v);
        cfg.beta_prime = v;
      } else if (key == "replicas") count(key, cfg.replicas);
      else if (key == "phi") cfg.phi = value;
      else if (key == "mode") cfg.mode = value;
      else if (key == "sweeps") count(key, cfg.sweeps);
      else if (key == "chains") count(key, cfg.chains);
      else if (key == "thin") count(key, cfg.thin);
      else if (key == "burn-in") real(key, cfg.burn_in);
      else if (key == "ti") {
        if (value == "true" || value == "1") cfg.ti = true;
        else if (value == "false" || value == "0") cfg.ti = false;
        else bad(key, "expected true or false");
      } else if (key == "limit") count(key, cfg.limit);
      else if (key == "threads") count(key, cfg.threads);
      else if (key == "seed") count(key, cfg.seed);
      else if (key == "out") cfg.out = value;
      else bad(key, "unknown key");
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
    return cfg;
  }

  /// Whether this run estimates F_N by thermodynamic integration.
  bool needs_ti() const {
    if (ti) return true;
    if (experiment == "sweep") {
      return std::any_of(ns.begin(), ns.end(), [&](std::size_t n) { return !use_exact(n); });
    }
    return false;
  }

  std::vector<std::string> problems() const {
    std::vector<std::string> p;
    const auto exp_ok = std::find(std::begin(kExperiments), std::end(kExperiments), experiment) !=
                        std::end(kExperiments);
    if (!exp_ok) p.push_back("experiment: must be one of exact, concentration, audit, gg, sample, sweep");
    if (model != "sk" && model != "field") p.push_back("model: must be sk or field");
    if (model == "field" && !std::isfinite(h)) p.push_back("h: must be finite");
    if (ns.empty()) p.push_back("ns: at least one system size is required");
    for (std::size_t k = 0; k < ns.size(); ++k) {
      if (ns[k] == 0) p.push_back("ns: sizes must be positive");
      if (k > 0 && ns[k] <= ns[k - 1]) p.push_back("ns: sizes must be strictly increasing");
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) p.push_back("beta: must be finite and >= 0");
    if (betas) {
      if (!(betas->step > 0.0) || betas->stop < betas->start || betas->start < 0.0) {
        p.push_back("betas: need 0 <= START <= STOP and STEP > 0");
      }
    }
    if (!(c > 0.0) || !(cprime > 0.0) || !(c + cprime < 1.0)) p.push_back("c, cprime: need c > 0, c' > 0, c + c' < 1");
    if (!(window > 0.0)) p.push_back("window: must be positive");
    if (!(lambda0 > 0.0) || !(lambda0 < window)) p.push_back("lambda0: must lie in (0, window)");
    for (double l : lambdas) {
      if (!(l > 0.0) || !(l < window)) {
        p.push_back("lambdas: every lambda must lie in (0, window)");
        break;
      }
    }
    if (lambdas.empty()) p.push_back("lambdas: must not be empty");
    for (double e : epsilons) {
      if (!(e > 0.0)) {
        p.push_back("epsilons: must be positive");
        break;
      }
    }
    if (epsilons.empty()) p.push_back("epsilons: must not be empty");
    if (eref != "plugin" && !supplied_eref()) p.push_back("eref: must be 'plugin' or a number");
    if (samples == 0) p.push_back("samples: must be positive");
    if (kind != "tail" && kind != "moment" && kind != "sandwich") p.push_back("kind: must be tail, moment or sandwich");
    if (beta_prime && (!(*beta_prime >= 0.0) || *beta_prime > beta)) p.push_back("beta-prime: need 0 <= beta' <= beta");
    if (replicas < 2) p.push_back("replicas: need at least 2");
    try {
      check_phi_labels(OverlapFunction::parse(phi), std::max<std::size_t>(replicas, 2));
    } catch (const InvalidArgument& e) {
      p.push_back(std::string("phi: ") + e.what());
    }
    if (mode != "exact" && mode != "mc" && mode != "auto") p.push_back("mode: must be exact, mc or auto");
    if (sweeps == 0) p.push_back("sweeps: must be positive");
    if (chains == 0) p.push_back("chains: must be positive");
    if (thin == 0) p.push_back("thin: must be positive");
    if (!(burn_in >= 0.0) || !(burn_in < 1.0)) p.push_back("burn-in: must lie in [0, 1)");
    if (limit > 62) p.push_back("limit: enumeration is capped at N = 62");

    const bool exact_only = experiment == "exact" || experiment == "concentration" || experiment == "audit";
    if (exact_only) {
      for (std::size_t n : ns) {
        if (!use_exact(n)) {
          p.push_back("ns: " + experiment + " needs exact enumeration but N=" + std::to_string(n) +
                      " is above the enumeration limit " + std::to_string(limit) + " (or mode=mc)");
          break;
        }
      }
    }
    if (experiment == "gg" && model != "sk") p.push_back("model: gg uses Gaussian disorder and requires model=sk");
    if (experiment == "sample" && !betas) p.push_back("betas: sample needs a START:STOP:STEP ladder");
    if (needs_ti()) {
      if (!betas || betas->start != 0.0) {
        p.push_back("betas: thermodynamic integration needs a ladder anchored at beta = 0");
      } else if (betas->stop + 1e-12 < beta) {
        p.push_back("betas: ladder must reach beta for thermodynamic integration");
      }
    }
    if (experiment == "sweep" && betas && needs_ti()) {
      const auto ladder = betas->ladder();
      const auto& rungs = ladder.betas();
      if (std::none_of(rungs.begin(), rungs.end(), [&](double b) { return std::abs(b - beta) < 1e-9; })) {
        p.push_back("betas: Monte Carlo sweeps need beta on the ladder");
      }
    }
    return p;
  }

  void validate() const {
    auto p = problems();
    if (!p.empty()) throw ValidationError(std::move(p));
  }
};

inline ExperimentConfig config_from_text(std::string_view text) {
  return ExperimentConfig::from_keys(parse_key_values(text));
}

struct AuditTally {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::vector<std::string> failures;  // first few, human-readable

  void record(bool pass, const std::string& what) {
    ++checked;
    if (!pass) {
      ++failed;
      if (failures.size() < 20) failures.push_back(what);
    }
  }
  bool all_pass() const noexcept { return failed == 0; }
};

struct RunManifest {
  std::string experiment;
  std::string name;
  KeyValues config;
  std::string rng_id = std::string(kRngId);
  std::string seed_derivation = std::string(kSeedDerivationId);
  std::map<std::size_t, std::vector<std::uint64_t>> sample_seeds;  // N -> per-sample disorder seeds
  std::string version = std::string(kSoftwareVersion);
  std::string started;
  std::string finished;
  std::map<std::string, std::string> files;  // relative path -> sha256
  AuditTally audits;
  std::filesystem::path directory;

  json to_json() const {
    json j;
    j["experiment"] = experiment;
    j["name"] = name;
    j["software"] = {{"name", "spinconc"}, {"version", version}};
    j["rng_id"] = rng_id;
    j["seed_derivation"] = seed_derivation;
    j["config"] = config;
    json seeds = json::object();
    for (const auto& [n, list] : sample_seeds) seeds[std::to_string(n)] = list;
    j["sample_seeds"] = std::move(seeds);
    j["started"] = started;
    j["finished"] = finished;
    j["audits"] = {{"checked", audits.checked},
                   {"failed", audits.failed},
                   {"all_pass", audits.all_pass()},
                   {"failures", audits.failures}};
    j["files"] = files;
    return j;
  }

  static RunManifest from_json(const json& j) {
    RunManifest m;
    m.experiment = j.at("experiment").get<std::string>();
    m.name = j.at("name").get<std::string>();
    m.config = j.at("config").get<KeyValues>();
    m.rng_id = j.at("rng_id").get<std::string>();
    m.seed_derivation = j.at("seed_derivation").get<std::string>();
    m.version = j.at("software").at("version").get<std::string>();
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    for (const auto& [n, list] : j.at("sample_seeds").items()) {
      m.sample_seeds[std::stoull(n)] = list.get<std::vector<std::uint64_t>>();
    }
    m.files = j.at("files").get<std::map<std::string, std::string>>();
    const auto& a = j.at("audits");
    m.audits.checked = a.at("checked").get<std::size_t>();
    m.audits.failed = a.at("failed").get<std::size_t>();
    m.audits.failures = a.at("failures").get<std::vector<std::string>>();
    return m;
  }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

/// Output files keyed by relative path; written once at the end.
using FileSet = std::map<std::string, std::string>;

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::string metric_file(const std::string& metric, std::size_t n, const char* ext) {
  return metric + "-" + std::to_string(n) + "." + ext;
}

/// Disorder ensemble for size n: seeds derive_seed(derive_seed(master, n), s),
/// so different sizes use independent disorder.
inline std::vector<Model> ensemble_for(const ExperimentConfig& cfg, std::size_t n, RunManifest& manifest) {
  std::vector<Model> models;
  auto& seeds = manifest.sample_seeds[n];
  seeds.clear();
  if (cfg.model == "field") {
    models.push_back(Model::constant_field(n, cfg.h));
    return models;
  }
  const std::uint64_t master = derive_seed(cfg.seed, n);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    seeds.push_back(derive_seed(master, s));
    models.push_back(Model::sk(sk_disorder(n, seeds.back())));
  }
  return models;
}

inline std::uint64_t seed_of(const Model& m) { return m.disorder() ? m.disorder()->seed : 0; }

inline std::vector<EnergyTable> build_tables(const std::vector<Model>& models, const ExperimentConfig& cfg) {
  std::vector<EnergyTable> tables(models.size());
  EnumerationOptions inner = cfg.enumeration();
  inner.threads = 1;
  parallel_for(models.size(), cfg.threads, [&](std::size_t s) { tables[s] = EnergyTable::build(models[s], inner); });
  return tables;
}

// ------------------------------------------------------------ exact

inline void run_exact(const ExperimentConfig& cfg, RunManifest& manifest, FileSet& files) {
  for (std::size_t n : cfg.ns) {
    const auto models = ensemble_for(cfg, n, manifest);
    const auto opts = cfg.enumeration();
    json summaries = json::array();
    CsvTable curve({"sample", "seed", "beta", "free_energy", "energy_density_mean"});
    for (std::size_t s = 0; s < models.size(); ++s) {
      const auto& m = models[s];
      const auto summary = enumerate(m, Beta(cfg.beta), opts);
      json full{{"sample", s}, {"seed", seed_of(m)}, {"model", to_string(m.kind())}};
      full.update(to_json(summary));
      if (m.kind() == ModelKind::ConstantField) full["field"] = m.field_strength();
      summaries.push_back(std::move(full));
      const std::string suffix = models.size() > 1 ? "-" + std::to_string(s) : "";
      files["histogram-" + std::to_string(n) + suffix + ".csv"] = histogram_csv(summary).str();
      if (m.disorder()) files["disorder-" + std::to_string(n) + suffix + ".json"] = dump(to_json(*m.disorder()));
      if (cfg.betas) {
        std::vector<Beta> grid;
        const auto ladder = cfg.betas->ladder();
        for (double b : ladder.betas()) grid.emplace_back(b);
        for (const auto& p : free_energy_curve(m, grid, opts)) {
          curve.add({static_cast<std::uint64_t>(s), seed_of(m), p.beta, p.free_energy, p.energy_density_mean});
        }
      }
    }
    files[metric_file("summary", n, "json")] = dump(summaries.size() == 1 ? summaries[0] : summaries);
    if (cfg.betas) files[metric_file("free_energy", n, "csv")] = curve.str();
  }
}

// ------------------------------------------------------------ concentration

inline void run_concentration(const ExperimentConfig& cfg, RunManifest& manifest, FileSet& files) {
  const auto reference = cfg.reference();
  for (std::size_t n : cfg.ns) {
    const auto models = ensemble_for(cfg, n, manifest);
    const auto tables = build_tables(models, cfg);
    std::vector<Theorem1Report> reports(models.size());
    std::vector<double> l1(models.size()), mean_h(models.size());
    parallel_for(models.size(), cfg.threads, [&](std::size_t s) {
      reports[s] = theorem1_report(tables[s], Beta(cfg.beta), cfg.c, cfg.cprime, reference);
      mean_h[s] = tables[s].energy_density_mean(cfg.beta);
      l1[s] = gibbs_l1_deviation(tables[s], cfg.beta, reports[s].e_ref);
    });
    CsvTable table({"sample", "seed", "e_ref", "free_energy", "lambda_n", "gamma", "epsilon_n", "gibbs_mass_outside",
                    "bound_ii", "restricted_gap", "bound_iii", "pass_ii", "pass_iii", "pass_entropy", "pass"});
    CsvTable l1_table({"sample", "seed", "energy_density_mean", "l1_deviation"});
    json per_sample = json::array();
    std::size_t fail_ii = 0, fail_iii = 0, fail_entropy = 0;
    for (std::size_t s = 0; s < models.size(); ++s) {
      const auto& r = reports[s];
      const auto seed = seed_of(models[s]);
      table.add({static_cast<std::uint64_t>(s), seed, r.e_ref, r.free_energy, r.lambda_n, r.deltas.gamma, r.epsilon_n,
                 r.gibbs_mass_outside, r.bound_ii, opt_cell(r.restricted_gap), r.bound_iii, r.pass_ii, r.pass_iii,
                 r.pass_entropy, r.pass()});
      l1_table.add({static_cast<std::uint64_t>(s), seed, mean_h[s], l1[s]});
      const std::string tag = "N=" + std::to_string(n) + " sample " + std::to_string(s);
      manifest.audits.record(r.pass_ii, tag + ": Gibbs mass outside C_N above bound");
      manifest.audits.record(r.pass_iii, tag + ": restricted log-partition gap above bound");
      manifest.audits.record(r.pass_entropy, tag + ": entropy identity outside beta*eps_N");
      fail_ii += !r.pass_ii;
      fail_iii += !r.pass_iii;
      fail_entropy += !r.pass_entropy;
      json j = to_json(r);
      j["sample"] = s;
      j["seed"] = seed;
      per_sample.push_back(std::move(j));
    }
    const auto eps = [&] {
      std::vector<double> v;
      for (const auto& r : reports) v.push_back(r.epsilon_n);
      return independent_estimate(v);
    }();
    const auto l1_est = independent_estimate(l1);
    json summary{{"n", n},
                 {"beta", cfg.beta},
                 {"c", cfg.c},
                 {"cprime", cfg.cprime},
                 {"eref", cfg.eref},
                 {"samples", models.size()},
                 {"violations", {{"mass_outside", fail_ii}, {"restricted_gap", fail_iii}, {"entropy", fail_entropy}}},
                 {"all_pass", fail_ii + fail_iii + fail_entropy == 0},
                 {"epsilon_n_mean", num(eps.mean)},
                 {"epsilon_n_stderr", num(eps.error)},
                 {"l1_mean", num(l1_est.mean)},
                 {"l1_stderr", num(l1_est.error)},
                 {"reports", std::move(per_sample)}};
    files[metric_file("theorem1", n, "csv")] = table.str();
    files[metric_file("theorem1", n, "json")] = dump(summary);
    files[metric_file("l1", n, "csv")] = l1_table.str();
  }
}

// ------------------------------------------------------------ audit

inline void run_audit(const ExperimentConfig& cfg, RunManifest& manifest, FileSet& files) {
  for (std::size_t n : cfg.ns) {
    const auto models = ensemble_for(cfg, n, manifest);
    const auto tables = build_tables(models, cfg);
    const auto e_ref_of = [&](std::size_t s, double b) {
      const auto v = cfg.supplied_eref();
      return v ? *v : tables[s].energy_density_mean(b);
    };
    std::size_t failures = 0;
    std::size_t checks = 0;
    const auto tally = [&](bool pass, const std::string& what) {
      ++checks;
      failures += !pass;
      manifest.audits.record(pass, "N=" + std::to_string(n) + " " + what);
    };

    if (cfg.kind == "tail") {
      CsvTable t({"sample", "seed", "epsilon", "lambda", "inequality", "lhs", "rhs", "pass"});
      std::vector<std::vector<TailAudit>> audits(models.size());
      parallel_for(models.size(), cfg.threads, [&](std::size_t s) {
        audits[s] = tail_bound_audit(tables[s], Beta(cfg.beta), cfg.epsilons, cfg.lambdas, e_ref_of(s, cfg.beta),
                                     cfg.window);
      });
      for (std::size_t s = 0; s < models.size(); ++s) {
        const auto seed = seed_of(models[s]);
        for (const auto& a : audits[s]) {
          const auto row = [&](const char* which, CsvCell lhs, double rhs, bool pass) {
            t.add({static_cast<std::uint64_t>(s), seed, a.epsilon, a.lambda, std::string(which), lhs, rhs, pass});
            tally(pass, "sample " + std::to_string(s) + " eps=" + format_double(a.epsilon) +
                            " lambda=" + format_double(a.lambda) + " " + which);
          };
          row("log_upper_tail", opt_cell(a.b_plus), a.rhs_plus, a.pass_b_plus);
          row("log_lower_tail", opt_cell(a.b_minus), a.rhs_minus, a.pass_b_minus);
          row("mass_upper_tail", a.gibbs_plus, a.exp_bound, a.pass_mass_plus);
          row("mass_lower_tail", a.gibbs_minus, a.exp_bound, a.pass_mass_minus);
          row("mass_two_sided", a.gibbs_plus + a.gibbs_minus, 2.0 * a.exp_bound, a.pass_union);
        }
      }
      files[metric_file("tail", n, "csv")] = t.str();
    } else if (cfg.kind == "moment") {
      CsvTable t({"sample", "seed", "lambda0", "gamma0", "lambda", "gamma", "lhs", "rhs", "pass"});
      std::vector<std::vector<MomentAudit>> audits(models.size());
      parallel_for(models.size(), cfg.threads, [&](std::size_t s) {
        for (double l0 : cfg.lambdas) {
          audits[s].push_back(moment_bound_audit(tables[s], Beta(cfg.beta), l0, e_ref_of(s, cfg.beta), cfg.window));
        }
      });
      for (std::size_t s = 0; s < models.size(); ++s) {
        for (const auto& m : audits[s]) {
          t.add({static_cast<std::uint64_t>(s), seed_of(models[s]), m.lambda0, m.gamma0, m.lambda, m.gamma,
                 m.lhs_abs, m.rhs, m.pass});
          tally(m.pass, "sample " + std::to_string(s) + " lambda0=" + format_double(m.lambda0) + " moment bound");
        }
      }
      files[metric_file("moment", n, "csv")] = t.str();
    } else {
      const double bp = cfg.beta_prime.value_or(std::max(0.0, cfg.beta - 0.05));
      CsvTable t({"sample", "seed", "beta", "beta_prime", "epsilon", "applicable", "upper_0", "upper_1", "upper_2",
                  "lower_0", "lower_1", "lower_2", "pass"});
      for (std::size_t s = 0; s < models.size(); ++s) {
        const double e = e_ref_of(s, cfg.beta);
        const double ep = cfg.supplied_eref() ? e : tables[s].energy_density_mean(bp);
        for (double eps : cfg.epsilons) {
          if (std::abs(e - ep) > eps) {
            // the displays assume |E(beta) - E(beta')| <= eps; such rows are listed, not audited
            t.add({static_cast<std::uint64_t>(s), seed_of(models[s]), cfg.beta, bp, eps, false, std::monostate{},
                   std::monostate{}, std::monostate{}, std::monostate{}, std::monostate{}, std::monostate{},
                   std::monostate{}});
            continue;
          }
          const auto r = sandwich_check(tables[s], Beta(cfg.beta), Beta(bp), eps, e, ep);
          t.add({static_cast<std::uint64_t>(s), seed_of(models[s]), cfg.beta, bp, eps, true, r.upper[0], r.upper[1],
                 r.upper[2], r.lower[0], r.lower[1], r.lower[2], r.pass()});
          tally(r.pass(), "sample " + std::to_string(s) + " eps=" + format_double(eps) + " sandwich");
        }
      }
      files[metric_file("sandwich", n, "csv")] = t.str();
    }
    json summary{{"n", n},          {"kind", cfg.kind},         {"beta", cfg.beta},
                 {"eref", cfg.eref}, {"samples", models.size()}, {"checks", checks},
                 {"violations", failures}, {"all_pass", failures == 0}};
    files[metric_file("audit", n, "json")] = dump(summary);
  }
}

// ------------------------------------------------------------ gg

inline void run_gg(const ExperimentConfig& cfg, RunManifest& manifest, FileSet& files) {
  const auto phi = OverlapFunction::parse(cfg.phi);
  for (std::size_t n : cfg.ns) {
    const auto models = ensemble_for(cfg, n, manifest);
    const auto mode = cfg.use_exact(n) ? BracketMode::Exact : BracketMode::MonteCarlo;
    const auto opts = cfg.enumeration();
    auto mc = cfg.mc_params();
    mc.seed = derive_seed(cfg.seed ^ 0x6767ULL, n);
    const auto gg = gg_residual(models, Beta(cfg.beta), cfg.replicas, phi, mode, mc, opts);
    const auto ibp = ibp_audit(models, Beta(cfg.beta), cfg.replicas, phi, mode, mc, opts);
    const bool ibp_pass = std::abs(ibp.z_score) <= 3.0;
    const std::string tag = "N=" + std::to_string(n);
    manifest.audits.record(gg.pass_bound, tag + ": |Delta| above ||phi||/(beta n) L1 by more than 3 stderr");
    manifest.audits.record(ibp_pass, tag + ": integration-by-parts identity off by more than 3 stderr");
    json j{{"mode", mode == BracketMode::Exact ? "exact" : "mc"},
           {"gg", to_json(gg)},
           {"ibp", to_json(ibp)},
           {"ibp_pass", ibp_pass}};
    files[metric_file("gg", n, "json")] = dump(j);
    CsvTable t({"N", "beta", "n", "phi_id", "residual", "stderr", "bound", "pass"});
    t.add({static_cast<std::uint64_t>(n), cfg.beta, static_cast<std::uint64_t>(cfg.replicas), gg.phi_id, gg.residual,
           gg.stderr_residual, gg.bound, gg.pass_bound});
    files[metric_file("gg", n, "csv")] = t.str();
  }
}

// ------------------------------------------------------------ sample

struct ExactReference {
  double u = 0.0;
  double r2 = 0.0;
};

inline void run_sample(const ExperimentConfig& cfg, RunManifest& manifest, FileSet& files) {
  const auto ladder = cfg.betas->ladder();
  PtOptions o;
  o.sweeps = cfg.sweeps;
  o.ladders = cfg.chains;
  o.burn_in_fraction = cfg.burn_in;
  for (std::size_t n : cfg.ns) {
    const auto models = ensemble_for(cfg, n, manifest);
    const bool compare = n <= cfg.limit;
    CsvTable trace({"sample", "sweep", "beta", "energy_density"});
    CsvTable summary({"sample", "seed", "beta", "u_mean", "u_stderr", "tau_int", "r2_mean", "r2_stderr",
                      "swap_acceptance", "exact_u", "exact_r2", "z_u", "z_r2"});
    json batches = json::array();
    json ti_out = json::array();
    std::size_t points = 0, within = 0;
    for (std::size_t s = 0; s < models.size(); ++s) {
      const auto& m = models[s];
      const std::uint64_t run_seed = derive_seed(derive_seed(cfg.seed ^ 0x7074ULL, n), s);
      const auto result = parallel_tempering_run(m, ladder, o, run_seed);
      std::vector<ExactReference> ref;
      if (compare) {
        const auto table = EnergyTable::build(m, cfg.enumeration());
        for (double b : ladder.betas()) {
          const ProductMeasure pm(table, b);
          ref.push_back({pm.energy_mean(), pm.pair([](double r) { return r * r; })});
        }
      }
      const auto& series = result.energy_density.front();
      for (std::size_t t = 0; t < cfg.sweeps; ++t) {
        for (std::size_t i = 0; i < ladder.size(); ++i) {
          trace.add({static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(t + 1), ladder.beta(i), series[i][t]});
        }
      }
      for (std::size_t i = 0; i < ladder.size(); ++i) {
        const auto& tr = result.traces[i];
        const bool have_r2 = !result.overlap_traces.empty();
        std::vector<CsvCell> row{static_cast<std::uint64_t>(s), seed_of(m), tr.beta, tr.u_mean, tr.u_stderr,
                                 tr.tau_int};
        row.push_back(have_r2 ? CsvCell(result.overlap_traces[i].u_mean) : CsvCell(std::monostate{}));
        row.push_back(have_r2 ? CsvCell(result.overlap_traces[i].u_stderr) : CsvCell(std::monostate{}));
        row.push_back(i + 1 < ladder.size() ? CsvCell(result.ladder.swap_acceptance(i)) : CsvCell(std::monostate{}));
        if (compare) {
          const double zu = tr.u_stderr > 0 ? (tr.u_mean - ref[i].u) / tr.u_stderr : 0.0;
          row.push_back(ref[i].u);
          row.push_back(ref[i].r2);
          row.push_back(zu);
          ++points;
          within += std::abs(zu) <= 3.0;
          if (have_r2) {
            const auto& ot = result.overlap_traces[i];
            const double zr = ot.u_stderr > 0 ? (ot.u_mean - ref[i].r2) / ot.u_stderr : 0.0;
            row.push_back(zr);
            ++points;
            within += std::abs(zr) <= 3.0;
          } else {
            row.push_back(std::monostate{});
          }
        } else {
          row.insert(row.end(), {std::monostate{}, std::monostate{}, std::monostate{}, std::monostate{}});
        }
        summary.add(std::move(row));
      }
      json finals = json::array();
      for (const auto& ladder_configs : result.final_configs) {
        json rungs = json::array();
        for (const auto& c : ladder_configs) rungs.push_back(spins_json(c));
        finals.push_back(std::move(rungs));
      }
      batches.push_back({{"sample", s},
                         {"seed", seed_of(m)},
                         {"run_seed", run_seed},
                         {"betas", ladder.betas()},
                         {"sweeps", cfg.sweeps},
                         {"burn_in", result.burn_in},
                         {"final_configurations", std::move(finals)}});
      if (cfg.ti) {
        const double target = std::min(cfg.beta, ladder.betas().back());
        const auto ti = thermo_integrate(result.traces, Beta(target), m.prior_mean_energy_density());
        json entry{{"sample", s}, {"beta", target},          {"free_energy", num(ti.value)}, {"error", num(ti.error)},
                   {"quadrature_error", num(ti.quadrature_error)}, {"statistical_error", num(ti.statistical_error)}};
        if (compare) {
          const double exact = EnergyTable::build(m, cfg.enumeration()).free_energy(target);
          const bool pass = std::abs(ti.value - exact) <= 3.0 * ti.error;
          entry["exact_free_energy"] = exact;
          entry["pass"] = pass;
          manifest.audits.record(pass, "N=" + std::to_string(n) + " sample " + std::to_string(s) +
                                           ": thermodynamic integration off by more than 3 errors");
        }
        ti_out.push_back(std::move(entry));
      }
    }
    if (compare && points > 0) {
      const double fraction = static_cast<double>(within) / static_cast<double>(points);
      manifest.audits.record(fraction >= 0.95, "N=" + std::to_string(n) + ": only " + format_double(fraction) +
                                                   " of Monte Carlo points within 3 stderr of exact");
      files[metric_file("agreement", n, "json")] =
          dump({{"points", points}, {"within_3_stderr", within}, {"fraction", fraction}, {"pass", fraction >= 0.95}});
    }
    files[metric_file("trace", n, "csv")] = trace.str();
    files[metric_file("summary", n, "csv")] = summary.str();
    files[metric_file("batch", n, "json")] = dump(batches);
    if (cfg.ti) files[metric_file("ti", n, "json")] = dump(ti_out);
  }
}

// ------------------------------------------------------------ sweep

struct SweepRow {
  std::size_t n = 0;
  bool exact = true;
  std::size_t samples = 0;
  std::optional<Estimate> epsilon;
  Estimate free_energy;
  Estimate l1;
  std::optional<GGReport> gg;  // Gaussian disorder only
};

inline SweepRow sweep_point(const ExperimentConfig& cfg, std::size_t n, RunManifest& manifest) {
  const auto models = ensemble_for(cfg, n, manifest);
  const auto phi = OverlapFunction::parse(cfg.phi);
  SweepRow row;
  row.n = n;
  row.exact = cfg.use_exact(n);
  row.samples = models.size();
  const std::size_t count = models.size();
  std::vector<double> f(count), l1(count), eps(count);
  auto mc = cfg.mc_params();
  mc.seed = derive_seed(cfg.seed ^ 0x6767ULL, n);
  if (row.exact) {
    const auto tables = build_tables(models, cfg);
    const auto reference = cfg.reference();
    parallel_for(count, cfg.threads, [&](std::size_t s) {
      const auto r = theorem1_report(tables[s], Beta(cfg.beta), cfg.c, cfg.cprime, reference);
      f[s] = r.free_energy;
      eps[s] = r.epsilon_n;
      l1[s] = gibbs_l1_deviation(tables[s], cfg.beta, r.e_ref);
    });
    row.epsilon = independent_estimate(eps);
    if (cfg.model == "sk") {
      row.gg = gg_residual(models, Beta(cfg.beta), cfg.replicas, phi, BracketMode::Exact, mc, cfg.enumeration());
    }
  } else {
    const auto ladder = cfg.betas->ladder();
    const auto& rungs = ladder.betas();
    const std::size_t at = static_cast<std::size_t>(
        std::min_element(rungs.begin(), rungs.end(),
                         [&](double a, double b) { return std::abs(a - cfg.beta) < std::abs(b - cfg.beta); }) -
        rungs.begin());
    PtOptions o;
    o.sweeps = cfg.sweeps;
    o.ladders = 1;
    o.burn_in_fraction = cfg.burn_in;
    const auto supplied = cfg.supplied_eref();
    parallel_for(count, cfg.threads, [&](std::size_t s) {
      const auto result = parallel_tempering_run(models[s], ladder, o, derive_seed(derive_seed(cfg.seed ^ 0x7377ULL, n), s));
      f[s] = thermo_integrate(result.traces, Beta(cfg.beta), models[s].prior_mean_energy_density()).value;
      const auto& series = result.energy_density.front()[at];
      const double center = supplied ? *supplied : result.traces[at].u_mean;
      double acc = 0.0;
      for (std::size_t t = result.burn_in; t < series.size(); ++t) acc += std::abs(series[t] - center);
      l1[s] = acc / static_cast<double>(series.size() - result.burn_in);
    });
    if (cfg.model == "sk") {
      row.gg = gg_residual(models, Beta(cfg.beta), cfg.replicas, phi, BracketMode::MonteCarlo, mc, cfg.enumeration());
    }
  }
  row.free_energy = independent_estimate(f);
  row.l1 = independent_estimate(l1);
  return row;
}

inline void run_sweep(const ExperimentConfig& cfg, RunManifest& manifest, FileSet& files) {
  std::vector<SweepRow> rows;
  for (std::size_t n : cfg.ns) rows.push_back(sweep_point(cfg, n, manifest));

  CsvTable eps({"N", "mode", "epsilon_n_mean", "stderr", "samples"});
  CsvTable fe({"N", "mode", "free_energy_mean", "stderr", "samples"});
  CsvTable l1({"N", "mode", "l1_mean", "stderr", "samples"});
  CsvTable gg({"N", "beta", "n", "phi_id", "residual", "stderr", "bound"});
  std::vector<double> eps_means, f_means, f_stderrs, l1_means, gg_abs;
  for (const auto& r : rows) {
    const std::string mode = r.exact ? "exact" : "mc";
    const auto n = static_cast<std::uint64_t>(r.n);
    const auto samples = static_cast<std::uint64_t>(r.samples);
    if (r.epsilon) {
      eps.add({n, mode, r.epsilon->mean, r.epsilon->error, samples});
      eps_means.push_back(r.epsilon->mean);
    } else {
      eps.add({n, mode, std::monostate{}, std::monostate{}, samples});
    }
    fe.add({n, mode, r.free_energy.mean, r.free_energy.error, samples});
    l1.add({n, mode, r.l1.mean, r.l1.error, samples});
    if (r.gg) {
      gg.add({n, cfg.beta, static_cast<std::uint64_t>(cfg.replicas), r.gg->phi_id, r.gg->residual,
              r.gg->stderr_residual, r.gg->bound});
      gg_abs.push_back(std::abs(r.gg->residual));
    }
    f_means.push_back(r.free_energy.mean);
    f_stderrs.push_back(r.free_energy.error);
    l1_means.push_back(r.l1.mean);
  }
  files["trend-epsilon.csv"] = eps.str();
  files["trend-free_energy.csv"] = fe.str();
  files["trend-l1.csv"] = l1.str();
  if (gg.rows() > 0) files["trend-gg.csv"] = gg.str();

  // trend statistics describe direction only; limits are never asserted
  json trends = json::object();
  if (rows.size() >= 2) {
    const auto tau = [](const std::vector<double>& v) { return v.size() >= 2 ? json(kendall_tau(v)) : json(nullptr); };
    trends["epsilon_n_mean"] = tau(eps_means);
    trends["free_energy_mean"] = tau(f_means);
    trends["free_energy_stderr"] = tau(f_stderrs);
    trends["l1_mean"] = tau(l1_means);
    if (!gg_abs.empty()) trends["gg_abs_residual"] = tau(gg_abs);
  }
  files["trends.json"] = dump({{"ns", cfg.ns}, {"kendall_tau", std::move(trends)}});
}

}  // namespace detail

/// Runs one experiment and writes its files plus manifest.json.
inline RunManifest run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunManifest manifest;
  manifest.experiment = cfg.experiment;
  manifest.name = cfg.run_name();
  manifest.config = cfg.keys();
  manifest.started = utc_timestamp();
  manifest.directory = std::filesystem::path(cfg.out) / cfg.run_name();

  std::error_code ec;
  std::filesystem::create_directories(manifest.directory, ec);
  if (ec || !std::filesystem::is_directory(manifest.directory)) {
    throw IoError("cannot create output directory " + manifest.directory.string());
  }

  detail::FileSet files;
  if (cfg.experiment == "exact") detail::run_exact(cfg, manifest, files);
  else if (cfg.experiment == "concentration") detail::run_concentration(cfg, manifest, files);
  else if (cfg.experiment == "audit") detail::run_audit(cfg, manifest, files);
  else if (cfg.experiment == "gg") detail::run_gg(cfg, manifest, files);
  else if (cfg.experiment == "sample") detail::run_sample(cfg, manifest, files);
  else detail::run_sweep(cfg, manifest, files);

  for (const auto& [rel, content] : files) {
    write_text(manifest.directory / rel, content);
    manifest.files[rel] = sha256_hex(content);
  }
  manifest.finished = utc_timestamp();
  write_text(manifest.directory / "manifest.json", detail::dump(manifest.to_json()));
  return manifest;
}

struct RerunResult {
  RunManifest original;
  RunManifest rerun;
  std::vector<std::string> mismatches;  // files whose hash differs or that are missing
  bool identical() const noexcept { return mismatches.empty(); }
};

/// Re-executes the configuration recorded in a manifest and compares content
/// hashes. `out` overrides the output root (the original root otherwise).
inline RerunResult rerun_from_manifest(const std::filesystem::path& manifest_path,
                                       std::optional<std::string> out = std::nullopt) {
  RerunResult r;
  r.original = RunManifest::from_json(json::parse(read_text(manifest_path)));
  auto cfg = ExperimentConfig::from_keys(r.original.config);
  if (out) cfg.out = *out;
  r.rerun = run_experiment(cfg);
  for (const auto& [rel, hash] : r.original.files) {
    const auto it = r.rerun.files.find(rel);
    if (it == r.rerun.files.end() || it->second != hash) r.mismatches.push_back(rel);
  }
  for (const auto& [rel, hash] : r.rerun.files) {
    if (!r.original.files.contains(rel)) r.mismatches.push_back(rel);
  }
  return r;
}

}  // namespace spinconc
