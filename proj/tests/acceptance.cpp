// Acceptance run: one verdict line per criterion, nonzero exit if any fails.
// Tolerances are fixed here and never adjusted at run time.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spinconc/spinconc.hpp"

using namespace spinconc;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kMaster = 20240601;

std::vector<Model> ensemble(std::size_t n, std::size_t count, std::uint64_t salt) {
  // independent disorder for every (criterion, N)
  return sk_ensemble(n, count, derive_seed(derive_seed(kMaster, salt), n));
}

std::vector<double> grid(double start, double stop, double step) {
  std::vector<double> out;
  for (int k = 0; start + k * step <= stop + 1e-9; ++k) out.push_back(start + k * step);
  return out;
}

struct Verdict {
  bool pass = true;
  std::string summary;
};

void detail(const std::string& line) { std::cout << "    " << line << "\n"; }

std::string fmt(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, x);
  return buf;
}

// ---------------------------------------------------------------- 1

Verdict closed_form() {
  double worst_f = 0.0, worst_u = 0.0;
  for (std::size_t n : {8u, 16u, 20u}) {
    for (double beta : {0.5, 1.0}) {
      const auto s = enumerate(Model::constant_field(n, 1.0), Beta(beta));
      worst_f = std::max(worst_f, std::abs(s.free_energy - std::log(std::cosh(beta))));
      worst_u = std::max(worst_u, std::abs(s.energy_density_mean - std::tanh(beta)));
    }
  }
  return {worst_f <= 1e-12 && worst_u <= 1e-12,
          "max |F - log cosh| = " + fmt(worst_f) + ", max |u - tanh| = " + fmt(worst_u) + " (tol 1e-12)"};
}

// ---------------------------------------------------------------- 2, 3

const std::vector<std::size_t> kAuditSizes{6, 8, 10};
const std::vector<double> kAuditBetas{0.5, 1.0, 1.5};
constexpr std::size_t kAuditSeeds = 100;

Verdict proof_chain() {
  const auto epsilons = grid(0.05, 0.5, 0.05);
  const auto lambdas = grid(0.05, 0.4, 0.05);
  std::size_t checks = 0, violations = 0;
  double worst = -1e300;  // largest lhs - rhs over all checks
  for (std::size_t n : kAuditSizes) {
    for (const auto& m : ensemble(n, kAuditSeeds, 2)) {
      const auto table = EnergyTable::build(m);
      for (double beta : kAuditBetas) {
        const double e = table.energy_density_mean(beta);
        for (const auto& a : tail_bound_audit(table, Beta(beta), epsilons, lambdas, e)) {
          const bool flags[] = {a.pass_b_plus, a.pass_b_minus, a.pass_mass_plus, a.pass_mass_minus, a.pass_union};
          for (bool f : flags) {
            ++checks;
            violations += !f;
          }
          if (a.b_plus) worst = std::max(worst, *a.b_plus - a.rhs_plus);
          if (a.b_minus) worst = std::max(worst, *a.b_minus - a.rhs_minus);
        }
        for (double l0 : lambdas) {
          const auto mom = moment_bound_audit(table, Beta(beta), l0, e);
          ++checks;
          violations += !mom.pass;
          worst = std::max(worst, mom.lhs_abs - mom.rhs);
        }
      }
    }
  }
  detail("eps grid 0.05..0.5 step 0.05, lambda grid 0.05..0.4 step 0.05, slack 1e-9 (log) / 1e-12 (mass)");
  return {violations == 0, std::to_string(checks) + " inequality checks, " + std::to_string(violations) +
                               " violations; max log-scale lhs - rhs = " + fmt(worst)};
}

Verdict theorem_items() {
  std::size_t reports = 0, bad_ii = 0, bad_iii = 0;
  double worst_ratio_ii = 0.0, worst_ratio_iii = 0.0;
  for (std::size_t n : kAuditSizes) {
    for (const auto& m : ensemble(n, kAuditSeeds, 2)) {
      const auto table = EnergyTable::build(m);
      for (double beta : kAuditBetas) {
        const auto r = theorem1_report(table, Beta(beta), 0.3, 0.3, ReferenceEnergy::plug_in());
        ++reports;
        bad_ii += !r.pass_ii;
        bad_iii += !r.pass_iii;
        worst_ratio_ii = std::max(worst_ratio_ii, r.gibbs_mass_outside / r.bound_ii);
        if (r.restricted_gap) worst_ratio_iii = std::max(worst_ratio_iii, *r.restricted_gap / r.bound_iii);
      }
    }
  }
  return {bad_ii == 0 && bad_iii == 0,
          std::to_string(reports) + " reports; violations (ii) " + std::to_string(bad_ii) + ", (iii) " +
              std::to_string(bad_iii) + "; max mass/bound " + fmt(worst_ratio_ii) + ", max gap/bound " +
              fmt(worst_ratio_iii)};
}

// ---------------------------------------------------------------- 4

double binomial_l1(std::size_t n, double beta) {
  // <|H/N - tanh(beta)|> for the unit field, summed over the number of up spins
  const double e = std::tanh(beta);
  std::vector<double> logw(n + 1);
  double top = -1e300;
  for (std::size_t k = 0; k <= n; ++k) {
    logw[k] = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + beta * (2.0 * k - n);
    top = std::max(top, logw[k]);
  }
  double z = 0.0, acc = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double w = std::exp(logw[k] - top);
    z += w;
    acc += w * std::abs((2.0 * k - n) / n - e);
  }
  return acc / z;
}

Verdict concentration_trend() {
  bool pass = true;
  std::vector<double> means, errs;
  for (std::size_t n : {6u, 8u, 10u, 12u}) {
    const auto models = ensemble(n, 200, 4);
    const auto l1 = gibbs_l1_concentration(models, Beta(1.0), ReferenceEnergy::plug_in());
    means.push_back(l1.disorder_mean);
    errs.push_back(l1.stderr_mean);
    detail("SK N=" + std::to_string(n) + ": E<|H/N - F_N'|> = " + fmt(l1.disorder_mean, 6) + " +- " +
           fmt(l1.stderr_mean, 3));
  }
  bool strict = true;
  for (std::size_t k = 0; k + 1 < means.size(); ++k) {
    const double rise = means[k + 1] - means[k];
    strict = strict && rise < 0.0;
    if (!(rise < 2.0 * std::hypot(errs[k], errs[k + 1]))) pass = false;
  }
  detail(std::string("SK strictly decreasing point estimates: ") + (strict ? "yes" : "no"));

  double worst_oracle = 0.0;
  double previous = 1e300;
  bool field_decreasing = true;
  for (std::size_t n : {6u, 8u, 10u, 12u, 16u, 20u}) {
    const std::vector<Model> one{Model::constant_field(n, 1.0)};
    const auto l1 = gibbs_l1_concentration(one, Beta(1.0), ReferenceEnergy::plug_in());
    worst_oracle = std::max(worst_oracle, std::abs(l1.disorder_mean - binomial_l1(n, 1.0)));
    field_decreasing = field_decreasing && l1.disorder_mean < previous;
    previous = l1.disorder_mean;
  }
  // no disorder, so the stderr is zero and "3 stderr" is a floating-point match
  pass = pass && field_decreasing && worst_oracle <= 1e-12;
  return {pass, std::string("SK no rise beyond 2 stderr: ") + (pass ? "ok" : "see above") +
                    "; field decreasing: " + (field_decreasing ? "yes" : "no") + ", max |exact - binomial| = " +
                    fmt(worst_oracle)};
}

// ---------------------------------------------------------------- 5

Verdict ibp() {
  bool pass = true;
  double min_uncorrected = 1e300;
  double max_corrected = 0.0;
  const auto models = ensemble(8, 500, 5);
  for (double beta : {0.5, 1.0}) {
    for (const char* id : {"1", "r2"}) {
      const auto r = ibp_audit(models, Beta(beta), 2, OverlapFunction::parse(id));
      detail("beta=" + fmt(beta) + " phi=" + id + ": lhs " + fmt(r.lhs, 6) + " rhs " + fmt(r.rhs, 6) + " z " +
             fmt(r.z_score, 3) + " | uncorrected rhs " + fmt(r.rhs_uncorrected, 6) + " z " +
             fmt(r.z_uncorrected, 3));
      pass = pass && std::abs(r.z_score) <= 3.0;
      max_corrected = std::max(max_corrected, std::abs(r.z_score));
      if (beta == 0.5) {
        pass = pass && std::abs(r.z_uncorrected) > 5.0;
        min_uncorrected = std::min(min_uncorrected, std::abs(r.z_uncorrected));
      }
    }
  }
  return {pass, "max |z| corrected = " + fmt(max_corrected, 3) + " (<= 3); min |z| uncorrected at beta=0.5 = " +
                    fmt(min_uncorrected, 3) + " (> 5)"};
}

// ---------------------------------------------------------------- 6

Verdict gg() {
  bool bound_ok = true;
  std::vector<double> abs_delta, se;
  for (std::size_t n : {6u, 8u, 10u, 12u}) {
    const auto models = ensemble(n, 500, 6);
    const auto r = gg_residual(models, Beta(1.0), 2, OverlapFunction::square());
    detail("N=" + std::to_string(n) + ": Delta " + fmt(r.residual, 4) + " +- " + fmt(r.stderr_residual, 3) +
           ", bound " + fmt(r.bound, 4) + " +- " + fmt(r.stderr_bound, 3) + (r.pass_bound ? "" : "  EXCEEDED"));
    bound_ok = bound_ok && r.pass_bound;
    abs_delta.push_back(std::abs(r.residual));
    se.push_back(r.stderr_residual);
  }
  bool non_increasing = true;
  for (std::size_t k = 0; k + 1 < abs_delta.size(); ++k) {
    if (!(abs_delta[k + 1] <= abs_delta[k] + 2.0 * std::hypot(se[k], se[k + 1]))) non_increasing = false;
  }
  const auto one = gg_residual(ensemble(8, 500, 6), Beta(1.0), 2, OverlapFunction::one());
  const bool zero = std::abs(one.residual) <= 1e-12;
  return {bound_ok && non_increasing && zero, std::string("bound within 3 stderr at every N: ") + (bound_ok ? "yes" : "no") +
                    "; |Delta| non-increasing within 2 stderr: " + (non_increasing ? "yes" : "no") +
                    "; phi=1 residual " + fmt(one.residual) + " (tol 1e-12)"};
}

// ---------------------------------------------------------------- 7

Verdict mc_vs_exact() {
  // the >= 95% rule counts (seed, beta) pairs, so several disorder samples are pooled
  constexpr std::size_t kSeeds = 10;
  std::size_t points = 0, within = 0, ti_ok = 0;
  double worst_ti = 0.0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const Model m = Model::sk(sk_disorder(12, derive_seed(kMaster, 7 + 100 * s)));
    const auto table = EnergyTable::build(m);
    PtOptions o;
    o.sweeps = 20000;
    o.ladders = 4;
    const auto ladder = TemperatureLadder::range(0.0, 1.6, 0.1);
    const auto result = parallel_tempering_run(m, ladder, o, derive_seed(kMaster, 77 + 100 * s));
    std::string line = "seed " + std::to_string(s) + " z(u)/z(R^2):";
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      const double b = ladder.beta(i);
      // grid {0.2, 0.4, ..., 1.6}
      const double k = b / 0.2;
      if (b < 0.15 || std::abs(k - std::round(k)) > 1e-6) continue;
      const ProductMeasure pm(table, b);
      const double zu = (result.traces[i].u_mean - pm.energy_mean()) / result.traces[i].u_stderr;
      const double zr = (result.overlap_traces[i].u_mean - pm.pair([](double r) { return r * r; })) /
                        result.overlap_traces[i].u_stderr;
      points += 2;
      within += (std::abs(zu) <= 3.0) + (std::abs(zr) <= 3.0);
      line += " " + fmt(zu, 2) + "/" + fmt(zr, 2);
    }
    const auto ti = thermo_integrate(result.traces, Beta(1.0), m.prior_mean_energy_density());
    const double z_ti = (ti.value - table.free_energy(1.0)) / ti.error;
    ti_ok += std::abs(z_ti) <= 3.0;
    worst_ti = std::max(worst_ti, std::abs(z_ti));
    detail(line + "; TI " + fmt(ti.value, 6) + " +- " + fmt(ti.error, 2) + " (z " + fmt(z_ti, 2) + ")");
  }
  const double fraction = static_cast<double>(within) / static_cast<double>(points);
  return {fraction >= 0.95 && ti_ok == kSeeds,
          std::to_string(within) + "/" + std::to_string(points) + " (seed, beta) points within 3 stderr (need >= 95%); TI within 3 errors for " +
              std::to_string(ti_ok) + "/" + std::to_string(kSeeds) + " seeds, max |z| " + fmt(worst_ti, 3)};
}

// ---------------------------------------------------------------- 8

Verdict convexity() {
  const double step = 0.05;
  const auto betas = grid(0.1, 2.0, step);
  double worst_second = 1e300;
  double worst_constant = 0.0;
  for (const auto& m : ensemble(10, 50, 8)) {
    const auto table = EnergyTable::build(m);
    std::vector<double> f;
    for (double b : betas) f.push_back(table.free_energy(b));
    for (std::size_t k = 1; k + 1 < f.size(); ++k) {
      worst_second = std::min(worst_second, f[k + 1] - 2.0 * f[k] + f[k - 1]);
      // <H/N> from the streaming enumerator, finite differences from the table
      const double u = enumerate(m, Beta(betas[k])).energy_density_mean;
      const double fd = (f[k + 1] - f[k - 1]) / (2.0 * step);
      worst_constant = std::max(worst_constant, std::abs(u - fd) / (step * step));
    }
  }
  return {worst_second >= -1e-9 && worst_constant <= 10.0,
          "min second difference " + fmt(worst_second) + " (>= -1e-9); max |u - FD|/step^2 = " +
              fmt(worst_constant) + " (<= 10)"};
}

// ---------------------------------------------------------------- 9

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SPINCONC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> data_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename() != "manifest.json") out[e.path().filename().string()] = read_text(e.path());
  }
  return out;
}

Verdict reproducibility() {
  const fs::path root = fs::temp_directory_path() / ("spinconc-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::vector<std::pair<std::string, std::string>> runs{
      {"exact", "exact --model sk --n 12 --beta 1 --seed 7 --betas 0:2:0.25"},
      {"concentration", "concentration --model sk --n 10 --beta 1 --c 0.3 --cprime 0.3 --samples 20 --seed 3 "
                        "--eref plugin"},
      {"tail", "audit --kind tail --n 8 --beta 1 --samples 10 --seed 3 --name tail"},
      {"moment", "audit --kind moment --n 8 --beta 1 --samples 10 --seed 3 --name moment"},
      {"sandwich", "audit --kind sandwich --n 8 --beta 1 --samples 10 --seed 3 --name sandwich"},
      {"gg", "gg --n 8 --beta 1 --replicas 2 --phi r2 --samples 50 --mode exact --seed 3"},
      {"ggmc", "gg --n 8 --beta 1 --replicas 2 --phi r2 --samples 10 --mode mc --sweeps 500 --seed 3 --name ggmc"},
      {"sample", "sample --n 10 --betas 0:1.6:0.2 --sweeps 3000 --chains 2 --seed 3 --ti true --beta 1"},
      {"sweep", "sweep --ns 6,8,10 --beta 1 --samples 20 --seed 3"},
  };
  std::size_t identical = 0;
  std::size_t reruns_ok = 0;
  std::size_t files = 0;
  for (const auto& [name, args] : runs) {
    const auto a = root / "a";
    const auto b = root / "b";
    const int sa = run_cli(args + " --out " + a.string(), root / (name + "-a.log"));
    const int sb = run_cli(args + " --out " + b.string(), root / (name + "-b.log"));
    const auto fa = data_files(a / name);
    const auto fb = data_files(b / name);
    const bool same = sa == sb && !fa.empty() && fa == fb;
    identical += same;
    files += fa.size();
    const int sr = run_cli("rerun --manifest " + (a / name / "manifest.json").string() + " --out " + (root / "r").string(),
                           root / (name + "-r.log"));
    const bool rerun_same = sr != 4 && sr == sa && data_files(root / "r" / name) == fa;
    reruns_ok += rerun_same;
    detail(name + ": exit " + std::to_string(sa) + ", " + std::to_string(fa.size()) + " files, repeat " +
           (same ? "identical" : "DIFFERENT") + ", manifest rerun " + (rerun_same ? "identical" : "DIFFERENT"));
  }
  fs::remove_all(root);
  return {identical == runs.size() && reruns_ok == runs.size(),
          std::to_string(identical) + "/" + std::to_string(runs.size()) + " repeated runs and " +
              std::to_string(reruns_ok) + "/" + std::to_string(runs.size()) + " manifest reruns byte-identical (" +
              std::to_string(files) + " data files)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"closed-form constant field", closed_form},
      {"proof-chain tail and moment audits", proof_chain},
      {"concentration set mass and restricted gap", theorem_items},
      {"L1 concentration trend", concentration_trend},
      {"integration-by-parts identities with beta", ibp},
      {"Ghirlanda-Guerra residual bound", gg},
      {"Monte Carlo against enumeration", mc_vs_exact},
      {"convexity and derivative of F_N", convexity},
      {"CLI reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << k + 1 << " (" << criteria[k].first << "): "
              << v.summary << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
