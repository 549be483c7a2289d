#pragma once

// Finite-N audits of free-energy concentration.
//
// Everything is built on the one-sided difference quotients of F_N around a
// reference energy density e_ref:
//
//   delta+(lambda) = (F_N(beta + lambda) - F_N(beta)) / lambda - e_ref
//   delta-(lambda) = (F_N(beta - lambda) - F_N(beta)) / lambda + e_ref
//   gamma(lambda)  = max(delta+, delta-, 0)
//
// With A+(eps) = {H/N - e_ref > eps} and A-(eps) = {H/N - e_ref < -eps} the
// exponential Chebyshev bound gives, for every lambda > 0 and any e_ref,
//
//   B+(eps) <= F_N(beta + lambda) - lambda (eps + e_ref)
//   B-(eps) <= F_N(beta - lambda) - lambda (eps - e_ref)
//   G(A+-(eps)) <= exp(-N lambda (eps - gamma))
//
// where B+- is the restricted log-partition function of A+-. These are exact
// inequalities at every N, so the audits below compare both sides computed
// by enumeration and allow only floating-point slack.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spinconc/error.hpp"
#include "spinconc/exact.hpp"
#include "spinconc/model.hpp"
#include "spinconc/parallel.hpp"
#include "spinconc/stats.hpp"

namespace spinconc {

inline constexpr double kLogSlack = 1e-9;
inline constexpr double kProbabilitySlack = 1e-12;
inline constexpr double kDefaultWindow = 0.5;
inline constexpr double kDefaultExponent = 0.3;

/// How the reference energy density is chosen: the finite-N derivative
/// F_N'(beta) = <H/N>_beta, or a value supplied by the caller.
class ReferenceEnergy {
 public:
  static ReferenceEnergy plug_in() { return ReferenceEnergy(true, 0.0); }
  static ReferenceEnergy supplied(double value) {
    if (!std::isfinite(value)) throw InvalidArgument("ReferenceEnergy: value must be finite");
    return ReferenceEnergy(false, value);
  }

  bool is_plug_in() const noexcept { return plug_in_; }
  double value() const noexcept { return value_; }

  double resolve(const EnergyTable& table, double beta) const {
    return plug_in_ ? table.energy_density_mean(beta) : value_;
  }

 private:
  ReferenceEnergy(bool plug_in, double value) : plug_in_(plug_in), value_(value) {}
  bool plug_in_;
  double value_;
};

struct DeltaPair {
  double delta_plus = 0.0;
  double delta_minus = 0.0;
  double gamma = 0.0;
  double lambda = 0.0;
  double beta = 0.0;
  double e_ref = 0.0;
};

/// delta+-, gamma from F_N(beta - lambda), F_N(beta), F_N(beta + lambda).
inline DeltaPair finite_deltas(double f_minus, double f_center, double f_plus, double lambda, double e_ref,
                               double beta = 0.0) {
  if (!(lambda > 0.0)) throw InvalidArgument("finite_deltas: lambda must be positive");
  DeltaPair d;
  d.lambda = lambda;
  d.beta = beta;
  d.e_ref = e_ref;
  d.delta_plus = (f_plus - f_center) / lambda - e_ref;
  d.delta_minus = (f_minus - f_center) / lambda + e_ref;
  d.gamma = std::max({d.delta_plus, d.delta_minus, 0.0});
  return d;
}

inline DeltaPair deltas_at(const EnergyTable& table, double beta, double lambda, double e_ref) {
  return finite_deltas(table.free_energy(beta - lambda), table.free_energy(beta), table.free_energy(beta + lambda),
                       lambda, e_ref, beta);
}

inline void check_exponents(double c, double cprime) {
  if (!(c > 0.0) || !(cprime > 0.0) || !(c + cprime < 1.0)) {
    throw InvalidArgument("exponents must satisfy c > 0, c' > 0, c + c' < 1");
  }
}

/// The concentration set C_N = {|H/N - e_ref| <= eps_N}, its Gibbs and prior
/// masses, and the audits of the two finite-N bounds with lambda_N = N^{-c},
/// eps_N = N^{-c'} + gamma(lambda_N).
struct Theorem1Report {
  std::size_t n = 0;
  double beta = 0.0;
  double c = 0.0;
  double cprime = 0.0;
  double lambda_n = 0.0;
  double epsilon_n = 0.0;
  DeltaPair deltas;
  double e_ref = 0.0;
  double free_energy = 0.0;
  double gibbs_mass_outside = 0.0;
  double bound_ii = 0.0;
  std::optional<double> restricted_log_partition;
  std::optional<double> restricted_gap;
  double bound_iii = 0.0;
  std::optional<double> prior_log_mass;  // N^{-1} log nu_N(C_N)
  double entropy_target = 0.0;           // F_N - beta e_ref
  bool pass_ii = false;
  bool pass_iii = false;
  bool pass_entropy = false;  // |prior_log_mass - (B_C - beta e_ref)| <= beta eps_N
  std::string diagnostic;

  bool pass() const noexcept { return pass_ii && pass_iii && pass_entropy; }
};

inline Theorem1Report theorem1_report(const EnergyTable& table, Beta beta, double c, double cprime,
                                      const ReferenceEnergy& reference) {
  check_exponents(c, cprime);
  const double b = beta.value();
  const auto n = static_cast<double>(table.size());

  Theorem1Report r;
  r.n = table.size();
  r.beta = b;
  r.c = c;
  r.cprime = cprime;
  r.e_ref = reference.resolve(table, b);
  r.free_energy = table.free_energy(b);
  r.lambda_n = std::pow(n, -c);
  r.deltas = deltas_at(table, b, r.lambda_n, r.e_ref);
  r.epsilon_n = std::pow(n, -cprime) + r.deltas.gamma;

  const double e_ref = r.e_ref;
  const double eps = r.epsilon_n;
  const auto in_set = [&](std::uint64_t, double e) { return std::abs(e / n - e_ref) <= eps; };
  const auto outside = [&](std::uint64_t k, double e) { return !in_set(k, e); };

  const double exponent = std::pow(n, 1.0 - (c + cprime));
  r.bound_ii = 2.0 * std::exp(-exponent);
  r.bound_iii = r.bound_ii / n;
  r.gibbs_mass_outside = table.gibbs_mass(b, outside);
  r.pass_ii = r.gibbs_mass_outside <= r.bound_ii + kProbabilitySlack;

  r.restricted_log_partition = table.restricted_log_partition(b, in_set);
  r.entropy_target = r.free_energy - b * e_ref;
  const double prior = table.prior_mass(in_set);
  if (prior > 0.0) r.prior_log_mass = std::log(prior) / n;

  if (r.restricted_log_partition) {
    r.restricted_gap = std::abs(*r.restricted_log_partition - r.free_energy);
    r.pass_iii = *r.restricted_gap <= r.bound_iii + kLogSlack;
    const double mismatch = std::abs(*r.prior_log_mass - (*r.restricted_log_partition - b * e_ref));
    r.pass_entropy = mismatch <= b * eps + kLogSlack;
    if (!r.pass_iii) r.diagnostic = "restricted gap exceeds 2exp(-N^{1-(c+c')})/N";
  } else {
    r.pass_iii = false;
    r.pass_entropy = false;
    r.diagnostic = "C_N is empty for the supplied reference energy";
  }
  if (!r.pass_ii) r.diagnostic += (r.diagnostic.empty() ? "" : "; ") + std::string("Gibbs mass outside C_N exceeds bound");
  return r;
}

inline Theorem1Report theorem1_report(const Model& model, Beta beta, double c, double cprime,
                                      const ReferenceEnergy& reference, const EnumerationOptions& options = {}) {
  check_exponents(c, cprime);
  return theorem1_report(EnergyTable::build(model, options), beta, c, cprime, reference);
}

struct TailAudit {
  double epsilon = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  std::optional<double> b_plus;
  std::optional<double> b_minus;
  double rhs_plus = 0.0;
  double rhs_minus = 0.0;
  double gibbs_plus = 0.0;
  double gibbs_minus = 0.0;
  double exp_bound = 0.0;  // exp(-N lambda (eps - gamma))
  bool pass_b_plus = false;
  bool pass_b_minus = false;
  bool pass_mass_plus = false;
  bool pass_mass_minus = false;
  bool pass_union = false;

  bool pass() const noexcept { return pass_b_plus && pass_b_minus && pass_mass_plus && pass_mass_minus && pass_union; }
};

inline void check_lambda_window(double lambda, double window, const char* what) {
  if (!(lambda > 0.0) || !(lambda < window)) {
    throw InvalidArgument(std::string(what) + ": lambda must lie in (0, " + std::to_string(window) + ")");
  }
}

inline std::vector<TailAudit> tail_bound_audit(const EnergyTable& table, Beta beta, std::span<const double> epsilons,
                                               std::span<const double> lambdas, double e_ref,
                                               double window = kDefaultWindow) {
  if (epsilons.empty() || lambdas.empty()) throw InvalidArgument("tail_bound_audit: empty grid");
  for (double eps : epsilons) {
    if (!(eps > 0.0)) throw InvalidArgument("tail_bound_audit: epsilon must be positive");
  }
  for (double lambda : lambdas) check_lambda_window(lambda, window, "tail_bound_audit");

  const double b = beta.value();
  const auto n = static_cast<double>(table.size());
  const double f_center = table.free_energy(b);
  std::vector<TailAudit> out;
  out.reserve(epsilons.size() * lambdas.size());
  for (double lambda : lambdas) {
    const double f_plus = table.free_energy(b + lambda);
    const double f_minus = table.free_energy(b - lambda);
    const DeltaPair d = finite_deltas(f_minus, f_center, f_plus, lambda, e_ref, b);
    for (double eps : epsilons) {
      const auto above = [&](std::uint64_t, double e) { return e / n - e_ref > eps; };
      const auto below = [&](std::uint64_t, double e) { return e / n - e_ref < -eps; };
      TailAudit a;
      a.epsilon = eps;
      a.lambda = lambda;
      a.gamma = d.gamma;
      a.b_plus = table.restricted_log_partition(b, above);
      a.b_minus = table.restricted_log_partition(b, below);
      a.rhs_plus = f_plus - lambda * (eps + e_ref);
      a.rhs_minus = f_minus - lambda * (eps - e_ref);
      a.gibbs_plus = table.gibbs_mass(b, above);
      a.gibbs_minus = table.gibbs_mass(b, below);
      a.exp_bound = std::exp(-n * lambda * (eps - d.gamma));
      a.pass_b_plus = !a.b_plus || *a.b_plus <= a.rhs_plus + kLogSlack;
      a.pass_b_minus = !a.b_minus || *a.b_minus <= a.rhs_minus + kLogSlack;
      a.pass_mass_plus = a.gibbs_plus <= a.exp_bound + kProbabilitySlack;
      a.pass_mass_minus = a.gibbs_minus <= a.exp_bound + kProbabilitySlack;
      a.pass_union = a.gibbs_plus + a.gibbs_minus <= 2.0 * a.exp_bound + kProbabilitySlack;
      out.push_back(a);
    }
  }
  return out;
}

inline std::vector<TailAudit> tail_bound_audit(const Model& model, Beta beta, std::span<const double> epsilons,
                                               std::span<const double> lambdas, double e_ref,
                                               double window = kDefaultWindow,
                                               const EnumerationOptions& options = {}) {
  return tail_bound_audit(EnergyTable::build(model, options), beta, epsilons, lambdas, e_ref, window);
}

/// One-sided and absolute Gibbs moments of H/N - e_ref against the bounds
/// obtained by integrating the tail estimate over eps.
struct MomentAudit {
  double lambda0 = 0.0;
  double gamma0 = 0.0;          // gamma(lambda0)
  double lambda = 0.0;          // lambda0, or 1/(N gamma0) when lambda0 N gamma0 > 1
  double gamma = 0.0;           // gamma(lambda)
  double lhs_plus = 0.0;        // <(H/N - e_ref)_+>
  double lhs_minus = 0.0;       // <(H/N - e_ref)_->
  double lhs_abs = 0.0;         // <|H/N - e_ref|>
  double rhs_integral = 0.0;    // exp(N lambda gamma) / (N lambda)
  double rhs_max = 0.0;         // e * max(1/(N lambda0), gamma0)
  double rhs = 0.0;             // 2e/(N lambda0) + 2e gamma0
  bool pass = false;
};

inline MomentAudit moment_bound_audit(const EnergyTable& table, Beta beta, double lambda0, double e_ref,
                                      double window = kDefaultWindow) {
  check_lambda_window(lambda0, window, "moment_bound_audit");
  const double b = beta.value();
  const auto n = static_cast<double>(table.size());
  MomentAudit m;
  m.lambda0 = lambda0;
  m.gamma0 = deltas_at(table, b, lambda0, e_ref).gamma;
  m.lambda = lambda0 * n * m.gamma0 <= 1.0 ? lambda0 : 1.0 / (n * m.gamma0);
  m.gamma = deltas_at(table, b, m.lambda, e_ref).gamma;

  m.lhs_plus = table.gibbs_mean(b, [&](std::uint64_t, double e) { return std::max(e / n - e_ref, 0.0); });
  m.lhs_minus = table.gibbs_mean(b, [&](std::uint64_t, double e) { return std::max(e_ref - e / n, 0.0); });
  m.lhs_abs = table.gibbs_mean(b, [&](std::uint64_t, double e) { return std::abs(e / n - e_ref); });

  constexpr double e = std::numbers::e;
  m.rhs_integral = std::exp(n * m.lambda * m.gamma) / (n * m.lambda);
  m.rhs_max = e * std::max(1.0 / (n * lambda0), m.gamma0);
  m.rhs = 2.0 * e / (n * lambda0) + 2.0 * e * m.gamma0;

  const bool chain = m.lhs_plus <= m.rhs_integral + kLogSlack && m.lhs_minus <= m.rhs_integral + kLogSlack &&
                     m.rhs_integral <= m.rhs_max + kLogSlack && m.lhs_plus <= m.rhs_max + kLogSlack &&
                     m.lhs_minus <= m.rhs_max + kLogSlack;
  m.pass = chain && m.lhs_abs <= m.rhs + kLogSlack;
  return m;
}

inline MomentAudit moment_bound_audit(const Model& model, Beta beta, double lambda0, double e_ref,
                                      double window = kDefaultWindow, const EnumerationOptions& options = {}) {
  check_lambda_window(lambda0, window, "moment_bound_audit");
  return moment_bound_audit(EnergyTable::build(model, options), beta, lambda0, e_ref, window);
}

/// <|H/N - e_ref|>_beta.
inline double gibbs_l1_deviation(const EnergyTable& table, double beta, double e_ref) {
  const auto n = static_cast<double>(table.size());
  return table.gibbs_mean(beta, [&](std::uint64_t, double e) { return std::abs(e / n - e_ref); });
}

struct L1Concentration {
  std::vector<double> per_sample;  // <|H/N - e_ref|> per disorder sample
  double disorder_mean = 0.0;
  double stderr_mean = 0.0;
  double center = 0.0;  // ensemble mean of <H/N>, used by the centered variant
  std::vector<double> centered_per_sample;
  double centered_mean = 0.0;
  double centered_stderr = 0.0;
};

inline L1Concentration gibbs_l1_concentration(std::span<const Model> ensemble, Beta beta,
                                              const ReferenceEnergy& reference,
                                              const EnumerationOptions& options = {}) {
  if (ensemble.empty()) throw InvalidArgument("gibbs_l1_concentration: empty ensemble");
  const double b = beta.value();
  const std::size_t count = ensemble.size();
  std::vector<double> l1(count);
  std::vector<double> mean_h(count);
  EnumerationOptions inner = options;
  inner.threads = 1;
  parallel_for(count, options.threads, [&](std::size_t s) {
    const EnergyTable table = EnergyTable::build(ensemble[s], inner);
    mean_h[s] = table.energy_density_mean(b);
    l1[s] = gibbs_l1_deviation(table, b, reference.is_plug_in() ? mean_h[s] : reference.value());
  });
  L1Concentration out;
  out.per_sample = l1;
  const Estimate e = independent_estimate(l1);
  out.disorder_mean = e.mean;
  out.stderr_mean = e.error;
  out.center = mean_of(mean_h);
  out.centered_per_sample.resize(count);
  parallel_for(count, options.threads, [&](std::size_t s) {
    const EnergyTable table = EnergyTable::build(ensemble[s], inner);
    out.centered_per_sample[s] = gibbs_l1_deviation(table, b, out.center);
  });
  const Estimate ce = independent_estimate(out.centered_per_sample);
  out.centered_mean = ce.mean;
  out.centered_stderr = ce.error;
  return out;
}

/// N^{-1} log [G(A|C_N) / nu(A|C_N)] and the chain of approximations
/// connecting the conditional Gibbs and prior probabilities:
///   line1 = N^{-1} log G(A|C)
///   line2 = N^{-1} log G(A n C)                       (differs by the restricted gap)
///   line3 = N^{-1} log nu(A n C) + beta e_ref - F_N    (|line2 - line3| <= beta eps_N)
///   line4 = line3 with the limiting F replaced by F_N  (identical at finite N)
///   line5 = N^{-1} log nu(A n C) - N^{-1} log nu(C)    (entropy substitution)
///   line6 = N^{-1} log nu(A|C)                         (equal to line5)
struct ConditionalEquivalenceReport {
  double value = 0.0;
  double lines[6] = {};
  double epsilon_n = 0.0;
  double e_ref = 0.0;
  double restricted_gap = 0.0;    // line2 - line1 = -N^{-1} log G(C)
  double entropy_mismatch = 0.0;  // |F_N - beta e_ref - N^{-1} log nu(C)|
  double chain_bound = 0.0;       // beta eps_N + restricted_gap + entropy_mismatch
  bool pass = false;
};

template <class Predicate>
ConditionalEquivalenceReport conditional_equivalence(const EnergyTable& table, Beta beta, Predicate&& test_set,
                                                     double c, double cprime,
                                                     const ReferenceEnergy& reference = ReferenceEnergy::plug_in()) {
  check_exponents(c, cprime);
  const double b = beta.value();
  const std::size_t size = table.size();
  const auto n = static_cast<double>(size);
  const double e_ref = reference.resolve(table, b);
  const double lambda = std::pow(n, -c);
  const double eps = std::pow(n, -cprime) + deltas_at(table, b, lambda, e_ref).gamma;

  // membership of the test set, evaluated once per configuration
  std::vector<char> in_a(table.count());
  SpinConfiguration config(size);
  for (std::uint64_t k = 0; k < table.count(); ++k) {
    config.assign_bits(k);
    in_a[k] = test_set(static_cast<const SpinConfiguration&>(config)) ? 1 : 0;
  }
  const auto in_c = [&](std::uint64_t, double e) { return std::abs(e / n - e_ref) <= eps; };
  const auto in_ac = [&](std::uint64_t k, double e) { return in_a[k] && in_c(k, e); };

  const double nu_c = table.prior_mass(in_c);
  const double nu_ac = table.prior_mass(in_ac);
  if (nu_ac == 0.0) throw DomainError("conditional_equivalence: test set does not meet C_N");

  // log-scale restricted partition functions stay finite where masses underflow
  const double b_c = *table.restricted_log_partition(b, in_c);
  const double b_ac = *table.restricted_log_partition(b, in_ac);
  const double f = table.free_energy(b);
  const auto log_n = [n](double x) { return std::log(x) / n; };

  ConditionalEquivalenceReport r;
  r.epsilon_n = eps;
  r.e_ref = e_ref;
  r.value = (b_ac - b_c) - (log_n(nu_ac) - log_n(nu_c));
  r.lines[0] = b_ac - b_c;
  r.lines[1] = b_ac - f;
  r.lines[2] = log_n(nu_ac) + b * e_ref - f;
  r.lines[3] = r.lines[2];
  r.lines[4] = log_n(nu_ac) - log_n(nu_c);
  r.lines[5] = log_n(nu_ac / nu_c);
  r.restricted_gap = f - b_c;
  r.entropy_mismatch = std::abs(f - b * e_ref - log_n(nu_c));
  r.chain_bound = b * eps + r.restricted_gap + r.entropy_mismatch;
  r.pass = std::abs(r.value) <= r.chain_bound + kLogSlack &&
           std::abs(r.lines[1] - r.lines[2]) <= b * eps + kLogSlack;
  return r;
}

/// Both display chains comparing restricted log-partition functions at
/// beta and beta' <= beta, given |E(beta) - E(beta')| <= eps.
struct SandwichReport {
  // upper chain: upper[0] <= upper[1] <= upper[2]
  double upper[3] = {};
  // lower chain: lower[0] >= lower[1] >= lower[2]
  double lower[3] = {};
  bool pass_upper = false;
  bool pass_lower = false;
  bool pass() const noexcept { return pass_upper && pass_lower; }
};

inline SandwichReport sandwich_check(const EnergyTable& table, Beta beta, Beta beta_prime, double epsilon,
                                     double e_beta, double e_beta_prime) {
  if (!(epsilon > 0.0)) throw InvalidArgument("sandwich_check: epsilon must be positive");
  if (beta_prime > beta) throw PreconditionError("sandwich_check: requires beta' <= beta");
  if (std::abs(e_beta - e_beta_prime) > epsilon) {
    throw PreconditionError("sandwich_check: |E(beta) - E(beta')| must not exceed epsilon");
  }
  const double b = beta.value();
  const double bp = beta_prime.value();
  const auto n = static_cast<double>(table.size());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const auto window = [&](double center, double radius) {
    return [=](std::uint64_t, double e) { return std::abs(e / n - center) <= radius; };
  };
  const auto restricted = [&](double at, double center, double radius) {
    return table.restricted_log_partition(at, window(center, radius)).value_or(kNegInf);
  };

  SandwichReport r;
  r.upper[0] = restricted(b, e_beta, epsilon);
  r.upper[1] = restricted(b, e_beta_prime, 2.0 * epsilon);
  r.upper[2] = restricted(bp, e_beta_prime, 2.0 * epsilon) + (b - bp) * (e_beta_prime + 2.0 * epsilon);
  r.lower[0] = restricted(b, e_beta, 2.0 * epsilon);
  r.lower[1] = restricted(b, e_beta_prime, epsilon);
  r.lower[2] = restricted(bp, e_beta_prime, epsilon) + (b - bp) * (e_beta_prime - epsilon);
  r.pass_upper = r.upper[0] <= r.upper[1] + kLogSlack && r.upper[1] <= r.upper[2] + kLogSlack;
  r.pass_lower = r.lower[0] + kLogSlack >= r.lower[1] && r.lower[1] + kLogSlack >= r.lower[2];
  return r;
}

}  // namespace spinconc
