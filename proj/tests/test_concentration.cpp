#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "spinconc/concentration.hpp"
#include "spinconc/exact.hpp"
#include "spinconc/model.hpp"

using namespace spinconc;

namespace {

// Constant field: H/N = h (2k/N - 1) with k up-spins, so every Gibbs
// functional of the energy is a weighted binomial sum.
template <class F>
double binomial_gibbs_mean(std::size_t n, double h, double beta, F&& f) {
  double top = -1e300;
  std::vector<double> logw(n + 1), dens(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    dens[k] = h * (2.0 * k / n - 1.0);
    logw[k] = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + beta * n * dens[k];
    top = std::max(top, logw[k]);
  }
  double z = 0.0, acc = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double w = std::exp(logw[k] - top);
    z += w;
    acc += w * f(dens[k]);
  }
  return acc / z;
}

double field_free_energy(double beta, double h) { return std::log(std::cosh(beta * h)); }

const std::vector<double> kEpsilons{0.05, 0.1, 0.2, 0.3, 0.5};
const std::vector<double> kLambdas{0.05, 0.1, 0.2, 0.3, 0.4};

}  // namespace

TEST(Deltas, ConstantFieldClosedForm) {
  const double beta = 0.7, h = 1.0, lambda = 0.2;
  const auto table = EnergyTable::build(Model::constant_field(10, h));
  const double e = h * std::tanh(beta * h);
  const auto d = deltas_at(table, beta, lambda, e);
  const double plus = (field_free_energy(beta + lambda, h) - field_free_energy(beta, h)) / lambda - e;
  const double minus = (field_free_energy(beta - lambda, h) - field_free_energy(beta, h)) / lambda + e;
  EXPECT_NEAR(d.delta_plus, plus, 1e-12);
  EXPECT_NEAR(d.delta_minus, minus, 1e-12);
  EXPECT_GE(d.delta_plus, 0.0);  // convexity with the plug-in reference
  EXPECT_GE(d.delta_minus, 0.0);
  EXPECT_NEAR(d.gamma, std::max(plus, minus), 1e-12);
}

TEST(Deltas, GammaIsNonNegativeEvenForOffsetReference) {
  const auto d = finite_deltas(0.0, 0.0, 0.0, 0.1, 5.0);
  EXPECT_DOUBLE_EQ(d.delta_plus, -5.0);
  EXPECT_DOUBLE_EQ(d.delta_minus, 5.0);
  EXPECT_DOUBLE_EQ(d.gamma, 5.0);
  EXPECT_THROW(finite_deltas(0, 0, 0, 0.0, 0.0), InvalidArgument);
}

TEST(Validation, ExponentsAndWindow) {
  EXPECT_THROW(check_exponents(0.5, 0.5), InvalidArgument);
  EXPECT_THROW(check_exponents(0.0, 0.3), InvalidArgument);
  EXPECT_NO_THROW(check_exponents(0.3, 0.3));
  const auto table = EnergyTable::build(Model::constant_field(4, 1.0));
  EXPECT_THROW(moment_bound_audit(table, Beta(1.0), 0.5, 0.0), InvalidArgument);
  EXPECT_NO_THROW(moment_bound_audit(table, Beta(1.0), 0.6, 0.0, 0.7));
  const std::vector<double> bad{0.5};
  EXPECT_THROW(tail_bound_audit(table, Beta(1.0), kEpsilons, bad, 0.0), InvalidArgument);
  EXPECT_THROW(ReferenceEnergy::supplied(std::nan("")), InvalidArgument);
}

TEST(TailAudit, ConstantFieldMassesMatchBinomial) {
  const std::size_t n = 12;
  const double beta = 0.8, h = 1.0;
  const double e = h * std::tanh(beta * h);
  const auto table = EnergyTable::build(Model::constant_field(n, h));
  const auto audits = tail_bound_audit(table, Beta(beta), kEpsilons, kLambdas, e);
  ASSERT_EQ(audits.size(), kEpsilons.size() * kLambdas.size());
  for (const auto& a : audits) {
    const double above = binomial_gibbs_mean(n, h, beta, [&](double x) { return x - e > a.epsilon ? 1.0 : 0.0; });
    const double below = binomial_gibbs_mean(n, h, beta, [&](double x) { return x - e < -a.epsilon ? 1.0 : 0.0; });
    EXPECT_NEAR(a.gibbs_plus, above, 1e-12);
    EXPECT_NEAR(a.gibbs_minus, below, 1e-12);
    EXPECT_TRUE(a.pass()) << a.epsilon << " " << a.lambda;
  }
}

TEST(TailAudit, SkEnsembleHasNoViolations) {
  for (std::size_t n : {6u, 8u}) {
    for (const Model& m : sk_ensemble(n, 10, 99)) {
      const auto table = EnergyTable::build(m);
      for (double beta : {0.5, 1.5}) {
        const double e = table.energy_density_mean(beta);
        for (const auto& a : tail_bound_audit(table, Beta(beta), kEpsilons, kLambdas, e)) EXPECT_TRUE(a.pass());
      }
    }
  }
}

TEST(TailAudit, EmptyTailsAreVacuous) {
  const auto table = EnergyTable::build(Model::constant_field(6, 1.0));
  const std::vector<double> huge{5.0};
  const std::vector<double> lam{0.1};
  const auto a = tail_bound_audit(table, Beta(1.0), huge, lam, 0.0).front();
  EXPECT_FALSE(a.b_plus.has_value());
  EXPECT_FALSE(a.b_minus.has_value());
  EXPECT_EQ(a.gibbs_plus, 0.0);
  EXPECT_TRUE(a.pass());
}

TEST(MomentAudit, ConstantFieldAgainstBinomial) {
  const std::size_t n = 16;
  const double beta = 1.0, h = 1.0;
  const double e = h * std::tanh(beta * h);
  const auto table = EnergyTable::build(Model::constant_field(n, h));
  for (double lambda0 : kLambdas) {
    const auto m = moment_bound_audit(table, Beta(beta), lambda0, e);
    EXPECT_NEAR(m.lhs_abs, binomial_gibbs_mean(n, h, beta, [&](double x) { return std::abs(x - e); }), 1e-12);
    EXPECT_NEAR(m.lhs_plus + m.lhs_minus, m.lhs_abs, 1e-12);
    EXPECT_NEAR(m.rhs, 2 * std::numbers::e / (n * lambda0) + 2 * std::numbers::e * m.gamma0, 1e-14);
    EXPECT_TRUE(m.pass);
  }
}

TEST(MomentAudit, LambdaSelectionRule) {
  // a supplied reference far from F_N' makes gamma0 large, forcing lambda = 1/(N gamma0)
  const auto table = EnergyTable::build(Model::constant_field(8, 1.0));
  const auto far = moment_bound_audit(table, Beta(1.0), 0.3, 0.0);
  ASSERT_GT(0.3 * 8 * far.gamma0, 1.0);
  EXPECT_NEAR(far.lambda, 1.0 / (8 * far.gamma0), 1e-15);
  EXPECT_TRUE(far.pass);
  const auto near = moment_bound_audit(table, Beta(1.0), 0.05, std::tanh(1.0));
  ASSERT_LE(0.05 * 8 * near.gamma0, 1.0);
  EXPECT_EQ(near.lambda, 0.05);
}

TEST(ConcentrationSet, ConstantFieldPinnedQuantities) {
  const std::size_t n = 16;
  const auto table = EnergyTable::build(Model::constant_field(n, 1.0));
  const auto r = theorem1_report(table, Beta(1.0), 0.3, 0.3, ReferenceEnergy::plug_in());
  EXPECT_NEAR(r.lambda_n, std::pow(16.0, -0.3), 1e-15);
  EXPECT_NEAR(r.bound_ii, 2 * std::exp(-std::pow(16.0, 0.4)), 1e-15);
  EXPECT_NEAR(r.bound_iii, r.bound_ii / 16, 1e-15);
  EXPECT_NEAR(r.e_ref, std::tanh(1.0), 1e-12);
  const double lam = r.lambda_n;
  const double gamma = std::max((field_free_energy(1 + lam, 1) - field_free_energy(1, 1)) / lam - std::tanh(1.0),
                                (field_free_energy(1 - lam, 1) - field_free_energy(1, 1)) / lam + std::tanh(1.0));
  EXPECT_NEAR(r.epsilon_n, std::pow(16.0, -0.3) + gamma, 1e-12);
  const double outside = binomial_gibbs_mean(n, 1.0, 1.0, [&](double x) {
    return std::abs(x - r.e_ref) > r.epsilon_n ? 1.0 : 0.0;
  });
  EXPECT_NEAR(r.gibbs_mass_outside, outside, 1e-12);
  EXPECT_TRUE(r.pass_entropy);
}

TEST(ConcentrationSet, RestrictedGapIsLogOfInsideMass) {
  const auto table = EnergyTable::build(Model::sk(sk_disorder(10, 3)));
  const auto r = theorem1_report(table, Beta(1.0), 0.3, 0.3, ReferenceEnergy::plug_in());
  ASSERT_TRUE(r.restricted_gap.has_value());
  EXPECT_NEAR(*r.restricted_gap, -std::log1p(-r.gibbs_mass_outside) / 10, 1e-12);
}

TEST(ConcentrationSet, FarReferenceIsAbsorbedByGamma) {
  // a poor reference inflates gamma, and with it eps_N, past the offset
  const auto table = EnergyTable::build(Model::constant_field(6, 1.0));
  const auto r = theorem1_report(table, Beta(1.0), 0.3, 0.3, ReferenceEnergy::supplied(100.0));
  EXPECT_GE(r.epsilon_n, 100.0 - std::tanh(1.0));
  ASSERT_TRUE(r.restricted_log_partition.has_value());
  EXPECT_TRUE(r.pass());
}

TEST(L1Concentration, ConstantFieldMatchesBinomialAndDecreases) {
  double previous = 1e9;
  for (std::size_t n : {6u, 8u, 10u, 12u}) {
    const std::vector<Model> one{Model::constant_field(n, 1.0)};
    const auto l1 = gibbs_l1_concentration(one, Beta(1.0), ReferenceEnergy::plug_in());
    const double e = std::tanh(1.0);
    const double oracle = binomial_gibbs_mean(n, 1.0, 1.0, [&](double x) { return std::abs(x - e); });
    EXPECT_NEAR(l1.disorder_mean, oracle, 1e-12);
    EXPECT_LT(l1.disorder_mean, previous);
    previous = l1.disorder_mean;
  }
}

TEST(ConditionalEquivalence, WholeSpaceIsExactlyZero) {
  const auto table = EnergyTable::build(Model::sk(sk_disorder(10, 5)));
  const auto r = conditional_equivalence(table, Beta(1.0), [](const SpinConfiguration&) { return true; }, 0.3, 0.3);
  EXPECT_NEAR(r.value, 0.0, 1e-14);
  EXPECT_NEAR(r.lines[4], 0.0, 1e-14);
  EXPECT_TRUE(r.pass);
}

TEST(ConditionalEquivalence, ChainHoldsForSpinEvents) {
  const auto table = EnergyTable::build(Model::sk(sk_disorder(12, 6)));
  for (double beta : {0.5, 1.0, 1.5}) {
    const auto r = conditional_equivalence(
        table, Beta(beta), [](const SpinConfiguration& c) { return c.up(0) && c.up(1); }, 0.3, 0.3);
    EXPECT_TRUE(r.pass) << beta;
    EXPECT_NEAR(r.lines[4], r.lines[5], 1e-12);
    EXPECT_LE(std::abs(r.lines[1] - r.lines[2]), beta * r.epsilon_n + 1e-9);
  }
}

TEST(Sandwich, ChainsHoldAndPreconditionsEnforced) {
  const auto table = EnergyTable::build(Model::sk(sk_disorder(12, 8)));
  const double b = 1.2, bp = 1.1;
  const double e = table.energy_density_mean(b);
  const double ep = table.energy_density_mean(bp);
  const double eps = std::abs(e - ep) + 0.05;
  const auto r = sandwich_check(table, Beta(b), Beta(bp), eps, e, ep);
  EXPECT_TRUE(r.pass());
  EXPECT_THROW(sandwich_check(table, Beta(bp), Beta(b), eps, e, ep), PreconditionError);
  EXPECT_THROW(sandwich_check(table, Beta(b), Beta(bp), std::abs(e - ep) / 2, e, ep), PreconditionError);
}
