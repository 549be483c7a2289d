#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "spinconc/exact.hpp"
#include "spinconc/mc.hpp"
#include "spinconc/model.hpp"
#include "spinconc/replica.hpp"

using namespace spinconc;

namespace {

// Literal sums over all (2^N)^(n+1) replica tuples.
ReplicaBrackets tuple_oracle(const Model& model, double beta, const OverlapFunction& phi, std::size_t n_replicas) {
  const std::size_t n = model.size();
  const std::size_t states = std::size_t{1} << n;
  const std::size_t m = n_replicas + 1;
  std::vector<double> w(states), h(states);
  double z = 0.0;
  for (std::size_t x = 0; x < states; ++x) {
    h[x] = hamiltonian(model, SpinConfiguration::from_bits(n, x)) / n;
    w[x] = std::exp(beta * n * h[x]);
    z += w[x];
  }
  for (auto& v : w) v /= z;
  const auto r = [&](std::size_t a, std::size_t b) {
    return 1.0 - 2.0 * std::popcount(a ^ b) / static_cast<double>(n);
  };
  ReplicaBrackets out;
  out.phi_r2.assign(m + 1, 0.0);
  std::vector<std::size_t> tuple(m, 0);
  std::size_t total = 1;
  for (std::size_t k = 0; k < m; ++k) total *= states;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    double weight = 1.0;
    for (std::size_t k = 0; k < m; ++k) {
      tuple[k] = rest % states;
      rest /= states;
      weight *= w[tuple[k]];
    }
    const double f = phi(r(tuple[phi.first() - 1], tuple[phi.second() - 1]));
    const double r12 = r(tuple[0], tuple[1]);
    out.energy += weight * h[tuple[0]];
    out.phi += weight * f;
    out.r2 += weight * r12 * r12;
    out.phi_energy += weight * f * h[tuple[0]];
    out.phi_r2[1] += weight * f;
    for (std::size_t l = 2; l <= m; ++l) out.phi_r2[l] += weight * f * std::pow(r(tuple[0], tuple[l - 1]), 2);
  }
  return out;
}

void expect_brackets_near(const ReplicaBrackets& a, const ReplicaBrackets& b, double tol) {
  EXPECT_NEAR(a.energy, b.energy, tol);
  EXPECT_NEAR(a.phi, b.phi, tol);
  EXPECT_NEAR(a.r2, b.r2, tol);
  EXPECT_NEAR(a.phi_energy, b.phi_energy, tol);
  ASSERT_EQ(a.phi_r2.size(), b.phi_r2.size());
  for (std::size_t l = 1; l < a.phi_r2.size(); ++l) EXPECT_NEAR(a.phi_r2[l], b.phi_r2[l], tol) << "l=" << l;
}

}  // namespace

TEST(Overlap, BasicValues) {
  const auto a = SpinConfiguration::all_up(4);
  EXPECT_EQ(overlap(a, a), 1.0);
  EXPECT_EQ(overlap(a, SpinConfiguration(4)), -1.0);
  auto b = a;
  b.flip(0);
  b.flip(1);
  EXPECT_EQ(overlap(a, b), 0.0);
}

TEST(OverlapFunction, ParseAndIds) {
  EXPECT_EQ(OverlapFunction::parse("r2").id(), "r2");
  EXPECT_EQ(OverlapFunction::parse("1").id(), "1");
  EXPECT_EQ(OverlapFunction::parse("abs@2,3").id(), "abs@2,3");
  const auto p = OverlapFunction::parse("poly:0.5,0,-2");
  EXPECT_DOUBLE_EQ(p(0.5), 0.5 - 2 * 0.25);
  EXPECT_DOUBLE_EQ(p.sup_norm(), 2.5);
  EXPECT_EQ(OverlapFunction::parse(p.id()).id(), p.id());
  EXPECT_THROW(OverlapFunction::parse("cos"), InvalidArgument);
  EXPECT_THROW(OverlapFunction::parse("r2@1,1"), InvalidArgument);
  EXPECT_THROW(check_phi_labels(OverlapFunction::parse("r2@2,3"), 2), InvalidArgument);
  EXPECT_THROW(check_phi_labels(OverlapFunction::one(), 1), InvalidArgument);
}

TEST(WalshHadamard, IsSelfInverseUpToScale) {
  std::vector<double> v{1, -2, 3.5, 0, 0.25, 7, -1, 2};
  const auto original = v;
  walsh_hadamard(v);
  walsh_hadamard(v);
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(v[k] / 8.0, original[k], 1e-14);
}

TEST(ExactBrackets, MatchTupleOracle) {
  const Model m = Model::sk(sk_disorder(4, 6));
  const auto table = EnergyTable::build(m);
  for (double beta : {0.5, 1.2}) {
    for (const char* id : {"1", "r2", "abs", "poly:0.3,-1,0.5"}) {
      const auto phi = OverlapFunction::parse(id);
      expect_brackets_near(exact_brackets(table, beta, phi, 2), tuple_oracle(m, beta, phi, 2), 1e-12);
    }
  }
}

TEST(ExactBrackets, MatchTupleOracleForOtherPairs) {
  const Model m = Model::sk(sk_disorder(3, 2));
  const auto table = EnergyTable::build(m);
  for (const char* id : {"r2@2,3", "abs@1,3", "r2@1,2"}) {
    const auto phi = OverlapFunction::parse(id);
    expect_brackets_near(exact_brackets(table, 0.9, phi, 3), tuple_oracle(m, 0.9, phi, 3), 1e-12);
  }
}

TEST(McBrackets, ConvergeToExact) {
  const Model m = Model::sk(sk_disorder(6, 13));
  const auto batch = sample_exact_replicas(m, Beta(0.8), 4, 20000, 5);
  const auto phi = OverlapFunction::square();
  const auto mc = mc_brackets(batch, phi, 2);
  const auto ex = exact_brackets(EnergyTable::build(m), 0.8, phi, 2);
  expect_brackets_near(mc, ex, 0.01);
  EXPECT_THROW(mc_brackets(batch, phi, 4), InvalidArgument);
}

TEST(OverlapMoment, McMatchesExact) {
  const auto models = sk_ensemble(6, 4, 21);
  std::vector<ReplicaBatch> batches;
  for (std::size_t s = 0; s < models.size(); ++s)
    batches.push_back(sample_exact_replicas(models[s], Beta(1.0), 3, 5000, derive_seed(8, s)));
  const auto mc = overlap_moment(batches, 2);
  const auto ex = exact_overlap_moment(models, Beta(1.0), 2);
  EXPECT_NEAR(mc.mean, ex.mean, 0.01);
  EXPECT_THROW(overlap_moment(batches, 3), InvalidArgument);
}

TEST(Ibp, CorrectedIdentityHoldsOverDisorder) {
  const auto models = sk_ensemble(6, 400, 77);
  for (const char* id : {"1", "r2"}) {
    const auto rec = ibp_audit(models, Beta(0.7), 2, OverlapFunction::parse(id));
    EXPECT_LE(std::abs(rec.z_score), 4.0) << id << " lhs=" << rec.lhs << " rhs=" << rec.rhs;
    EXPECT_EQ(rec.samples, 400u);
  }
}

TEST(Ibp, NonSkDisorderIsUnsupported) {
  const std::vector<Model> field{Model::constant_field(4, 1.0)};
  EXPECT_THROW(ibp_audit(field, Beta(1.0), 2, OverlapFunction::one()), Unsupported);
}

TEST(Gg, ConstantPhiGivesZeroResidual) {
  const auto models = sk_ensemble(8, 30, 5);
  const auto r = gg_residual(models, Beta(1.0), 2, OverlapFunction::one());
  EXPECT_NEAR(r.residual, 0.0, 1e-12);
  EXPECT_TRUE(r.pass_bound);
}

TEST(Gg, ResidualTermsAreConsistent) {
  const auto models = sk_ensemble(6, 50, 9);
  const auto r = gg_residual(models, Beta(1.0), 3, OverlapFunction::square());
  EXPECT_NEAR(r.residual, r.term_next - r.term_product / 3 - r.term_inner / 3, 1e-12);
  EXPECT_NEAR(r.bound, r.l1 / 3.0, 1e-15);
  EXPECT_THROW(gg_residual(models, Beta(0.0), 2, OverlapFunction::square()), InvalidArgument);
}

// beta n Delta equals -(E<phi H/N> - E<phi> E<H/N>) in expectation; the
// identity is checked on the same ensemble with both sides computed exactly.
TEST(Gg, ResidualTracksEnergyCovariance) {
  const auto models = sk_ensemble(6, 400, 31);
  const auto phi = OverlapFunction::square();
  const double beta = 1.0;
  const auto gg = gg_residual(models, Beta(beta), 2, phi);
  double phi_h = 0.0, ph = 0.0, hh = 0.0;
  for (const auto& m : models) {
    const auto b = exact_brackets(EnergyTable::build(m), beta, phi, 2);
    phi_h += b.phi_energy;
    ph += b.phi;
    hh += b.energy;
  }
  const double s = static_cast<double>(models.size());
  const double covariance = phi_h / s - (ph / s) * (hh / s);
  EXPECT_NEAR(-beta * 2 * gg.residual, covariance, 4 * 2 * gg.stderr_residual + 0.01);
}
