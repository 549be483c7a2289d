#pragma once

// Overlap statistics, Gaussian integration-by-parts identities, and the
// Ghirlanda-Guerra residual for the SK model.
//
// Exact mode evaluates Gibbs brackets over i.i.d. replicas without visiting
// replica tuples. With w the Gibbs weights on {0,1}^N (bit patterns) and
// R(a, b) = 1 - 2 popcount(a xor b) / N, the partial bracket
//
//   h_f(a) = sum_b w_b f(R(a, b)) = (w (*) g_f)(a),  g_f(x) = f(1 - 2 popcount(x) / N)
//
// is an XOR convolution, computed with three Walsh-Hadamard transforms in
// O(N 2^N). Every bracket needed here is a sum over a of w_a times products
// of such partial brackets:
//
//   <f(R_12)>               = sum_a w_a h_f(a)
//   <f(R_12) g(R_13)>       = sum_a w_a h_f(a) h_g(a)
//   <f(R_12) H(s^1)/N>      = sum_a w_a (H_a/N) h_f(a)

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spinconc/error.hpp"
#include "spinconc/exact.hpp"
#include "spinconc/mc.hpp"
#include "spinconc/model.hpp"
#include "spinconc/parallel.hpp"
#include "spinconc/replica_batch.hpp"
#include "spinconc/spin_configuration.hpp"
#include "spinconc/stats.hpp"

namespace spinconc {

/// R = N^{-1} sum_i a_i b_i.
inline double overlap(const SpinConfiguration& a, const SpinConfiguration& b) {
  const auto n = static_cast<double>(a.size());
  return (2.0 * static_cast<double>(a.agreements(b)) - n) / n;
}

/// A bounded function f of a single overlap R_{p,q} among the first n
/// replicas (labels start at 1). Ids: "1", "r2", "abs", "poly:c0,c1,...",
/// optionally suffixed "@p,q" (default pair 1,2).
class OverlapFunction {
 public:
  enum class Kind { One, Square, Abs, Poly };

  static OverlapFunction one() { return OverlapFunction(Kind::One, {}, 1, 2); }
  static OverlapFunction square() { return OverlapFunction(Kind::Square, {}, 1, 2); }
  static OverlapFunction absolute() { return OverlapFunction(Kind::Abs, {}, 1, 2); }
  static OverlapFunction polynomial(std::vector<double> coeffs) {
    if (coeffs.empty()) throw InvalidArgument("OverlapFunction: polynomial needs coefficients");
    return OverlapFunction(Kind::Poly, std::move(coeffs), 1, 2);
  }

  static OverlapFunction parse(std::string_view id) {
    std::size_t p = 1;
    std::size_t q = 2;
    if (const auto at = id.find('@'); at != std::string_view::npos) {
      const auto pair = id.substr(at + 1);
      const auto comma = pair.find(',');
      if (comma == std::string_view::npos) throw InvalidArgument("OverlapFunction: pair must be '@p,q'");
      p = parse_index(pair.substr(0, comma));
      q = parse_index(pair.substr(comma + 1));
      id = id.substr(0, at);
    }
    OverlapFunction f = [&] {
      if (id == "1" || id == "one") return one();
      if (id == "r2") return square();
      if (id == "abs") return absolute();
      if (id.starts_with("poly:")) return polynomial(parse_coeffs(id.substr(5)));
      throw InvalidArgument("OverlapFunction: unknown id '" + std::string(id) + "'");
    }();
    return f.on_pair(p, q);
  }

  OverlapFunction on_pair(std::size_t p, std::size_t q) const {
    if (p == 0 || q == 0 || p == q) throw InvalidArgument("OverlapFunction: pair needs distinct labels >= 1");
    return OverlapFunction(kind_, coeffs_, std::min(p, q), std::max(p, q));
  }

  double operator()(double r) const noexcept {
    switch (kind_) {
      case Kind::One: return 1.0;
      case Kind::Square: return r * r;
      case Kind::Abs: return std::abs(r);
      case Kind::Poly: {
        double acc = 0.0;
        for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * r + *it;
        return acc;
      }
    }
    return 0.0;
  }

  /// Bound on |f| over [-1, 1].
  double sup_norm() const noexcept {
    if (kind_ != Kind::Poly) return 1.0;
    double total = 0.0;
    for (double c : coeffs_) total += std::abs(c);
    return total;
  }

  Kind kind() const noexcept { return kind_; }
  std::size_t first() const noexcept { return p_; }
  std::size_t second() const noexcept { return q_; }
  bool is_constant() const noexcept { return kind_ == Kind::One; }

  std::string id() const {
    std::string base;
    switch (kind_) {
      case Kind::One: base = "1"; break;
      case Kind::Square: base = "r2"; break;
      case Kind::Abs: base = "abs"; break;
      case Kind::Poly: {
        base = "poly:";
        for (std::size_t k = 0; k < coeffs_.size(); ++k) {
          if (k) base += ',';
          char buf[32];
          const auto res = std::to_chars(buf, buf + sizeof buf, coeffs_[k]);
          base.append(buf, res.ptr);
        }
        break;
      }
    }
    if (p_ != 1 || q_ != 2) base += "@" + std::to_string(p_) + "," + std::to_string(q_);
    return base;
  }

 private:
  OverlapFunction(Kind kind, std::vector<double> coeffs, std::size_t p, std::size_t q)
      : kind_(kind), coeffs_(std::move(coeffs)), p_(p), q_(q) {}

  static std::size_t parse_index(std::string_view s) {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
      throw InvalidArgument("OverlapFunction: bad replica label '" + std::string(s) + "'");
    }
    return v;
  }

  static std::vector<double> parse_coeffs(std::string_view s) {
    std::vector<double> out;
    while (!s.empty()) {
      const auto comma = s.find(',');
      const std::string token(s.substr(0, comma));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size() || token.empty()) throw InvalidArgument("OverlapFunction: bad coefficient '" + token + "'");
      out.push_back(v);
      s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    }
    return out;
  }

  Kind kind_;
  std::vector<double> coeffs_;
  std::size_t p_;
  std::size_t q_;
};

/// In-place unnormalized Walsh-Hadamard transform; length must be a power of two.
inline void walsh_hadamard(std::span<double> data) {
  for (std::size_t len = 1; len < data.size(); len <<= 1) {
    for (std::size_t i = 0; i < data.size(); i += len << 1) {
      for (std::size_t j = i; j < i + len; ++j) {
        const double a = data[j];
        const double b = data[j + len];
        data[j] = a + b;
        data[j + len] = a - b;
      }
    }
  }
}

/// Gibbs brackets over i.i.d. replicas for one disorder sample, exactly.
class ProductMeasure {
 public:
  ProductMeasure(const EnergyTable& table, double beta)
      : n_(table.size()), weights_(table.gibbs_weights(beta)), energy_density_(table.count()) {
    for (std::size_t k = 0; k < table.count(); ++k) energy_density_[k] = table.energy_density(k);
    spectrum_ = weights_;
    walsh_hadamard(spectrum_);
  }

  std::size_t size() const noexcept { return n_; }
  std::span<const double> weights() const noexcept { return weights_; }

  /// h_f(a) = sum_b w_b f(R(a, b)).
  template <class F>
  std::vector<double> partial(F&& f) const {
    const std::size_t count = weights_.size();
    std::vector<double> g(count);
    std::vector<double> by_distance(n_ + 1);
    for (std::size_t d = 0; d <= n_; ++d) {
      by_distance[d] = f(1.0 - 2.0 * static_cast<double>(d) / static_cast<double>(n_));
    }
    for (std::size_t x = 0; x < count; ++x) g[x] = by_distance[static_cast<std::size_t>(std::popcount(x))];
    walsh_hadamard(g);
    for (std::size_t x = 0; x < count; ++x) g[x] *= spectrum_[x];
    walsh_hadamard(g);
    const double scale = 1.0 / static_cast<double>(count);
    for (auto& v : g) v *= scale;
    return g;
  }

  /// <H(s^1)/N>.
  double energy_mean() const noexcept {
    double acc = 0.0;
    for (std::size_t a = 0; a < weights_.size(); ++a) acc += weights_[a] * energy_density_[a];
    return acc;
  }

  /// <f(R_12)>.
  template <class F>
  double pair(F&& f) const {
    return dot(partial(std::forward<F>(f)));
  }

  /// <f(R_12) g(R_13)>.
  template <class F, class G>
  double star(F&& f, G&& g) const {
    const auto hf = partial(std::forward<F>(f));
    const auto hg = partial(std::forward<G>(g));
    double acc = 0.0;
    for (std::size_t a = 0; a < weights_.size(); ++a) acc += weights_[a] * hf[a] * hg[a];
    return acc;
  }

  /// <f(R_12) H(s^1)/N>.
  template <class F>
  double energy_weighted(F&& f) const {
    const auto hf = partial(std::forward<F>(f));
    double acc = 0.0;
    for (std::size_t a = 0; a < weights_.size(); ++a) acc += weights_[a] * energy_density_[a] * hf[a];
    return acc;
  }

  /// <|H/N - center|>.
  double l1_deviation(double center) const noexcept {
    double acc = 0.0;
    for (std::size_t a = 0; a < weights_.size(); ++a) acc += weights_[a] * std::abs(energy_density_[a] - center);
    return acc;
  }

 private:
  double dot(const std::vector<double>& h) const noexcept {
    double acc = 0.0;
    for (std::size_t a = 0; a < weights_.size(); ++a) acc += weights_[a] * h[a];
    return acc;
  }

  std::size_t n_;
  std::vector<double> weights_;
  std::vector<double> energy_density_;
  std::vector<double> spectrum_;
};

/// Per-sample brackets entering the IBP and GG displays for n replicas:
///   phi_r2[l] = <phi R_{1,l}^2> for l = 1..n+1 (index 0 unused)
struct ReplicaBrackets {
  double energy = 0.0;         // <H(s^1)/N>
  double phi = 0.0;            // <phi>
  double r2 = 0.0;             // <R_12^2>
  double phi_energy = 0.0;     // <phi H(s^1)/N>
  std::vector<double> phi_r2;  // size n+2
};

inline void check_phi_labels(const OverlapFunction& phi, std::size_t n_replicas) {
  if (n_replicas < 2) throw InvalidArgument("replica identities need n >= 2 replicas");
  if (phi.second() > n_replicas) {
    throw InvalidArgument("overlap function must depend on the first n replicas only");
  }
}

inline ReplicaBrackets exact_brackets(const ProductMeasure& pm, const OverlapFunction& phi, std::size_t n_replicas) {
  check_phi_labels(phi, n_replicas);
  const auto square = [](double r) { return r * r; };
  const auto phi_square = [&](double r) { return phi(r) * r * r; };
  ReplicaBrackets b;
  b.energy = pm.energy_mean();
  b.phi = pm.pair(phi);
  b.r2 = pm.pair(square);
  const bool touches_one = phi.first() == 1;
  b.phi_energy = touches_one ? pm.energy_weighted(phi) : b.phi * b.energy;
  b.phi_r2.assign(n_replicas + 2, 0.0);
  // labels not equal to 1 or the phi pair are interchangeable, so a single
  // "star" and a single "disjoint" value cover every l
  const double star = pm.star(phi, square);
  for (std::size_t l = 1; l <= n_replicas + 1; ++l) {
    if (l == 1) {
      b.phi_r2[l] = b.phi;
    } else if (phi.first() == 1 && phi.second() == l) {
      b.phi_r2[l] = pm.pair(phi_square);
    } else if (touches_one || phi.first() == l || phi.second() == l) {
      b.phi_r2[l] = star;
    } else {
      b.phi_r2[l] = b.phi * b.r2;
    }
  }
  return b;
}

inline ReplicaBrackets exact_brackets(const EnergyTable& table, double beta, const OverlapFunction& phi,
                                      std::size_t n_replicas) {
  return exact_brackets(ProductMeasure(table, beta), phi, n_replicas);
}

/// Monte Carlo estimate of the same brackets from one batch: within each
/// slice, averages over every ordered tuple of n+1 distinct chains.
inline ReplicaBrackets mc_brackets(const ReplicaBatch& batch, const OverlapFunction& phi, std::size_t n_replicas) {
  check_phi_labels(phi, n_replicas);
  const std::size_t k = batch.chains;
  const std::size_t m = n_replicas + 1;
  if (k < m) throw InvalidArgument("mc_brackets: batch needs at least n+1 chains");
  const auto inv_n = 1.0 / static_cast<double>(batch.n);

  ReplicaBrackets b;
  b.phi_r2.assign(m + 1, 0.0);
  double tuples = 0.0;
  std::vector<std::size_t> pick(m);
  std::vector<char> used(k, 0);
  std::vector<double> r(m * m);

  for (std::size_t t = 0; t < batch.slices(); ++t) {
    // depth-first enumeration of ordered tuples of distinct chains
    auto visit = [&](auto&& self, std::size_t depth) -> void {
      if (depth == m) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = i + 1; j < m; ++j) {
            r[i * m + j] = r[j * m + i] = overlap(batch.at(t, pick[i]), batch.at(t, pick[j]));
          }
          r[i * m + i] = 1.0;
        }
        const double f = phi(r[(phi.first() - 1) * m + (phi.second() - 1)]);
        const double h1 = batch.energy_at(t, pick[0]) * inv_n;
        b.energy += h1;
        b.phi += f;
        b.r2 += r[1] * r[1];
        b.phi_energy += f * h1;
        for (std::size_t l = 1; l <= m; ++l) b.phi_r2[l] += f * r[l - 1] * r[l - 1];
        tuples += 1.0;
        return;
      }
      for (std::size_t c = 0; c < k; ++c) {
        if (used[c]) continue;
        used[c] = 1;
        pick[depth] = c;
        self(self, depth + 1);
        used[c] = 0;
      }
    };
    visit(visit, 0);
  }
  if (tuples == 0.0) throw InvalidArgument("mc_brackets: empty batch");
  b.energy /= tuples;
  b.phi /= tuples;
  b.r2 /= tuples;
  b.phi_energy /= tuples;
  for (auto& v : b.phi_r2) v /= tuples;
  return b;
}

/// Disorder-and-replica average of R_12^k over unordered replica pairs.
inline Estimate overlap_moment(std::span<const ReplicaBatch> ensemble, unsigned k) {
  if (ensemble.empty()) throw InvalidArgument("overlap_moment: empty ensemble");
  if (k % 2 != 0) throw InvalidArgument("overlap_moment: k must be even");
  std::vector<double> per_batch;
  per_batch.reserve(ensemble.size());
  for (const auto& batch : ensemble) {
    if (batch.chains < 2) throw InvalidArgument("overlap_moment: batch needs at least 2 replicas");
    double total = 0.0;
    double count = 0.0;
    for (std::size_t t = 0; t < batch.slices(); ++t) {
      for (std::size_t a = 0; a < batch.chains; ++a) {
        for (std::size_t b = a + 1; b < batch.chains; ++b) {
          total += std::pow(overlap(batch.at(t, a), batch.at(t, b)), static_cast<int>(k));
          count += 1.0;
        }
      }
    }
    per_batch.push_back(total / count);
  }
  return independent_estimate(per_batch);
}

/// E<R_12^k> with inner brackets computed exactly.
inline Estimate exact_overlap_moment(std::span<const Model> ensemble, Beta beta, unsigned k,
                                     const EnumerationOptions& options = {}) {
  if (ensemble.empty()) throw InvalidArgument("exact_overlap_moment: empty ensemble");
  if (k % 2 != 0) throw InvalidArgument("exact_overlap_moment: k must be even");
  std::vector<double> values(ensemble.size());
  EnumerationOptions inner = options;
  inner.threads = 1;
  parallel_for(ensemble.size(), options.threads, [&](std::size_t s) {
    const ProductMeasure pm(EnergyTable::build(ensemble[s], inner), beta.value());
    values[s] = k == 0 ? 1.0 : pm.pair([k](double r) { return std::pow(r, static_cast<int>(k)); });
  });
  return independent_estimate(values);
}

/// Gaussian integration by parts, with the factor beta:
///   E<phi H(s^1)/N> = beta [ E<phi sum_{l=1..n} R_{1,l}^2> - n E<phi R_{1,n+1}^2> ]
/// z_score compares lhs and rhs through the per-sample difference;
/// z_uncorrected does the same with the factor beta dropped.
struct IbpRecord {
  double beta = 0.0;
  std::size_t n_replicas = 0;
  std::string phi_id;
  std::size_t samples = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double stderr_lhs = 0.0;
  double stderr_rhs = 0.0;
  double stderr_diff = 0.0;
  double z_score = 0.0;
  double rhs_uncorrected = 0.0;
  double stderr_diff_uncorrected = 0.0;
  double z_uncorrected = 0.0;
};

struct GGReport {
  std::size_t n_system = 0;
  std::size_t n_replicas = 0;
  double beta = 0.0;
  std::string phi_id;
  double residual = 0.0;  // Delta
  double stderr_residual = 0.0;
  double l1 = 0.0;  // E<|H/N - E<H/N>|>
  double stderr_l1 = 0.0;
  double bound = 0.0;  // ||phi|| / (beta n) * l1
  double stderr_bound = 0.0;
  std::size_t samples = 0;
  bool pass_bound = false;  // |Delta| <= bound within 3 combined stderr
  // disorder means of the three terms of Delta
  double term_next = 0.0;     // E<phi R_{1,n+1}^2>
  double term_product = 0.0;  // E<phi> E<R_12^2>
  double term_inner = 0.0;    // sum_{l=2..n} E<phi R_{1,l}^2>
};

enum class BracketMode { Exact, MonteCarlo };

struct McReplicaParams {
  std::size_t chains = 4;
  std::size_t sweeps = 4000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  double burn_in_fraction = kDefaultBurnInFraction;
};

struct BracketSample {
  ReplicaBrackets brackets;
  std::vector<double> energy_density;  // exact: unused; mc: sampled H/N of replica 1 per slice/chain
};

inline void require_sk(std::span<const Model> models, const char* what) {
  if (models.empty()) throw InvalidArgument(std::string(what) + ": empty ensemble");
  for (const auto& m : models) {
    if (m.kind() != ModelKind::SK) {
      throw Unsupported(std::string(what) + ": requires Gaussian (SK) disorder");
    }
  }
}

/// Per-disorder brackets plus, for the L1 term, <|H/N - center|> for any
/// center after the fact.
struct EnsembleBrackets {
  std::vector<ReplicaBrackets> brackets;
  std::vector<std::vector<double>> mc_energy_density;  // mc mode only
};

inline EnsembleBrackets collect_brackets(std::span<const Model> models, Beta beta, std::size_t n_replicas,
                                         const OverlapFunction& phi, BracketMode mode, const McReplicaParams& mc,
                                         const EnumerationOptions& options) {
  EnsembleBrackets out;
  out.brackets.resize(models.size());
  if (mode == BracketMode::MonteCarlo) out.mc_energy_density.resize(models.size());
  EnumerationOptions inner = options;
  inner.threads = 1;
  parallel_for(models.size(), options.threads, [&](std::size_t s) {
    if (mode == BracketMode::Exact) {
      out.brackets[s] = exact_brackets(EnergyTable::build(models[s], inner), beta.value(), phi, n_replicas);
    } else {
      const auto batch = sample_replicas(models[s], beta, std::max(mc.chains, n_replicas + 1), mc.sweeps, mc.thin,
                                         derive_seed(mc.seed, s), mc.burn_in_fraction);
      out.brackets[s] = mc_brackets(batch, phi, n_replicas);
      auto& h = out.mc_energy_density[s];
      for (double e : batch.energies) h.push_back(e / static_cast<double>(batch.n));
    }
  });
  return out;
}

inline IbpRecord ibp_audit(std::span<const Model> models, Beta beta, std::size_t n_replicas,
                           const OverlapFunction& phi, BracketMode mode = BracketMode::Exact,
                           const McReplicaParams& mc = {}, const EnumerationOptions& options = {}) {
  require_sk(models, "ibp_audit");
  check_phi_labels(phi, n_replicas);
  const auto ens = collect_brackets(models, beta, n_replicas, phi, mode, mc, options);
  const double b = beta.value();
  const auto n = static_cast<double>(n_replicas);
  const std::size_t count = models.size();
  std::vector<double> lhs(count), rhs(count), diff(count), rhs_raw(count), diff_raw(count);
  for (std::size_t s = 0; s < count; ++s) {
    const auto& br = ens.brackets[s];
    double core = 0.0;
    for (std::size_t l = 1; l <= n_replicas; ++l) core += br.phi_r2[l];
    core -= n * br.phi_r2[n_replicas + 1];
    lhs[s] = br.phi_energy;
    rhs[s] = b * core;
    rhs_raw[s] = core;
    diff[s] = lhs[s] - rhs[s];
    diff_raw[s] = lhs[s] - rhs_raw[s];
  }
  IbpRecord r;
  r.beta = b;
  r.n_replicas = n_replicas;
  r.phi_id = phi.id();
  r.samples = count;
  const auto el = independent_estimate(lhs);
  const auto er = independent_estimate(rhs);
  const auto ed = independent_estimate(diff);
  const auto eu = independent_estimate(rhs_raw);
  const auto edu = independent_estimate(diff_raw);
  r.lhs = el.mean;
  r.stderr_lhs = el.error;
  r.rhs = er.mean;
  r.stderr_rhs = er.error;
  r.stderr_diff = ed.error;
  r.z_score = ed.error > 0.0 ? ed.mean / ed.error : 0.0;
  r.rhs_uncorrected = eu.mean;
  r.stderr_diff_uncorrected = edu.error;
  r.z_uncorrected = edu.error > 0.0 ? edu.mean / edu.error : 0.0;
  return r;
}

inline GGReport gg_residual(std::span<const Model> models, Beta beta, std::size_t n_replicas,
                            const OverlapFunction& phi, BracketMode mode = BracketMode::Exact,
                            const McReplicaParams& mc = {}, const EnumerationOptions& options = {}) {
  if (!(beta.value() > 0.0)) throw InvalidArgument("gg_residual: beta must be positive");
  if (models.empty()) throw InvalidArgument("gg_residual: empty ensemble");
  check_phi_labels(phi, n_replicas);
  const auto ens = collect_brackets(models, beta, n_replicas, phi, mode, mc, options);
  const std::size_t count = models.size();
  const auto n = static_cast<double>(n_replicas);

  std::vector<double> a(count), phis(count), r2s(count), inner_terms(count), next_terms(count), energies(count);
  for (std::size_t s = 0; s < count; ++s) {
    const auto& br = ens.brackets[s];
    double inner = 0.0;
    for (std::size_t l = 2; l <= n_replicas; ++l) inner += br.phi_r2[l];
    next_terms[s] = br.phi_r2[n_replicas + 1];
    inner_terms[s] = inner;
    a[s] = next_terms[s] - inner / n;
    phis[s] = br.phi;
    r2s[s] = br.r2;
    energies[s] = br.energy;
  }
  const double mean_a = mean_of(a);
  const double mean_phi = mean_of(phis);
  const double mean_r2 = mean_of(r2s);

  GGReport r;
  r.n_system = models.front().size();
  r.n_replicas = n_replicas;
  r.beta = beta.value();
  r.phi_id = phi.id();
  r.samples = count;
  r.residual = mean_a - mean_phi * mean_r2 / n;
  r.term_next = mean_of(next_terms);
  r.term_product = mean_phi * mean_r2;
  r.term_inner = mean_of(inner_terms);
  // delta-method influence values of the product-of-means term
  std::vector<double> influence(count);
  for (std::size_t s = 0; s < count; ++s) influence[s] = a[s] - (mean_r2 * phis[s] + mean_phi * r2s[s]) / n;
  r.stderr_residual = independent_estimate(influence).error;

  // E<|H/N - E<H/N>|> with the ensemble mean as the center
  const double center = mean_of(energies);
  std::vector<double> l1(count);
  EnumerationOptions inner = options;
  inner.threads = 1;
  parallel_for(count, options.threads, [&](std::size_t s) {
    if (mode == BracketMode::Exact) {
      const ProductMeasure pm(EnergyTable::build(models[s], inner), beta.value());
      l1[s] = pm.l1_deviation(center);
    } else {
      double acc = 0.0;
      for (double h : ens.mc_energy_density[s]) acc += std::abs(h - center);
      l1[s] = acc / static_cast<double>(ens.mc_energy_density[s].size());
    }
  });
  const auto el1 = independent_estimate(l1);
  r.l1 = el1.mean;
  r.stderr_l1 = el1.error;
  const double factor = phi.sup_norm() / (beta.value() * n);
  r.bound = factor * r.l1;
  r.stderr_bound = factor * r.stderr_l1;
  r.pass_bound = std::abs(r.residual) <= r.bound + 3.0 * std::hypot(r.stderr_residual, r.stderr_bound);
  return r;
}

}  // namespace spinconc
