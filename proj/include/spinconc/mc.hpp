#pragma once

// Markov chain Monte Carlo for G_{N,beta}(s) proportional to exp(+beta H(s)).
//
// Note the sign: a proposal that RAISES the energy is always accepted. Single
// spin flips are proposed in fixed site order 0..N-1 each sweep; every
// proposal satisfies detailed balance, so the sweep kernel preserves the
// Gibbs measure. Chains own private generator streams derived from one seed,
// so results do not depend on how chains are scheduled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spinconc/error.hpp"
#include "spinconc/exact.hpp"
#include "spinconc/model.hpp"
#include "spinconc/replica_batch.hpp"
#include "spinconc/rng.hpp"
#include "spinconc/spin_configuration.hpp"
#include "spinconc/stats.hpp"

namespace spinconc {

inline constexpr double kEnergyCacheTolerance = 1e-8;
inline constexpr std::uint64_t kDefaultResyncInterval = 1000;
inline constexpr double kDefaultBurnInFraction = 0.2;

struct ChainState {
  SpinConfiguration config;
  double energy = 0.0;  // cached H(config)
  Beta beta;
  Xoshiro256 rng;
  std::uint64_t sweep_count = 0;
  double max_drift = 0.0;  // largest cache error seen at a resync
};

/// Chain started from a uniformly random configuration drawn from its own stream.
inline ChainState make_chain(const Model& model, Beta beta, std::uint64_t seed) {
  ChainState s{SpinConfiguration(model.size()), 0.0, beta, Xoshiro256(seed)};
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (s.rng() >> 63) s.config.flip(i);
  }
  s.energy = model.energy(s.config);
  return s;
}

/// Recomputes H, checks the cached value against it, and resynchronizes.
inline void resync_energy(const Model& model, ChainState& state) {
  const double exact = model.energy(state.config);
  const double drift = std::abs(exact - state.energy);
  state.max_drift = std::max(state.max_drift, drift);
  if (drift > kEnergyCacheTolerance) {
    throw std::logic_error("energy cache drifted by " + std::to_string(drift));
  }
  state.energy = exact;
}

/// Metropolis proposal at one site; returns whether the flip was accepted.
inline bool metropolis_step(const Model& model, ChainState& state, std::size_t site) {
  const double delta = model.flip_delta(state.config, site);
  const double log_ratio = state.beta.value() * delta;
  if (log_ratio < 0.0 && !(state.rng.uniform() < std::exp(log_ratio))) return false;
  state.config.flip(site);
  state.energy += delta;
  return true;
}

/// One sweep in place; returns the number of accepted flips.
inline std::size_t sweep_in_place(const Model& model, ChainState& state,
                                  std::uint64_t resync_interval = kDefaultResyncInterval) {
  std::size_t accepted = 0;
  for (std::size_t i = 0; i < model.size(); ++i) accepted += metropolis_step(model, state, i) ? 1 : 0;
  ++state.sweep_count;
  if (resync_interval != 0 && state.sweep_count % resync_interval == 0) resync_energy(model, state);
  return accepted;
}

inline ChainState metropolis_sweep(const Model& model, ChainState state) {
  sweep_in_place(model, state);
  return state;
}

class TemperatureLadder {
 public:
  explicit TemperatureLadder(std::vector<double> betas) : betas_(std::move(betas)) {
    if (betas_.empty()) throw InvalidArgument("TemperatureLadder: needs at least one beta");
    for (std::size_t i = 0; i < betas_.size(); ++i) {
      Beta check(betas_[i]);
      (void)check;
      if (i > 0 && !(betas_[i - 1] < betas_[i])) {
        throw InvalidArgument("TemperatureLadder: betas must be strictly increasing");
      }
    }
    attempts_.assign(betas_.size() > 1 ? betas_.size() - 1 : 0, 0);
    accepts_ = attempts_;
  }

  /// START:STOP:STEP, inclusive of STOP up to rounding.
  static TemperatureLadder range(double start, double stop, double step) {
    if (!(step > 0.0) || stop < start) throw InvalidArgument("TemperatureLadder::range: bad range");
    std::vector<double> betas;
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t k = 0; k < count; ++k) betas.push_back(start + step * static_cast<double>(k));
    return TemperatureLadder(std::move(betas));
  }

  std::size_t size() const noexcept { return betas_.size(); }
  double beta(std::size_t i) const { return betas_[i]; }
  const std::vector<double>& betas() const noexcept { return betas_; }

  /// Accepted fraction of swaps proposed between rungs i and i+1.
  double swap_acceptance(std::size_t i) const {
    return attempts_[i] == 0 ? 0.0 : static_cast<double>(accepts_[i]) / static_cast<double>(attempts_[i]);
  }
  void record_swap(std::size_t i, bool accepted) {
    ++attempts_[i];
    if (accepted) ++accepts_[i];
  }

 private:
  std::vector<double> betas_;
  std::vector<std::uint64_t> attempts_;
  std::vector<std::uint64_t> accepts_;
};

/// Acceptance probability for exchanging configurations with energies h_i, h_j
/// between inverse temperatures beta_i, beta_j.
inline double swap_probability(double beta_i, double beta_j, double h_i, double h_j) {
  return std::min(1.0, std::exp((beta_i - beta_j) * (h_j - h_i)));
}

struct TraceSummary {
  double beta = 0.0;
  double u_mean = 0.0;    // estimate of <H/N>_beta
  double u_stderr = 0.0;  // autocorrelation-adjusted
  double tau_int = 0.5;
  std::size_t n_samples = 0;
  std::size_t burn_in = 0;
};

struct PtOptions {
  std::size_t sweeps = 10000;
  std::size_t swap_interval = 1;
  double burn_in_fraction = kDefaultBurnInFraction;
  std::size_t ladders = 1;  // independent copies of the whole ladder (replicas)
  std::uint64_t resync_interval = kDefaultResyncInterval;
  bool record_traces = true;
};

struct PtResult {
  TemperatureLadder ladder{std::vector<double>{0.0}};
  std::vector<TraceSummary> traces;          // per rung, <H/N> pooled over ladders
  std::vector<TraceSummary> overlap_traces;  // per rung, <R_{1,2}^2> between ladders (ladders >= 2)
  std::size_t burn_in = 0;
  // energy_density[l][i][t]: ladder l, rung i, sweep t (all sweeps, including burn-in)
  std::vector<std::vector<std::vector<double>>> energy_density;
  // final configuration of every chain, [l][i]
  std::vector<std::vector<SpinConfiguration>> final_configs;
};

inline std::uint64_t chain_seed(std::uint64_t seed, std::size_t ladder, std::size_t rung, std::size_t rungs) {
  return derive_seed(seed, ladder * rungs + rung);
}

inline std::uint64_t swap_seed(std::uint64_t seed, std::size_t ladder) {
  return derive_seed(mix64(seed ^ 0x5377617053747265ULL), ladder);
}

/// Parallel tempering: one chain per rung, adjacent exchanges every
/// swap_interval sweeps, alternating even and odd pairs.
inline PtResult parallel_tempering_run(const Model& model, TemperatureLadder ladder, const PtOptions& options,
                                       std::uint64_t seed) {
  if (options.sweeps == 0) throw InvalidArgument("parallel_tempering_run: sweeps must be positive");
  if (options.swap_interval == 0) throw InvalidArgument("parallel_tempering_run: swap_interval must be positive");
  if (options.ladders == 0) throw InvalidArgument("parallel_tempering_run: need at least one ladder");
  if (!(options.burn_in_fraction >= 0.0 && options.burn_in_fraction < 1.0)) {
    throw InvalidArgument("parallel_tempering_run: burn_in_fraction must lie in [0, 1)");
  }
  const std::size_t rungs = ladder.size();
  const std::size_t burn_in = static_cast<std::size_t>(options.burn_in_fraction * static_cast<double>(options.sweeps));
  if (burn_in >= options.sweeps) throw InvalidArgument("parallel_tempering_run: burn-in consumes every sweep");
  const auto inv_n = 1.0 / static_cast<double>(model.size());

  PtResult result;
  result.burn_in = burn_in;
  result.energy_density.assign(options.ladders, std::vector<std::vector<double>>(rungs));
  result.final_configs.resize(options.ladders);

  // chains[l][i] holds the configuration currently at rung i of ladder l
  std::vector<std::vector<ChainState>> chains(options.ladders);
  std::vector<Xoshiro256> swap_rng;
  for (std::size_t l = 0; l < options.ladders; ++l) {
    for (std::size_t i = 0; i < rungs; ++i) {
      chains[l].push_back(make_chain(model, Beta(ladder.beta(i)), chain_seed(seed, l, i, rungs)));
    }
    swap_rng.emplace_back(swap_seed(seed, l));
    for (auto& series : result.energy_density[l]) series.reserve(options.sweeps);
  }

  std::vector<std::vector<double>> overlap_series(rungs);
  std::size_t swap_round = 0;
  for (std::size_t t = 0; t < options.sweeps; ++t) {
    for (std::size_t l = 0; l < options.ladders; ++l) {
      for (auto& chain : chains[l]) sweep_in_place(model, chain, options.resync_interval);
    }
    if (rungs > 1 && (t + 1) % options.swap_interval == 0) {
      for (std::size_t l = 0; l < options.ladders; ++l) {
        for (std::size_t i = swap_round % 2; i + 1 < rungs; i += 2) {
          ChainState& a = chains[l][i];
          ChainState& b = chains[l][i + 1];
          const double p = swap_probability(a.beta.value(), b.beta.value(), a.energy, b.energy);
          const bool accept = p >= 1.0 || swap_rng[l].uniform() < p;
          if (l == 0) ladder.record_swap(i, accept);
          if (accept) {
            std::swap(a.config, b.config);
            std::swap(a.energy, b.energy);
          }
        }
      }
      ++swap_round;
    }
    for (std::size_t l = 0; l < options.ladders; ++l) {
      for (std::size_t i = 0; i < rungs; ++i) result.energy_density[l][i].push_back(chains[l][i].energy * inv_n);
    }
    if (options.ladders >= 2 && t >= burn_in) {
      for (std::size_t i = 0; i < rungs; ++i) {
        double total = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < options.ladders; ++a) {
          for (std::size_t b = a + 1; b < options.ladders; ++b) {
            const double r = (2.0 * static_cast<double>(chains[a][i].config.agreements(chains[b][i].config)) -
                              static_cast<double>(model.size())) * inv_n;
            total += r * r;
            ++pairs;
          }
        }
        overlap_series[i].push_back(total / static_cast<double>(pairs));
      }
    }
  }

  for (std::size_t i = 0; i < rungs; ++i) {
    TraceSummary s;
    s.beta = ladder.beta(i);
    s.burn_in = burn_in;
    s.n_samples = options.sweeps - burn_in;
    double var = 0.0;
    double tau = 0.0;
    for (std::size_t l = 0; l < options.ladders; ++l) {
      const auto& series = result.energy_density[l][i];
      const auto est = autocorrelation_estimate(std::span<const double>(series).subspan(burn_in));
      s.u_mean += est.mean;
      var += est.error * est.error;
      tau += est.tau_int;
    }
    const auto ladders = static_cast<double>(options.ladders);
    s.u_mean /= ladders;
    s.u_stderr = std::sqrt(var) / ladders;
    s.tau_int = tau / ladders;
    result.traces.push_back(s);

    if (options.ladders >= 2) {
      const auto est = autocorrelation_estimate(overlap_series[i]);
      result.overlap_traces.push_back({s.beta, est.mean, est.error, est.tau_int, overlap_series[i].size(), burn_in});
    }
  }
  for (std::size_t l = 0; l < options.ladders; ++l) {
    for (auto& chain : chains[l]) result.final_configs[l].push_back(chain.config);
  }
  if (!options.record_traces) result.energy_density.clear();
  result.ladder = std::move(ladder);
  return result;
}

/// Plain Metropolis at one beta: a one-rung ladder.
inline PtResult metropolis_run(const Model& model, Beta beta, const PtOptions& options, std::uint64_t seed) {
  return parallel_tempering_run(model, TemperatureLadder({beta.value()}), options, seed);
}

struct ThermoIntegral {
  double value = 0.0;
  double error = 0.0;  // sqrt(quadrature^2 + statistical^2)
  double quadrature_error = 0.0;
  double statistical_error = 0.0;
};

/// F_N(target) = int_0^target <H/N>_b db by the trapezoid rule over the trace
/// grid, which must start at beta = 0. `u_at_zero` replaces the beta = 0 node
/// by its exact prior value (stderr 0) when given.
inline ThermoIntegral thermo_integrate(std::span<const TraceSummary> traces, Beta target,
                                       std::optional<double> u_at_zero = std::nullopt) {
  if (traces.empty() || traces.front().beta != 0.0) {
    throw InvalidArgument("thermo_integrate: trace grid must start at beta = 0");
  }
  for (std::size_t k = 1; k < traces.size(); ++k) {
    if (!(traces[k - 1].beta < traces[k].beta)) throw InvalidArgument("thermo_integrate: betas must increase");
  }
  const double b = target.value();
  if (b > traces.back().beta) throw InvalidArgument("thermo_integrate: grid does not cover the target beta");
  ThermoIntegral out;
  if (b == 0.0) return out;

  const std::size_t m = traces.size();
  std::vector<double> x(m), u(m), se(m);
  for (std::size_t k = 0; k < m; ++k) {
    x[k] = traces[k].beta;
    u[k] = traces[k].u_mean;
    se[k] = traces[k].u_stderr;
  }
  if (u_at_zero) {
    u[0] = *u_at_zero;
    se[0] = 0.0;
  }
  // |u''| at interior nodes by second divided differences
  std::vector<double> curvature(m, 0.0);
  for (std::size_t k = 1; k + 1 < m; ++k) {
    const double left = (u[k] - u[k - 1]) / (x[k] - x[k - 1]);
    const double right = (u[k + 1] - u[k]) / (x[k + 1] - x[k]);
    curvature[k] = std::abs(2.0 * (right - left) / (x[k + 1] - x[k - 1]));
  }
  const auto interval_curvature = [&](std::size_t k) {
    if (m < 3) return 0.0;
    const std::size_t lo = std::clamp<std::size_t>(k, 1, m - 2);
    const std::size_t hi = std::clamp<std::size_t>(k + 1, 1, m - 2);
    return std::max(curvature[lo], curvature[hi]);
  };

  std::vector<double> weight(m, 0.0);
  for (std::size_t k = 0; k + 1 < m && x[k] < b; ++k) {
    const double right = std::min(b, x[k + 1]);
    const double h = right - x[k];
    // linear interpolation of u at `right` inside [x_k, x_{k+1}]
    const double t = h / (x[k + 1] - x[k]);
    const double u_right = (1.0 - t) * u[k] + t * u[k + 1];
    out.value += 0.5 * h * (u[k] + u_right);
    weight[k] += 0.5 * h * (1.0 + (1.0 - t));
    weight[k + 1] += 0.5 * h * t;
    out.quadrature_error += h * h * h / 12.0 * interval_curvature(k);
  }
  double var = 0.0;
  for (std::size_t k = 0; k < m; ++k) var += weight[k] * weight[k] * se[k] * se[k];
  out.statistical_error = std::sqrt(var);
  out.error = std::hypot(out.quadrature_error, out.statistical_error);
  return out;
}

/// k independent chains on the same disorder at the same beta. After burn-in
/// one configuration per chain is retained every `thin` sweeps.
inline ReplicaBatch sample_replicas(const Model& model, Beta beta, std::size_t k, std::size_t sweeps,
                                    std::size_t thin, std::uint64_t seed,
                                    double burn_in_fraction = kDefaultBurnInFraction) {
  if (k < 2) throw InvalidArgument("sample_replicas: need at least 2 replicas");
  if (thin == 0) throw InvalidArgument("sample_replicas: thin must be positive");
  const auto burn_in = static_cast<std::size_t>(burn_in_fraction * static_cast<double>(sweeps));
  if (sweeps == 0 || burn_in >= sweeps) throw InvalidArgument("sample_replicas: sweeps must exceed burn-in");

  ReplicaBatch batch;
  batch.n = model.size();
  batch.beta = beta;
  batch.chains = k;
  batch.source = ReplicaSource::McChains;
  batch.disorder_seed = model.disorder() ? model.disorder()->seed : 0;

  std::vector<ChainState> chains;
  chains.reserve(k);
  for (std::size_t c = 0; c < k; ++c) chains.push_back(make_chain(model, beta, derive_seed(seed, c)));
  const std::size_t slices = (sweeps - burn_in) / thin;
  batch.replicas.reserve(slices * k);
  batch.energies.reserve(slices * k);
  for (std::size_t t = 0; t < sweeps; ++t) {
    for (auto& chain : chains) sweep_in_place(model, chain);
    if (t >= burn_in && (t + 1 - burn_in) % thin == 0) {
      for (const auto& chain : chains) {
        batch.replicas.push_back(chain.config);
        batch.energies.push_back(chain.energy);
      }
    }
  }
  return batch;
}

/// `slices` slices of k exact i.i.d. draws from G_{N,beta}, by inversion of
/// the cumulative Gibbs weights.
inline ReplicaBatch sample_exact_replicas(const Model& model, Beta beta, std::size_t k, std::size_t slices,
                                          std::uint64_t seed, const EnumerationOptions& options = {}) {
  if (k < 2) throw InvalidArgument("sample_exact_replicas: need at least 2 replicas");
  const EnergyTable table = EnergyTable::build(model, options);
  std::vector<double> cdf = table.gibbs_weights(beta.value());
  for (std::size_t i = 1; i < cdf.size(); ++i) cdf[i] += cdf[i - 1];
  Xoshiro256 rng(seed);
  ReplicaBatch batch;
  batch.n = model.size();
  batch.beta = beta;
  batch.chains = k;
  batch.source = ReplicaSource::ExactProductMeasure;
  batch.disorder_seed = model.disorder() ? model.disorder()->seed : 0;
  for (std::size_t t = 0; t < slices * k; ++t) {
    const double u = rng.uniform() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto bits = static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), std::ssize(cdf) - 1));
    batch.replicas.push_back(SpinConfiguration::from_bits(model.size(), bits));
    batch.energies.push_back(table.energy(bits));
  }
  return batch;
}

}  // namespace spinconc
