#pragma once

// Exact Gibbs computations by enumerating all 2^N configurations.
//
// Configurations are visited in Gray-code order, so consecutive states differ
// in one spin and the energy is updated with an O(N) flip delta. The range of
// Gray-code ranks is cut into a fixed number of contiguous chunks; each chunk
// restarts from a full energy evaluation, chunks may run on different
// threads, and partial results are merged in chunk order. Output therefore
// depends on the chunk count but never on the thread count.
//
// Sums of exp(beta H) are formed in two passes: the first finds the largest
// exponent, the second adds exp(beta H - max). The uniform prior enters as
// -N log 2 in the log-partition function.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spinconc/error.hpp"
#include "spinconc/model.hpp"
#include "spinconc/parallel.hpp"
#include "spinconc/spin_configuration.hpp"

namespace spinconc {

inline constexpr std::size_t kDefaultEnumerationLimit = 24;
inline constexpr std::size_t kDefaultHistogramBins = 512;

struct EnumerationOptions {
  std::size_t limit = kDefaultEnumerationLimit;
  std::size_t chunks = 64;
  unsigned threads = 0;
  std::size_t histogram_bins = kDefaultHistogramBins;
};

inline void check_enumerable(const Model& model, std::size_t limit) {
  if (model.size() > limit || model.size() > 62) {
    throw ResourceLimit("exact enumeration of N=" + std::to_string(model.size()) +
                        " exceeds the limit N<=" + std::to_string(limit) +
                        "; use the Monte Carlo engine (mode=mc) for this size");
  }
}

constexpr std::uint64_t gray_code(std::uint64_t rank) noexcept { return rank ^ (rank >> 1); }

/// [begin, end) of chunk `c` out of `chunks` over `count` ranks.
constexpr std::pair<std::uint64_t, std::uint64_t> chunk_bounds(std::uint64_t count, std::size_t chunks,
                                                               std::size_t c) noexcept {
  return {count * c / chunks, count * (c + 1) / chunks};
}

/// Visits gray_code(k) for k in [begin, end) as visit(config, energy).
template <class Visitor>
void traverse_gray_range(const Model& model, std::uint64_t begin, std::uint64_t end, Visitor&& visit) {
  if (begin >= end) return;
  SpinConfiguration config = SpinConfiguration::from_bits(model.size(), gray_code(begin));
  double energy = model.energy(config);
  for (std::uint64_t k = begin; k < end; ++k) {
    visit(static_cast<const SpinConfiguration&>(config), energy);
    if (k + 1 < end) {
      const auto site = static_cast<std::size_t>(std::countr_zero(k + 1));
      energy += model.flip_delta(config, site);
      config.flip(site);
    }
  }
}

/// Runs visit_chunk(c, begin, end) for every chunk, possibly in parallel.
template <class ChunkBody>
void for_each_chunk(std::size_t n, const EnumerationOptions& options, ChunkBody&& body) {
  const std::uint64_t count = std::uint64_t{1} << n;
  const std::size_t chunks = static_cast<std::size_t>(std::clamp<std::uint64_t>(options.chunks, 1, count));
  parallel_for(chunks, options.threads, [&](std::size_t c) {
    const auto [begin, end] = chunk_bounds(count, chunks, c);
    body(c, begin, end);
  });
}

inline std::size_t effective_chunks(std::size_t n, const EnumerationOptions& options) {
  const std::uint64_t count = std::uint64_t{1} << n;
  return static_cast<std::size_t>(std::clamp<std::uint64_t>(options.chunks, 1, count));
}

/// Energies of every configuration, indexed by configuration bits.
class EnergyTable {
 public:
  static EnergyTable build(const Model& model, const EnumerationOptions& options = {}) {
    check_enumerable(model, options.limit);
    EnergyTable table;
    table.n_ = model.size();
    table.energy_.assign(std::size_t{1} << table.n_, 0.0);
    for_each_chunk(table.n_, options, [&](std::size_t, std::uint64_t begin, std::uint64_t end) {
      traverse_gray_range(model, begin, end, [&](const SpinConfiguration& c, double e) {
        table.energy_[c.words()[0]] = e;
      });
    });
    const auto [lo, hi] = std::minmax_element(table.energy_.begin(), table.energy_.end());
    table.min_energy_ = *lo;
    table.max_energy_ = *hi;
    return table;
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t count() const noexcept { return energy_.size(); }
  std::span<const double> energies() const noexcept { return energy_; }
  double energy(std::uint64_t bits) const { return energy_[bits]; }
  double energy_density(std::uint64_t bits) const { return energy_[bits] / static_cast<double>(n_); }
  double min_energy() const noexcept { return min_energy_; }
  double max_energy() const noexcept { return max_energy_; }

  /// Largest beta*H over all configurations. `beta` may be any real here:
  /// the free-energy curve is evaluated on both sides of a reference point.
  double max_exponent(double beta) const noexcept {
    return beta >= 0.0 ? beta * max_energy_ : beta * min_energy_;
  }

  /// log Z_N(beta) = log 2^{-N} sum exp(beta H).
  double log_partition(double beta) const {
    const double top = max_exponent(beta);
    double sum = 0.0;
    for (double e : energy_) sum += std::exp(beta * e - top);
    return top + std::log(sum) - static_cast<double>(n_) * std::numbers::ln2;
  }

  /// F_N(beta) = N^{-1} log Z_N(beta).
  double free_energy(double beta) const { return log_partition(beta) / static_cast<double>(n_); }

  /// Normalized Gibbs weights, indexed like energies().
  std::vector<double> gibbs_weights(double beta) const {
    const double top = max_exponent(beta);
    std::vector<double> w(energy_.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < energy_.size(); ++k) {
      w[k] = std::exp(beta * energy_[k] - top);
      sum += w[k];
    }
    for (auto& x : w) x /= sum;
    return w;
  }

  /// <f(bits, energy)>_beta.
  template <class F>
  double gibbs_mean(double beta, F&& f) const {
    const double top = max_exponent(beta);
    double sum = 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < energy_.size(); ++k) {
      const double w = std::exp(beta * energy_[k] - top);
      sum += w;
      acc += w * f(static_cast<std::uint64_t>(k), energy_[k]);
    }
    return acc / sum;
  }

  /// F_N'(beta) = <H/N>_beta.
  double energy_density_mean(double beta) const {
    const double inv_n = 1.0 / static_cast<double>(n_);
    return gibbs_mean(beta, [inv_n](std::uint64_t, double e) { return e * inv_n; });
  }

  /// N^{-1} log of the integral of 1_A exp(beta H) against the prior, for
  /// A = {pred(bits, energy)}. Empty when A is empty.
  template <class Pred>
  std::optional<double> restricted_log_partition(double beta, Pred&& pred) const {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < energy_.size(); ++k) {
      if (pred(static_cast<std::uint64_t>(k), energy_[k])) top = std::max(top, beta * energy_[k]);
    }
    if (top == -std::numeric_limits<double>::infinity()) return std::nullopt;
    double sum = 0.0;
    for (std::size_t k = 0; k < energy_.size(); ++k) {
      if (pred(static_cast<std::uint64_t>(k), energy_[k])) sum += std::exp(beta * energy_[k] - top);
    }
    return (top + std::log(sum) - static_cast<double>(n_) * std::numbers::ln2) / static_cast<double>(n_);
  }

  /// G_{N,beta}(A).
  template <class Pred>
  double gibbs_mass(double beta, Pred&& pred) const {
    return gibbs_mean(beta, [&](std::uint64_t k, double e) { return pred(k, e) ? 1.0 : 0.0; });
  }

  /// nu_N(A) = |A| / 2^N.
  template <class Pred>
  double prior_mass(Pred&& pred) const {
    std::size_t hits = 0;
    for (std::size_t k = 0; k < energy_.size(); ++k) {
      if (pred(static_cast<std::uint64_t>(k), energy_[k])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(energy_.size());
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> energy_;
  double min_energy_ = 0.0;
  double max_energy_ = 0.0;
};

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  double gibbs_mass = 0.0;
};

struct ExactGibbsSummary {
  std::size_t n = 0;
  Beta beta;
  double log_partition = 0.0;  // log Z_N(beta)
  double free_energy = 0.0;    // N^{-1} log Z_N(beta)
  double energy_density_mean = 0.0;
  double energy_density_second_moment = 0.0;
  double min_energy_density = 0.0;
  double max_energy_density = 0.0;
  std::vector<HistogramBin> histogram;
};

/// Streams all 2^N configurations without storing them.
inline ExactGibbsSummary enumerate(const Model& model, Beta beta, const EnumerationOptions& options = {}) {
  check_enumerable(model, options.limit);
  const std::size_t n = model.size();
  const double b = beta.value();
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t chunks = effective_chunks(n, options);

  std::vector<double> lo(chunks, std::numeric_limits<double>::infinity());
  std::vector<double> hi(chunks, -std::numeric_limits<double>::infinity());
  for_each_chunk(n, options, [&](std::size_t c, std::uint64_t begin, std::uint64_t end) {
    traverse_gray_range(model, begin, end, [&](const SpinConfiguration&, double e) {
      lo[c] = std::min(lo[c], e);
      hi[c] = std::max(hi[c], e);
    });
  });
  const double min_e = *std::min_element(lo.begin(), lo.end());
  const double max_e = *std::max_element(hi.begin(), hi.end());
  const double top = b * max_e;

  const std::size_t bins = std::max<std::size_t>(options.histogram_bins, 1);
  const double min_h = min_e * inv_n;
  const double max_h = max_e * inv_n;
  const double width = (max_h - min_h) / static_cast<double>(bins);
  auto bin_of = [&](double h) -> std::size_t {
    if (width <= 0.0) return 0;
    const auto k = static_cast<std::size_t>((h - min_h) / width);
    return std::min(k, bins - 1);
  };

  struct Partial {
    double weight = 0.0;
    double first = 0.0;
    double second = 0.0;
    std::vector<double> hist;
  };
  std::vector<Partial> parts(chunks);
  for_each_chunk(n, options, [&](std::size_t c, std::uint64_t begin, std::uint64_t end) {
    Partial& p = parts[c];
    p.hist.assign(bins, 0.0);
    traverse_gray_range(model, begin, end, [&](const SpinConfiguration&, double e) {
      const double w = std::exp(b * e - top);
      const double h = e * inv_n;
      p.weight += w;
      p.first += w * h;
      p.second += w * h * h;
      p.hist[bin_of(h)] += w;
    });
  });

  Partial total;
  total.hist.assign(bins, 0.0);
  for (const auto& p : parts) {
    total.weight += p.weight;
    total.first += p.first;
    total.second += p.second;
    for (std::size_t k = 0; k < bins; ++k) total.hist[k] += p.hist[k];
  }

  ExactGibbsSummary out;
  out.n = n;
  out.beta = beta;
  out.log_partition = top + std::log(total.weight) - static_cast<double>(n) * std::numbers::ln2;
  out.free_energy = out.log_partition * inv_n;
  out.energy_density_mean = total.first / total.weight;
  out.energy_density_second_moment = total.second / total.weight;
  out.min_energy_density = min_h;
  out.max_energy_density = max_h;
  out.histogram.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    out.histogram[k].left = min_h + width * static_cast<double>(k);
    out.histogram[k].right = k + 1 == bins ? max_h : min_h + width * static_cast<double>(k + 1);
    out.histogram[k].gibbs_mass = total.hist[k] / total.weight;
  }
  return out;
}

/// Exact <observable>_beta for observable(const SpinConfiguration&) -> double.
template <class Observable>
double gibbs_expectation(const Model& model, Beta beta, Observable&& observable,
                         const EnumerationOptions& options = {}) {
  check_enumerable(model, options.limit);
  const std::size_t n = model.size();
  const std::size_t chunks = effective_chunks(n, options);
  const double b = beta.value();
  std::vector<double> hi(chunks, -std::numeric_limits<double>::infinity());
  for_each_chunk(n, options, [&](std::size_t c, std::uint64_t begin, std::uint64_t end) {
    traverse_gray_range(model, begin, end, [&](const SpinConfiguration&, double e) {
      hi[c] = std::max(hi[c], b * e);
    });
  });
  const double top = *std::max_element(hi.begin(), hi.end());
  std::vector<double> weight(chunks, 0.0);
  std::vector<double> acc(chunks, 0.0);
  for_each_chunk(n, options, [&](std::size_t c, std::uint64_t begin, std::uint64_t end) {
    traverse_gray_range(model, begin, end, [&](const SpinConfiguration& config, double e) {
      const double w = std::exp(b * e - top);
      weight[c] += w;
      acc[c] += w * observable(config);
    });
  });
  double w_total = 0.0;
  double a_total = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    w_total += weight[c];
    a_total += acc[c];
  }
  return a_total / w_total;
}

struct SetMass {
  double gibbs_mass = 0.0;
  double prior_mass = 0.0;
  std::optional<double> restricted_log_partition;  // N^{-1} log int 1_A e^{beta H} dnu
};

/// Gibbs and prior mass of {predicate(config)}.
template <class Predicate>
SetMass set_mass(const Model& model, Beta beta, Predicate&& predicate, const EnumerationOptions& options = {}) {
  check_enumerable(model, options.limit);
  const std::size_t n = model.size();
  const std::size_t chunks = effective_chunks(n, options);
  const double b = beta.value();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  std::vector<double> top_all(chunks, kNegInf);
  std::vector<double> top_set(chunks, kNegInf);
  std::vector<std::uint64_t> hits(chunks, 0);
  for_each_chunk(n, options, [&](std::size_t c, std::uint64_t begin, std::uint64_t end) {
    traverse_gray_range(model, begin, end, [&](const SpinConfiguration& config, double e) {
      top_all[c] = std::max(top_all[c], b * e);
      if (predicate(config)) {
        top_set[c] = std::max(top_set[c], b * e);
        ++hits[c];
      }
    });
  });
  const double top = *std::max_element(top_all.begin(), top_all.end());
  const double top_a = *std::max_element(top_set.begin(), top_set.end());
  std::uint64_t total_hits = 0;
  for (auto h : hits) total_hits += h;

  std::vector<double> sum_all(chunks, 0.0);
  std::vector<double> sum_set_global(chunks, 0.0);
  std::vector<double> sum_set_local(chunks, 0.0);
  for_each_chunk(n, options, [&](std::size_t c, std::uint64_t begin, std::uint64_t end) {
    traverse_gray_range(model, begin, end, [&](const SpinConfiguration& config, double e) {
      sum_all[c] += std::exp(b * e - top);
      if (predicate(config)) {
        sum_set_global[c] += std::exp(b * e - top);
        sum_set_local[c] += std::exp(b * e - top_a);
      }
    });
  });
  double all = 0.0;
  double set_g = 0.0;
  double set_l = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    all += sum_all[c];
    set_g += sum_set_global[c];
    set_l += sum_set_local[c];
  }

  SetMass out;
  out.prior_mass = static_cast<double>(total_hits) / static_cast<double>(std::uint64_t{1} << n);
  out.gibbs_mass = set_g / all;
  if (total_hits > 0) {
    out.restricted_log_partition =
        (top_a + std::log(set_l) - static_cast<double>(n) * std::numbers::ln2) / static_cast<double>(n);
  }
  return out;
}

struct CurvePoint {
  double beta = 0.0;
  double free_energy = 0.0;
  double energy_density_mean = 0.0;
};

/// F_N and F_N' on a strictly increasing grid, from one shared energy table.
inline std::vector<CurvePoint> free_energy_curve(const Model& model, std::span<const Beta> grid,
                                                 const EnumerationOptions& options = {}) {
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k - 1] < grid[k])) throw InvalidArgument("free_energy_curve: grid must be strictly increasing");
  }
  const EnergyTable table = EnergyTable::build(model, options);
  std::vector<CurvePoint> out;
  out.reserve(grid.size());
  for (const Beta& b : grid) {
    out.push_back({b.value(), table.free_energy(b.value()), table.energy_density_mean(b.value())});
  }
  return out;
}

}  // namespace spinconc
