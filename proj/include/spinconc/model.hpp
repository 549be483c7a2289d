#pragma once

// Configuration space {-1,+1}^N with the uniform prior, and the two
// Hamiltonians the library knows about:
//
//   SK:             H(s) = N^{-1/2} sum_{i,j=1..N} g_ij s_i s_j
//                   (all ordered pairs, diagonal included, g not symmetrized)
//   ConstantField:  H(s) = h sum_i s_i
//
// Gibbs weights are exp(+beta H) throughout the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spinconc/error.hpp"
#include "spinconc/rng.hpp"
#include "spinconc/spin_configuration.hpp"

namespace spinconc {

/// Inverse temperature, finite and nonnegative.
class Beta {
 public:
  constexpr Beta() = default;
  explicit Beta(double value) : value_(value) {
    if (!std::isfinite(value) || value < 0.0) {
      throw InvalidArgument("beta must be finite and >= 0, got " + std::to_string(value));
    }
  }
  constexpr double value() const noexcept { return value_; }
  friend constexpr auto operator<=>(const Beta&, const Beta&) = default;

 private:
  double value_ = 0.0;
};

/// Quenched SK couplings g_ij, row-major, with the seed that regenerates them.
struct DisorderSample {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string rng_id;
  std::vector<double> couplings;

  double coupling(std::size_t i, std::size_t j) const { return couplings[i * n + j]; }
  friend bool operator==(const DisorderSample&, const DisorderSample&) = default;
};

/// n*n i.i.d. standard normals drawn row-major from NormalStream(seed).
inline DisorderSample sk_disorder(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sk_disorder: n must be positive");
  DisorderSample sample{n, seed, std::string(kRngId), std::vector<double>(n * n)};
  NormalStream normals(seed);
  for (auto& g : sample.couplings) g = normals.next();
  return sample;
}

enum class ModelKind { SK, ConstantField };

inline std::string to_string(ModelKind kind) { return kind == ModelKind::SK ? "sk" : "field"; }

class Model {
 public:
  static Model sk(DisorderSample disorder) {
    if (disorder.n == 0 || disorder.couplings.size() != disorder.n * disorder.n) {
      throw InvalidArgument("Model::sk: coupling matrix must be n*n with n >= 1");
    }
    Model m;
    m.kind_ = ModelKind::SK;
    m.n_ = disorder.n;
    const std::size_t n = disorder.n;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    m.pair_.assign(n * n, 0.0);
    double diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += disorder.coupling(i, i);
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j) m.pair_[i * n + j] = scale * (disorder.coupling(i, j) + disorder.coupling(j, i));
      }
    }
    m.diagonal_energy_ = scale * diag;
    m.disorder_ = std::move(disorder);
    return m;
  }

  static Model constant_field(std::size_t n, double h) {
    if (n == 0) throw InvalidArgument("Model::constant_field: n must be positive");
    if (!std::isfinite(h)) throw InvalidArgument("Model::constant_field: h must be finite");
    Model m;
    m.kind_ = ModelKind::ConstantField;
    m.n_ = n;
    m.field_ = h;
    return m;
  }

  ModelKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return n_; }
  double field_strength() const noexcept { return field_; }
  const std::optional<DisorderSample>& disorder() const noexcept { return disorder_; }

  /// N^{-1/2} sum_i g_ii for SK, 0 otherwise. Identical for every configuration.
  double diagonal_energy() const noexcept { return diagonal_energy_; }

  double energy(const SpinConfiguration& config) const {
    check_size(config);
    if (kind_ == ModelKind::ConstantField) {
      return field_ * static_cast<double>(config.magnetization_sum());
    }
    double off = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double row = 0.0;
      const double* p = &pair_[i * n_];
      for (std::size_t j = i + 1; j < n_; ++j) row += config.up(j) ? p[j] : -p[j];
      off += config.up(i) ? row : -row;
    }
    return diagonal_energy_ + off;
  }

  /// H(config with `site` flipped) - H(config).
  double flip_delta(const SpinConfiguration& config, std::size_t site) const {
    check_size(config);
    config.check_site(site);
    const double s = config.spin(site);
    if (kind_ == ModelKind::ConstantField) return -2.0 * field_ * s;
    return -2.0 * s * local_field(config, site);
  }

  /// sum_{j != site} (g_sj + g_js) s_j / sqrt(N); zero for ConstantField.
  double local_field(const SpinConfiguration& config, std::size_t site) const noexcept {
    if (kind_ == ModelKind::ConstantField) return 0.0;
    const double* p = &pair_[site * n_];
    double total = 0.0;
    for (std::size_t j = 0; j < n_; ++j) total += config.up(j) ? p[j] : -p[j];
    return total;
  }

  /// Gibbs-free mean of H/N under the uniform prior.
  double prior_mean_energy_density() const noexcept {
    return kind_ == ModelKind::SK ? diagonal_energy_ / static_cast<double>(n_) : 0.0;
  }

  /// Same model with every coupling negated (SK) or the field negated.
  Model negated() const {
    if (kind_ == ModelKind::ConstantField) return constant_field(n_, -field_);
    DisorderSample d = *disorder_;
    for (auto& g : d.couplings) g = -g;
    return sk(std::move(d));
  }

 private:
  Model() = default;

  void check_size(const SpinConfiguration& config) const {
    if (config.size() != n_) {
      throw InvalidArgument("configuration size " + std::to_string(config.size()) +
                            " does not match model size " + std::to_string(n_));
    }
  }

  ModelKind kind_ = ModelKind::ConstantField;
  std::size_t n_ = 0;
  double field_ = 0.0;
  std::optional<DisorderSample> disorder_;
  std::vector<double> pair_;  // (g_ij + g_ji)/sqrt(N) off the diagonal, zero on it
  double diagonal_energy_ = 0.0;
};

inline double hamiltonian(const Model& model, const SpinConfiguration& config) {
  return model.energy(config);
}

inline double energy_flip_delta(const Model& model, const SpinConfiguration& config,
                                std::size_t site) {
  return model.flip_delta(config, site);
}

/// SK models on disorder seeds derive_seed(master, 0..count-1).
inline std::vector<Model> sk_ensemble(std::size_t n, std::size_t count, std::uint64_t master) {
  std::vector<Model> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) out.push_back(Model::sk(sk_disorder(n, derive_seed(master, s))));
  return out;
}

struct Estimate {
  double mean = 0.0;
  double error = 0.0;  // one standard error
};

/// Empirical E[H(a) H(b)] over n_samples independent SK disorders.
inline Estimate covariance_probe(std::size_t n, const SpinConfiguration& a, const SpinConfiguration& b,
                                 std::size_t n_samples, std::uint64_t master_seed) {
  if (a.size() != n || b.size() != n) throw InvalidArgument("covariance_probe: size mismatch");
  if (n_samples < 2) throw InvalidArgument("covariance_probe: need at least 2 samples");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Model m = Model::sk(sk_disorder(n, derive_seed(master_seed, s)));
    const double x = m.energy(a) * m.energy(b);
    sum += x;
    sum_sq += x * x;
  }
  const double count = static_cast<double>(n_samples);
  const double mean = sum / count;
  const double var = std::max(0.0, (sum_sq - count * mean * mean) / (count - 1.0));
  return {mean, std::sqrt(var / count)};
}

}  // namespace spinconc
