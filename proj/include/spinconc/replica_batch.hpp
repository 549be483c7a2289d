#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "spinconc/model.hpp"
#include "spinconc/spin_configuration.hpp"

namespace spinconc {

enum class ReplicaSource { ExactProductMeasure, McChains };

/// Replicas drawn from one Gibbs measure (one disorder, one beta).
/// Stored slice-major: replicas[t * chains + c] is replica c at slice t.
/// Replicas in one slice come from independent chains (or independent exact
/// draws); successive slices of a chain may be correlated.
struct ReplicaBatch {
  std::size_t n = 0;
  Beta beta;
  std::size_t chains = 0;
  std::vector<SpinConfiguration> replicas;
  std::vector<double> energies;  // H of each replica, same layout
  ReplicaSource source = ReplicaSource::McChains;
  std::uint64_t disorder_seed = 0;

  std::size_t slices() const noexcept { return chains == 0 ? 0 : replicas.size() / chains; }
  const SpinConfiguration& at(std::size_t slice, std::size_t chain) const {
    return replicas[slice * chains + chain];
  }
  double energy_at(std::size_t slice, std::size_t chain) const { return energies[slice * chains + chain]; }
};

}  // namespace spinconc
