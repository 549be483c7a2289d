#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spinconc/error.hpp"

namespace spinconc {

/// A point of {-1,+1}^n stored one bit per spin: bit i set means spin i is +1.
/// Bits past n are always zero.
class SpinConfiguration {
 public:
  SpinConfiguration() = default;

  /// All spins -1.
  explicit SpinConfiguration(std::size_t n) : n_(n), words_((n + 63) / 64, 0) {
    if (n == 0) throw InvalidArgument("SpinConfiguration: n must be positive");
  }

  static SpinConfiguration all_up(std::size_t n) {
    SpinConfiguration c(n);
    for (auto& w : c.words_) w = ~std::uint64_t{0};
    c.clear_tail();
    return c;
  }

  /// Low n bits of `bits`; requires n <= 64.
  static SpinConfiguration from_bits(std::size_t n, std::uint64_t bits) {
    if (n > 64) throw InvalidArgument("SpinConfiguration::from_bits: n > 64");
    SpinConfiguration c(n);
    c.assign_bits(bits);
    return c;
  }

  static SpinConfiguration from_spins(std::span<const int> spins) {
    SpinConfiguration c(spins.size());
    for (std::size_t i = 0; i < spins.size(); ++i) {
      if (spins[i] == 1) {
        c.words_[i / 64] |= std::uint64_t{1} << (i % 64);
      } else if (spins[i] != -1) {
        throw InvalidArgument("SpinConfiguration::from_spins: entries must be +1 or -1");
      }
    }
    return c;
  }

  std::vector<int> to_spins() const {
    std::vector<int> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = spin(i);
    return out;
  }

  std::size_t size() const noexcept { return n_; }

  bool up(std::size_t i) const noexcept { return (words_[i / 64] >> (i % 64)) & 1u; }
  int spin(std::size_t i) const noexcept { return up(i) ? 1 : -1; }

  void set(std::size_t i, int value) {
    check_site(i);
    const std::uint64_t mask = std::uint64_t{1} << (i % 64);
    if (value == 1) {
      words_[i / 64] |= mask;
    } else if (value == -1) {
      words_[i / 64] &= ~mask;
    } else {
      throw InvalidArgument("SpinConfiguration::set: value must be +1 or -1");
    }
  }

  void flip(std::size_t i) noexcept { words_[i / 64] ^= std::uint64_t{1} << (i % 64); }

  /// Overwrite with the low n bits of `bits`; requires n <= 64.
  void assign_bits(std::uint64_t bits) noexcept {
    words_[0] = bits;
    clear_tail();
  }

  /// Global spin reversal, sigma -> -sigma.
  SpinConfiguration reversed() const {
    SpinConfiguration c = *this;
    for (auto& w : c.words_) w = ~w;
    c.clear_tail();
    return c;
  }

  std::span<const std::uint64_t> words() const noexcept { return words_; }

  std::size_t count_up() const noexcept {
    std::size_t total = 0;
    for (auto w : words_) total += static_cast<std::size_t>(std::popcount(w));
    return total;
  }

  /// Sum of spins.
  long long magnetization_sum() const noexcept {
    return 2 * static_cast<long long>(count_up()) - static_cast<long long>(n_);
  }

  /// Number of sites where the two configurations agree.
  std::size_t agreements(const SpinConfiguration& other) const {
    if (other.n_ != n_) throw InvalidArgument("SpinConfiguration: size mismatch");
    std::size_t differ = 0;
    for (std::size_t k = 0; k < words_.size(); ++k) {
      differ += static_cast<std::size_t>(std::popcount(words_[k] ^ other.words_[k]));
    }
    return n_ - differ;
  }

  void check_site(std::size_t i) const {
    if (i >= n_) {
      throw InvalidArgument("site " + std::to_string(i) + " out of range for n=" + std::to_string(n_));
    }
  }

  friend bool operator==(const SpinConfiguration&, const SpinConfiguration&) = default;

 private:
  void clear_tail() noexcept {
    if (n_ % 64 != 0) words_.back() &= (std::uint64_t{1} << (n_ % 64)) - 1;
  }

  std::size_t n_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace spinconc
