#pragma once

// Serialization: JSON for structured reports, CSV for tables, SHA-256 for
// manifest content hashes.
//
// Every number is written in the shortest form that round-trips
// (std::to_chars), so identical doubles always produce identical bytes.

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "spinconc/concentration.hpp"
#include "spinconc/error.hpp"
#include "spinconc/exact.hpp"
#include "spinconc/mc.hpp"
#include "spinconc/model.hpp"
#include "spinconc/replica.hpp"
#include "spinconc/replica_batch.hpp"

namespace spinconc {

using json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------- CSV

using CsvCell = std::variant<std::string, double, std::int64_t, std::uint64_t, bool, std::monostate>;

inline std::string csv_quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

inline std::string csv_cell(const CsvCell& cell) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) return csv_quote(v);
        else if constexpr (std::is_same_v<T, double>) return format_double(v);
        else if constexpr (std::is_same_v<T, bool>) return v ? "1" : "0";
        else if constexpr (std::is_same_v<T, std::monostate>) return "";
        else return std::to_string(v);
      },
      cell);
}

/// Optional doubles become empty cells.
inline CsvCell opt_cell(const std::optional<double>& v) {
  return v ? CsvCell(*v) : CsvCell(std::monostate{});
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<CsvCell> row) {
    if (row.size() != header_.size()) throw std::logic_error("CsvTable: row width does not match header");
    rows_.push_back(std::move(row));
  }

  std::size_t rows() const noexcept { return rows_.size(); }

  std::string str() const {
    std::string out;
    const auto line = [&out](const auto& cells, auto&& render) {
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) out += ',';
        out += render(cells[k]);
      }
      out += "\r\n";
    };
    line(header_, [](const std::string& h) { return csv_quote(h); });
    for (const auto& r : rows_) line(r, [](const CsvCell& c) { return csv_cell(c); });
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<CsvCell>> rows_;
};

// ---------------------------------------------------------------- files

inline void write_text(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

// ---------------------------------------------------------------- JSON

/// NaN and infinities are not valid JSON; they become null.
inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
inline json num(const std::optional<double>& x) { return x ? num(*x) : json(nullptr); }

inline json spins_json(const SpinConfiguration& c) { return json(c.to_spins()); }

inline json to_json(const DisorderSample& d) {
  json j;
  j["n"] = d.n;
  j["seed"] = d.seed;
  j["rng_id"] = d.rng_id;
  json rows = json::array();
  for (std::size_t i = 0; i < d.n; ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < d.n; ++k) row.push_back(d.coupling(i, k));
    rows.push_back(std::move(row));
  }
  j["couplings"] = std::move(rows);
  return j;
}

inline CsvTable histogram_csv(const ExactGibbsSummary& s) {
  CsvTable t({"bin_left", "bin_right", "gibbs_mass"});
  for (const auto& b : s.histogram) t.add({b.left, b.right, b.gibbs_mass});
  return t;
}

inline json to_json(const ExactGibbsSummary& s) {
  json j;
  j["n"] = s.n;
  j["beta"] = s.beta.value();
  j["log_partition"] = num(s.log_partition);
  j["free_energy"] = num(s.free_energy);
  j["energy_density_mean"] = num(s.energy_density_mean);
  j["energy_density_second_moment"] = num(s.energy_density_second_moment);
  j["min_energy_density"] = num(s.min_energy_density);
  j["max_energy_density"] = num(s.max_energy_density);
  j["histogram_bins"] = s.histogram.size();
  return j;
}

inline json to_json(const DeltaPair& d) {
  return {{"lambda", d.lambda}, {"delta_plus", num(d.delta_plus)}, {"delta_minus", num(d.delta_minus)},
          {"gamma", num(d.gamma)}};
}

inline json to_json(const Theorem1Report& r) {
  json j;
  j["n"] = r.n;
  j["beta"] = r.beta;
  j["c"] = r.c;
  j["cprime"] = r.cprime;
  j["e_ref"] = num(r.e_ref);
  j["free_energy"] = num(r.free_energy);
  j["lambda_n"] = r.lambda_n;
  j["deltas"] = to_json(r.deltas);
  j["epsilon_n"] = num(r.epsilon_n);
  j["gibbs_mass_outside"] = num(r.gibbs_mass_outside);
  j["bound_ii"] = num(r.bound_ii);
  j["restricted_log_partition"] = num(r.restricted_log_partition);
  j["restricted_gap"] = num(r.restricted_gap);
  j["bound_iii"] = num(r.bound_iii);
  j["prior_log_mass"] = num(r.prior_log_mass);
  j["entropy_target"] = num(r.entropy_target);
  j["pass_ii"] = r.pass_ii;
  j["pass_iii"] = r.pass_iii;
  j["pass_entropy"] = r.pass_entropy;
  j["pass"] = r.pass();
  j["diagnostic"] = r.diagnostic;
  return j;
}

inline json to_json(const MomentAudit& m) {
  return {{"lambda0", m.lambda0},         {"gamma0", num(m.gamma0)},   {"lambda", num(m.lambda)},
          {"gamma", num(m.gamma)},        {"lhs_plus", num(m.lhs_plus)}, {"lhs_minus", num(m.lhs_minus)},
          {"lhs_abs", num(m.lhs_abs)},    {"rhs_integral", num(m.rhs_integral)},
          {"rhs_max", num(m.rhs_max)},    {"rhs", num(m.rhs)},         {"pass", m.pass}};
}

inline json to_json(const SandwichReport& r) {
  return {{"upper", {num(r.upper[0]), num(r.upper[1]), num(r.upper[2])}},
          {"lower", {num(r.lower[0]), num(r.lower[1]), num(r.lower[2])}},
          {"pass_upper", r.pass_upper},
          {"pass_lower", r.pass_lower}};
}

inline json to_json(const IbpRecord& r) {
  json j;
  j["beta"] = r.beta;
  j["n_replicas"] = r.n_replicas;
  j["phi"] = r.phi_id;
  j["samples"] = r.samples;
  j["lhs"] = num(r.lhs);
  j["rhs"] = num(r.rhs);
  j["stderr_lhs"] = num(r.stderr_lhs);
  j["stderr_rhs"] = num(r.stderr_rhs);
  j["stderr_diff"] = num(r.stderr_diff);
  j["z"] = num(r.z_score);
  j["rhs_uncorrected"] = num(r.rhs_uncorrected);
  j["stderr_diff_uncorrected"] = num(r.stderr_diff_uncorrected);
  j["z_uncorrected"] = num(r.z_uncorrected);
  return j;
}

inline json to_json(const GGReport& r) {
  json j;
  j["n_system"] = r.n_system;
  j["n_replicas"] = r.n_replicas;
  j["beta"] = r.beta;
  j["phi"] = r.phi_id;
  j["samples"] = r.samples;
  j["residual"] = num(r.residual);
  j["stderr_residual"] = num(r.stderr_residual);
  j["l1"] = num(r.l1);
  j["stderr_l1"] = num(r.stderr_l1);
  j["bound"] = num(r.bound);
  j["stderr_bound"] = num(r.stderr_bound);
  j["term_next"] = num(r.term_next);
  j["term_product"] = num(r.term_product);
  j["term_inner"] = num(r.term_inner);
  j["pass_bound"] = r.pass_bound;
  return j;
}

inline json to_json(const TraceSummary& t) {
  return {{"beta", t.beta},       {"mean", num(t.u_mean)},   {"stderr", num(t.u_stderr)},
          {"tau_int", num(t.tau_int)}, {"samples", t.n_samples}, {"burn_in", t.burn_in}};
}

inline json to_json(const ReplicaBatch& b) {
  json j;
  j["n"] = b.n;
  j["beta"] = b.beta.value();
  j["chains"] = b.chains;
  j["source"] = b.source == ReplicaSource::McChains ? "mc" : "exact";
  j["disorder_seed"] = b.disorder_seed;
  json slices = json::array();
  for (std::size_t t = 0; t < b.slices(); ++t) {
    json slice = json::array();
    for (std::size_t c = 0; c < b.chains; ++c) slice.push_back(spins_json(b.at(t, c)));
    slices.push_back(std::move(slice));
  }
  j["replicas"] = std::move(slices);
  return j;
}

}  // namespace spinconc
