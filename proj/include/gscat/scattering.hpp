#pragma once

// Geometric scattering: U_γ f = |T_{h_γ} f|, U_(γ1..γm) = U_γm ··· U_γ1,
// S_γ f = T_g U_γ f, over all paths up to a truncation order.
//
// After each modulus the signal leaves the retained band. The next spectral
// operator implicitly projects it back; the fraction of ‖U_γ f‖² lost to that
// projection is recorded per path.

#include "gscat/filters.hpp"

#include <map>

namespace gscat {

struct ScatteringPath {
  std::vector<int> indices;

  std::size_t order() const { return indices.size(); }

  ScatteringPath parent() const {
    return {std::vector<int>(indices.begin(), indices.end() - (indices.empty() ? 0 : 1))};
  }

  /// "()" for the empty path, "(3 1)" for γ1 = 3, γ2 = 1.
  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (i) s += ' ';
      s += std::to_string(indices[i]);
    }
    return s + ")";
  }

  friend bool operator==(const ScatteringPath&, const ScatteringPath&) = default;
  friend auto operator<=>(const ScatteringPath& a, const ScatteringPath& b) {
    if (a.order() != b.order()) return a.order() <=> b.order();
    return a.indices <=> b.indices;
  }
};

inline constexpr std::size_t kDefaultPathCap = 100000;

/// Number of paths of order 0..max_order, saturating at cap + 1.
inline std::size_t count_paths(std::size_t n_filters, int max_order, std::size_t cap) {
  std::size_t total = 0, level = 1;
  for (int m = 0; m <= max_order; ++m) {
    total += level;
    if (total > cap) return cap + 1;
    if (level > (cap + 1) / std::max<std::size_t>(n_filters, 1) + 1) level = cap + 1;
    else level *= n_filters;
  }
  return total;
}

/// Γ_0 ∪ … ∪ Γ_max_order, ordered by length then lexicographically.
inline std::vector<ScatteringPath> enumerate_paths(std::size_t n_filters, int max_order,
                                                   std::size_t cap = kDefaultPathCap) {
  if (n_filters < 1) throw ConfigError("enumerate_paths: need at least one high-pass filter");
  if (max_order < 0) throw ConfigError("enumerate_paths: max_order must be >= 0");
  const std::size_t count = count_paths(n_filters, max_order, cap);
  if (count > cap)
    throw ConfigError("enumerate_paths: path count exceeds cap of " + std::to_string(cap));
  std::vector<ScatteringPath> out;
  out.reserve(count);
  out.push_back({});
  std::size_t level_begin = 0;
  for (int m = 1; m <= max_order; ++m) {
    const std::size_t level_end = out.size();
    for (std::size_t p = level_begin; p < level_end; ++p)
      for (std::size_t g = 0; g < n_filters; ++g) {
        ScatteringPath child = out[p];
        child.indices.push_back(static_cast<int>(g));
        out.push_back(std::move(child));
      }
    level_begin = level_end;
  }
  return out;
}

inline void require_bank_on(const SpectralManifold& m, const FilterBank& bank) {
  if (bank.manifold_id != m.id()) throw MismatchError("bank is bound to a different manifold");
}

/// U_γ f, applied γ1 first. The empty path is the identity.
inline Signal propagate_path(const SpectralManifold& m, const FilterBank& bank, const ScatteringPath& path,
                             const Signal& f) {
  require_bank_on(m, bank);
  require_on(m, f);
  Signal u = f;
  for (int g : path.indices) {
    if (g < 0 || static_cast<std::size_t>(g) >= bank.n_high())
      throw DomainError("path index " + std::to_string(g) + " out of range for bank");
    u = modulus(apply_operator(m, bank.high_passes[g], u));
  }
  return u;
}

struct ScatteringCoefficients {
  std::vector<ScatteringPath> paths;     // enumeration order
  std::vector<Signal> entries;           // S_γ f
  std::vector<Signal> propagated;        // U_γ f, only when requested
  std::vector<double> entry_norm_sq;     // ‖S_γ f‖²
  std::vector<double> propagated_norm_sq;  // ‖U_γ f‖²
  std::vector<double> discarded_fraction;  // (‖U_γ f‖² − ‖P U_γ f‖²) / ‖U_γ f‖²
  int max_order = 0;
  std::uint64_t bank_id = 0;
  std::uint64_t manifold_id = 0;

  std::size_t size() const { return paths.size(); }

  std::size_t index_of(const ScatteringPath& p) const {
    auto it = std::lower_bound(paths.begin(), paths.end(), p);
    if (it == paths.end() || !(*it == p)) throw DomainError("path " + p.str() + " not in coefficients");
    return static_cast<std::size_t>(it - paths.begin());
  }

  const Signal& at(const ScatteringPath& p) const { return entries[index_of(p)]; }

  /// ‖S f‖_{2,2}
  double norm() const { return std::sqrt(std::accumulate(entry_norm_sq.begin(), entry_norm_sq.end(), 0.0)); }

  /// ‖U f‖_{2,2} over the truncated path set.
  double propagated_norm() const {
    return std::sqrt(std::accumulate(propagated_norm_sq.begin(), propagated_norm_sq.end(), 0.0));
  }

  /// Σ_{|γ| = m} ‖S_γ f‖² for m = 0..max_order.
  std::vector<double> energy_by_order() const {
    std::vector<double> e(max_order + 1, 0.0);
    for (std::size_t i = 0; i < paths.size(); ++i) e[paths[i].order()] += entry_norm_sq[i];
    return e;
  }

  double max_discarded_fraction() const {
    return discarded_fraction.empty() ? 0.0 : *std::max_element(discarded_fraction.begin(), discarded_fraction.end());
  }
};

/// S_γ f for every path up to max_order, evaluated as a prefix-tree traversal
/// so each U_γ f is computed once from its parent.
inline ScatteringCoefficients scatter(const SpectralManifold& m, const FilterBank& bank, const Signal& f, int max_order,
                                      bool keep_propagated = false, std::size_t cap = kDefaultPathCap) {
  require_bank_on(m, bank);
  require_on(m, f);
  ScatteringCoefficients out;
  out.paths = enumerate_paths(bank.n_high(), max_order, cap);
  out.max_order = max_order;
  out.bank_id = bank.id;
  out.manifold_id = m.id();
  const std::size_t P = out.paths.size();
  out.entries.resize(P);
  out.entry_norm_sq.resize(P);
  out.propagated_norm_sq.resize(P);
  out.discarded_fraction.resize(P);
  if (keep_propagated) out.propagated.resize(P);

  const CVec g = bank.low_pass.table().cast<Complex>();
  const auto n = bank.n_high();
  // U_γ for the previous level, indexed by position within that level.
  std::vector<Signal> prev_level{f};
  std::vector<CVec> prev_coeffs;
  std::size_t level_begin = 0;
  for (int order = 0; order <= max_order; ++order) {
    const std::size_t level_size = order == 0 ? 1 : prev_level.size() * n;
    std::vector<Signal> level(level_size);
    std::vector<CVec> coeffs(level_size);
    for (std::size_t q = 0; q < level_size; ++q) {
      Signal u;
      if (order == 0) {
        u = f;
      } else {
        const std::size_t parent = q / n, gamma = q % n;
        CVec c = prev_coeffs[parent];
        c.array() *= bank.high_passes[gamma].table().array().cast<Complex>();
        u = modulus(inverse_fourier(m, c));
      }
      const std::size_t idx = level_begin + q;
      coeffs[q] = fourier(m, u);
      const double total = std::pow(norm(m, u), 2);
      const double kept = coeffs[q].squaredNorm();
      out.propagated_norm_sq[idx] = total;
      out.discarded_fraction[idx] = total > 0.0 ? std::max(0.0, total - kept) / total : 0.0;
      CVec s = coeffs[q];
      s.array() *= g.array();
      out.entries[idx] = inverse_fourier(m, s);
      out.entry_norm_sq[idx] = std::pow(norm(m, out.entries[idx]), 2);
      if (keep_propagated) out.propagated[idx] = u;
      level[q] = std::move(u);
    }
    level_begin += level_size;
    prev_level = std::move(level);
    prev_coeffs = std::move(coeffs);
  }
  return out;
}

/// ‖S1 − S2‖_{2,2}.
inline double scattering_distance(const SpectralManifold& m, const ScatteringCoefficients& a,
                                  const ScatteringCoefficients& b) {
  if (a.bank_id != b.bank_id || a.manifold_id != b.manifold_id || a.max_order != b.max_order ||
      a.paths.size() != b.paths.size())
    throw MismatchError("scattering coefficients have different structure");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = norm(m, a.entries[i] - b.entries[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

/// Per-path summary CSV: path, order, ‖S_γ f‖, ‖U_γ f‖, discarded fraction.
inline CsvTable scattering_summary_csv(const ScatteringCoefficients& s) {
  CsvTable t({"path", "order", "s_norm", "u_norm", "discarded_fraction"});
  for (std::size_t i = 0; i < s.size(); ++i)
    t.add_row({s.paths[i].str(), std::to_string(s.paths[i].order()), format_real(std::sqrt(s.entry_norm_sq[i])),
               format_real(std::sqrt(s.propagated_norm_sq[i])), format_real(s.discarded_fraction[i])});
  return t;
}

/// Per-point values CSV: path, point, real, imag.
inline CsvTable scattering_values_csv(const ScatteringCoefficients& s) {
  CsvTable t({"path", "point", "re", "im"});
  for (std::size_t i = 0; i < s.size(); ++i)
    for (Eigen::Index p = 0; p < s.entries[i].size(); ++p)
      t.add_row({s.paths[i].str(), std::to_string(p), format_real(s.entries[i].values[p].real()),
                 format_real(s.entries[i].values[p].imag())});
  return t;
}

inline nlohmann::json scattering_manifest(const SpectralManifold& m, const FilterBank& bank,
                                          const ScatteringCoefficients& s) {
  return {{"manifold", m.params()},
          {"manifold_id", m.id()},
          {"bank", describe_bank(m, bank)},
          {"bank_id", bank.id},
          {"max_order", s.max_order},
          {"n_paths", s.size()},
          {"s_norm", s.norm()},
          {"u_norm", s.propagated_norm()},
          {"energy_by_order", s.energy_by_order()},
          {"max_discarded_fraction", s.max_discarded_fraction()}};
}

}  // namespace gscat
