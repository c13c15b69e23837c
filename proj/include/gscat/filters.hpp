#pragma once

// Filter banks {g, h_γ}: filter-axiom checks, Littlewood–Paley frame bounds,
// and the multiplicity-normalized geometric wavelet bank
//   A_J = T_{g̃_J},  W_j = T_{h̃_j},  h(λ) = [g(λ/2)² − g(λ)²]^{1/2},
//   η_j(λ) = η(2^j λ),  η̃(λ) = η(λ)/√m(λ).

#include "gscat/spectral_ops.hpp"

namespace gscat {

struct FilterDiagnostics {
  bool ok = true;
  std::vector<std::string> violations;

  void fail(std::string what) {
    ok = false;
    violations.push_back(std::move(what));
  }
};

/// Low-pass axioms on a probe grid: |g(λ)| ≤ g(0) = 1 and g(λ_max) ≤ decay_tol.
inline FilterDiagnostics validate_low_pass(const std::function<double(double)>& g, const std::vector<double>& probe_grid,
                                           double decay_tol = 1e-3) {
  FilterDiagnostics d;
  const double g0 = g(0.0);
  if (std::abs(g0 - 1.0) > 1e-12) d.fail("g(0) = " + format_real(g0) + " != 1");
  double lmax = 0.0;
  for (double l : probe_grid) {
    const double v = g(l);
    if (!std::isfinite(v) || std::abs(v) > 1.0 + 1e-12) {
      d.fail("|g(" + format_real(l) + ")| = " + format_real(std::abs(v)) + " > 1");
      break;
    }
    lmax = std::max(lmax, l);
  }
  if (!probe_grid.empty() && std::abs(g(lmax)) > decay_tol)
    d.fail("g does not decay: |g(" + format_real(lmax) + ")| = " + format_real(std::abs(g(lmax))));
  return d;
}

/// High-pass axioms on a probe grid: h(0) = 0 and ‖h‖_∞ ≤ 1.
inline FilterDiagnostics validate_high_pass(const std::function<double(double)>& h, const std::vector<double>& probe_grid) {
  FilterDiagnostics d;
  if (std::abs(h(0.0)) > 1e-12) d.fail("h(0) = " + format_real(h(0.0)) + " != 0");
  for (double l : probe_grid) {
    const double v = h(l);
    if (!std::isfinite(v) || std::abs(v) > 1.0 + 1e-12) {
      d.fail("|h(" + format_real(l) + ")| = " + format_real(std::abs(v)) + " > 1");
      break;
    }
  }
  return d;
}

/// Uniform probe grid on [0, lambda_max].
inline std::vector<double> probe_grid(double lambda_max, int n = 1001) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = lambda_max * i / (n - 1);
  return out;
}

struct FrameBounds {
  double A = 0.0;
  double B = 0.0;
};

struct BankParams {
  std::optional<int> J;
  std::optional<int> j_min;
  nlohmann::json generator = nullptr;
  bool normalized = true;
};

/// One low-pass and a finite ordered list of high-pass spectral functions on
/// one manifold's spectrum, with Littlewood–Paley frame bounds.
struct FilterBank {
  SpectralFunction low_pass;
  std::vector<SpectralFunction> high_passes;
  FrameBounds frame_bounds;     // Littlewood–Paley bounds, m(λ)-weighted
  FrameBounds operator_bounds;  // sharp constants of A‖f‖² ≤ ‖Φf‖² ≤ B‖f‖²
  BankParams params;
  std::uint64_t manifold_id = 0;
  std::uint64_t id = 0;

  std::size_t n_high() const { return high_passes.size(); }
};

/// Per-eigenspace filter energy g(λ)² + Σ_γ h_γ(λ)². Since
/// ‖Φf‖² = Σ_λ [g(λ)² + Σ_γ h_γ(λ)²] ‖π_λ f‖², its extremes over Λ are the
/// sharp frame constants.
inline std::vector<double> operator_frame_profile(const FilterBank& bank, const UniqueSpectrum& spectrum) {
  std::vector<double> out(spectrum.size());
  for (std::size_t g = 0; g < spectrum.size(); ++g) {
    const int k = spectrum.ranges[g].first;
    double s = bank.low_pass[k] * bank.low_pass[k];
    for (const auto& h : bank.high_passes) s += h[k] * h[k];
    out[g] = s;
  }
  return out;
}

/// Per-eigenspace Littlewood–Paley sums m(λ)[g(λ)² + Σ_γ h_γ(λ)²].
inline std::vector<double> littlewood_paley_profile(const FilterBank& bank, const UniqueSpectrum& spectrum) {
  auto out = operator_frame_profile(bank, spectrum);
  for (std::size_t g = 0; g < out.size(); ++g) out[g] *= spectrum.multiplicities[g];
  return out;
}

namespace detail {
inline FrameBounds min_max(const std::vector<double>& p) {
  if (p.empty()) return {};
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  return {*lo, *hi};
}
}  // namespace detail

/// (A, B) = (min, max) over Λ of the Littlewood–Paley sums.
inline FrameBounds littlewood_paley(const FilterBank& bank, const UniqueSpectrum& spectrum) {
  return detail::min_max(littlewood_paley_profile(bank, spectrum));
}

/// (A, B) = (min, max) over Λ of g(λ)² + Σ_γ h_γ(λ)².
inline FrameBounds operator_frame_bounds(const FilterBank& bank, const UniqueSpectrum& spectrum) {
  return detail::min_max(operator_frame_profile(bank, spectrum));
}

inline std::uint64_t bank_fingerprint(const FilterBank& b) {
  Fnv1a h;
  h.update(b.low_pass.table());
  for (const auto& f : b.high_passes) h.update(f.table());
  h.update(&b.manifold_id, sizeof(b.manifold_id));
  return h.digest();
}

/// Assemble a bank from explicit filters and compute its frame bounds.
inline FilterBank make_filter_bank(const SpectralManifold& m, SpectralFunction low, std::vector<SpectralFunction> highs,
                                   BankParams params = {}) {
  require_on(m, low);
  for (const auto& h : highs) require_on(m, h);
  FilterBank b{std::move(low), std::move(highs), {}, {}, std::move(params), m.id(), 0};
  b.frame_bounds = littlewood_paley(b, m.spectrum());
  b.operator_bounds = operator_frame_bounds(b, m.spectrum());
  b.id = bank_fingerprint(b);
  return b;
}

/// 1 − g(2^{j_min−1} λ)²: the deficit of the bank truncated at j_min from the
/// exact telescoping sum at λ.
inline double telescope_residual(const std::function<double(double)>& g, int j_min, double lambda) {
  const double v = g(std::ldexp(lambda, j_min - 1));
  return 1.0 - v * v;
}

/// Largest j_min ≤ J such that telescope_residual(g, j_min, λ_max) ≤ tol.
inline int default_j_min(const std::function<double(double)>& g, int J, double lambda_max, double tol = 1e-6) {
  for (int j = J; j > -1100; --j)
    if (telescope_residual(g, j, lambda_max) <= tol) return j;
  throw ConfigError("default_j_min: residual tolerance unreachable");
}

/// h(λ) = [g(λ/2)² − g(λ)²]^{1/2}. Negative discriminants are clamped only
/// at rounding level; make_wavelet_bank rejects generators that increase.
inline ClosedForm wavelet_high_pass(const ClosedForm& g) {
  ClosedForm h;
  h.tag = "wavelet";
  h.params = {{"generator", g.describe()}};
  h.eval = [f = g.eval](double l) {
    const double a = f(0.5 * l), b = f(l);
    return std::sqrt(std::max(0.0, a * a - b * b));
  };
  return h;
}

/// Geometric wavelet bank {g̃_J, h̃_j : j_min ≤ j ≤ J}. With `normalize`
/// false the 1/√m(λ) factor is omitted (used to show it is required).
inline FilterBank make_wavelet_bank(const SpectralManifold& m, const ClosedForm& g, int J, int j_min,
                                    bool normalize = true) {
  if (j_min > J) throw ConfigError("make_wavelet_bank: need j_min <= J");
  const auto& spec = m.spectrum();
  for (int j = j_min; j <= J; ++j)
    for (double l : spec.uniques) {
      const double a = g(std::ldexp(l, j - 1)), b = g(std::ldexp(l, j));
      if (a * a - b * b < -1e-14)
        throw ConfigError("make_wavelet_bank: generator '" + g.tag + "' increases at λ = " + format_real(l) +
                          " (negative discriminant)");
    }
  const ClosedForm h = wavelet_high_pass(g);
  std::vector<SpectralFunction> highs;
  highs.reserve(static_cast<std::size_t>(J - j_min + 1));
  for (int j = j_min; j <= J; ++j) highs.push_back(SpectralFunction::from_closed_form(m, h.dilated(j), normalize));
  auto low = SpectralFunction::from_closed_form(m, g.dilated(J), normalize);
  return make_filter_bank(m, std::move(low), std::move(highs), {J, j_min, g.describe(), normalize});
}

struct FrameCoefficients {
  Signal low;
  std::vector<Signal> high;
  double norm_sq = 0.0;
};

/// Φf = {T_g f, T_{h_γ} f}.
inline FrameCoefficients frame_apply(const SpectralManifold& m, const FilterBank& bank, const Signal& f) {
  if (bank.manifold_id != m.id()) throw MismatchError("bank is bound to a different manifold");
  FrameCoefficients out;
  out.low = apply_operator(m, bank.low_pass, f);
  double s = norm(m, out.low);
  s *= s;
  for (const auto& h : bank.high_passes) {
    out.high.push_back(apply_operator(m, h, f));
    const double n = norm(m, out.high.back());
    s += n * n;
  }
  out.norm_sq = s;
  return out;
}

/// JSON descriptor: generator, scales, frame bounds and per-eigenspace tables.
inline nlohmann::json describe_bank(const SpectralManifold& m, const FilterBank& bank) {
  const auto& s = m.spectrum();
  nlohmann::json j = {{"generator", bank.params.generator},
                      {"normalized", bank.params.normalized},
                      {"A", bank.frame_bounds.A},
                      {"B", bank.frame_bounds.B},
                      {"operator_A", bank.operator_bounds.A},
                      {"operator_B", bank.operator_bounds.B},
                      {"n_high", bank.n_high()},
                      {"uniques", s.uniques},
                      {"multiplicities", s.multiplicities}};
  j["J"] = bank.params.J ? nlohmann::json(*bank.params.J) : nlohmann::json(nullptr);
  j["j_min"] = bank.params.j_min ? nlohmann::json(*bank.params.j_min) : nlohmann::json(nullptr);
  auto per_unique = [&](const SpectralFunction& f) {
    std::vector<double> v;
    for (const auto& r : s.ranges) v.push_back(f[r.first]);
    return v;
  };
  j["low_pass"] = per_unique(bank.low_pass);
  j["high_passes"] = nlohmann::json::array();
  for (const auto& h : bank.high_passes) j["high_passes"].push_back(per_unique(h));
  return j;
}

/// Named low-pass generators: "heat" (e^{-λ}) and "gaussian" (e^{-λ²}).
inline ClosedForm generator_by_name(const std::string& name) {
  if (name == "heat" || name == "exp") return spectral::heat(1.0);
  if (name == "gaussian") return spectral::gaussian(1.0);
  throw ConfigError("unknown low-pass generator '" + name + "'");
}

}  // namespace gscat
