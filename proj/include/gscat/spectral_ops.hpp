#pragma once

// Spectral integral operators T_η f = Σ_k η(λ_k) f̂(k) φ_k, their kernels
// K_η(x, y) = Σ_k η(λ_k) φ_k(x) φ_k(y), and kernel-level diagnostics.

#include "gscat/io.hpp"
#include "gscat/manifold.hpp"

#include <functional>
#include <random>

namespace gscat {

/// A tagged closed-form spectral function λ ↦ η(λ) on [0, ∞).
struct ClosedForm {
  std::string tag;
  nlohmann::json params = nlohmann::json::object();
  std::function<double(double)> eval;

  double operator()(double lambda) const { return eval(lambda); }

  /// η_j(λ) = η(2^j λ).
  ClosedForm dilated(int j) const {
    ClosedForm out = *this;
    const double s = std::ldexp(1.0, j);
    out.eval = [f = eval, s](double l) { return f(s * l); };
    out.params["dilation"] = params.value("dilation", 0) + j;
    return out;
  }

  nlohmann::json describe() const { return {{"tag", tag}, {"params", params}}; }
};

namespace spectral {

/// e^{-tλ}
inline ClosedForm heat(double t) {
  return {"heat", {{"t", t}}, [t](double l) { return std::exp(-t * l); }};
}

/// e^{-(sλ)²}, a Gaussian restricted to [0, ∞).
inline ClosedForm gaussian(double s = 1.0) {
  return {"gaussian", {{"s", s}}, [s](double l) { return std::exp(-(s * l) * (s * l)); }};
}

/// 1 on [lo, hi], 0 elsewhere.
inline ClosedForm indicator(double lo, double hi) {
  return {"indicator", {{"lo", lo}, {"hi", hi}}, [lo, hi](double l) { return (l >= lo && l <= hi) ? 1.0 : 0.0; }};
}

inline ClosedForm constant(double c) {
  return {"constant", {{"c", c}}, [c](double) { return c; }};
}

inline ClosedForm custom(std::string name, std::function<double(double)> fn) {
  return {"custom", {{"name", std::move(name)}}, std::move(fn)};
}

}  // namespace spectral

/// η tabulated on the retained spectrum (one value per eigen-index, constant
/// on each eigenspace) plus an optional closed form for exact dilation.
class SpectralFunction {
 public:
  /// Evaluates `cf` at each eigenspace's representative eigenvalue. With
  /// `normalize`, divides by √m(λ).
  static SpectralFunction from_closed_form(const SpectralManifold& m, ClosedForm cf, bool normalize = false) {
    const auto& s = m.spectrum();
    Vec table(m.bands());
    for (std::size_t g = 0; g < s.size(); ++g) {
      double v = cf(s.uniques[g]);
      if (normalize) v /= std::sqrt(static_cast<double>(s.multiplicities[g]));
      table.segment(s.ranges[g].first, s.ranges[g].second - s.ranges[g].first).setConstant(v);
    }
    if (!table.allFinite()) throw ConfigError("spectral function '" + cf.tag + "' is not finite on the spectrum");
    return SpectralFunction(std::move(table), m.id(), std::move(cf), normalize);
  }

  /// One value per unique eigenvalue.
  static SpectralFunction from_unique_table(const SpectralManifold& m, const std::vector<double>& per_unique) {
    const auto& s = m.spectrum();
    if (per_unique.size() != s.size()) throw MismatchError("table length does not match the unique spectrum");
    Vec table(m.bands());
    for (std::size_t g = 0; g < s.size(); ++g)
      table.segment(s.ranges[g].first, s.ranges[g].second - s.ranges[g].first).setConstant(per_unique[g]);
    return SpectralFunction(std::move(table), m.id(), std::nullopt, false);
  }

  /// One value per eigen-index. Values need not be constant on eigenspaces.
  static SpectralFunction from_table(const SpectralManifold& m, Vec per_eigen) {
    if (per_eigen.size() != m.bands()) throw MismatchError("table length does not match the retained spectrum");
    if (!per_eigen.allFinite()) throw ConfigError("spectral function table is not finite");
    return SpectralFunction(std::move(per_eigen), m.id(), std::nullopt, false);
  }

  /// Indicator of a single eigenspace; its kernel is K^(λ).
  static SpectralFunction eigenspace_indicator(const SpectralManifold& m, double lambda) {
    const auto g = m.spectrum().find(lambda);
    if (!g) throw DomainError("eigenvalue " + std::to_string(lambda) + " is not in the retained spectrum");
    const double u = m.spectrum().uniques[*g];
    const double w = std::max(m.cluster_tol(), 1e-12) * std::max(1.0, u);
    return from_closed_form(m, spectral::indicator(u - w, u + w));
  }

  double operator[](Eigen::Index k) const { return table_[k]; }
  const Vec& table() const { return table_; }
  Eigen::Index size() const { return table_.size(); }
  std::uint64_t manifold_id() const { return manifold_id_; }
  const std::optional<ClosedForm>& closed_form() const { return closed_form_; }
  bool normalized() const { return normalized_; }

  double sup_norm() const { return table_.size() ? table_.cwiseAbs().maxCoeff() : 0.0; }

  /// η_j(λ) = η(2^j λ). Only defined when a closed form is available.
  SpectralFunction dilate(const SpectralManifold& m, int j) const {
    if (!closed_form_) throw DomainError("cannot dilate a tabulated spectral function without a closed form");
    return from_closed_form(m, closed_form_->dilated(j), normalized_);
  }

  nlohmann::json describe() const {
    nlohmann::json j = {{"normalized", normalized_}, {"table", std::vector<double>(table_.data(), table_.data() + table_.size())}};
    j["closed_form"] = closed_form_ ? closed_form_->describe() : nlohmann::json(nullptr);
    return j;
  }

 private:
  SpectralFunction(Vec t, std::uint64_t id, std::optional<ClosedForm> cf, bool normalized)
      : table_(std::move(t)), manifold_id_(id), closed_form_(std::move(cf)), normalized_(normalized) {}

  Vec table_;
  std::uint64_t manifold_id_ = 0;
  std::optional<ClosedForm> closed_form_;
  bool normalized_ = false;
};

inline void require_on(const SpectralManifold& m, const SpectralFunction& eta) {
  if (eta.manifold_id() != m.id() || eta.size() != m.bands())
    throw MismatchError("spectral function is bound to a different spectrum");
}

/// T_η f = Σ_k η(λ_k) f̂(k) φ_k.
inline Signal apply_operator(const SpectralManifold& m, const SpectralFunction& eta, const Signal& f) {
  require_on(m, eta);
  CVec c = fourier(m, f);
  c.array() *= eta.table().array().cast<Complex>();
  return inverse_fourier(m, c);
}

struct KernelMatrix {
  Mat entries;  // N × N, K(x_i, x_j)
  nlohmann::json source;
  std::uint64_t manifold_id = 0;
};

inline KernelMatrix kernel_matrix(const SpectralManifold& m, const SpectralFunction& eta) {
  require_on(m, eta);
  const Mat& P = m.eigenfunctions();
  return {P.transpose() * eta.table().asDiagonal() * P, eta.describe(), m.id()};
}

inline void require_on(const SpectralManifold& m, const KernelMatrix& K) {
  if (K.manifold_id != m.id() || K.entries.rows() != m.size()) throw MismatchError("kernel is bound to a different manifold");
}

/// (T f)(x_i) = Σ_j K(x_i, x_j) f(x_j) w_j.
inline Signal apply_kernel(const SpectralManifold& m, const KernelMatrix& K, const Signal& f) {
  require_on(m, K);
  require_on(m, f);
  const CVec wf = (m.weights().array().cast<Complex>() * f.values.array()).matrix();
  return m.make_signal(CVec(K.entries.cast<Complex>() * wf));
}

/// ‖K_η‖_{L²(M×M)} = (Σ_k η(λ_k)²)^{1/2}.
inline double kernel_l2_norm(const SpectralFunction& eta) { return eta.table().norm(); }

/// Discrete estimate of ‖∇K‖_∞: max over neighboring sample pairs (x, x′)
/// and all y of |K(x, y) − K(x′, y)| / r(x, x′). A grid-dependent lower bound.
inline double kernel_gradient_sup(const SpectralManifold& m, const KernelMatrix& K) {
  require_on(m, K);
  double best = 0.0;
  for (const auto& [a, b] : m.neighbors()) {
    const double r = m.distance(a, b);
    if (r <= 0.0) continue;
    best = std::max(best, (K.entries.row(a) - K.entries.row(b)).cwiseAbs().maxCoeff() / r);
  }
  return best;
}

struct RadialBin {
  double r;       // mean distance in the bin
  double mean;    // mean kernel value
  double spread;  // max − min within the bin
  int count;
};

struct RadialCheck {
  bool is_radial = false;
  double deviation = 0.0;  // max within-bin spread
  double max_abs = 0.0;    // max |K|
  std::vector<RadialBin> profile;
};

namespace detail {

inline std::vector<RadialBin> bin_by_distance(std::vector<std::pair<double, double>> samples, double bin_width) {
  std::sort(samples.begin(), samples.end());
  std::vector<RadialBin> bins;
  std::size_t i = 0;
  while (i < samples.size()) {
    std::size_t j = i;
    double lo = samples[i].second, hi = lo, rs = 0.0, vs = 0.0;
    while (j < samples.size() && samples[j].first - samples[i].first <= bin_width) {
      lo = std::min(lo, samples[j].second);
      hi = std::max(hi, samples[j].second);
      rs += samples[j].first;
      vs += samples[j].second;
      ++j;
    }
    const int n = static_cast<int>(j - i);
    bins.push_back({rs / n, vs / n, hi - lo, n});
    i = j;
  }
  return bins;
}

}  // namespace detail

/// Bins K(x_i, x_j) by r(x_i, x_j) and reports the worst within-bin spread.
/// The kernel is radial iff spread ≤ tol · max|K|.
inline RadialCheck check_radial(const SpectralManifold& m, const KernelMatrix& K, double tol, double bin_width = 1e-9) {
  require_on(m, K);
  const auto N = m.size();
  std::vector<std::pair<double, double>> samples;
  samples.reserve(static_cast<std::size_t>(N * (N + 1) / 2));
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i; j < N; ++j) samples.emplace_back(m.distance(i, j), K.entries(i, j));
  RadialCheck out;
  out.max_abs = K.entries.cwiseAbs().maxCoeff();
  out.profile = detail::bin_by_distance(std::move(samples), bin_width);
  for (const auto& b : out.profile) out.deviation = std::max(out.deviation, b.spread);
  out.is_radial = out.deviation <= tol * out.max_abs;
  return out;
}

/// Profile of a signal's values against distance from one sample point.
inline std::vector<RadialBin> radial_profile(const SpectralManifold& m, Eigen::Index center, const Vec& values,
                                             double bin_width) {
  std::vector<std::pair<double, double>> samples;
  for (Eigen::Index i = 0; i < m.size(); ++i) samples.emplace_back(m.distance(center, i), values[i]);
  return detail::bin_by_distance(std::move(samples), bin_width);
}

struct PowerIterationResult {
  double value = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

/// Largest singular value of a linear map on ℝⁿ given A and Aᵀ, by power
/// iteration on AᵀA from a fixed pseudo-random start. Throws
/// ConvergenceError (with the iterate history) if `rel_tol` is not reached.
inline PowerIterationResult largest_singular_value(const std::function<Vec(const Vec&)>& A,
                                                   const std::function<Vec(const Vec&)>& At, Eigen::Index n,
                                                   double rel_tol = 1e-6, int max_iter = 5000) {
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> nd;
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  v.normalize();
  PowerIterationResult res;
  double prev = -1.0;
  for (int it = 1; it <= max_iter; ++it) {
    const Vec Av = A(v);
    const double sigma = Av.norm();
    res.history.push_back(sigma);
    res.iterations = it;
    if (sigma == 0.0) {
      res.value = 0.0;
      return res;
    }
    if (prev >= 0.0 && std::abs(sigma - prev) <= rel_tol * sigma) {
      res.value = sigma;
      return res;
    }
    prev = sigma;
    v = At(Av);
    const double nv = v.norm();
    if (nv == 0.0) {
      res.value = sigma;
      return res;
    }
    v /= nv;
  }
  std::string msg = "power iteration did not converge; last iterates:";
  for (std::size_t i = res.history.size() > 5 ? res.history.size() - 5 : 0; i < res.history.size(); ++i)
    msg += " " + format_real(res.history[i]);
  throw ConvergenceError(msg);
}

/// ‖T_η‖ on the retained band = max_k |η(λ_k)|.
inline double operator_norm(const SpectralFunction& eta) { return eta.sup_norm(); }

/// Operator norm of f ↦ K W f in the weighted L² metric, i.e. the largest
/// singular value of W^{1/2} K W^{1/2}, by power iteration.
inline double operator_norm(const SpectralManifold& m, const KernelMatrix& K, double rel_tol = 1e-10) {
  require_on(m, K);
  const Vec s = m.weights().cwiseSqrt();
  const Mat B = s.asDiagonal() * K.entries * s.asDiagonal();
  return largest_singular_value([&](const Vec& x) { return Vec(B * x); },
                                [&](const Vec& x) { return Vec(B.transpose() * x); }, m.size(), rel_tol, 20000)
      .value;
}

/// Writes `<prefix>.csv` (or `<prefix>.bin`, row-major little-endian f64)
/// plus a `<prefix>.json` sidecar describing η and the manifold.
inline void export_kernel(const SpectralManifold& m, const KernelMatrix& K, const std::filesystem::path& prefix,
                          bool binary = false) {
  require_on(m, K);
  const auto N = K.entries.rows();
  auto data_path = prefix;
  data_path += binary ? ".bin" : ".csv";
  if (binary) {
    std::string out;
    detail::put_rowmajor(out, K.entries);
    write_file_atomic(data_path, out);
  } else {
    std::string out;
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index j = 0; j < N; ++j) {
        if (j) out += ',';
        out += format_real(K.entries(i, j));
      }
      out += '\n';
    }
    write_file_atomic(data_path, out);
  }
  nlohmann::json side = {{"rows", N},
                         {"cols", N},
                         {"format", binary ? "f64-le-rowmajor" : "csv"},
                         {"data", data_path.filename().string()},
                         {"manifold", m.params()},
                         {"manifold_id", m.id()},
                         {"eta", K.source}};
  auto side_path = prefix;
  side_path += ".json";
  write_file_atomic(side_path, side.dump(2) + "\n");
}

}  // namespace gscat
