#pragma once

// Spectral representations of compact manifolds without boundary.
//
// A SpectralManifold stores N sample points with quadrature weights and the
// first K eigenpairs of -Δ sampled at those points, grouped into eigenspaces.
// Analytic manifolds (circle, flat torus, sphere) use closed-form bases and
// quadratures that are exact for products of retained eigenfunctions, so the
// discrete inner product reproduces the L² pairing on the band exactly.

#include "gscat/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gscat {

enum class ManifoldKind { circle, torus, sphere, mesh };

inline std::string to_string(ManifoldKind k) {
  switch (k) {
    case ManifoldKind::circle: return "circle";
    case ManifoldKind::torus: return "torus";
    case ManifoldKind::sphere: return "sphere";
    case ManifoldKind::mesh: return "mesh";
  }
  return "?";
}

inline ManifoldKind kind_from_string(const std::string& s) {
  if (s == "circle") return ManifoldKind::circle;
  if (s == "torus") return ManifoldKind::torus;
  if (s == "sphere") return ManifoldKind::sphere;
  if (s == "mesh") return ManifoldKind::mesh;
  throw ConfigError("unknown manifold kind '" + s + "'");
}

/// Distinct eigenvalues with multiplicities and their index ranges [begin, end).
struct UniqueSpectrum {
  std::vector<double> uniques;
  std::vector<int> multiplicities;
  std::vector<std::pair<int, int>> ranges;
  double cluster_tol = 0.0;

  std::size_t size() const { return uniques.size(); }

  int total() const { return std::accumulate(multiplicities.begin(), multiplicities.end(), 0); }

  /// Group index of eigen-index k.
  std::size_t group_of(int k) const {
    auto it = std::upper_bound(ranges.begin(), ranges.end(), k,
                               [](int v, const std::pair<int, int>& r) { return v < r.second; });
    if (it == ranges.end() || k < it->first) throw DomainError("eigen-index out of range");
    return static_cast<std::size_t>(it - ranges.begin());
  }

  /// Group whose representative matches `lambda` at the clustering tolerance.
  std::optional<std::size_t> find(double lambda) const {
    const double tol = std::max(cluster_tol, 1e-12);
    for (std::size_t g = 0; g < uniques.size(); ++g)
      if (std::abs(uniques[g] - lambda) <= tol * std::max(1.0, std::abs(lambda))) return g;
    return std::nullopt;
  }
};

/// Greedy clustering of an ascending eigenvalue list. A new group starts
/// whenever the gap to the previous value exceeds cluster_tol·max(1, λ).
/// Each group is represented by the mean of its members.
inline UniqueSpectrum group_spectrum(const std::vector<double>& eigenvalues, double cluster_tol) {
  for (std::size_t k = 1; k < eigenvalues.size(); ++k)
    if (eigenvalues[k] < eigenvalues[k - 1])
      throw ConfigError("group_spectrum: eigenvalues must be ascending");
  UniqueSpectrum s;
  s.cluster_tol = cluster_tol;
  const int K = static_cast<int>(eigenvalues.size());
  int begin = 0;
  for (int k = 1; k <= K; ++k) {
    const bool split =
        k == K || eigenvalues[k] - eigenvalues[k - 1] >
                      cluster_tol * std::max(1.0, std::abs(eigenvalues[k - 1]));
    if (!split) continue;
    double sum = 0.0;
    for (int i = begin; i < k; ++i) sum += eigenvalues[i];
    s.uniques.push_back(sum / (k - begin));
    s.multiplicities.push_back(k - begin);
    s.ranges.emplace_back(begin, k);
    begin = k;
  }
  return s;
}

inline UniqueSpectrum group_spectrum(const Vec& eigenvalues, double cluster_tol) {
  return group_spectrum(std::vector<double>(eigenvalues.data(), eigenvalues.data() + eigenvalues.size()),
                        cluster_tol);
}

/// Triangle-mesh geometry carried by mesh-backed manifolds.
struct MeshGeometry {
  Mat vertices;                                  // N × 3
  Eigen::Matrix<int, Eigen::Dynamic, 3> faces;   // F × 3
  Mat graph_distance;                            // N × N edge-graph shortest paths
};

/// Raw parts used to assemble a SpectralManifold.
struct ManifoldParts {
  ManifoldKind kind = ManifoldKind::circle;
  int dim = 1;
  Mat points;
  Vec weights;
  Vec eigenvalues;
  Mat eigenfunctions;
  double cluster_tol = 1e-9;
  nlohmann::json params = nlohmann::json::object();
  std::vector<std::pair<int, int>> neighbors;
  std::optional<MeshGeometry> mesh;
};

namespace detail {

// Real 1-D Fourier basis on a circle of radius R, index 0 is the constant,
// then cos/sin pairs for frequency 1, 2, ...
inline double fourier1d(int index, double u, double R) {
  if (index == 0) return 1.0 / std::sqrt(2.0 * kPi * R);
  const int k = (index + 1) / 2;
  const double a = k * u / R;
  const double c = 1.0 / std::sqrt(kPi * R);
  return (index % 2 == 1) ? c * std::cos(a) : c * std::sin(a);
}

inline int fourier1d_freq(int index) { return (index + 1) / 2; }

struct TorusMode {
  int a1;
  int a2;
  double lambda;
};

// All product modes with λ strictly below the first eigenvalue that would need
// a frequency beyond k_max in some factor, so every retained eigenspace is complete.
inline std::vector<TorusMode> torus_modes(double R1, double R2, int k_max) {
  const double cut = std::min(std::pow((k_max + 1) / R1, 2), std::pow((k_max + 1) / R2, 2));
  std::vector<TorusMode> modes;
  for (int a1 = 0; a1 <= 2 * k_max; ++a1)
    for (int a2 = 0; a2 <= 2 * k_max; ++a2) {
      const double k1 = fourier1d_freq(a1), k2 = fourier1d_freq(a2);
      const double lam = (k1 / R1) * (k1 / R1) + (k2 / R2) * (k2 / R2);
      if (lam < cut * (1.0 - 1e-12)) modes.push_back({a1, a2, lam});
    }
  std::stable_sort(modes.begin(), modes.end(),
                   [](const TorusMode& x, const TorusMode& y) { return x.lambda < y.lambda; });
  return modes;
}

// Orthonormal real spherical harmonics up to degree l_max at unit vector p,
// ordered by l then m = -l..l.
inline Vec real_spherical_harmonics(int l_max, const Eigen::Vector3d& p) {
  const double z = std::clamp(p.z(), -1.0, 1.0);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = std::atan2(p.y(), p.x());
  const int L = l_max;
  // q(l, m) = sqrt((2l+1)/(4π) (l-m)!/(l+m)!) P_l^m(z)
  Mat q = Mat::Zero(L + 1, L + 1);
  q(0, 0) = std::sqrt(1.0 / (4.0 * kPi));
  for (int m = 1; m <= L; ++m) q(m, m) = std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * q(m - 1, m - 1);
  for (int m = 0; m < L; ++m) q(m + 1, m) = std::sqrt(2.0 * m + 3.0) * z * q(m, m);
  for (int m = 0; m <= L; ++m)
    for (int l = m + 2; l <= L; ++l) {
      const double a = std::sqrt((4.0 * l * l - 1.0) / (double(l) * l - double(m) * m));
      const double b = std::sqrt((double(l - 1) * (l - 1) - double(m) * m) / (4.0 * (l - 1) * (l - 1) - 1.0));
      q(l, m) = a * (z * q(l - 1, m) - b * q(l - 2, m));
    }
  Vec out((L + 1) * (L + 1));
  int idx = 0;
  for (int l = 0; l <= L; ++l)
    for (int m = -l; m <= l; ++m) {
      if (m == 0) out[idx++] = q(l, 0);
      else if (m > 0) out[idx++] = std::sqrt(2.0) * q(l, m) * std::cos(m * phi);
      else out[idx++] = std::sqrt(2.0) * q(l, -m) * std::sin(-m * phi);
    }
  return out;
}

inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a;
}

inline double periodic_gap(double a, double b, double period) {
  double d = std::fmod(std::abs(a - b), period);
  return std::min(d, period - d);
}

}  // namespace detail

/// Gauss–Legendre nodes and weights on [-1, 1], nodes descending.
inline std::pair<Vec, Vec> gauss_legendre(int n) {
  Vec x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;  // P_{n-1}, P_n after the loop
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

/// Immutable discretized manifold. See ManifoldParts for the raw layout.
class SpectralManifold {
 public:
  explicit SpectralManifold(ManifoldParts parts) : p_(std::move(parts)) {
    const auto N = p_.points.rows();
    if (p_.weights.size() != N || p_.eigenfunctions.cols() != N ||
        p_.eigenfunctions.rows() != p_.eigenvalues.size())
      throw ConfigError("inconsistent manifold parts");
    if ((p_.weights.array() <= 0.0).any()) throw ConfigError("quadrature weights must be positive");
    spectrum_ = group_spectrum(p_.eigenvalues, p_.cluster_tol);
    Fnv1a h;
    h.update(to_string(p_.kind));
    h.update(p_.points);
    h.update(p_.weights);
    h.update(p_.eigenvalues);
    h.update(p_.eigenfunctions);
    for (const auto& [a, b] : p_.neighbors) {
      const std::int32_t e[2] = {a, b};
      h.update(e, sizeof(e));
    }
    if (p_.mesh) h.update(p_.mesh->faces);
    id_ = h.digest();
  }

  ManifoldKind kind() const { return p_.kind; }
  int dim() const { return p_.dim; }
  Eigen::Index size() const { return p_.points.rows(); }
  Eigen::Index bands() const { return p_.eigenvalues.size(); }
  const Mat& points() const { return p_.points; }
  const Vec& weights() const { return p_.weights; }
  const Vec& eigenvalues() const { return p_.eigenvalues; }
  /// K × N; row k is φ_k at the sample points.
  const Mat& eigenfunctions() const { return p_.eigenfunctions; }
  const UniqueSpectrum& spectrum() const { return spectrum_; }
  double cluster_tol() const { return p_.cluster_tol; }
  const nlohmann::json& params() const { return p_.params; }
  const std::vector<std::pair<int, int>>& neighbors() const { return p_.neighbors; }
  const std::optional<MeshGeometry>& mesh() const { return p_.mesh; }
  const ManifoldParts& parts() const { return p_; }
  std::uint64_t id() const { return id_; }

  bool is_analytic() const { return p_.kind != ManifoldKind::mesh; }

  double volume() const {
    switch (p_.kind) {
      case ManifoldKind::circle: return 2.0 * kPi;
      case ManifoldKind::torus:
        return 4.0 * kPi * kPi * p_.params.at("R1").get<double>() * p_.params.at("R2").get<double>();
      case ManifoldKind::sphere: return 4.0 * kPi;
      case ManifoldKind::mesh: return p_.weights.sum();
    }
    return 0.0;
  }

  /// Geodesic distance between two coordinate rows (analytic kinds).
  double distance(const Vec& a, const Vec& b) const {
    switch (p_.kind) {
      case ManifoldKind::circle: return detail::periodic_gap(a[0], b[0], 2.0 * kPi);
      case ManifoldKind::torus: {
        const double R1 = p_.params.at("R1").get<double>(), R2 = p_.params.at("R2").get<double>();
        const double d1 = detail::periodic_gap(a[0], b[0], 2.0 * kPi * R1);
        const double d2 = detail::periodic_gap(a[1], b[1], 2.0 * kPi * R2);
        return std::hypot(d1, d2);
      }
      case ManifoldKind::sphere: {
        const Eigen::Vector3d u = a.head<3>(), v = b.head<3>();
        return std::atan2(u.cross(v).norm(), u.dot(v));
      }
      case ManifoldKind::mesh:
        throw NotComputable("mesh distances are only defined between sample vertices");
    }
    return 0.0;
  }

  /// Geodesic distance between sample points i and j. On meshes this is the
  /// edge-graph shortest path, an upper-biased approximation of the geodesic.
  double distance(Eigen::Index i, Eigen::Index j) const {
    if (p_.kind == ManifoldKind::mesh) return p_.mesh->graph_distance(i, j);
    return distance(Vec(p_.points.row(i).transpose()), Vec(p_.points.row(j).transpose()));
  }

  /// Values of all K retained eigenfunctions at an arbitrary coordinate row.
  Vec basis_at(const Vec& x) const {
    const int K = static_cast<int>(bands());
    Vec out(K);
    switch (p_.kind) {
      case ManifoldKind::circle:
        for (int k = 0; k < K; ++k) out[k] = detail::fourier1d(k, x[0], 1.0);
        return out;
      case ManifoldKind::torus: {
        const double R1 = p_.params.at("R1").get<double>(), R2 = p_.params.at("R2").get<double>();
        const auto modes = detail::torus_modes(R1, R2, p_.params.at("k_max").get<int>());
        for (int k = 0; k < K; ++k)
          out[k] = detail::fourier1d(modes[k].a1, x[0], R1) * detail::fourier1d(modes[k].a2, x[1], R2);
        return out;
      }
      case ManifoldKind::sphere:
        return detail::real_spherical_harmonics(p_.params.at("l_max").get<int>(),
                                                Eigen::Vector3d(x[0], x[1], x[2]).normalized())
            .head(K);
      case ManifoldKind::mesh:
        throw NotComputable("mesh eigenfunctions have no closed form; use barycentric interpolation");
    }
    return out;
  }

  Signal make_signal(CVec values) const {
    if (values.size() != size()) throw MismatchError("signal length does not match manifold");
    return {std::move(values), id_};
  }
  Signal make_signal(const Vec& values) const { return make_signal(CVec(values.cast<Complex>())); }
  Signal zero_signal() const { return {CVec::Zero(size()), id_}; }
  Signal eigenfunction(Eigen::Index k) const {
    return make_signal(Vec(p_.eigenfunctions.row(k).transpose()));
  }

 private:
  ManifoldParts p_;
  UniqueSpectrum spectrum_;
  std::uint64_t id_ = 0;
};

inline void require_on(const SpectralManifold& m, const Signal& f) {
  if (f.manifold_id != m.id() || f.size() != m.size())
    throw MismatchError("signal is not defined on this manifold");
}

// ---------------------------------------------------------------------------
// Builders

inline SpectralManifold build_circle(int n_points, int max_freq) {
  if (max_freq < 0 || n_points < 2 * max_freq + 2)
    throw ConfigError("build_circle: need n_points >= 2*max_freq + 2 (aliasing)");
  const int K = 2 * max_freq + 1;
  ManifoldParts p;
  p.kind = ManifoldKind::circle;
  p.dim = 1;
  p.points.resize(n_points, 1);
  p.weights = Vec::Constant(n_points, 2.0 * kPi / n_points);
  p.eigenvalues.resize(K);
  p.eigenfunctions.resize(K, n_points);
  for (int k = 0; k < K; ++k) {
    const int f = detail::fourier1d_freq(k);
    p.eigenvalues[k] = double(f) * f;
  }
  for (int i = 0; i < n_points; ++i) {
    const double th = 2.0 * kPi * i / n_points;
    p.points(i, 0) = th;
    for (int k = 0; k < K; ++k) p.eigenfunctions(k, i) = detail::fourier1d(k, th, 1.0);
  }
  for (int i = 0; i < n_points; ++i) p.neighbors.emplace_back(i, (i + 1) % n_points);
  p.cluster_tol = 1e-9;
  p.params = {{"kind", "circle"}, {"n_points", n_points}, {"max_freq", max_freq}};
  return SpectralManifold(std::move(p));
}

struct SphereGrid {
  int n_lat = 0;  // Gauss–Legendre nodes in cos(colatitude)
  int n_lon = 0;  // uniform longitudes

  /// Smallest grid that integrates products of degree-l_max harmonics exactly.
  static SphereGrid minimal(int l_max) { return {l_max + 1, 2 * l_max + 2}; }
};

inline SpectralManifold build_sphere(int l_max, SphereGrid grid) {
  if (l_max < 0) throw ConfigError("build_sphere: l_max must be >= 0");
  if (grid.n_lat < l_max + 1 || grid.n_lon < 2 * l_max + 1)
    throw ConfigError("build_sphere: grid does not integrate degree 2*l_max exactly "
                      "(need n_lat >= l_max+1, n_lon >= 2*l_max+1)");
  const auto [z, gw] = gauss_legendre(grid.n_lat);
  const int N = grid.n_lat * grid.n_lon;
  const int K = (l_max + 1) * (l_max + 1);
  ManifoldParts p;
  p.kind = ManifoldKind::sphere;
  p.dim = 2;
  p.points.resize(N, 3);
  p.weights.resize(N);
  p.eigenvalues.resize(K);
  p.eigenfunctions.resize(K, N);
  for (int l = 0, k = 0; l <= l_max; ++l)
    for (int m = -l; m <= l; ++m) p.eigenvalues[k++] = double(l) * (l + 1);
  for (int a = 0; a < grid.n_lat; ++a) {
    const double s = std::sqrt(std::max(0.0, 1.0 - z[a] * z[a]));
    for (int b = 0; b < grid.n_lon; ++b) {
      const int i = a * grid.n_lon + b;
      const double phi = 2.0 * kPi * b / grid.n_lon;
      p.points.row(i) << s * std::cos(phi), s * std::sin(phi), z[a];
      p.weights[i] = gw[a] * 2.0 * kPi / grid.n_lon;
      p.eigenfunctions.col(i) = detail::real_spherical_harmonics(l_max, p.points.row(i).transpose());
      p.neighbors.emplace_back(i, a * grid.n_lon + (b + 1) % grid.n_lon);
      if (a + 1 < grid.n_lat) p.neighbors.emplace_back(i, (a + 1) * grid.n_lon + b);
    }
  }
  p.cluster_tol = 1e-9;
  p.params = {{"kind", "sphere"}, {"l_max", l_max}, {"n_lat", grid.n_lat}, {"n_lon", grid.n_lon}};
  return SpectralManifold(std::move(p));
}

inline SpectralManifold build_sphere(int l_max) { return build_sphere(l_max, SphereGrid::minimal(l_max)); }

/// Flat torus [0, 2πR1) × [0, 2πR2) sampled on an n1 × n2 grid. Points are
/// stored as arc-length coordinates (u1, u2).
inline SpectralManifold build_flat_torus(int n1, int n2, double R1, double R2, int k_max) {
  if (R1 <= 0 || R2 <= 0) throw ConfigError("build_flat_torus: radii must be positive");
  if (k_max < 0 || n1 < 2 * k_max + 2 || n2 < 2 * k_max + 2)
    throw ConfigError("build_flat_torus: need n1, n2 >= 2*k_max + 2 (aliasing)");
  const auto modes = detail::torus_modes(R1, R2, k_max);
  const int N = n1 * n2;
  const int K = static_cast<int>(modes.size());
  ManifoldParts p;
  p.kind = ManifoldKind::torus;
  p.dim = 2;
  p.points.resize(N, 2);
  p.weights = Vec::Constant(N, 4.0 * kPi * kPi * R1 * R2 / N);
  p.eigenvalues.resize(K);
  p.eigenfunctions.resize(K, N);
  for (int k = 0; k < K; ++k) p.eigenvalues[k] = modes[k].lambda;
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < n2; ++b) {
      const int i = a * n2 + b;
      const double u1 = 2.0 * kPi * R1 * a / n1, u2 = 2.0 * kPi * R2 * b / n2;
      p.points.row(i) << u1, u2;
      for (int k = 0; k < K; ++k)
        p.eigenfunctions(k, i) = detail::fourier1d(modes[k].a1, u1, R1) * detail::fourier1d(modes[k].a2, u2, R2);
      p.neighbors.emplace_back(i, ((a + 1) % n1) * n2 + b);
      p.neighbors.emplace_back(i, a * n2 + (b + 1) % n2);
    }
  p.cluster_tol = 1e-9;
  p.params = {{"kind", "torus"}, {"n1", n1}, {"n2", n2}, {"R1", R1}, {"R2", R2}, {"k_max", k_max}};
  return SpectralManifold(std::move(p));
}

// ---------------------------------------------------------------------------
// L² machinery on the retained band

/// Quadrature inner product Σ_i w_i f_i conj(g_i).
inline Complex inner_product(const SpectralManifold& m, const Signal& f, const Signal& g) {
  require_on(m, f);
  require_on(m, g);
  Complex s = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) s += m.weights()[i] * f.values[i] * std::conj(g.values[i]);
  return s;
}

inline double norm(const SpectralManifold& m, const Signal& f) {
  require_on(m, f);
  return std::sqrt((m.weights().array() * f.values.array().abs2()).sum());
}

/// f̂(k) = ⟨f, φ_k⟩ for the K retained eigenfunctions.
inline CVec fourier(const SpectralManifold& m, const Signal& f) {
  require_on(m, f);
  const CVec wf = (m.weights().array().cast<Complex>() * f.values.array()).matrix();
  return m.eigenfunctions().cast<Complex>() * wf;
}

/// Synthesis Σ_k c_k φ_k; c may be shorter than K (missing modes are zero).
inline Signal inverse_fourier(const SpectralManifold& m, const CVec& coeffs) {
  if (coeffs.size() > m.bands()) throw MismatchError("more coefficients than retained eigenpairs");
  const Eigen::Index n = coeffs.size();
  CVec v = m.eigenfunctions().topRows(n).transpose().cast<Complex>() * coeffs;
  return m.make_signal(std::move(v));
}

/// π_λ f, the projection onto the eigenspace E_λ.
inline Signal project_eigenspace(const SpectralManifold& m, const Signal& f, double lambda) {
  const auto g = m.spectrum().find(lambda);
  if (!g) throw DomainError("eigenvalue " + std::to_string(lambda) + " is not in the retained spectrum");
  const auto [b, e] = m.spectrum().ranges[*g];
  const CVec c = fourier(m, f);
  CVec masked = CVec::Zero(m.bands());
  masked.segment(b, e - b) = c.segment(b, e - b);
  return inverse_fourier(m, masked);
}

/// max_{j,k} |⟨φ_j, φ_k⟩ − δ_jk| under the manifold's quadrature.
inline double orthonormality_residual(const SpectralManifold& m) {
  const Mat& P = m.eigenfunctions();
  const Mat G = P * m.weights().asDiagonal() * P.transpose();
  return (G - Mat::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

/// Bandlimited signal with i.i.d. standard normal Fourier coefficients on the
/// first `n_modes` eigenfunctions (all K when n_modes < 0).
inline Signal random_bandlimited(const SpectralManifold& m, std::mt19937_64& rng, bool complex_valued = false,
                                 Eigen::Index n_modes = -1) {
  std::normal_distribution<double> nd;
  const Eigen::Index n = n_modes < 0 ? m.bands() : std::min(n_modes, m.bands());
  CVec c(n);
  for (Eigen::Index k = 0; k < n; ++k) c[k] = complex_valued ? Complex(nd(rng), nd(rng)) : Complex(nd(rng), 0.0);
  return inverse_fourier(m, c);
}

}  // namespace gscat
