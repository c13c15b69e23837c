#pragma once

// Diffeomorphisms ζ acting on signals by V_ζ f(x) = f(ζ⁻¹(x)), and the
// quantities measuring how far ζ is from an isometry:
//   ‖ζ‖_∞ = sup_x r(x, ζ(x))
//   A1 = sup_{x≠y} |r(ζx, ζy) − r(x, y)| / r(x, y)
//   A2 = sup_x ||det Dζ(x)| − 1| · sup_x |det Dζ⁻¹(x)|
//   A3 = inf_{ζ1 ∈ Isom} sup_x r(ζ(x), ζ1(x))

#include "gscat/spectral_ops.hpp"

namespace gscat {

/// Coordinate map on one manifold kind's parameter domain. Coordinates use
/// the same layout as SpectralManifold::points() rows.
struct DeformationMap {
  ManifoldKind kind = ManifoldKind::circle;
  std::function<Vec(const Vec&)> forward;
  std::function<Vec(const Vec&)> inverse;
  /// |det Dζ(x)|; empty means "use central finite differences".
  std::function<double(const Vec&)> jacobian_det;
  nlohmann::json family = nlohmann::json::object();
  bool isometry = false;
};

namespace detail {

inline double wrap_to(double a, double period) {
  a = std::fmod(a, period);
  return a < 0.0 ? a + period : a;
}

inline double signed_gap(double a, double b, double period) {
  double d = std::fmod(a - b, period);
  if (d > 0.5 * period) d -= period;
  if (d < -0.5 * period) d += period;
  return d;
}

/// Solves x + τ·R·sin(x/R) = y on one period by Newton's method.
inline double invert_sine_warp(double y, double tau, double R) {
  const double period = 2.0 * kPi * R;
  double x = y;
  for (int it = 0; it < 100; ++it) {
    const double step = (x + tau * R * std::sin(x / R) - y) / (1.0 + tau * std::cos(x / R));
    x -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(x))) return wrap_to(x, period);
  }
  throw ConvergenceError("sine-warp inverse: Newton iteration did not converge at y = " + format_real(y));
}

inline Vec vec1(double a) { return Vec::Constant(1, a); }
inline Vec vec2(double a, double b) { return (Vec(2) << a, b).finished(); }

inline Eigen::Vector3d colat_lon(const Vec& p) {
  const double z = std::clamp(p[2], -1.0, 1.0);
  return {std::acos(z), std::atan2(p[1], p[0]), 0.0};
}

inline Vec from_colat_lon(double th, double ph) {
  return (Vec(3) << std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)).finished();
}

inline void require_circle_warp(double tau) {
  if (!(std::abs(tau) < 1.0)) throw ConfigError("warp: need |τ| < 1 for a diffeomorphism");
}

}  // namespace detail

namespace deform {

inline DeformationMap identity(ManifoldKind kind) {
  DeformationMap z;
  z.kind = kind;
  z.forward = [](const Vec& x) { return x; };
  z.inverse = z.forward;
  z.jacobian_det = [](const Vec&) { return 1.0; };
  z.family = {{"tag", "identity"}};
  z.isometry = true;
  return z;
}

/// ζ = a ∘ b (b applied first).
inline DeformationMap compose(const DeformationMap& a, const DeformationMap& b) {
  if (a.kind != b.kind) throw ConfigError("compose: maps act on different manifold kinds");
  DeformationMap z;
  z.kind = a.kind;
  z.forward = [fa = a.forward, fb = b.forward](const Vec& x) { return fa(fb(x)); };
  z.inverse = [ia = a.inverse, ib = b.inverse](const Vec& x) { return ib(ia(x)); };
  if (a.jacobian_det && b.jacobian_det)
    z.jacobian_det = [ja = a.jacobian_det, jb = b.jacobian_det, fb = b.forward](const Vec& x) {
      return ja(fb(x)) * jb(x);
    };
  z.family = {{"tag", "composite"}, {"outer", a.family}, {"inner", b.family}};
  z.isometry = a.isometry && b.isometry;
  return z;
}

// Circle (coordinate θ ∈ [0, 2π)).

inline DeformationMap circle_rotation(double c) {
  DeformationMap z;
  z.kind = ManifoldKind::circle;
  z.forward = [c](const Vec& x) { return detail::vec1(detail::wrap_to(x[0] + c, 2.0 * kPi)); };
  z.inverse = [c](const Vec& x) { return detail::vec1(detail::wrap_to(x[0] - c, 2.0 * kPi)); };
  z.jacobian_det = [](const Vec&) { return 1.0; };
  z.family = {{"tag", "rotation"}, {"c", c}};
  z.isometry = true;
  return z;
}

/// θ ↦ c − θ.
inline DeformationMap circle_reflection(double c = 0.0) {
  DeformationMap z;
  z.kind = ManifoldKind::circle;
  z.forward = [c](const Vec& x) { return detail::vec1(detail::wrap_to(c - x[0], 2.0 * kPi)); };
  z.inverse = z.forward;
  z.jacobian_det = [](const Vec&) { return 1.0; };
  z.family = {{"tag", "reflection"}, {"c", c}};
  z.isometry = true;
  return z;
}

/// θ ↦ θ + τ sin θ, |det Dζ| = 1 + τ cos θ.
inline DeformationMap circle_warp(double tau) {
  detail::require_circle_warp(tau);
  DeformationMap z;
  z.kind = ManifoldKind::circle;
  z.forward = [tau](const Vec& x) {
    return detail::vec1(detail::wrap_to(x[0] + tau * std::sin(x[0]), 2.0 * kPi));
  };
  z.inverse = [tau](const Vec& x) { return detail::vec1(detail::invert_sine_warp(x[0], tau, 1.0)); };
  z.jacobian_det = [tau](const Vec& x) { return 1.0 + tau * std::cos(x[0]); };
  z.family = {{"tag", "warp"}, {"tau", tau}, {"profile", "sin"}};
  return z;
}

// Flat torus (arc-length coordinates (u1, u2)).

inline DeformationMap torus_translation(double R1, double R2, double a1, double a2) {
  DeformationMap z;
  z.kind = ManifoldKind::torus;
  const double P1 = 2.0 * kPi * R1, P2 = 2.0 * kPi * R2;
  z.forward = [=](const Vec& x) {
    return detail::vec2(detail::wrap_to(x[0] + a1, P1), detail::wrap_to(x[1] + a2, P2));
  };
  z.inverse = [=](const Vec& x) {
    return detail::vec2(detail::wrap_to(x[0] - a1, P1), detail::wrap_to(x[1] - a2, P2));
  };
  z.jacobian_det = [](const Vec&) { return 1.0; };
  z.family = {{"tag", "rotation"}, {"a1", a1}, {"a2", a2}};
  z.isometry = true;
  return z;
}

/// Reflection of one or both axes: u_i ↦ −u_i.
inline DeformationMap torus_reflection(double R1, double R2, bool flip1, bool flip2) {
  DeformationMap z;
  z.kind = ManifoldKind::torus;
  const double P1 = 2.0 * kPi * R1, P2 = 2.0 * kPi * R2;
  z.forward = [=](const Vec& x) {
    return detail::vec2(detail::wrap_to(flip1 ? -x[0] : x[0], P1), detail::wrap_to(flip2 ? -x[1] : x[1], P2));
  };
  z.inverse = z.forward;
  z.jacobian_det = [](const Vec&) { return 1.0; };
  z.family = {{"tag", "reflection"}, {"flip1", flip1}, {"flip2", flip2}};
  z.isometry = true;
  return z;
}

/// u1 ↦ u1 + τ R1 sin(u1/R1), u2 fixed.
inline DeformationMap torus_warp(double R1, double R2, double tau) {
  detail::require_circle_warp(tau);
  DeformationMap z;
  z.kind = ManifoldKind::torus;
  const double P1 = 2.0 * kPi * R1;
  z.forward = [=](const Vec& x) {
    return detail::vec2(detail::wrap_to(x[0] + tau * R1 * std::sin(x[0] / R1), P1), x[1]);
  };
  z.inverse = [=](const Vec& x) { return detail::vec2(detail::invert_sine_warp(x[0], tau, R1), x[1]); };
  z.jacobian_det = [=](const Vec& x) { return 1.0 + tau * std::cos(x[0] / R1); };
  z.family = {{"tag", "warp"}, {"tau", tau}, {"profile", "sin(u1/R1)"}, {"R1", R1}, {"R2", R2}};
  return z;
}

// Sphere (unit vectors in ℝ³).

/// x ↦ Q x for an orthogonal Q (det ±1).
inline DeformationMap sphere_orthogonal(const Eigen::Matrix3d& Q) {
  if ((Q.transpose() * Q - Eigen::Matrix3d::Identity()).norm() > 1e-10)
    throw ConfigError("sphere_orthogonal: matrix is not orthogonal");
  DeformationMap z;
  z.kind = ManifoldKind::sphere;
  z.forward = [Q](const Vec& x) { return Vec(Q * x.head<3>()); };
  z.inverse = [Q](const Vec& x) { return Vec(Q.transpose() * x.head<3>()); };
  z.jacobian_det = [](const Vec&) { return 1.0; };
  nlohmann::json q = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) q.push_back({Q(i, 0), Q(i, 1), Q(i, 2)});
  z.family = {{"tag", Q.determinant() > 0 ? "rotation" : "reflection"}, {"Q", q}};
  z.isometry = true;
  return z;
}

/// Rotation R_z(α) R_y(β) R_z(γ).
inline Eigen::Matrix3d euler_zyz(double alpha, double beta, double gamma) {
  using Eigen::AngleAxisd;
  using Eigen::Vector3d;
  return (AngleAxisd(alpha, Vector3d::UnitZ()) * AngleAxisd(beta, Vector3d::UnitY()) *
          AngleAxisd(gamma, Vector3d::UnitZ()))
      .toRotationMatrix();
}

inline DeformationMap sphere_rotation_z(double c) {
  auto z = sphere_orthogonal(euler_zyz(c, 0.0, 0.0));
  z.family["c"] = c;
  return z;
}

/// Colatitude warp θ ↦ θ + τ sin θ at fixed longitude;
/// |det Dζ| = (1 + τ cos θ) sin(θ + τ sin θ) / sin θ.
inline DeformationMap sphere_colatitude_warp(double tau) {
  detail::require_circle_warp(tau);
  DeformationMap z;
  z.kind = ManifoldKind::sphere;
  z.forward = [tau](const Vec& x) {
    const auto a = detail::colat_lon(x);
    return detail::from_colat_lon(a[0] + tau * std::sin(a[0]), a[1]);
  };
  z.inverse = [tau](const Vec& x) {
    const auto a = detail::colat_lon(x);
    // θ + τ sin θ is an increasing bijection of [0, π].
    double th = a[0];
    for (int it = 0; it < 100; ++it) {
      const double step = (th + tau * std::sin(th) - a[0]) / (1.0 + tau * std::cos(th));
      th -= step;
      if (std::abs(step) <= 1e-15) break;
    }
    return detail::from_colat_lon(std::clamp(th, 0.0, kPi), a[1]);
  };
  z.jacobian_det = [tau](const Vec& x) {
    const double th = detail::colat_lon(x)[0];
    const double s = std::sin(th);
    const double ratio = s < 1e-8 ? 1.0 + tau * std::cos(th) : std::sin(th + tau * s) / s;
    return (1.0 + tau * std::cos(th)) * std::abs(ratio);
  };
  z.family = {{"tag", "warp"}, {"tau", tau}, {"profile", "colatitude sin"}};
  return z;
}

}  // namespace deform

// ---------------------------------------------------------------------------
// Mesh point location

struct SurfacePoint {
  int face = -1;
  Eigen::Vector3d bary = Eigen::Vector3d::Zero();
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  double distance = 0.0;  // from the query to the surface
};

namespace detail {

// Closest point on triangle abc to p, returned as barycentric weights.
inline Eigen::Vector3d closest_barycentric(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                           const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {1 - v, v, 0};
  }
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {1 - w, 0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1 - v - w, v, w};
}

}  // namespace detail

/// Nearest surface point by exhaustive search over faces.
inline SurfacePoint locate_on_mesh(const MeshGeometry& g, const Eigen::Vector3d& p) {
  SurfacePoint best;
  best.distance = std::numeric_limits<double>::infinity();
  for (Eigen::Index f = 0; f < g.faces.rows(); ++f) {
    const Eigen::Vector3d a = g.vertices.row(g.faces(f, 0)).transpose();
    const Eigen::Vector3d b = g.vertices.row(g.faces(f, 1)).transpose();
    const Eigen::Vector3d c = g.vertices.row(g.faces(f, 2)).transpose();
    const Eigen::Vector3d w = detail::closest_barycentric(p, a, b, c);
    const Eigen::Vector3d q = w[0] * a + w[1] * b + w[2] * c;
    const double d = (q - p).norm();
    if (d < best.distance) best = {static_cast<int>(f), w, q, d};
  }
  return best;
}

inline int nearest_vertex(const MeshGeometry& g, const Eigen::Vector3d& p) {
  Eigen::Index i = 0;
  (g.vertices.rowwise() - p.transpose()).rowwise().squaredNorm().minCoeff(&i);
  return static_cast<int>(i);
}

namespace deform {

/// Rigid motion x ↦ Q x of a mesh embedding, followed by projection back onto
/// the surface. Exact isometry only when Q maps the mesh onto itself.
inline DeformationMap mesh_rigid(const MeshGeometry& g, const Eigen::Matrix3d& Q) {
  DeformationMap z;
  z.kind = ManifoldKind::mesh;
  auto geo = std::make_shared<MeshGeometry>(g);
  z.forward = [geo, Q](const Vec& x) { return Vec(locate_on_mesh(*geo, Q * x.head<3>()).point); };
  z.inverse = [geo, Q](const Vec& x) { return Vec(locate_on_mesh(*geo, Q.transpose() * x.head<3>()).point); };
  z.jacobian_det = [](const Vec&) { return 1.0; };
  z.family = {{"tag", "rotation"}, {"angle", Eigen::AngleAxisd(Q).angle()}};
  return z;
}

}  // namespace deform

// ---------------------------------------------------------------------------
// Sample-point helpers

inline Vec point(const SpectralManifold& m, Eigen::Index i) { return m.points().row(i).transpose(); }

inline void require_kind(const SpectralManifold& m, const DeformationMap& z) {
  if (m.kind() != z.kind) throw MismatchError("deformation acts on a different manifold kind");
}

/// Mesh sample-to-point distance: graph distance to the nearest vertex.
inline double mesh_distance(const SpectralManifold& m, Eigen::Index i, const Vec& y) {
  return m.mesh()->graph_distance(i, nearest_vertex(*m.mesh(), y.head<3>()));
}

inline double point_distance(const SpectralManifold& m, const Vec& a, const Vec& b) {
  if (m.kind() != ManifoldKind::mesh) return m.distance(a, b);
  const auto& g = *m.mesh();
  return g.graph_distance(nearest_vertex(g, a.head<3>()), nearest_vertex(g, b.head<3>()));
}

/// Smallest positive neighbor spacing on the sample grid.
inline double grid_spacing(const SpectralManifold& m) {
  double h = std::numeric_limits<double>::infinity();
  for (const auto& [a, b] : m.neighbors()) {
    const double d = m.distance(a, b);
    if (d > 0.0) h = std::min(h, d);
  }
  return h;
}

/// max_i r(x_i, ζ(ζ⁻¹(x_i))).
inline double inverse_residual(const SpectralManifold& m, const DeformationMap& z) {
  require_kind(m, z);
  double r = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const Vec x = point(m, i);
    r = std::max(r, point_distance(m, x, z.forward(z.inverse(x))));
  }
  return r;
}

/// |det Dζ(x)| by central differences with step h (intrinsic coordinates).
inline double finite_difference_jacobian(const SpectralManifold& m, const DeformationMap& z, const Vec& x, double h) {
  switch (m.kind()) {
    case ManifoldKind::circle: {
      const double d = detail::signed_gap(z.forward(detail::vec1(x[0] + h))[0],
                                          z.forward(detail::vec1(x[0] - h))[0], 2.0 * kPi);
      return std::abs(d / (2.0 * h));
    }
    case ManifoldKind::torus: {
      const double P1 = 2.0 * kPi * m.params().at("R1").get<double>();
      const double P2 = 2.0 * kPi * m.params().at("R2").get<double>();
      Eigen::Matrix2d D;
      for (int c = 0; c < 2; ++c) {
        Vec xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        const Vec yp = z.forward(xp), ym = z.forward(xm);
        D(0, c) = detail::signed_gap(yp[0], ym[0], P1) / (2.0 * h);
        D(1, c) = detail::signed_gap(yp[1], ym[1], P2) / (2.0 * h);
      }
      return std::abs(D.determinant());
    }
    case ManifoldKind::sphere: {
      const Eigen::Vector3d p = x.head<3>().normalized();
      auto frame = [](const Eigen::Vector3d& q) {
        const Eigen::Vector3d t = std::abs(q[2]) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
        const Eigen::Vector3d e1 = q.cross(t).normalized();
        return std::pair{e1, Eigen::Vector3d(q.cross(e1))};
      };
      const auto [e1, e2] = frame(p);
      const Eigen::Vector3d q = z.forward(Vec(p)).head<3>().normalized();
      const auto [f1, f2] = frame(q);
      Eigen::Matrix2d D;
      const Eigen::Vector3d es[2] = {e1, e2};
      for (int c = 0; c < 2; ++c) {
        const Vec xp = std::cos(h) * p + std::sin(h) * es[c];
        const Vec xm = std::cos(h) * p - std::sin(h) * es[c];
        const Eigen::Vector3d d = z.forward(xp).head<3>() - z.forward(xm).head<3>();
        D(0, c) = d.dot(f1) / (2.0 * h);
        D(1, c) = d.dot(f2) / (2.0 * h);
      }
      return std::abs(D.determinant());
    }
    case ManifoldKind::mesh: throw NotComputable("finite-difference Jacobians are not defined on meshes");
  }
  return 0.0;
}

inline double jacobian_at(const SpectralManifold& m, const DeformationMap& z, const Vec& x) {
  return z.jacobian_det ? z.jacobian_det(x) : finite_difference_jacobian(m, z, x, grid_spacing(m) / 10.0);
}

// ---------------------------------------------------------------------------
// V_ζ

struct Pullback {
  Mat matrix;                       // N × N, V_ζ f = matrix · f
  double interpolation_error = 0.0; // mesh: max distance of ζ⁻¹(x_i) from the surface
};

/// V_ζ as an N × N matrix. Analytic kinds: B Φ W with B_ik = φ_k(ζ⁻¹(x_i)),
/// exact on the band. Meshes: barycentric interpolation at ζ⁻¹(x_i).
inline Pullback pullback_matrix(const SpectralManifold& m, const DeformationMap& z) {
  require_kind(m, z);
  const auto N = m.size();
  Pullback out;
  if (m.kind() == ManifoldKind::mesh) {
    out.matrix = Mat::Zero(N, N);
    const auto& g = *m.mesh();
    for (Eigen::Index i = 0; i < N; ++i) {
      const Vec y = z.inverse(point(m, i));
      const auto s = locate_on_mesh(g, y.head<3>());
      out.interpolation_error = std::max(out.interpolation_error, s.distance);
      for (int c = 0; c < 3; ++c) out.matrix(i, g.faces(s.face, c)) += s.bary[c];
    }
    return out;
  }
  const double inv_err = inverse_residual(m, z);
  if (!(inv_err <= 1e-10))
    throw DomainError("pullback: ζ(ζ⁻¹(x)) misses x by " + format_real(inv_err));
  Mat B(N, m.bands());
  for (Eigen::Index i = 0; i < N; ++i) B.row(i) = m.basis_at(z.inverse(point(m, i))).transpose();
  out.matrix = B * m.eigenfunctions() * m.weights().asDiagonal();
  return out;
}

inline Signal pullback(const SpectralManifold& m, const Pullback& V, const Signal& f) {
  require_on(m, f);
  return {V.matrix.cast<Complex>() * f.values, m.id()};
}

inline Signal pullback(const SpectralManifold& m, const DeformationMap& z, const Signal& f) {
  return pullback(m, pullback_matrix(m, z), f);
}

// ---------------------------------------------------------------------------
// Deformation size

/// ‖ζ‖_∞ over sample points.
inline double sup_displacement(const SpectralManifold& m, const DeformationMap& z) {
  require_kind(m, z);
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const Vec x = point(m, i);
    const Vec y = z.forward(x);
    s = std::max(s, m.kind() == ManifoldKind::mesh ? mesh_distance(m, i, y) : m.distance(x, y));
  }
  return s;
}

struct A1Options {
  std::optional<double> r_floor;     // default: one grid spacing
  std::size_t mesh_pair_budget = 200000;
  std::uint64_t seed = 7;
};

struct A1Result {
  double value = 0.0;
  double r_floor = 0.0;
  std::size_t pairs = 0;
};

/// A1 over sample pairs with r(x, y) ≥ r_floor. Full O(N²) on analytic
/// kinds; a fixed-seed random subset of `mesh_pair_budget` pairs on meshes.
inline A1Result compute_A1_detail(const SpectralManifold& m, const DeformationMap& z, const A1Options& opt = {}) {
  require_kind(m, z);
  const auto N = m.size();
  A1Result res;
  res.r_floor = opt.r_floor.value_or(grid_spacing(m));
  const double floor = res.r_floor * (1.0 - 1e-9);
  std::vector<Vec> img(N);
  for (Eigen::Index i = 0; i < N; ++i) img[i] = z.forward(point(m, i));
  auto visit = [&](Eigen::Index i, Eigen::Index j) {
    const double r = m.distance(i, j);
    if (r < floor) return;
    const double rz = point_distance(m, img[i], img[j]);
    res.value = std::max(res.value, std::abs(rz - r) / r);
    ++res.pairs;
  };
  const std::size_t total = static_cast<std::size_t>(N) * (N - 1) / 2;
  if (m.kind() != ManifoldKind::mesh || total <= opt.mesh_pair_budget) {
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = i + 1; j < N; ++j) visit(i, j);
  } else {
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, N - 1);
    for (std::size_t s = 0; s < opt.mesh_pair_budget; ++s) {
      const auto i = pick(rng), j = pick(rng);
      if (i != j) visit(i, j);
    }
  }
  return res;
}

inline double compute_A1(const SpectralManifold& m, const DeformationMap& z, const A1Options& opt = {}) {
  return compute_A1_detail(m, z, opt).value;
}

/// |det Dζ⁻¹(x)| = 1 / |det Dζ(ζ⁻¹(x))|.
inline double inverse_jacobian_at(const SpectralManifold& m, const DeformationMap& z, const Vec& x) {
  return 1.0 / jacobian_at(m, z, z.inverse(x));
}

inline double compute_A2(const SpectralManifold& m, const DeformationMap& z) {
  require_kind(m, z);
  if (m.kind() == ManifoldKind::mesh && !z.jacobian_det)
    throw NotComputable("A2 on meshes needs an analytic Jacobian");
  double dev = 0.0, inv = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const Vec x = point(m, i);
    dev = std::max(dev, std::abs(jacobian_at(m, z, x) - 1.0));
    inv = std::max(inv, inverse_jacobian_at(m, z, x));
  }
  return dev * inv;
}

struct A3Result {
  double value = 0.0;
  nlohmann::json witness;
  double grid_resolution = 0.0;  // coarse grid step in group parameters
};

struct A3Options {
  int grid = 0;             // coarse samples per continuous parameter; 0 = kind default
  double tol = 1e-12;       // refinement step tolerance
};

namespace detail {

// Compass search over `dirs` from x0 with initial step h0, minimizing F.
inline std::pair<std::vector<double>, double> pattern_search(const std::function<double(const std::vector<double>&)>& F,
                                                             std::vector<double> x, double h, double tol) {
  const std::size_t n = x.size();
  std::vector<std::vector<int>> dirs;
  const int total = static_cast<int>(std::pow(3, n));
  for (int code = 0; code < total; ++code) {
    std::vector<int> d(n);
    int c = code;
    bool zero = true;
    for (std::size_t k = 0; k < n; ++k) {
      d[k] = c % 3 - 1;
      c /= 3;
      zero = zero && d[k] == 0;
    }
    if (!zero) dirs.push_back(d);
  }
  double fx = F(x);
  while (h > tol) {
    bool moved = false;
    for (const auto& d : dirs) {
      std::vector<double> y = x;
      for (std::size_t k = 0; k < n; ++k) y[k] += h * d[k];
      const double fy = F(y);
      if (fy < fx) {
        x = std::move(y);
        fx = fy;
        moved = true;
        break;
      }
    }
    if (!moved) h *= 0.5;
  }
  return {x, fx};
}

}  // namespace detail

/// Grid search over the isometry group followed by pattern-search
/// refinement. The result is an upper bound on the infimum. Groups:
/// circle O(2) (angle + reflection bit), sphere O(3) (ZYZ Euler angles +
/// reflection bit), flat torus translations × axis reflections (× axis swap
/// when R1 = R2). Meshes are not supported.
inline A3Result compute_A3(const SpectralManifold& m, const DeformationMap& z, const A3Options& opt = {}) {
  require_kind(m, z);
  const auto N = m.size();
  std::vector<Vec> xs(N), img(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    xs[i] = point(m, i);
    img[i] = z.forward(xs[i]);
  }
  A3Result best;
  best.value = std::numeric_limits<double>::infinity();

  // Minimizes sup_i r(ζ(x_i), ζ1_p(x_i)) over a continuous parameter box for
  // one discrete component of the group.
  auto search = [&](const std::function<Vec(const std::vector<double>&, const Vec&)>& act,
                    const std::vector<double>& lo, const std::vector<double>& hi, int n_grid,
                    const std::function<nlohmann::json(const std::vector<double>&)>& describe) {
    auto F = [&](const std::vector<double>& p) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < N; ++i) {
        s = std::max(s, m.distance(img[i], act(p, xs[i])));
        if (s >= best.value) break;
      }
      return s;
    };
    const std::size_t n = lo.size();
    std::vector<double> step(n);
    for (std::size_t k = 0; k < n; ++k) step[k] = (hi[k] - lo[k]) / n_grid;
    std::vector<int> idx(n, 0);
    std::vector<double> arg_best;
    double f_best = std::numeric_limits<double>::infinity();
    while (true) {
      std::vector<double> p(n);
      for (std::size_t k = 0; k < n; ++k) p[k] = lo[k] + step[k] * idx[k];
      const double f = F(p);
      if (f < f_best) {
        f_best = f;
        arg_best = p;
      }
      std::size_t k = 0;
      while (k < n && ++idx[k] > n_grid) idx[k++] = 0;
      if (k == n) break;
    }
    const double h0 = *std::max_element(step.begin(), step.end());
    best.grid_resolution = std::max(best.grid_resolution, h0);
    auto refine_F = [&](const std::vector<double>& p) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < N; ++i) s = std::max(s, m.distance(img[i], act(p, xs[i])));
      return s;
    };
    auto [p, f] = detail::pattern_search(refine_F, arg_best, h0, opt.tol);
    if (f < best.value) {
      best.value = f;
      best.witness = describe(p);
    }
  };

  switch (m.kind()) {
    case ManifoldKind::circle: {
      const int n = opt.grid > 0 ? opt.grid : 720;
      for (int s : {1, -1})
        search(
            [s](const std::vector<double>& p, const Vec& x) {
              return detail::vec1(detail::wrap_to(s * x[0] + p[0], 2.0 * kPi));
            },
            {0.0}, {2.0 * kPi}, n,
            [s](const std::vector<double>& p) {
              return nlohmann::json{{"tag", s > 0 ? "rotation" : "reflection"},
                                    {"c", detail::wrap_to(p[0], 2.0 * kPi)}};
            });
      break;
    }
    case ManifoldKind::torus: {
      const double R1 = m.params().at("R1").get<double>(), R2 = m.params().at("R2").get<double>();
      const double P1 = 2.0 * kPi * R1, P2 = 2.0 * kPi * R2;
      const int n = opt.grid > 0 ? opt.grid : 64;
      const bool swap_ok = std::abs(R1 - R2) < 1e-12;
      for (int sw = 0; sw <= (swap_ok ? 1 : 0); ++sw)
        for (int s1 : {1, -1})
          for (int s2 : {1, -1})
            search(
                [=](const std::vector<double>& p, const Vec& x) {
                  const double u1 = sw ? x[1] : x[0], u2 = sw ? x[0] : x[1];
                  return detail::vec2(detail::wrap_to(s1 * u1 + p[0], P1), detail::wrap_to(s2 * u2 + p[1], P2));
                },
                {0.0, 0.0}, {P1, P2}, n,
                [=](const std::vector<double>& p) {
                  return nlohmann::json{{"tag", "translation"},
                                        {"a1", detail::wrap_to(p[0], P1)},
                                        {"a2", detail::wrap_to(p[1], P2)},
                                        {"flip1", s1 < 0},
                                        {"flip2", s2 < 0},
                                        {"swap", sw == 1}};
                });
      break;
    }
    case ManifoldKind::sphere: {
      const int n = opt.grid > 0 ? opt.grid : 24;
      for (int s : {1, -1})
        search(
            [s](const std::vector<double>& p, const Vec& x) {
              return Vec(s * (deform::euler_zyz(p[0], p[1], p[2]) * x.head<3>()));
            },
            {0.0, 0.0, 0.0}, {2.0 * kPi, kPi, 2.0 * kPi}, n,
            [s](const std::vector<double>& p) {
              return nlohmann::json{{"tag", s > 0 ? "rotation" : "rotoreflection"},
                                    {"alpha", p[0]},
                                    {"beta", p[1]},
                                    {"gamma", p[2]}};
            });
      break;
    }
    case ManifoldKind::mesh:
      throw NotComputable("A3 is not computable on meshes: the isometry group is not parameterizable");
  }
  return best;
}

struct DeformationSize {
  double sup_disp = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  std::optional<double> a3;  // empty on meshes
  nlohmann::json a3_witness = nullptr;
  double a1_floor = 0.0;

  nlohmann::json to_json() const {
    return {{"sup_disp", sup_disp},
            {"a1", a1},
            {"a1_r_floor", a1_floor},
            {"a2", a2},
            {"a3", a3 ? nlohmann::json(*a3) : nlohmann::json(nullptr)},
            {"a3_witness", a3_witness}};
  }
};

/// All size measures; asserts a3 ≤ sup_disp (the identity is a candidate).
inline DeformationSize deformation_size(const SpectralManifold& m, const DeformationMap& z, const A3Options& a3opt = {}) {
  DeformationSize s;
  s.sup_disp = sup_displacement(m, z);
  const auto a1 = compute_A1_detail(m, z);
  s.a1 = a1.value;
  s.a1_floor = a1.r_floor;
  s.a2 = compute_A2(m, z);
  if (m.kind() != ManifoldKind::mesh) {
    auto a3 = compute_A3(m, z, a3opt);
    if (a3.value > s.sup_disp + 1e-12)
      throw Error("A3 = " + format_real(a3.value) + " exceeds sup displacement " + format_real(s.sup_disp));
    s.a3 = a3.value;
    s.a3_witness = a3.witness;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commutators

/// T_η as an N × N matrix acting on sample values: Φᵀ diag(η) Φ W.
inline Mat operator_matrix(const SpectralManifold& m, const SpectralFunction& eta) {
  require_on(m, eta);
  return m.eigenfunctions().transpose() * eta.table().asDiagonal() * m.eigenfunctions() * m.weights().asDiagonal();
}

/// ‖T_η V_ζ f − V_ζ T_η f‖.
inline double equivariance_residual(const SpectralManifold& m, const SpectralFunction& eta, const Pullback& V,
                                    const Signal& f) {
  const Signal vf = pullback(m, V, f);
  return norm(m, apply_operator(m, eta, vf) - pullback(m, V, apply_operator(m, eta, f)));
}

inline double equivariance_residual(const SpectralManifold& m, const SpectralFunction& eta, const DeformationMap& z,
                                    const Signal& f) {
  return equivariance_residual(m, eta, pullback_matrix(m, z), f);
}

/// Operator norm of [T_η, V_ζ] in the weighted L² metric by power iteration.
inline PowerIterationResult commutator_norm_detail(const SpectralManifold& m, const SpectralFunction& eta,
                                                   const Pullback& V, double rel_tol = 1e-6) {
  const Mat T = operator_matrix(m, eta);
  const Mat C = T * V.matrix - V.matrix * T;
  const Vec s = m.weights().cwiseSqrt();
  const Mat B = s.asDiagonal() * C * s.cwiseInverse().asDiagonal();
  return largest_singular_value([&](const Vec& x) { return Vec(B * x); },
                                [&](const Vec& x) { return Vec(B.transpose() * x); }, m.size(), rel_tol);
}

inline double commutator_norm(const SpectralManifold& m, const SpectralFunction& eta, const DeformationMap& z,
                              double rel_tol = 1e-6) {
  return commutator_norm_detail(m, eta, pullback_matrix(m, z), rel_tol).value;
}

/// ‖T_η f − V_ζ T_η f‖.
inline double lowpass_displacement_residual(const SpectralManifold& m, const SpectralFunction& eta,
                                            const Pullback& V, const Signal& f) {
  const Signal tf = apply_operator(m, eta, f);
  return norm(m, tf - pullback(m, V, tf));
}

inline double lowpass_displacement_residual(const SpectralManifold& m, const SpectralFunction& eta,
                                            const DeformationMap& z, const Signal& f) {
  return lowpass_displacement_residual(m, eta, pullback_matrix(m, z), f);
}

// ---------------------------------------------------------------------------
// Heat-trace moments

struct HeatTraceMoment {
  double value = 0.0;
  double tail_ratio = 0.0;  // last retained term / sum
  bool flagged = false;     // tail_ratio > 1e-6: truncation is not negligible
};

/// Σ_k λ_k^α e^{−t λ_k} over the retained band (0⁰ = 1).
inline HeatTraceMoment heat_trace_moment(const SpectralManifold& m, double alpha, double t) {
  if (!(t > 0.0)) throw DomainError("heat_trace_moment: need t > 0");
  if (!(alpha >= 0.0)) throw DomainError("heat_trace_moment: need alpha >= 0");
  HeatTraceMoment h;
  double last = 0.0;
  for (Eigen::Index k = 0; k < m.bands(); ++k) {
    const double l = m.eigenvalues()[k];
    last = std::pow(l, alpha) * std::exp(-t * l);
    h.value += last;
  }
  h.tail_ratio = h.value > 0.0 ? last / h.value : 0.0;
  h.flagged = h.tail_ratio > 1e-6;
  return h;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("loglog_slope: need >= 2 matching samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace gscat
