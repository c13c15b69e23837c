#pragma once

// Triangle meshes: ASCII OFF input/output, edge-manifold diagnostics, an
// icosphere generator, and the cotangent-Laplacian spectral discretization.

#include "gscat/manifold.hpp"

#include <array>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <sstream>

namespace gscat {

struct Mesh {
  Mat vertices;                                 // V × 3
  Eigen::Matrix<int, Eigen::Dynamic, 3> faces;  // F × 3
};

struct MeshReport {
  int vertices = 0;
  int edges = 0;
  int faces = 0;
  int euler_characteristic = 0;
  int boundary_edges = 0;      // edges in exactly one face
  int nonmanifold_edges = 0;   // edges in more than two faces
  bool edge_manifold = false;  // every edge in at most two faces
  bool closed = false;
  std::optional<int> genus;    // closed edge-manifold meshes only

  nlohmann::json to_json() const {
    nlohmann::json j = {{"vertices", vertices},     {"edges", edges},
                        {"faces", faces},           {"euler_characteristic", euler_characteristic},
                        {"boundary_edges", boundary_edges}, {"nonmanifold_edges", nonmanifold_edges},
                        {"edge_manifold", edge_manifold},   {"closed", closed}};
    j["genus"] = genus ? nlohmann::json(*genus) : nlohmann::json(nullptr);
    return j;
  }
};

namespace detail {

inline std::map<std::pair<int, int>, int> edge_face_counts(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> counts;
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
    for (int c = 0; c < 3; ++c) {
      int a = mesh.faces(f, c), b = mesh.faces(f, (c + 1) % 3);
      if (a > b) std::swap(a, b);
      ++counts[{a, b}];
    }
  return counts;
}

// Next non-empty, non-comment token stream line.
inline bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

}  // namespace detail

inline MeshReport mesh_report(const Mesh& mesh) {
  MeshReport r;
  r.vertices = static_cast<int>(mesh.vertices.rows());
  r.faces = static_cast<int>(mesh.faces.rows());
  const auto counts = detail::edge_face_counts(mesh);
  r.edges = static_cast<int>(counts.size());
  for (const auto& [e, c] : counts) {
    if (c == 1) ++r.boundary_edges;
    if (c > 2) ++r.nonmanifold_edges;
  }
  r.euler_characteristic = r.vertices - r.edges + r.faces;
  r.edge_manifold = r.nonmanifold_edges == 0;
  r.closed = r.edge_manifold && r.boundary_edges == 0;
  if (r.closed && r.euler_characteristic % 2 == 0) r.genus = (2 - r.euler_characteristic) / 2;
  return r;
}

inline Mesh parse_off(std::istream& in) {
  std::string line;
  if (!detail::next_data_line(in, line)) throw ParseError("OFF: empty input");
  std::istringstream head(line);
  std::string magic;
  head >> magic;
  if (magic != "OFF") throw ParseError("OFF: missing 'OFF' header");
  long nv = -1, nf = -1, ne = 0;
  if (!(head >> nv >> nf >> ne)) {
    if (!detail::next_data_line(in, line)) throw ParseError("OFF: missing counts line");
    std::istringstream counts(line);
    if (!(counts >> nv >> nf)) throw ParseError("OFF: malformed counts line");
  }
  if (nv <= 0 || nf <= 0) throw ParseError("OFF: empty mesh");
  Mesh mesh;
  mesh.vertices.resize(nv, 3);
  for (long i = 0; i < nv; ++i) {
    if (!detail::next_data_line(in, line)) throw ParseError("OFF: truncated vertex list");
    std::istringstream ls(line);
    if (!(ls >> mesh.vertices(i, 0) >> mesh.vertices(i, 1) >> mesh.vertices(i, 2)))
      throw ParseError("OFF: malformed vertex line " + std::to_string(i));
  }
  mesh.faces.resize(nf, 3);
  for (long f = 0; f < nf; ++f) {
    if (!detail::next_data_line(in, line)) throw ParseError("OFF: truncated face list");
    std::istringstream ls(line);
    int n = 0;
    if (!(ls >> n)) throw ParseError("OFF: malformed face line " + std::to_string(f));
    if (n != 3) throw ParseError("OFF: face " + std::to_string(f) + " is not a triangle");
    for (int c = 0; c < 3; ++c) {
      if (!(ls >> mesh.faces(f, c))) throw ParseError("OFF: malformed face line " + std::to_string(f));
      if (mesh.faces(f, c) < 0 || mesh.faces(f, c) >= nv)
        throw ParseError("OFF: face " + std::to_string(f) + " references a missing vertex");
    }
  }
  return mesh;
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mesh file '" + path + "'");
  return parse_off(in);
}

inline void write_off(std::ostream& out, const Mesh& mesh) {
  out << "OFF\n" << mesh.vertices.rows() << ' ' << mesh.faces.rows() << " 0\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
    out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
    out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
}

/// Unit icosphere from `subdivisions` rounds of 1→4 midpoint refinement of
/// the icosahedron (0 → 12 vertices, 3 → 642, 4 → 2562).
inline Mesh icosphere(int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                                    {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                                    {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                       {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                       {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                       {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      return mid[key] = static_cast<int>(v.size()) - 1;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  Mesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) mesh.vertices.row(i) = v[i].transpose();
  mesh.faces.resize(static_cast<Eigen::Index>(f.size()), 3);
  for (std::size_t i = 0; i < f.size(); ++i) mesh.faces.row(i) << f[i][0], f[i][1], f[i][2];
  return mesh;
}

/// All-pairs shortest paths on the edge graph with Euclidean edge lengths.
inline Mat edge_graph_distances(const Mat& vertices, const std::vector<std::pair<int, int>>& edges) {
  const auto N = vertices.rows();
  std::vector<std::vector<std::pair<int, double>>> adj(N);
  for (const auto& [a, b] : edges) {
    const double len = (vertices.row(a) - vertices.row(b)).norm();
    adj[a].emplace_back(b, len);
    adj[b].emplace_back(a, len);
  }
  Mat D = Mat::Constant(N, N, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  for (Eigen::Index s = 0; s < N; ++s) {
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    D(s, s) = 0.0;
    pq.emplace(0.0, static_cast<int>(s));
    while (!pq.empty()) {
      const auto [d, u] = pq.top();
      pq.pop();
      if (d > D(s, u)) continue;
      for (const auto& [w, len] : adj[u])
        if (d + len < D(s, w)) {
          D(s, w) = d + len;
          pq.emplace(D(s, w), w);
        }
    }
  }
  // Enforce exact symmetry (the two Dijkstra runs may sum edges in different orders).
  return (0.5 * (D + D.transpose())).eval();
}

/// Cotangent stiffness matrix (positive semidefinite, dense) and lumped
/// (barycentric) mass diagonal.
inline std::pair<Mat, Vec> cotan_laplacian(const Mesh& mesh) {
  const auto N = mesh.vertices.rows();
  Mat L = Mat::Zero(N, N);
  Vec mass = Vec::Zero(N);
  const double scale = (mesh.vertices.colwise().maxCoeff() - mesh.vertices.colwise().minCoeff()).squaredNorm();
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    const int i[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    const Eigen::Vector3d p[3] = {mesh.vertices.row(i[0]), mesh.vertices.row(i[1]), mesh.vertices.row(i[2])};
    const double area2 = (p[1] - p[0]).cross(p[2] - p[0]).norm();
    if (area2 <= 1e-14 * std::max(scale, 1e-300))
      throw ConfigError("mesh_spectral: degenerate (zero-area) triangle " + std::to_string(f));
    for (int c = 0; c < 3; ++c) {
      // angle at corner c is opposite edge (c+1, c+2)
      const Eigen::Vector3d u = p[(c + 1) % 3] - p[c], w = p[(c + 2) % 3] - p[c];
      const double cot = u.dot(w) / area2;
      const int a = i[(c + 1) % 3], b = i[(c + 2) % 3];
      L(a, b) -= 0.5 * cot;
      L(b, a) -= 0.5 * cot;
      L(a, a) += 0.5 * cot;
      L(b, b) += 0.5 * cot;
      mass[i[c]] += area2 / 6.0;
    }
  }
  return {L, mass};
}

/// First k eigenpairs of the generalized problem L φ = λ M φ, mass-orthonormal.
/// Distances are edge-graph shortest paths (upper-biased geodesic approximation).
inline SpectralManifold mesh_spectral(const Mesh& mesh, int k, double cluster_tol = 1e-2) {
  const auto rep = mesh_report(mesh);
  if (rep.vertices == 0 || rep.faces == 0) throw ConfigError("mesh_spectral: empty mesh");
  if (!rep.edge_manifold) throw ConfigError("mesh_spectral: mesh is not edge-manifold");
  if (k < 1 || k > rep.vertices) throw ConfigError("mesh_spectral: need 1 <= k <= vertex count");
  const auto [L, mass] = cotan_laplacian(mesh);
  const Vec inv_sqrt = mass.cwiseSqrt().cwiseInverse();
  const Mat A = inv_sqrt.asDiagonal() * L * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  if (es.info() != Eigen::Success) throw ConvergenceError("mesh_spectral: eigensolver did not converge");

  ManifoldParts p;
  p.kind = ManifoldKind::mesh;
  p.dim = 2;
  p.points = mesh.vertices;
  p.weights = mass;
  p.eigenvalues = es.eigenvalues().head(k).cwiseMax(0.0);
  p.eigenfunctions = (inv_sqrt.asDiagonal() * es.eigenvectors().leftCols(k)).transpose();
  for (int r = 0; r < k; ++r) {
    Eigen::Index imax = 0;
    p.eigenfunctions.row(r).cwiseAbs().maxCoeff(&imax);
    if (p.eigenfunctions(r, imax) < 0) p.eigenfunctions.row(r) *= -1.0;
  }
  for (const auto& [e, c] : detail::edge_face_counts(mesh)) p.neighbors.emplace_back(e.first, e.second);
  p.cluster_tol = cluster_tol;
  p.params = {{"kind", "mesh"}, {"k", k}, {"cluster_tol", cluster_tol}, {"vertices", rep.vertices},
              {"faces", rep.faces}};
  p.mesh = MeshGeometry{mesh.vertices, mesh.faces, edge_graph_distances(mesh.vertices, p.neighbors)};
  return SpectralManifold(std::move(p));
}

}  // namespace gscat
