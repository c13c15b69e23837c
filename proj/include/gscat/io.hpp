#pragma once

// Persistence: the binary manifold cache, atomic file writes and CSV helpers.
//
// Manifold cache layout (little-endian):
//   "GSCATMF1" | u64 header_len | header JSON | f64 points (row-major N×c)
//   | f64 weights (N) | f64 eigenvalues (K) | f64 eigenfunctions (row-major K×N)
//   | i32 neighbor pairs (2·E) | i32 faces (row-major F×3, meshes only)
// The header is self-describing (kind, shapes, build params, grouping).
// Reloading and re-saving reproduces the file byte for byte.

#include "gscat/manifold.hpp"
#include "gscat/mesh.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gscat {

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

inline constexpr char kManifoldMagic[8] = {'G', 'S', 'C', 'A', 'T', 'M', 'F', '1'};

/// Write `contents` to `path` via a temporary sibling and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Shortest round-tripping decimal form of a double.
inline std::string format_real(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

namespace detail {

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename Derived>
void put_rowmajor(std::string& out, const Eigen::DenseBase<Derived>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put(out, m(i, j));
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > buf_.size()) throw ParseError("manifold cache: truncated payload");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    if (pos_ + n > buf_.size()) throw ParseError("manifold cache: truncated header");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename Scalar, int Cols>
  Eigen::Matrix<Scalar, Eigen::Dynamic, Cols> matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Cols> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get<Scalar>();
    return m;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_manifold(const SpectralManifold& m) {
  const auto& p = m.parts();
  const auto& s = m.spectrum();
  nlohmann::json header = {
      {"format", "gscat-manifold"},
      {"version", 1},
      {"kind", to_string(p.kind)},
      {"dim", p.dim},
      {"n_points", p.points.rows()},
      {"coord_dim", p.points.cols()},
      {"n_eigen", p.eigenvalues.size()},
      {"cluster_tol", p.cluster_tol},
      {"params", p.params},
      {"uniques", s.uniques},
      {"multiplicities", s.multiplicities},
      {"n_neighbors", p.neighbors.size()},
      {"n_faces", p.mesh ? p.mesh->faces.rows() : 0},
      {"id", m.id()},
  };
  const std::string h = header.dump();
  std::string out(kManifoldMagic, 8);
  detail::put<std::uint64_t>(out, h.size());
  out += h;
  detail::put_rowmajor(out, p.points);
  detail::put_rowmajor(out, p.weights);
  detail::put_rowmajor(out, p.eigenvalues);
  detail::put_rowmajor(out, p.eigenfunctions);
  for (const auto& [a, b] : p.neighbors) {
    detail::put<std::int32_t>(out, a);
    detail::put<std::int32_t>(out, b);
  }
  if (p.mesh) detail::put_rowmajor(out, p.mesh->faces);
  return out;
}

inline SpectralManifold deserialize_manifold(const std::string& buf) {
  if (buf.size() < 16 || buf.compare(0, 8, kManifoldMagic, 8) != 0)
    throw ParseError("manifold cache: bad magic");
  detail::Reader r(buf);
  r.bytes(8);
  const auto hlen = r.get<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifold cache: bad header: ") + e.what());
  }
  const auto N = header.at("n_points").get<Eigen::Index>();
  const auto C = header.at("coord_dim").get<Eigen::Index>();
  const auto K = header.at("n_eigen").get<Eigen::Index>();
  ManifoldParts p;
  p.kind = kind_from_string(header.at("kind").get<std::string>());
  p.dim = header.at("dim").get<int>();
  p.cluster_tol = header.at("cluster_tol").get<double>();
  p.params = header.at("params");
  p.points = r.matrix<double, Eigen::Dynamic>(N, C);
  p.weights = r.matrix<double, 1>(N, 1);
  p.eigenvalues = r.matrix<double, 1>(K, 1);
  p.eigenfunctions = r.matrix<double, Eigen::Dynamic>(K, N);
  const auto E = header.at("n_neighbors").get<std::size_t>();
  p.neighbors.reserve(E);
  for (std::size_t e = 0; e < E; ++e) {
    const int a = r.get<std::int32_t>();
    const int b = r.get<std::int32_t>();
    p.neighbors.emplace_back(a, b);
  }
  if (p.kind == ManifoldKind::mesh) {
    const auto F = header.at("n_faces").get<Eigen::Index>();
    MeshGeometry g;
    g.vertices = p.points;
    g.faces = r.matrix<int, 3>(F, 3);
    g.graph_distance = edge_graph_distances(g.vertices, p.neighbors);
    p.mesh = std::move(g);
  }
  if (!r.at_end()) throw ParseError("manifold cache: trailing bytes");
  SpectralManifold m(std::move(p));
  if (m.id() != header.at("id").get<std::uint64_t>()) throw ParseError("manifold cache: content id mismatch");
  return m;
}

inline void save_manifold(const SpectralManifold& m, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_manifold(m));
}

inline SpectralManifold load_manifold(const std::filesystem::path& path) {
  return deserialize_manifold(read_file(path));
}

/// Build a manifold from a JSON description such as
///   {"kind":"circle","n_points":128,"max_freq":32}
///   {"kind":"sphere","l_max":6,"n_lat":7,"n_lon":14}
///   {"kind":"torus","n1":32,"n2":64,"R1":1,"R2":2,"k_max":6}
///   {"kind":"mesh","file":"bunny.off","k":64,"cluster_tol":0.01}
/// Missing optional fields take the documented defaults.
inline SpectralManifold build_manifold(const nlohmann::json& spec) {
  try {
    const auto kind = kind_from_string(spec.at("kind").get<std::string>());
    switch (kind) {
      case ManifoldKind::circle: {
        const int kmax = spec.value("max_freq", 32);
        return build_circle(spec.value("n_points", 4 * kmax), kmax);
      }
      case ManifoldKind::sphere: {
        const int l = spec.value("l_max", 6);
        const auto def = SphereGrid::minimal(l);
        return build_sphere(l, {spec.value("n_lat", def.n_lat), spec.value("n_lon", def.n_lon)});
      }
      case ManifoldKind::torus: {
        const int kmax = spec.value("k_max", 6);
        return build_flat_torus(spec.value("n1", 4 * kmax), spec.value("n2", 4 * kmax), spec.value("R1", 1.0),
                                spec.value("R2", 1.0), kmax);
      }
      case ManifoldKind::mesh: {
        const Mesh mesh = spec.contains("file") ? load_mesh(spec.at("file").get<std::string>())
                                                : icosphere(spec.value("subdivisions", 3));
        return mesh_spectral(mesh, spec.value("k", 64), spec.value("cluster_tol", 1e-2));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifold spec: ") + e.what());
  }
  throw ConfigError("manifold spec: unreachable");
}

/// Minimal CSV table writer with deterministic number formatting.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size()) throw Error("csv: row width does not match header");
    rows_.push_back(cells);
  }
  void add_row(std::initializer_list<double> values) {
    std::vector<std::string> cells;
    for (double v : values) cells.push_back(format_real(v));
    add_row(cells);
  }

  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string str() const {
    std::string s;
    auto line = [&s](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += cells[i];
      }
      s += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return s;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace gscat
