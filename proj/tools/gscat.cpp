// gscat: manifolds, scattering coefficients and experiment reports from the
// command line. Exit status: 0 all checks pass, 2 a check failed, 1 usage or
// configuration error.

#include "gscat/gscat.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <iostream>

using namespace gscat;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCheckFailed = 2;

/// Git blob hash: SHA-1 of "blob <size>\0" followed by the contents.
std::string git_blob_sha1(const std::string& data) {
  std::string payload = "blob " + std::to_string(data.size());
  payload.push_back('\0');
  payload += data;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(payload.data(), payload.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw Error("sha1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

/// Files of one command run. Written atomically; manifest.json goes last and
/// records the blob hash of every other file.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string contents) { files_.emplace_back(name, std::move(contents)); }

  void commit(json manifest) {
    json hashes = json::object();
    for (const auto& [name, contents] : files_) {
      write_file_atomic(dir_ / name, contents);
      hashes[name] = git_blob_sha1(contents);
    }
    manifest["outputs"] = hashes;
    write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string series_csv(const std::vector<std::pair<double, double>>& s) {
  CsvTable t({"x", "y"});
  for (const auto& [x, y] : s) t.add_row({x, y});
  return t.str();
}

// ---------------------------------------------------------------------------
// Configuration

/// Set `path` (dot separated) in `j` to `value`, parsed as JSON when possible.
void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) *node = json::object();
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
}

json load_config(const std::string& path, const std::vector<std::string>& overrides) {
  json cfg = {{"manifold", {{"kind", "circle"}}}};
  if (!path.empty()) {
    const json file = json::parse(read_file(path), nullptr, false);
    if (file.is_discarded() || !file.is_object()) throw ConfigError("config '" + path + "' is not a JSON object");
    cfg.merge_patch(file);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

struct ExperimentConfig {
  json manifold;
  json bank;
  json signal;
  json deformation;
  int max_order = 2;
  json tolerances = json::object();
  fs::path output_dir = "out";
  json raw;

  double tol(const std::string& name, double fallback) const { return tolerances.value(name, fallback); }
};

ExperimentConfig parse_config(const json& cfg) {
  ExperimentConfig c;
  c.raw = cfg;
  try {
    c.manifold = cfg.value("manifold", json{{"kind", "circle"}});
    c.bank = cfg.value("bank", json::object());
    c.signal = cfg.value("signal", json{{"kind", "random"}, {"seed", 1}});
    c.deformation = cfg.value("deformation", json::object());
    c.max_order = cfg.value("max_order", 2);
    c.tolerances = cfg.value("tolerances", json::object());
    c.output_dir = cfg.value("output_dir", std::string("out"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!c.manifold.is_object()) throw ConfigError("config: 'manifold' must be an object");
  if (c.max_order < 0) throw ConfigError("config: max_order must be >= 0");
  if (!c.tolerances.is_object()) throw ConfigError("config: 'tolerances' must be an object");
  for (const auto& [k, v] : c.tolerances.items())
    if (!v.is_number() || !(v.get<double>() > 0.0)) throw ConfigError("config: tolerance '" + k + "' must be positive");
  return c;
}

SpectralManifold resolve_manifold(const json& spec) {
  if (spec.contains("cache")) return load_manifold(spec.at("cache").get<std::string>());
  return build_manifold(spec);
}

FilterBank resolve_bank(const SpectralManifold& m, const json& b) {
  const auto g = generator_by_name(b.value("g", std::string("heat")));
  const int J = b.value("J", 2);
  const int j_min = b.contains("j_min") ? b.at("j_min").get<int>() : default_j_min(g.eval, J, m.spectrum().uniques.back());
  return make_wavelet_bank(m, g, J, j_min, b.value("normalize", true));
}

Signal resolve_signal(const SpectralManifold& m, const json& s) {
  const std::string kind = s.value("kind", std::string("random"));
  if (kind == "random") {
    std::mt19937_64 rng(s.value("seed", std::uint64_t{1}));
    return random_bandlimited(m, rng, false, s.value("modes", Eigen::Index{-1}));
  }
  if (kind == "zero") return m.make_signal(Vec(Vec::Zero(m.size())));
  if (kind == "constant") return m.make_signal(Vec(Vec::Constant(m.size(), s.value("value", 1.0))));
  if (kind == "eigenfunction") {
    const int k = s.value("index", 0);
    if (k < 0 || k >= m.bands()) throw ConfigError("signal: eigenfunction index out of range");
    return m.make_signal(Vec(m.eigenfunctions().row(k).transpose()));
  }
  if (kind == "cos") {
    if (m.kind() != ManifoldKind::circle) throw ConfigError("signal 'cos' is defined on the circle only");
    const double k = s.value("k", 1.0);
    return m.make_signal(Vec(m.points().col(0).array().unaryExpr([k](double t) { return std::cos(k * t); })));
  }
  if (kind == "file") {
    std::istringstream in(read_file(s.at("path").get<std::string>()));
    CVec v(m.size());
    std::string line;
    Eigen::Index i = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (i >= m.size()) throw ParseError("signal file has more values than points");
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      double re = 0.0, im = 0.0;
      if (!(ls >> re)) throw ParseError("signal file: cannot parse '" + line + "'");
      ls >> im;
      v[i++] = Complex(re, im);
    }
    if (i != m.size()) throw ParseError("signal file has " + std::to_string(i) + " values, expected " +
                                        std::to_string(m.size()));
    return m.make_signal(std::move(v));
  }
  throw ConfigError("unknown signal kind '" + kind + "'");
}

std::pair<double, double> torus_radii(const SpectralManifold& m) {
  return {m.params().at("R1").get<double>(), m.params().at("R2").get<double>()};
}

DeformationMap resolve_deformation(const SpectralManifold& m, const std::string& family, double p) {
  if (family == "circle_rotation") return deform::circle_rotation(p);
  if (family == "circle_reflection") return deform::circle_reflection(p);
  if (family == "circle_warp") return deform::circle_warp(p);
  if (family == "sphere_rotation_z") return deform::sphere_rotation_z(p);
  if (family == "sphere_colatitude_warp") return deform::sphere_colatitude_warp(p);
  if (family == "torus_translation") {
    const auto [R1, R2] = torus_radii(m);
    return deform::torus_translation(R1, R2, p, p);
  }
  if (family == "torus_warp") {
    const auto [R1, R2] = torus_radii(m);
    return deform::torus_warp(R1, R2, p);
  }
  if (family == "mesh_rotation_z") {
    if (!m.mesh()) throw ConfigError("mesh_rotation_z needs a mesh manifold");
    return deform::mesh_rigid(*m.mesh(), Eigen::AngleAxisd(p, Eigen::Vector3d::UnitZ()).toRotationMatrix());
  }
  throw ConfigError("unknown deformation family '" + family + "'");
}

std::string default_warp_family(const SpectralManifold& m) {
  switch (m.kind()) {
    case ManifoldKind::circle: return "circle_warp";
    case ManifoldKind::sphere: return "sphere_colatitude_warp";
    case ManifoldKind::torus: return "torus_warp";
    case ManifoldKind::mesh: return "mesh_rotation_z";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Reports

int finish_report(const ExperimentReport& r, const ExperimentConfig& cfg, const SpectralManifold& m) {
  OutputSet out(cfg.output_dir);
  out.add("table.csv", r.table.str());
  for (const auto& [name, s] : r.series) out.add("series_" + name + ".csv", series_csv(s));
  json manifest = r.manifest;
  manifest["manifold"] = m.params();
  manifest["manifold_id"] = m.id();
  manifest["checks"] = r.checks_json();
  manifest["passed"] = r.passed();
  manifest["config"] = cfg.raw;
  out.commit(manifest);
  for (const auto& c : r.checks) {
    auto& os = c.pass ? std::cout : std::cerr;
    os << (c.pass ? "PASS " : "FAIL ") << r.name << "." << c.name << ": " << c.detail << "\n";
  }
  std::cout << r.name << ": " << (r.passed() ? "all checks passed" : "check failure") << " (" << out.dir().string()
            << ")\n";
  return r.passed() ? kExitOk : kExitCheckFailed;
}

std::vector<double> number_list(const json& j, const std::string& key, std::vector<double> fallback) {
  return j.contains(key) ? j.at(key).get<std::vector<double>>() : fallback;
}

int run_iso_invariance(const ExperimentConfig& cfg) {
  const auto m = resolve_manifold(cfg.manifold);
  const std::string gname = cfg.bank.value("g", std::string("heat"));
  if (gname != "heat" && gname != "exp") throw ConfigError("iso-invariance requires the heat low-pass");
  const auto g = generator_by_name(gname);
  IsoInvarianceOptions opt;
  opt.max_order = cfg.max_order;
  opt.j_min = cfg.bank.value("j_min", opt.j_min);
  opt.min_decay_per_doubling = cfg.tol("min_decay_per_doubling", opt.min_decay_per_doubling);
  opt.exact_tol = cfg.tol("exact", opt.exact_tol);
  const auto Js = cfg.bank.contains("Js") ? cfg.bank.at("Js").get<std::vector<int>>() : std::vector<int>{-2, -1, 0, 1, 2};
  const std::string family = cfg.deformation.value("family", std::string(m.kind() == ManifoldKind::sphere
                                                                             ? "sphere_rotation_z"
                                                                             : "circle_rotation"));
  const auto z = resolve_deformation(m, family, cfg.deformation.value("param", 0.37));
  return finish_report(isometry_invariance_experiment(m, g, Js, resolve_signal(m, cfg.signal), z, opt), cfg, m);
}

int run_diffeo_stability(const ExperimentConfig& cfg) {
  const auto m = resolve_manifold(cfg.manifold);
  const json eta_spec = cfg.raw.value("eta", json{{"g", "heat"}, {"t", 1.0}});
  const std::string gname = eta_spec.value("g", std::string("heat"));
  const double t = eta_spec.value("t", 1.0);
  const ClosedForm g = gname == "gaussian" ? spectral::gaussian(t) : gname == "heat" ? spectral::heat(t)
                                                                                       : generator_by_name(gname);
  const auto eta = SpectralFunction::from_closed_form(m, g);
  DiffeoStabilityOptions opt;
  opt.anchor_tau = cfg.deformation.value("anchor_tau", opt.anchor_tau);
  opt.linear_tau_max = cfg.deformation.value("linear_tau_max", opt.linear_tau_max);
  opt.linear_tol = cfg.tol("linear", opt.linear_tol);
  opt.zero_tol = cfg.tol("zero", opt.zero_tol);
  const auto taus = number_list(cfg.deformation, "taus", {0.0, 0.01, 0.02, 0.05, 0.1, 0.2});
  const std::string family = cfg.deformation.value("family", default_warp_family(m));
  return finish_report(
      diffeo_stability_experiment(m, eta, taus, [&](double tau) { return resolve_deformation(m, family, tau); }, opt),
      cfg, m);
}

int run_frame_check(const ExperimentConfig& cfg) {
  const auto m = resolve_manifold(cfg.manifold);
  const auto bank = resolve_bank(m, cfg.bank);
  FrameCheckOptions opt;
  opt.n_signals = cfg.raw.value("n_signals", opt.n_signals);
  opt.seed = cfg.raw.value("seed", opt.seed);
  opt.isometry_tol = cfg.tol("isometry", opt.isometry_tol);
  return finish_report(frame_check_experiment(m, bank, opt), cfg, m);
}

int run_heat_trace(const ExperimentConfig& cfg) {
  const auto m = resolve_manifold(cfg.manifold);
  HeatTraceOptions opt;
  opt.alphas = number_list(cfg.raw, "alphas", opt.alphas);
  opt.t_min = cfg.raw.value("t_min", opt.t_min);
  opt.t_max = cfg.raw.value("t_max", opt.t_max);
  opt.n_t = cfg.raw.value("n_t", opt.n_t);
  opt.slope_rel_tol = cfg.tol("slope_relative", opt.slope_rel_tol);
  return finish_report(heat_trace_experiment(m, opt), cfg, m);
}

// ---------------------------------------------------------------------------
// Manifold commands

struct ManifoldFlags {
  std::string kind;
  int n = 0, kmax = 0, lmax = 0, n_lat = 0, n_lon = 0, n1 = 0, n2 = 0, k = 0, subdivisions = -1;
  double R1 = 0.0, R2 = 0.0, cluster_tol = 0.0;
  std::string file, cache;

  void add_to(CLI::App* app) {
    app->add_option("--kind", kind, "circle | sphere | torus | mesh");
    app->add_option("--n", n, "circle sample count");
    app->add_option("--kmax", kmax, "circle or torus frequency cutoff");
    app->add_option("--lmax", lmax, "sphere degree cutoff");
    app->add_option("--n-lat", n_lat, "sphere latitude count");
    app->add_option("--n-lon", n_lon, "sphere longitude count");
    app->add_option("--n1", n1, "torus samples along the first circle");
    app->add_option("--n2", n2, "torus samples along the second circle");
    app->add_option("--R1", R1, "torus first radius");
    app->add_option("--R2", R2, "torus second radius");
    app->add_option("--file", file, "OFF mesh file");
    app->add_option("--k", k, "mesh eigenpair count");
    app->add_option("--subdivisions", subdivisions, "icosphere subdivisions when no mesh file is given");
    app->add_option("--cluster-tol", cluster_tol, "eigenvalue grouping tolerance (meshes)");
  }

  json spec() const {
    if (kind.empty()) throw ConfigError("--kind is required");
    json j{{"kind", kind}};
    auto put = [&j](const char* key, auto v, bool set) {
      if (set) j[key] = v;
    };
    put("n_points", n, n > 0);
    put("max_freq", kmax, kmax > 0 && kind == "circle");
    put("k_max", kmax, kmax > 0 && kind == "torus");
    put("l_max", lmax, lmax > 0);
    put("n_lat", n_lat, n_lat > 0);
    put("n_lon", n_lon, n_lon > 0);
    put("n1", n1, n1 > 0);
    put("n2", n2, n2 > 0);
    put("R1", R1, R1 > 0.0);
    put("R2", R2, R2 > 0.0);
    put("file", file, !file.empty());
    put("k", k, k > 0);
    put("subdivisions", subdivisions, subdivisions >= 0);
    put("cluster_tol", cluster_tol, cluster_tol > 0.0);
    return j;
  }
};

SpectralManifold manifold_from(const std::string& in, const ManifoldFlags& flags) {
  return in.empty() ? build_manifold(flags.spec()) : load_manifold(in);
}

void print_info(const SpectralManifold& m) {
  const auto& s = m.spectrum();
  std::cout << "kind: " << to_string(m.kind()) << "\n"
            << "dim: " << m.dim() << "\n"
            << "points: " << m.size() << "\n"
            << "eigenpairs: " << m.bands() << "\n"
            << "id: " << m.id() << "\n"
            << "params: " << m.params().dump() << "\n"
            << "orthonormality_residual: " << format_real(orthonormality_residual(m)) << "\n";
  std::cout << "multiplicities:";
  for (std::size_t i = 0; i < s.size(); ++i) std::cout << (i ? "," : " ") << s.multiplicities[i];
  std::cout << "\nlambda,multiplicity\n";
  for (std::size_t i = 0; i < s.size(); ++i) std::cout << format_real(s.uniques[i]) << "," << s.multiplicities[i] << "\n";
}

void export_manifold(const SpectralManifold& m, const fs::path& dir) {
  OutputSet out(dir);
  std::vector<std::string> head;
  for (Eigen::Index c = 0; c < m.points().cols(); ++c) head.push_back("x" + std::to_string(c));
  head.push_back("weight");
  CsvTable pts(head);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index c = 0; c < m.points().cols(); ++c) row.push_back(format_real(m.points()(i, c)));
    row.push_back(format_real(m.weights()[i]));
    pts.add_row(row);
  }
  out.add("points.csv", pts.str());
  CsvTable spec({"lambda", "multiplicity"});
  for (std::size_t i = 0; i < m.spectrum().size(); ++i)
    spec.add_row({format_real(m.spectrum().uniques[i]), std::to_string(m.spectrum().multiplicities[i])});
  out.add("spectrum.csv", spec.str());
  CsvTable phi({"k", "lambda", "point", "value"});
  for (Eigen::Index k = 0; k < m.bands(); ++k)
    for (Eigen::Index i = 0; i < m.size(); ++i)
      phi.add_row({std::to_string(k), format_real(m.eigenvalues()[k]), std::to_string(i),
                   format_real(m.eigenfunctions()(k, i))});
  out.add("eigenfunctions.csv", phi.str());
  if (m.mesh()) {
    std::ostringstream off;
    write_off(off, Mesh{m.mesh()->vertices, m.mesh()->faces});
    out.add("mesh.off", off.str());
  }
  out.commit({{"command", "manifold export"}, {"manifold", m.params()}, {"manifold_id", m.id()}});
}

// ---------------------------------------------------------------------------
// Scatter

int run_scatter(const ExperimentConfig& cfg) {
  const auto m = resolve_manifold(cfg.manifold);
  const auto bank = resolve_bank(m, cfg.bank);
  const auto f = resolve_signal(m, cfg.signal);
  const auto s = scatter(m, bank, f, cfg.max_order);
  OutputSet out(cfg.output_dir);
  out.add("coefficients.csv", scattering_values_csv(s).str());
  out.add("summary.csv", scattering_summary_csv(s).str());
  json manifest = scattering_manifest(m, bank, s);
  manifest["command"] = "scatter";
  manifest["signal"] = cfg.signal;
  manifest["config"] = cfg.raw;
  out.commit(manifest);
  const auto e = s.energy_by_order();
  std::cout << "paths: " << s.size() << "\n";
  for (std::size_t k = 0; k < e.size(); ++k) std::cout << "order " << k << " energy: " << format_real(e[k]) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Impulse demo

struct DemoFlags {
  std::string mesh_path;
  int k = 64;
  int subdivisions = 3;
  std::string generator = "gaussian";
  std::vector<double> scales{1.0, 2.0, 4.0};
  std::vector<int> vertices;
  double radial_bin = 0.05;
  double edge_value = 1e-2;
  std::string out_dir = "demo";
};

int run_demo(const DemoFlags& d) {
  const bool fallback = d.mesh_path.empty();
  const Mesh mesh = fallback ? icosphere(d.subdivisions) : load_mesh(d.mesh_path);
  if (fallback) std::cout << "no mesh given; using icosphere(" << d.subdivisions << ")\n";
  const auto m = mesh_spectral(mesh, d.k);
  const auto g = generator_by_name(d.generator);
  ImpulseOptions opt;
  opt.edge_value = d.edge_value;
  opt.Js.clear();
  for (double s : d.scales) {
    const double j = std::log2(s);
    if (!(s > 0.0) || j != std::round(j)) throw ConfigError("scales must be powers of two");
    opt.Js.push_back(static_cast<int>(j));
  }
  const auto verts = d.vertices.empty() ? default_dirac_vertices(m) : d.vertices;
  auto r = impulse_experiment(m, g, verts, opt);
  const auto resp = impulse_responses(m, g, verts, opt);

  std::vector<std::string> head{"vertex", "x", "y", "z"};
  for (int v : verts)
    for (int J : opt.Js) head.push_back("v" + std::to_string(v) + "_scale" + format_real(std::ldexp(1.0, J)));
  CsvTable values(head);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (int c = 0; c < 3; ++c) row.push_back(format_real(m.points()(i, c)));
    for (std::size_t a = 0; a < verts.size(); ++a)
      for (std::size_t s = 0; s < opt.Js.size(); ++s) row.push_back(format_real(resp.values[a][s][i]));
    values.add_row(row);
  }
  CsvTable radial({"vertex", "scale", "r", "mean", "spread", "count"});
  double deviation = 0.0;
  for (std::size_t a = 0; a < verts.size(); ++a)
    for (std::size_t s = 0; s < opt.Js.size(); ++s) {
      const Vec& v = resp.values[a][s];
      const double peak = v.cwiseAbs().maxCoeff();
      for (const auto& b : radial_profile(m, verts[a], v, d.radial_bin)) {
        radial.add_row({std::to_string(verts[a]), format_real(std::ldexp(1.0, opt.Js[s])), format_real(b.r),
                        format_real(b.mean), format_real(b.spread), std::to_string(b.count)});
        if (peak > 0.0) deviation = std::max(deviation, b.spread / peak);
      }
    }

  OutputSet out(d.out_dir);
  out.add("impulses.csv", values.str());
  out.add("support.csv", r.table.str());
  out.add("radial_profile.csv", radial.str());
  std::ostringstream off;
  write_off(off, mesh);
  out.add("mesh.off", off.str());
  json manifest = r.manifest;
  manifest["command"] = "demo-bunny";
  manifest["mesh"] = fallback ? json{{"icosphere", d.subdivisions}} : json{{"file", d.mesh_path}};
  manifest["k"] = d.k;
  manifest["manifold_id"] = m.id();
  manifest["radial_bin"] = d.radial_bin;
  manifest["max_relative_radial_spread"] = deviation;
  manifest["checks"] = r.checks_json();
  manifest["passed"] = r.passed();
  out.commit(manifest);
  for (const auto& c : r.checks)
    (c.pass ? std::cout : std::cerr) << (c.pass ? "PASS " : "FAIL ") << "demo." << c.name << ": " << c.detail << "\n";
  std::cout << "max relative radial spread: " << format_real(deviation) << "\n";
  return r.passed() ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// Verify

int run_verify(const fs::path& dir) {
  const json manifest = json::parse(read_file(dir / "manifest.json"), nullptr, false);
  if (manifest.is_discarded() || !manifest.contains("outputs")) throw ConfigError("no usable manifest in " + dir.string());
  int bad = 0;
  for (const auto& [name, hash] : manifest.at("outputs").items()) {
    std::string actual;
    try {
      actual = git_blob_sha1(read_file(dir / name));
    } catch (const Error&) {
      actual = "missing";
    }
    const bool ok = actual == hash.get<std::string>();
    bad += !ok;
    (ok ? std::cout : std::cerr) << (ok ? "OK " : "MISMATCH ") << name << " " << actual << "\n";
  }
  std::cout << (bad ? "verify failed" : "verify ok") << "\n";
  return bad ? kExitCheckFailed : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric scattering on compact manifolds"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_path, manifold_cache;
  std::vector<std::string> overrides;
  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--set", overrides, "override a config entry, e.g. --set bank.J=3");
    sub->add_option("--out-dir", out_dir, "output directory");
    sub->add_option("--manifold", manifold_cache, "cached manifold file (overrides the config's manifold)");
  };

  auto* manifold = app.add_subcommand("manifold", "build, inspect and export discretized manifolds");
  manifold->require_subcommand(1);
  ManifoldFlags mflags;
  std::string out_file = "manifold.gscat";
  auto* mbuild = manifold->add_subcommand("build", "build and cache a manifold");
  mflags.add_to(mbuild);
  mbuild->add_option("--out", out_file, "cache file");
  auto* minfo = manifold->add_subcommand("info", "print spectrum, multiplicities and orthonormality residual");
  mflags.add_to(minfo);
  minfo->add_option("--in", in_path, "cached manifold file");
  auto* mexport = manifold->add_subcommand("export", "write points, spectrum and eigenfunctions as CSV");
  mflags.add_to(mexport);
  mexport->add_option("--in", in_path, "cached manifold file");
  mexport->add_option("--out-dir", out_dir, "output directory")->required();

  auto* scat = app.add_subcommand("scatter", "scattering coefficients of one signal");
  add_config_flags(scat);

  auto* exp = app.add_subcommand("experiment", "run a verification experiment");
  std::string exp_name;
  exp->add_option("name", exp_name, "iso-invariance | diffeo-stability | frame-check | heat-trace")
      ->required()
      ->check(CLI::IsMember({"iso-invariance", "diffeo-stability", "frame-check", "heat-trace"}));
  add_config_flags(exp);

  DemoFlags demo;
  auto* dem = app.add_subcommand("demo-bunny", "impulse responses T_g δ_x on a mesh at three scales");
  dem->add_option("--mesh", demo.mesh_path, "OFF mesh (icosphere when omitted)");
  dem->add_option("--k", demo.k, "eigenpair count");
  dem->add_option("--subdivisions", demo.subdivisions, "icosphere subdivisions");
  dem->add_option("--generator", demo.generator, "heat | gaussian");
  dem->add_option("--scales", demo.scales, "scales 2^J")->delimiter(',');
  dem->add_option("--vertices", demo.vertices, "Dirac vertices")->delimiter(',');
  dem->add_option("--edge-value", demo.edge_value, "finest-scale filter value at the largest eigenvalue");
  dem->add_option("--radial-bin", demo.radial_bin, "bin width for the radial profile");
  dem->add_option("--out-dir", demo.out_dir, "output directory");

  auto* ver = app.add_subcommand("verify", "re-check the output hashes recorded in a manifest");
  std::string verify_dir;
  ver->add_option("dir", verify_dir, "output directory holding manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto experiment_config = [&]() {
    json raw = load_config(config_path, overrides);
    if (!out_dir.empty()) raw["output_dir"] = out_dir;
    if (!manifold_cache.empty()) raw["manifold"] = {{"cache", manifold_cache}};
    return parse_config(raw);
  };

  try {
    if (*mbuild) {
      const auto m = build_manifold(mflags.spec());
      save_manifold(m, out_file);
      std::cout << "cached " << to_string(m.kind()) << " (" << m.size() << " points, " << m.bands()
                << " eigenpairs) to " << out_file << "\n";
      return kExitOk;
    }
    if (*minfo) {
      print_info(manifold_from(in_path, mflags));
      return kExitOk;
    }
    if (*mexport) {
      export_manifold(manifold_from(in_path, mflags), out_dir);
      return kExitOk;
    }
    if (*scat) return run_scatter(experiment_config());
    if (*exp) {
      const auto cfg = experiment_config();
      if (exp_name == "iso-invariance") return run_iso_invariance(cfg);
      if (exp_name == "diffeo-stability") return run_diffeo_stability(cfg);
      if (exp_name == "frame-check") return run_frame_check(cfg);
      return run_heat_trace(cfg);
    }
    if (*dem) return run_demo(demo);
    if (*ver) return run_verify(verify_dir);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
