#include "gscat/gscat.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <map>

using namespace gscat;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("gscat_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Runs the tool inside the scratch directory; returns the exit status.
  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" + GSCAT_CLI_PATH + "' " + args + " > stdout.txt 2> stderr.txt";
    const int raw = std::system(cmd.c_str());
    out_ = read_file(dir_ / "stdout.txt");
    err_ = read_file(dir_ / "stderr.txt");
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }

  void write(const std::string& name, const std::string& contents) { write_file_atomic(dir_ / name, contents); }
  std::string slurp(const std::string& name) { return read_file(dir_ / name); }
  json manifest(const std::string& sub) { return json::parse(slurp(sub + "/manifest.json")); }

  fs::path dir_;
  std::string out_, err_;
};

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

bool check_passed(const json& m, const std::string& name) {
  for (const auto& c : m.at("checks"))
    if (c.at("name") == name) return c.at("pass").get<bool>();
  throw std::runtime_error("no check " + name);
}

}  // namespace

TEST_F(Cli, ManifoldBuildWritesLoadableCache) {
  ASSERT_EQ(run("manifold build --kind circle --n 128 --kmax 32 --out c.gscat"), 0) << err_;
  const auto m = load_manifold(dir_ / "c.gscat");
  EXPECT_EQ(m.size(), 128);
  EXPECT_EQ(m.bands(), 65);
  EXPECT_EQ(m.id(), build_circle(128, 32).id());
  ASSERT_EQ(run("manifold info --in c.gscat"), 0);
  EXPECT_NE(out_.find("points: 128"), std::string::npos);
}

TEST_F(Cli, ManifoldInfoSphereMultiplicities) {
  ASSERT_EQ(run("manifold info --kind sphere --lmax 3"), 0) << err_;
  EXPECT_NE(out_.find("multiplicities: 1,3,5,7\n"), std::string::npos) << out_;
  EXPECT_NE(out_.find("orthonormality_residual: "), std::string::npos);
}

TEST_F(Cli, ManifoldBuildFromMeshFile) {
  Mesh mesh = icosphere(2);
  mesh.vertices.col(0) *= 1.5;
  std::ostringstream off;
  write_off(off, mesh);
  write("ellipsoid.off", off.str());
  ASSERT_EQ(run("manifold build --kind mesh --file ellipsoid.off --k 16 --out e.gscat"), 0) << err_;
  const auto m = load_manifold(dir_ / "e.gscat");
  EXPECT_EQ(m.bands(), 16);
  EXPECT_EQ(m.size(), mesh.vertices.rows());
  ASSERT_EQ(run("manifold export --in e.gscat --out-dir ex"), 0) << err_;
  EXPECT_TRUE(fs::exists(dir_ / "ex/mesh.off"));
  EXPECT_EQ(run("verify ex"), 0) << err_;
}

TEST_F(Cli, ManifoldErrorsExitOne) {
  EXPECT_EQ(run("manifold build --kind klein --out k.gscat"), 1);
  EXPECT_NE(err_.find("error"), std::string::npos);
  EXPECT_EQ(run("manifold build --kind mesh --file missing.off"), 1);
  EXPECT_EQ(run("manifold info --in missing.gscat"), 1);
  EXPECT_EQ(run("manifold"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Cli, ScatterConstantSignalOnlyEmptyPathNonzero) {
  write("c.json", R"({"manifold":{"kind":"circle","n_points":64,"max_freq":16},"bank":{"J":1},
                      "signal":{"kind":"constant","value":2.0},"max_order":2,"output_dir":"sc"})");
  ASSERT_EQ(run("scatter --config c.json"), 0) << err_;
  const auto rows = parse_csv(slurp("sc/summary.csv"));
  ASSERT_GT(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "()");
  const double s0 = std::stod(rows[1][2]);
  EXPECT_NEAR(s0, 2.0 * std::sqrt(2 * kPi), 1e-12);
  for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_LE(std::stod(rows[i][2]), 1e-12 * s0) << rows[i][0];
}

TEST_F(Cli, ScatterZeroSignalAllZero) {
  ASSERT_EQ(run("scatter --set manifold.n_points=32 --set manifold.max_freq=8 --set signal.kind=zero --out-dir z"), 0)
      << err_;
  const auto rows = parse_csv(slurp("z/coefficients.csv"));
  ASSERT_GT(rows.size(), 1u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::stod(rows[i][2]), 0.0);
    EXPECT_EQ(std::stod(rows[i][3]), 0.0);
  }
}

TEST_F(Cli, ScatterCosMatchesLibraryAndReplaysByteForByte) {
  write("c.json", R"({"manifold":{"kind":"circle","n_points":64,"max_freq":16},"bank":{"g":"heat","J":1,"j_min":-2},
                      "signal":{"kind":"cos","k":1},"max_order":2})");
  ASSERT_EQ(run("scatter --config c.json --out-dir a"), 0) << err_;
  ASSERT_EQ(run("scatter --config c.json --out-dir b"), 0) << err_;
  EXPECT_EQ(slurp("a/coefficients.csv"), slurp("b/coefficients.csv"));
  EXPECT_EQ(slurp("a/summary.csv"), slurp("b/summary.csv"));

  const auto m = build_circle(64, 16);
  const auto bank = make_wavelet_bank(m, spectral::heat(1.0), 1, -2);
  Vec v(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) v[i] = std::cos(m.points()(i, 0));
  const auto s = scatter(m, bank, m.make_signal(v), 2);
  EXPECT_EQ(slurp("a/coefficients.csv"), scattering_values_csv(s).str());
  EXPECT_EQ(manifest("a").at("n_paths").get<std::size_t>(), s.size());
}

TEST_F(Cli, ScatterFromCachedManifoldAndSignalFile) {
  ASSERT_EQ(run("manifold build --kind circle --n 32 --kmax 8 --out c.gscat"), 0);
  std::string values;
  for (int i = 0; i < 32; ++i) values += format_real(std::sin(2 * kPi * i / 32)) + "\n";
  write("f.csv", values);
  ASSERT_EQ(run("scatter --manifold c.gscat --set signal.kind=file --set signal.path=f.csv --out-dir s"), 0) << err_;
  EXPECT_EQ(manifest("s").at("manifold_id").get<std::uint64_t>(), build_circle(32, 8).id());
  write("short.csv", "1\n2\n");
  EXPECT_EQ(run("scatter --manifold c.gscat --set signal.kind=file --set signal.path=short.csv --out-dir t"), 1);
}

TEST_F(Cli, ConfigErrorsExitOne) {
  write("bad.json", "{not json");
  EXPECT_EQ(run("scatter --config bad.json"), 1);
  EXPECT_EQ(run("scatter --config absent.json"), 1);
  EXPECT_EQ(run("scatter --set tolerances.isometry=-1"), 1);
  EXPECT_EQ(run("scatter --set signal.kind=mystery"), 1);
  EXPECT_EQ(run("scatter --set noequals"), 1);
  EXPECT_EQ(run("experiment iso-invariance --set bank.g=gaussian"), 1);
  EXPECT_NE(err_.find("heat"), std::string::npos);
  EXPECT_EQ(run("experiment nonsense"), 1);
}

TEST_F(Cli, VerifyDetectsTampering) {
  ASSERT_EQ(run("scatter --set manifold.n_points=32 --set manifold.max_freq=8 --out-dir v"), 0);
  EXPECT_EQ(run("verify v"), 0);
  EXPECT_NE(out_.find("verify ok"), std::string::npos);
  const auto hashes = manifest("v").at("outputs");
  EXPECT_EQ(hashes.size(), 2u);
  // git hash-object of the file contents
  EXPECT_EQ(hashes.at("summary.csv").get<std::string>().size(), 40u);
  write("v/summary.csv", slurp("v/summary.csv") + "x\n");
  EXPECT_EQ(run("verify v"), 2);
  EXPECT_NE(err_.find("MISMATCH summary.csv"), std::string::npos);
  fs::remove(dir_ / "v/coefficients.csv");
  EXPECT_EQ(run("verify v"), 2);
  EXPECT_EQ(run("verify nowhere"), 1);
}

TEST_F(Cli, BlobHashMatchesGit) {
  write("h/hello.txt", "hello\n");
  write("h/manifest.json", R"({"outputs":{"hello.txt":"ce013625030ba8dba906f756967f9e9ca394464a"}})");
  EXPECT_EQ(run("verify h"), 0) << err_ << out_;
}

TEST_F(Cli, IsoInvarianceIdentityIsZeroAndPasses) {
  ASSERT_EQ(run("experiment iso-invariance --set manifold.n_points=64 --set manifold.max_freq=16 "
                "--set deformation.param=0 --out-dir iso"),
            0)
      << err_;
  const auto rows = parse_csv(slurp("iso/table.csv"));
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::stod(rows[i][1]), 1e-12);
  EXPECT_TRUE(check_passed(manifest("iso"), "exact_invariance"));
  EXPECT_TRUE(fs::exists(dir_ / "iso/series_distance.csv"));
}

TEST_F(Cli, IsoInvarianceFailureListsInvariant) {
  write("c.json", R"({"manifold":{"kind":"circle","n_points":64,"max_freq":16},
                      "tolerances":{"min_decay_per_doubling":1000}})");
  EXPECT_EQ(run("experiment iso-invariance --config c.json --set deformation.param=0.37 --out-dir iso"), 2);
  EXPECT_NE(err_.find("FAIL iso-invariance.middle_decay_per_doubling"), std::string::npos) << err_;
  EXPECT_FALSE(manifest("iso").at("passed").get<bool>());
}

TEST_F(Cli, DiffeoStabilityColumnsMonotone) {
  run("experiment diffeo-stability --set manifold.n_points=64 --set manifold.max_freq=16 --out-dir ds");
  const auto m = manifest("ds");
  for (const char* c : {"zero_at_identity", "commutator_increasing", "a1_increasing", "a2_increasing", "a3_increasing",
                        "linear_small_tau"})
    EXPECT_TRUE(check_passed(m, c)) << c;
  const auto rows = parse_csv(slurp("ds/table.csv"));
  EXPECT_EQ(rows.size(), 7u);
  EXPECT_TRUE(fs::exists(dir_ / "ds/series_commutator.csv"));
}

TEST_F(Cli, FrameCheckReportsBothBoundPairs) {
  EXPECT_EQ(run("experiment frame-check --set manifold.n_points=128 --set manifold.max_freq=32 "
                "--set bank.normalize=false --set n_signals=20 --out-dir fc"),
            2);
  const auto m = manifest("fc");
  EXPECT_TRUE(check_passed(m, "operator_sandwich"));
  EXPECT_TRUE(check_passed(m, "isometry_residual"));
  EXPECT_NEAR(m.at("operator_B").get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(m.at("B").get<double>(), 2.0, 1e-6);
  EXPECT_NE(out_.find("PASS frame-check.operator_sandwich"), std::string::npos);
}

TEST_F(Cli, HeatTracePasses) {
  EXPECT_EQ(run("experiment heat-trace --set manifold.n_points=256 --set manifold.max_freq=64 --out-dir ht"), 0) << err_;
  EXPECT_TRUE(manifest("ht").at("passed").get<bool>());
  EXPECT_EQ(run("experiment heat-trace --set manifold.kind=sphere --set manifold.l_max=20 --set alphas=[0] "
                "--set tolerances.slope_relative=0.2 --out-dir hs"),
            0)
      << err_;
}

TEST_F(Cli, ExperimentOutputsAreReproducible) {
  const std::string args = "experiment diffeo-stability --set manifold.n_points=32 --set manifold.max_freq=8 "
                           "--set deformation.taus=[0,0.05,0.1] --out-dir r";
  const int a = run(args);
  std::map<std::string, std::string> first;
  for (const char* f : {"manifest.json", "table.csv", "series_a3.csv"}) first[f] = slurp(std::string("r/") + f);
  const int b = run(args);
  EXPECT_EQ(a, b);
  for (const auto& [f, contents] : first) EXPECT_EQ(slurp("r/" + f), contents) << f;
}

TEST_F(Cli, DemoOnIcosphere) {
  ASSERT_EQ(run("demo-bunny --out-dir demo"), 0) << err_;
  for (const char* f : {"impulses.csv", "support.csv", "radial_profile.csv", "mesh.off", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir_ / "demo" / f)) << f;
  const auto m = manifest("demo");
  EXPECT_TRUE(check_passed(m, "support_radius_increasing"));
  EXPECT_TRUE(check_passed(m, "mass_preserved"));
  const auto rows = parse_csv(slurp("demo/impulses.csv"));
  EXPECT_EQ(rows.size(), 643u);
  EXPECT_EQ(rows[0].size(), 4u + 9u);
  EXPECT_EQ(run("verify demo"), 0);
}

TEST_F(Cli, DemoOnMeshFile) {
  Mesh mesh = icosphere(3);
  mesh.vertices.col(2) *= 0.8;
  std::ostringstream off;
  write_off(off, mesh);
  write("blob.off", off.str());
  ASSERT_EQ(run("demo-bunny --mesh blob.off --k 48 --vertices 0,5 --scales 1,2,4 --out-dir d"), 0) << err_;
  EXPECT_EQ(manifest("d").at("vertices"), json({0, 5}));
  EXPECT_EQ(run("demo-bunny --scales 3 --out-dir e"), 1);
  EXPECT_EQ(run("demo-bunny --mesh nothing.off"), 1);
}
