#include "gscat/spectral_ops.hpp"

#include <gtest/gtest.h>

#include <random>
#include <unistd.h>

using namespace gscat;

namespace {

Signal sample(const SpectralManifold& m, const std::function<double(const Vec&)>& fn) {
  Vec v(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) v[i] = fn(m.points().row(i).transpose());
  return m.make_signal(v);
}

}  // namespace

TEST(ApplyOperator, IdentityOnBand) {
  const auto m = build_circle(64, 16);
  std::mt19937_64 rng(1);
  const auto f = random_bandlimited(m, rng, true);
  const auto one = SpectralFunction::from_closed_form(m, spectral::constant(1.0));
  EXPECT_LE(norm(m, apply_operator(m, one, f) - f), 1e-12 * norm(m, f));
}

TEST(ApplyOperator, HeatOnEigenfunction) {
  const auto m = build_circle(64, 16);
  const auto f = sample(m, [](const Vec& x) { return std::cos(3 * x[0]); });
  const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(1.0));
  const auto expected = Complex(std::exp(-9.0)) * f;
  EXPECT_LE(norm(m, apply_operator(m, eta, f) - expected), 1e-15);
}

TEST(ApplyOperator, MeanProjection) {
  const auto m = build_circle(64, 16);
  const auto f = sample(m, [](const Vec& x) { return 2.0 + std::sin(x[0]); });
  const auto eta = SpectralFunction::eigenspace_indicator(m, 0.0);
  const auto out = apply_operator(m, eta, f);
  for (Eigen::Index i = 0; i < m.size(); ++i) EXPECT_NEAR(std::abs(out.values[i] - 2.0), 0.0, 1e-13);
}

TEST(ApplyOperator, FourierMultiplierIdentity) {
  std::mt19937_64 rng(4);
  for (const auto& m : {build_circle(64, 16), build_sphere(5)}) {
    const auto f = random_bandlimited(m, rng, true);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> per;
    for (std::size_t g = 0; g < m.spectrum().size(); ++g) per.push_back(u(rng));
    const auto eta = SpectralFunction::from_unique_table(m, per);
    const CVec lhs = fourier(m, apply_operator(m, eta, f));
    const CVec rhs = (eta.table().cast<Complex>().array() * fourier(m, f).array()).matrix();
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12 * rhs.norm());
  }
}

TEST(ApplyOperator, NonexpansiveForBoundedEta) {
  const auto m = build_sphere(6);
  std::mt19937_64 rng(8);
  const auto eta = SpectralFunction::from_closed_form(m, spectral::gaussian(0.3));
  for (int t = 0; t < 100; ++t) {
    const auto f = random_bandlimited(m, rng);
    EXPECT_LE(norm(m, apply_operator(m, eta, f)), norm(m, f) * (1 + 1e-12));
  }
}

TEST(ApplyOperator, RejectsForeignSpectralFunction) {
  const auto a = build_circle(32, 8), b = build_circle(32, 7);
  const auto eta = SpectralFunction::from_closed_form(b, spectral::heat(1.0));
  EXPECT_THROW(apply_operator(a, eta, a.eigenfunction(0)), MismatchError);
}

TEST(SpectralFunction, ConstantOnEigenspacesAndDilation) {
  const auto m = build_sphere(4);
  const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(1.0));
  for (const auto& [b, e] : m.spectrum().ranges)
    for (int k = b; k < e; ++k) EXPECT_EQ(eta[k], eta[b]);
  const auto d = eta.dilate(m, 2);
  for (Eigen::Index k = 0; k < m.bands(); ++k) EXPECT_NEAR(d[k], std::exp(-4.0 * m.eigenvalues()[k]), 1e-15);
  const auto tab = SpectralFunction::from_table(m, eta.table());
  EXPECT_THROW(tab.dilate(m, 1), DomainError);
  EXPECT_THROW(SpectralFunction::from_table(m, Vec::Zero(3)), MismatchError);
}

TEST(SpectralFunction, NormalizedDividesByRootMultiplicity) {
  const auto m = build_sphere(3);
  const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(1.0), true);
  EXPECT_NEAR(eta[1], std::exp(-2.0) / std::sqrt(3.0), 1e-15);
  EXPECT_NEAR(eta[0], 1.0, 1e-15);
}

TEST(KernelMatrix, ReproducingKernelOfBand) {
  const auto m = build_circle(64, 16);
  const auto K = kernel_matrix(m, SpectralFunction::from_closed_form(m, spectral::constant(1.0)));
  std::mt19937_64 rng(2);
  const auto f = random_bandlimited(m, rng);
  EXPECT_LE(norm(m, apply_kernel(m, K, f) - f), 1e-12 * norm(m, f));
}

TEST(KernelMatrix, EigenspaceKernelIsIdempotent) {
  const auto m = build_sphere(4);
  const auto K = kernel_matrix(m, SpectralFunction::eigenspace_indicator(m, 6.0)).entries;
  const Mat KK = K * m.weights().asDiagonal() * K;
  EXPECT_LE((KK - K).cwiseAbs().maxCoeff(), 1e-12 * K.cwiseAbs().maxCoeff());
}

TEST(KernelMatrix, CircleHeatMatchesDirectSummation) {
  const auto m = build_circle(32, 8);
  const auto K = kernel_matrix(m, SpectralFunction::from_closed_form(m, spectral::heat(1.0))).entries;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i)
    for (Eigen::Index j = 0; j < m.size(); ++j) {
      const double d = m.points()(i, 0) - m.points()(j, 0);
      double s = 1.0 / (2.0 * kPi);
      for (int k = 1; k <= 8; ++k) s += std::exp(-double(k * k)) * std::cos(k * d) / kPi;
      worst = std::max(worst, std::abs(K(i, j) - s));
    }
  EXPECT_LE(worst, 1e-12);
}

TEST(KernelMatrix, MatrixAndSpectralApplicationAgree) {
  std::mt19937_64 rng(6);
  for (const auto& m : {build_circle(64, 16), build_sphere(5), build_flat_torus(12, 24, 1, 2, 4)}) {
    const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(0.3));
    const auto K = kernel_matrix(m, eta);
    for (int t = 0; t < 5; ++t) {
      const auto f = random_bandlimited(m, rng, true);
      const auto a = apply_kernel(m, K, f), b = apply_operator(m, eta, f);
      EXPECT_LE(norm(m, a - b), 1e-10 * norm(m, b));
    }
    EXPECT_LE((K.entries - K.entries.transpose()).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(KernelMatrix, EigenspaceKernelInvariantUnderBasisRotation) {
  const auto m = build_sphere(3);
  const double lambda = 6.0;
  const auto [b, e] = m.spectrum().ranges[*m.spectrum().find(lambda)];
  const Mat K = kernel_matrix(m, SpectralFunction::eigenspace_indicator(m, lambda)).entries;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd;
  Mat G(e - b, e - b);
  for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = nd(rng);
  const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ();
  const Mat rotated = Q * m.eigenfunctions().middleRows(b, e - b);
  const Mat K2 = rotated.transpose() * rotated;
  EXPECT_LE((K - K2).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(KernelL2Norm, ClosedFormsAndQuadratureOracle) {
  const auto m = build_circle(40, 8);
  EXPECT_NEAR(kernel_l2_norm(SpectralFunction::from_closed_form(m, spectral::constant(1.0))), std::sqrt(17.0), 1e-14);
  EXPECT_EQ(kernel_l2_norm(SpectralFunction::from_closed_form(m, spectral::constant(0.0))), 0.0);
  const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(1.0));
  const Mat K = kernel_matrix(m, eta).entries;
  // ∬ |K(x, y)|² dx dy by the product quadrature.
  const double dq = std::sqrt((m.weights() * m.weights().transpose()).cwiseProduct(K.cwiseAbs2()).sum());
  EXPECT_NEAR(kernel_l2_norm(eta), dq, 1e-8 * dq);
}

TEST(KernelGradientSup, ConstantKernelIsFlat) {
  const auto m = build_circle(64, 8);
  const auto K = kernel_matrix(m, SpectralFunction::eigenspace_indicator(m, 0.0));
  EXPECT_LE(kernel_gradient_sup(m, K), 1e-12);
}

TEST(KernelGradientSup, CircleEigenspaceKernelApproachesKOverPi) {
  // K^(k²)(θ, θ') = cos(k(θ − θ'))/π, so sup |∂K| = k/π.
  const int k = 5;
  double prev_err = 1e9;
  for (int n : {64, 256, 1024}) {
    const auto m = build_circle(n, 8);
    const auto K = kernel_matrix(m, SpectralFunction::eigenspace_indicator(m, k * k));
    const double est = kernel_gradient_sup(m, K);
    EXPECT_LE(est, k / kPi + 1e-12);
    const double err = k / kPi - est;
    EXPECT_LT(err, prev_err);
    prev_err = err;
  }
  EXPECT_LE(prev_err, 1e-3);
}

TEST(CheckRadial, CircleAndSphereAreRadial) {
  const auto c = build_circle(64, 16);
  const auto rc = check_radial(c, kernel_matrix(c, SpectralFunction::from_closed_form(c, spectral::heat(0.5))), 1e-8);
  EXPECT_TRUE(rc.is_radial);
  EXPECT_LE(rc.deviation, 1e-8);
  const auto s = build_sphere(6);
  const auto rs = check_radial(s, kernel_matrix(s, SpectralFunction::from_closed_form(s, spectral::heat(0.1))), 1e-6,
                               1e-9);
  EXPECT_TRUE(rs.is_radial);
  EXPECT_FALSE(rs.profile.empty());
}

TEST(CheckRadial, AnisotropicTorusIsNotRadial) {
  const auto t = build_flat_torus(16, 32, 1.0, 2.0, 4);
  const auto r = check_radial(t, kernel_matrix(t, SpectralFunction::from_closed_form(t, spectral::heat(0.2))), 1e-6);
  EXPECT_FALSE(r.is_radial);
  EXPECT_GT(r.deviation, 1e-2 * r.max_abs);
}

TEST(OperatorNorm, SpectralForm) {
  const auto m = build_circle(32, 8);
  EXPECT_EQ(operator_norm(SpectralFunction::from_closed_form(m, spectral::heat(1.0))), 1.0);
  EXPECT_EQ(operator_norm(SpectralFunction::eigenspace_indicator(m, 4.0)), 1.0);
}

TEST(OperatorNorm, PowerIterationMatchesDenseSvd) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-2, 2);
  for (const auto& m : {build_circle(48, 12), build_sphere(4)}) {
    Vec table(m.bands());
    for (Eigen::Index k = 0; k < table.size(); ++k) table[k] = u(rng);
    const auto eta = SpectralFunction::from_table(m, table);
    const auto K = kernel_matrix(m, eta);
    const double pi = operator_norm(m, K, 1e-8);
    const Vec s = m.weights().cwiseSqrt();
    const Mat B = s.asDiagonal() * K.entries * s.asDiagonal();
    const double svd = Eigen::JacobiSVD<Mat>(B).singularValues()[0];
    EXPECT_NEAR(pi, svd, 1e-6 * svd);
    EXPECT_NEAR(svd, table.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(OperatorNorm, PowerIterationReportsNonConvergence) {
  // Nearly tied singular values cannot converge in three iterations.
  auto id = [](const Vec& x) { return x; };
  try {
    Mat A(2, 2);
    A << 1.0, 0.0, 0.0, 0.999999;
    largest_singular_value([&](const Vec& x) { return Vec(A * x); }, [&](const Vec& x) { return Vec(A * x); }, 2,
                           1e-16, 3);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("last iterates"), std::string::npos);
  }
  EXPECT_NEAR(largest_singular_value(id, id, 4).value, 1.0, 1e-12);
}

TEST(ExportKernel, WritesDataAndSidecar) {
  const auto m = build_circle(8, 2);
  const auto K = kernel_matrix(m, SpectralFunction::from_closed_form(m, spectral::heat(1.0)));
  const auto dir = std::filesystem::temp_directory_path() / ("gscat_kernel_" + std::to_string(::getpid()));
  export_kernel(m, K, dir / "k");
  export_kernel(m, K, dir / "kb", true);
  const auto side = nlohmann::json::parse(read_file(dir / "k.json"));
  EXPECT_EQ(side.at("rows").get<int>(), 8);
  EXPECT_EQ(read_file(dir / "kb.bin").size(), 8u * 8u * 8u);
  const std::string csv = read_file(dir / "k.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
  std::filesystem::remove_all(dir);
}
