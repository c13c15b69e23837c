#include "gscat/experiments.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gscat;

namespace {

const ExperimentCheck& find_check(const ExperimentReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return c;
  throw std::runtime_error("missing check " + name);
}

bool has_check(const ExperimentReport& r, const std::string& name) {
  return std::any_of(r.checks.begin(), r.checks.end(), [&](const auto& c) { return c.name == name; });
}

std::size_t rows(const ExperimentReport& r) {
  const auto s = r.table.str();
  return std::count(s.begin(), s.end(), '\n') - 1;
}

}  // namespace

TEST(IsoInvariance, IdentityIsExactlyInvariant) {
  const auto m = build_circle(64, 16);
  std::mt19937_64 rng(1);
  const auto f = random_bandlimited(m, rng);
  const auto r = isometry_invariance_experiment(m, spectral::heat(1.0), {-1, 0, 1, 2}, f,
                                                deform::circle_rotation(0.0), {1, -6});
  EXPECT_TRUE(r.passed());
  EXPECT_TRUE(find_check(r, "exact_invariance").pass);
  EXPECT_FALSE(has_check(r, "middle_decay_per_doubling"));
  EXPECT_EQ(rows(r), 4u);
}

TEST(IsoInvariance, GridAlignedRotationDecays) {
  const auto m = build_circle(64, 16);
  std::mt19937_64 rng(1);
  const auto f = random_bandlimited(m, rng);
  const auto r = isometry_invariance_experiment(m, spectral::heat(1.0), {-1, 0, 1, 2}, f,
                                                deform::circle_rotation(2 * kPi * 5 / 64), {1, -6});
  EXPECT_TRUE(r.passed()) << r.checks_json().dump();
  EXPECT_FALSE(has_check(r, "exact_invariance"));
  EXPECT_TRUE(has_check(r, "middle_decay_per_doubling"));
}

TEST(IsoInvariance, OffGridRotationDistanceDecreasesWithScale) {
  const auto m = build_circle(128, 32);
  std::mt19937_64 rng(2);
  const auto f = random_bandlimited(m, rng);
  const auto r = isometry_invariance_experiment(m, spectral::heat(1.0), {-2, -1, 0, 1, 2}, f,
                                                deform::circle_rotation(0.37), {1, -6});
  EXPECT_TRUE(find_check(r, "distance_nonincreasing").pass);
  EXPECT_TRUE(find_check(r, "normalized_ratio_bounded").pass);
  EXPECT_TRUE(has_check(r, "middle_decay_per_doubling"));
  const auto& d = r.series.at("distance");
  ASSERT_EQ(d.size(), 5u);
  EXPECT_GT(d.front().second, 0.0);
  EXPECT_LT(d.back().second, d.front().second);
  EXPECT_NEAR(r.manifest.at("sup_disp").get<double>(), 0.37, 1e-12);
}

TEST(IsoInvariance, DistanceMatchesDirectComputation) {
  const auto m = build_sphere(5);
  std::mt19937_64 rng(3);
  const auto f = random_bandlimited(m, rng);
  const auto z = deform::sphere_rotation_z(0.3);
  const auto r = isometry_invariance_experiment(m, spectral::heat(1.0), {0}, f, z, {2, -5});
  const auto bank = make_wavelet_bank(m, spectral::heat(1.0), 0, -5);
  const double direct = scattering_distance(m, scatter(m, bank, f, 2), scatter(m, bank, pullback(m, z, f), 2));
  EXPECT_NEAR(r.series.at("distance")[0].second, direct, 1e-14);
}

TEST(BoundWeights, CircleHeatOracle) {
  const auto m = build_circle(64, 8);
  const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(0.5));
  double l2 = 1.0, a3 = 0.0, a1 = 0.0;  // λ = k², d = 1: λ^{d/2} = λ^{(d+1)/4} = k
  for (int k = 1; k <= 8; ++k) {
    const double e = std::exp(-0.5 * k * k);
    l2 += 2 * e * e;
    a3 += 2 * e * k;
    a1 += 2 * e * k;
  }
  const auto w = bound_weights(m, eta);
  EXPECT_NEAR(w.l2, std::sqrt(l2), 1e-14);
  EXPECT_NEAR(w.a3, a3, 1e-14);
  EXPECT_NEAR(w.a1, a1, 1e-14);
}

TEST(TwoPointHomogeneous, Kinds) {
  EXPECT_TRUE(two_point_homogeneous(build_circle(8, 2)));
  EXPECT_TRUE(two_point_homogeneous(build_sphere(2)));
  EXPECT_FALSE(two_point_homogeneous(build_flat_torus(8, 8, 1, 1, 2)));
}

TEST(DiffeoStability, CircleWarpFamilyStructure) {
  const auto m = build_circle(64, 16);
  const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(1.0));
  const std::vector<double> taus{0.0, 0.01, 0.02, 0.05, 0.1, 0.2};
  const auto r = diffeo_stability_experiment(m, eta, taus, [](double t) { return deform::circle_warp(t); });
  for (const char* name : {"zero_at_identity", "commutator_increasing", "a1_increasing", "a2_increasing",
                           "a3_increasing", "linear_small_tau"})
    EXPECT_TRUE(find_check(r, name).pass) << name << ": " << find_check(r, name).detail;
  EXPECT_TRUE(has_check(r, "shape_a3_dominates"));
  EXPECT_TRUE(has_check(r, "shape_a1_dominates"));
  EXPECT_EQ(rows(r), taus.size());
  const auto& a2 = r.series.at("a2");
  for (std::size_t i = 0; i < taus.size(); ++i) EXPECT_NEAR(a2[i].second, taus[i] / (1 - taus[i]), 1e-6);
  const double C = r.manifest.at("fitted_constants").at("shape_a3").get<double>();
  EXPECT_GT(C, 0.0);
}

TEST(DiffeoStability, FittedShapeMatchesAtAnchor) {
  const auto m = build_circle(64, 16);
  const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(1.0));
  const std::vector<double> taus{0.05, 0.1};
  const auto r = diffeo_stability_experiment(m, eta, taus, [](double t) { return deform::circle_warp(t); });
  const auto w = bound_weights(m, eta);
  const double comm = r.series.at("commutator")[0].second;
  const double shape = w.l2 * r.series.at("a2")[0].second + w.a3 * r.series.at("a3")[0].second;
  EXPECT_NEAR(r.manifest.at("fitted_constants").at("shape_a3").get<double>(), comm / shape, 1e-12);
}

TEST(DiffeoStability, TorusHasNoA1Shape) {
  const auto m = build_flat_torus(8, 16, 1.0, 2.0, 3);
  const auto eta = SpectralFunction::from_closed_form(m, spectral::heat(0.5));
  const auto r = diffeo_stability_experiment(m, eta, {0.0, 0.05, 0.1},
                                             [](double t) { return deform::torus_warp(1.0, 2.0, t); }, {});
  EXPECT_FALSE(has_check(r, "shape_a1_dominates"));
  EXPECT_TRUE(has_check(r, "shape_a3_dominates"));
  EXPECT_FALSE(r.manifest.at("two_point_homogeneous").get<bool>());
}

TEST(FrameCheck, UnnormalizedCircleBankIsIsometry) {
  const auto m = build_circle(256, 64);
  const auto g = spectral::heat(1.0);
  const auto bank = make_wavelet_bank(m, g, 2, default_j_min(g.eval, 2, m.spectrum().uniques.back()), false);
  const auto r = frame_check_experiment(m, bank, {30, 1, 1e-3});
  EXPECT_TRUE(find_check(r, "operator_sandwich").pass);
  EXPECT_TRUE(find_check(r, "isometry_residual").pass);
  EXPECT_EQ(rows(r), 30u);
}

TEST(FrameCheck, NormalizedBankSatisfiesOperatorBoundsOnly) {
  const auto m = build_circle(256, 64);
  const auto g = spectral::heat(1.0);
  const auto bank = make_wavelet_bank(m, g, 2, default_j_min(g.eval, 2, m.spectrum().uniques.back()));
  const auto r = frame_check_experiment(m, bank, {30, 1, 1e-3});
  EXPECT_TRUE(find_check(r, "operator_sandwich").pass);
  EXPECT_FALSE(find_check(r, "isometry_residual").pass);
  EXPECT_NEAR(r.manifest.at("B").get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(r.manifest.at("operator_B").get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(r.manifest.at("operator_A").get<double>(), 0.5, 1e-6);
}

TEST(HeatTraceExperiment, CircleSlopes) {
  const auto r = heat_trace_experiment(build_circle(256, 64));
  EXPECT_TRUE(r.passed()) << r.checks_json().dump();
  const auto& slopes = r.manifest.at("slopes");
  ASSERT_EQ(slopes.size(), 2u);
  EXPECT_NEAR(slopes[0].at("expected").get<double>(), -0.5, 1e-15);
  EXPECT_NEAR(slopes[1].at("expected").get<double>(), -1.0, 1e-15);
}

TEST(HeatTraceExperiment, FlagsTruncatedBand) {
  const auto r = heat_trace_experiment(build_circle(16, 4));
  EXPECT_FALSE(find_check(r, "tail_alpha_0").pass);
}

TEST(Impulse, DiracAndSupportRadius) {
  const auto m = mesh_spectral(icosphere(2), 36);
  const auto d = dirac(m, 5);
  EXPECT_NEAR(inner_product(m, d, m.make_signal(Vec(Vec::Ones(m.size())))).real(), 1.0, 1e-12);
  Vec spike = Vec::Zero(m.size());
  spike[5] = 1.0;
  EXPECT_EQ(support_radius(m, 5, spike, 0.95), 0.0);
  const Vec flat = Vec::Ones(m.size());
  double far = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) far = std::max(far, m.distance(5, i));
  EXPECT_EQ(support_radius(m, 5, flat, 1.0), far);
  const auto v = default_dirac_vertices(m);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(m.points()(v[0], 1), m.points().col(1).maxCoeff());
}

TEST(Impulse, GaussianSupportGrowsWithScale) {
  const auto m = mesh_spectral(icosphere(2), 36);
  const auto r = impulse_experiment(m, spectral::gaussian(1.0), default_dirac_vertices(m));
  EXPECT_TRUE(r.passed()) << r.checks_json().dump();
  EXPECT_EQ(rows(r), 9u);
  EXPECT_THROW(impulse_responses(m, spectral::gaussian(1.0), {-1}), DomainError);
}

TEST(Impulse, FinestScaleReachesEdgeValueAtBandEdge) {
  const auto m = mesh_spectral(icosphere(2), 36);
  const double lmax = m.eigenvalues().maxCoeff();
  for (const auto& g : {spectral::gaussian(1.0), spectral::heat(1.0)}) {
    ImpulseOptions opt;
    opt.Js = {1, 2, 3};
    const auto r = impulse_responses(m, g, {0}, opt);
    EXPECT_NEAR(g(2.0 * lmax / r.lambda_ref), opt.edge_value, 1e-12) << g.tag;
  }
  ImpulseOptions fixed;
  fixed.lambda_ref = 7.0;
  EXPECT_EQ(impulse_responses(m, spectral::heat(1.0), {0}, fixed).lambda_ref, 7.0);
  fixed.lambda_ref = 0.0;
  fixed.edge_value = 2.0;
  EXPECT_THROW(impulse_responses(m, spectral::heat(1.0), {0}, fixed), ConfigError);
  EXPECT_THROW(impulse_responses(m, spectral::constant(1.0), {0}, ImpulseOptions{}), ConfigError);
}

TEST(Impulse, SupportGrowsOnAnisotropicMesh) {
  Mesh mesh = icosphere(3);
  mesh.vertices.col(2) *= 0.5;
  const auto m = mesh_spectral(mesh, 48);
  auto v = default_dirac_vertices(m);
  v.push_back(0);
  v.push_back(5);
  for (const char* name : {"gaussian", "heat"}) {
    const auto r = impulse_experiment(m, generator_by_name(name), v);
    EXPECT_TRUE(r.passed()) << name << " " << r.checks_json().dump();
  }
}
