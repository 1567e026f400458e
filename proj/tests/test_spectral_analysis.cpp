#include <gtest/gtest.h>

#include "support.hpp"

using namespace vesselmode;

namespace {

const PencilContext& rigid_disk() {
  static const PencilContext c = assemble_rigid_pencil(fixtures::disk(0.3), 1.0, 1.0);
  return c;
}

const PencilContext& elastic_disk() {
  static const PencilContext c =
      assemble_elastic_pencil(fixtures::disk(0.3), fixtures::unit_circle(), 1.0, 1.0, WallMaterial::default_demo());
  return c;
}

StripScanConfig small_strip(double threshold) {
  StripScanConfig cfg;
  cfg.beta_max = 0.5;
  cfg.n_beta = 5;
  cfg.xi_max = 5.0;
  cfg.n_xi = 11;
  cfg.threshold = threshold;
  return cfg;
}

ModalRhs wall_load(const PencilContext& c, double g1, double g2, double g3) {
  ModalRhs r;
  const int nt = c.layout.nt;
  r.g = {VecC::Constant(nt, g1), VecC::Constant(nt, g2), VecC::Constant(nt, g3)};
  return r;
}

}  // namespace

TEST(Landscape, RigidMinimumSitsAtOrigin) {
  const auto L = sigma_min_landscape(rigid_disk(), small_strip(1e-3));
  Eigen::Index j, k;
  L.sigma.minCoeff(&j, &k);
  EXPECT_EQ(L.cfg.beta_at(int(j)), 0.0);
  EXPECT_EQ(L.cfg.xi_at(int(k)), 0.0);
}

TEST(Landscape, ElasticAxisIsRegular) {
  const auto L = sigma_min_landscape(elastic_disk(), StripScanConfig::axis(5.0, 11, 1e-6));
  EXPECT_GT(L.min(), 1e-6);
}

TEST(Landscape, HomogeneousUnderScaling) {
  PencilContext twice = elastic_disk();
  for (SpMatC* m : {&twice.A0, &twice.A1, &twice.A2, &twice.S0, &twice.S1, &twice.S2}) *m *= 2.0;
  for (cplx lam : {cplx(0.0, 0.5), cplx(0.2, -3.0)}) {
    const auto a = sigma_min(elastic_disk(), lam);
    const auto b = sigma_min(twice, lam);
    EXPECT_NEAR(b.sigma_min / a.sigma_min, 2.0, 1e-8);
    EXPECT_NEAR(b.sigma_rel / a.sigma_rel, 1.0, 1e-8);
  }
}

TEST(Landscape, ConjugateSymmetric) {
  const auto cs = fixtures::disk(0.3);
  const auto p = assemble_elastic_pencil(cs, fixtures::unit_circle(), 1.0, 2.0, WallMaterial::default_demo());
  const auto m = assemble_elastic_pencil(cs, fixtures::unit_circle(), 1.0, -2.0, WallMaterial::default_demo());
  for (cplx lam : {cplx(0.1, 1.0), cplx(-0.3, -2.5)})
    EXPECT_NEAR(sigma_min(m, std::conj(lam)).sigma_rel, sigma_min(p, lam).sigma_rel, 1e-10);
}

TEST(Landscape, CsvExport) {
  const auto L = sigma_min_landscape(elastic_disk(), StripScanConfig::axis(1.0, 3, 1e-6));
  std::ostringstream os;
  write_landscape_csv(os, L);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "re_lambda,im_lambda,sigma_min");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(ScanConfig, Validation) {
  StripScanConfig c;
  c.xi_max = 0.0;
  EXPECT_THROW(c.validate(), Error);
  StripScanConfig d;
  d.n_xi = 0;
  EXPECT_THROW(d.validate(), Error);
}

TEST(Spectrum, RigidZeroEigenvalueHasPressureKernel) {
  const auto& c = rigid_disk();
  const auto L = sigma_min_landscape(c, small_strip(1e-4));
  const auto rep = locate_eigenvalues_in_strip(c, L);
  ASSERT_EQ(rep.eigenvalues.size(), 1u);
  const auto& e = rep.eigenvalues[0];
  EXPECT_LT(std::abs(e.lambda), 1e-8);
  EXPECT_LT(e.residual, 1e-8);
  const VecC p = e.vector.segment(c.layout.off_p(), c.layout.nv);
  EXPECT_LT(e.vector.head(c.layout.off_p()).norm(), 1e-6);
  EXPECT_LT((p.array() - p[0]).matrix().norm() / p.norm(), 1e-6);
}

TEST(Spectrum, ZeroThresholdGivesEmptyReport) {
  const auto L = sigma_min_landscape(rigid_disk(), small_strip(0.0));
  const auto rep = locate_eigenvalues_in_strip(rigid_disk(), L);
  EXPECT_TRUE(rep.eigenvalues.empty());
  EXPECT_TRUE(rep.candidates.empty());
  EXPECT_TRUE(rep.unresolved.empty());
}

TEST(Spectrum, ElasticStripIsEigenvalueFree) {
  const auto& c = elastic_disk();
  StripScanConfig cfg = small_strip(1e-6);
  const auto L = sigma_min_landscape(c, cfg);
  const auto rep = locate_eigenvalues_in_strip(c, L);
  EXPECT_TRUE(rep.eigenvalues.empty());
  const auto b = estimate_beta_star(L, &rep);
  EXPECT_GT(b.beta_star, 0.0);
  const auto j = spectrum_json(rep, L, b);
  EXPECT_TRUE(j.contains("beta_star_estimate"));
}

TEST(Spectrum, RigidBetaStarOutsideExclusion) {
  StripScanConfig cfg = small_strip(1e-4);
  cfg.exclusion_radius = 0.05;
  const auto L = sigma_min_landscape(rigid_disk(), cfg);
  const auto rep = locate_eigenvalues_in_strip(rigid_disk(), L);
  EXPECT_GT(estimate_beta_star(L, &rep).beta_star, 0.0);
  // without the exclusion the λ = 0 kernel pins the estimate to zero
  cfg.exclusion_radius = 0.0;
  const auto L0 = sigma_min_landscape(rigid_disk(), cfg);
  EXPECT_EQ(estimate_beta_star(L0).beta_star, 0.0);
}

TEST(Spectrum, ElasticBetaStarAtTwoFrequencies) {
  for (double w : {1.0, 4.0}) {
    const auto c = assemble_elastic_pencil(fixtures::disk(0.3), fixtures::unit_circle(), 1.0, w,
                                           WallMaterial::default_demo());
    const auto L = sigma_min_landscape(c, small_strip(1e-6));
    EXPECT_GT(estimate_beta_star(L).beta_star, 0.0) << w;
  }
}

TEST(Resolvent, DataNorm) {
  const auto& c = elastic_disk();
  const ModalRhs rhs = wall_load(c, 1.0, 0.0, 0.0);
  const double g1 = std::sqrt(c.wall->weight() * rhs.g[0].squaredNorm());
  EXPECT_NEAR(data_norm(c, rhs, 16.0), 4.0 * g1, 1e-12 * g1);
  // g₁ ≡ 1 on the unit circle has ‖g₁‖₀ = √(2π)
  EXPECT_NEAR(g1, std::sqrt(2.0 * pi), 1e-10);
}

TEST(Resolvent, ZeroDataGivesZeroRatios) {
  const auto probe = resolvent_scaling_probe(elastic_disk(), {8.0, 16.0}, ModalRhs{});
  for (const auto& s : probe.samples) {
    EXPECT_EQ(s.r_v, 0.0);
    EXPECT_EQ(s.r_grad, 0.0);
    EXPECT_EQ(s.r_p, 0.0);
    EXPECT_EQ(s.r_u, 0.0);
  }
}

TEST(Resolvent, FloorIsEnforced) {
  try {
    resolvent_scaling_probe(elastic_disk(), {1.0}, ModalRhs{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
  EXPECT_THROW(resolvent_scaling_probe(rigid_disk(), {8.0}, ModalRhs{}), Error);
}

TEST(Resolvent, VelocityDecaySlope) {
  const auto& c = elastic_disk();
  const auto probe = resolvent_scaling_probe(c, {8.0, 16.0, 32.0}, wall_load(c, 0.0, 1.0, 1.0));
  EXPECT_GE(probe.slope_v, -2.4);
  EXPECT_LE(probe.slope_v, -1.6);
}
