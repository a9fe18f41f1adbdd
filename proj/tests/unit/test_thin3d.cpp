#include <gtest/gtest.h>

#include <numbers>

#include "fixtures.hpp"
#include "vk/energy2d.hpp"
#include "vk/errors.hpp"
#include "vk/quadrature.hpp"
#include "vk/thin3d.hpp"

using namespace vk;
using namespace vk::testing;

namespace {

Jet2 linear_jet(double a0, double a1, double a2) {
  Jet2 j;
  j.f = a0;
  j.d1 << a1, a2;
  return j;
}

// Sine deflection with an in-plane stretch and a c-term, so every term of the ansatz is live.
Generator busy_generator() {
  Generator g = Generator::sine(0.8);
  g.u1 = [](double x1, double x2) {
    Jet2 j;
    j.f = 0.3 * x1 * x2 + 0.1 * x1 * x1;
    j.d1 << 0.3 * x2 + 0.2 * x1, 0.3 * x1;
    j.d2 << 0.2, 0.3, 0.3, 0.0;
    return j;
  };
  g.u2 = [](double x1, double) {
    Jet2 j;
    j.f = -0.2 * x1 * x1 * x1;
    j.d1 << -0.6 * x1 * x1, 0.0;
    j.d2 << -1.2 * x1, 0.0, 0.0, 0.0;
    j.d3[0](0, 0) = -1.2;
    return j;
  };
  g.c = [](double x1, double x2) {
    Jet2 j;
    j.f = 0.5 + x1 * x2;
    j.d1 << x2, x1;
    j.d2 << 0.0, 1.0, 1.0, 0.0;
    return j;
  };
  return g;
}

QuadratureSpec small_quad(int cells = 8) {
  QuadratureSpec q;
  q.cells1 = q.cells2 = cells;
  return q;
}

}  // namespace

TEST(Thin3d, ZeroGeneratorIsUndeformed) {
  const ThinDeformation def(Generator::zero(), 0.1);
  EXPECT_TRUE(def.scaled_gradient(0.3, 0.7, 0.2).isApprox(Mat3::Identity(), 0.0));
  EXPECT_EQ(def.scaled_second_gradient(0.3, 0.7, 0.2).squared_norm(), 0.0);
  const ThinEnergy e = energy_phi_h(def, MaterialSpec{}, small_quad(4));
  EXPECT_EQ(e.w_part, 0.0);
  EXPECT_EQ(e.p_part, 0.0);
  EXPECT_EQ(e.total, 0.0);
  EXPECT_EQ(dissipation_Dh(def, def, MaterialSpec{}, small_quad(4)), 0.0);
  for (const StrainSample& s : strain_Gh(def, small_quad(2))) EXPECT_EQ(s.g.norm(), 0.0);
  const AveragedDisplacement a = average_displacements(def, 0.4, 0.6);
  EXPECT_EQ(a.u.norm(), 0.0);
  EXPECT_EQ(a.v, 0.0);
}

TEST(Thin3d, LinearDeflectionGradient) {
  Generator g = Generator::zero();
  g.v = [](double x1, double) { return linear_jet(x1, 1.0, 0.0); };
  for (double h : {0.1, 0.05}) {
    const ThinDeformation def(g, h);
    Mat3 expected = Mat3::Identity();
    expected(2, 0) += h;
    expected(0, 2) -= h;
    expected(2, 2) -= 0.5 * h * h;
    for (double x3 : {-0.5, 0.0, 0.3}) {
      EXPECT_LE((def.scaled_gradient(0.2, 0.9, x3) - expected).norm(), 1e-15);
    }
  }
}

TEST(Thin3d, GradientsMatchFiniteDifferences) {
  const ThinDeformation def(busy_generator(), 0.2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> in(0.1, 0.9), across(-0.45, 0.45);
  const double e = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const Vec3 x(in(rng), in(rng), across(rng));
    const Mat3 F = def.scaled_gradient(x(0), x(1), x(2));
    const Tensor3 Z = def.scaled_second_gradient(x(0), x(1), x(2));
    for (int b = 0; b < 3; ++b) {
      Vec3 dx = Vec3::Zero();
      dx(b) = e;
      const double scale = b == 2 ? 1.0 / def.h : 1.0;
      const Vec3 col = scale *
                       (def.y(x(0) + dx(0), x(1) + dx(1), x(2) + dx(2)) -
                        def.y(x(0) - dx(0), x(1) - dx(1), x(2) - dx(2))) /
                       (2 * e);
      EXPECT_LE((col - F.col(b)).lpNorm<Eigen::Infinity>(), 1e-8) << "column " << b;
      const Mat3 dF = scale *
                      (def.scaled_gradient(x(0) + dx(0), x(1) + dx(1), x(2) + dx(2)) -
                       def.scaled_gradient(x(0) - dx(0), x(1) - dx(1), x(2) - dx(2))) /
                      (2 * e);
      for (int i = 0; i < 3; ++i) {
        for (int a = 0; a < 3; ++a) EXPECT_NEAR(Z(i, a, b), dF(i, a), 1e-8);
      }
    }
  }
}

TEST(Thin3d, SecondGradientIsSymmetric) {
  const ThinDeformation def(busy_generator(), 0.15);
  const Tensor3 Z = def.scaled_second_gradient(0.3, 0.6, 0.1);
  for (int i = 0; i < 3; ++i) EXPECT_EQ((Z.slice[i] - Z.slice[i].transpose()).norm(), 0.0);
}

TEST(Thin3d, PureBendEnergyApproachesPlate) {
  GammaOptions opt;
  opt.calibrate = false;
  opt.quad = small_quad(8);
  opt.reference_nodes = 65;
  const GammaReport r =
      gamma_ladder(Generator::pure_bend(1.0), std::nullopt, MaterialSpec{}, {0.2, 0.1, 0.05}, opt);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_NEAR(r.rows[0].phi0, 1.0 / 12.0, 1e-5);
  EXPECT_TRUE(r.energy_gaps_monotone);
  for (std::size_t k = 1; k < r.rows.size(); ++k) {
    EXPECT_LT(r.rows[k].energy_gap, r.rows[k - 1].energy_gap);
    EXPECT_GT(r.rows[k].energy_gap_ratio, 3.5);
  }
  // The hyper-energy part dominates the gap; the elastic part is already close.
  EXPECT_NEAR(r.rows.back().energy.w_part, r.rows.back().phi0, 1e-3 * r.rows.back().phi0);
}

TEST(Thin3d, HyperEnergyPartDecaysWithThePredictedRate) {
  const MaterialSpec m;
  const double rate = m.p * (1.0 - m.alpha);
  const std::vector<double> hs{0.2, 0.1, 0.05, 0.025};
  std::vector<double> parts;
  for (double h : hs) {
    parts.push_back(energy_phi_h(ThinDeformation(Generator::pure_bend(1.0), h), m, small_quad(4))
                        .p_part);
  }
  const double c = parts[0] / std::pow(hs[0], rate);
  for (std::size_t k = 0; k < hs.size(); ++k) {
    EXPECT_GT(parts[k], 0.0);
    EXPECT_LE(parts[k], c * std::pow(hs[k], rate) * (1 + 1e-12));
  }
}

TEST(Thin3d, LargeThicknessIsRejected) {
  try {
    energy_phi_h(ThinDeformation(Generator::sine(1.0), 1.5), MaterialSpec{}, small_quad(4));
    FAIL() << "expected ThicknessTooLarge";
  } catch (const ThicknessTooLarge& e) {
    EXPECT_NE(std::string(e.what()).find("h = 1.5"), std::string::npos);
  }
}

TEST(Thin3d, DissipationProperties) {
  const MaterialSpec m;
  const ThinDeformation a(Generator::sine(0.5), 0.1), b(Generator::pure_bend(0.7), 0.1);
  const double ab = dissipation_Dh(a, b, m, small_quad(4));
  const double ba = dissipation_Dh(b, a, m, small_quad(4));
  EXPECT_GT(ab, 0.0);
  EXPECT_NEAR(ab, ba, 1e-12 * ab);
  EXPECT_EQ(dissipation_Dh(a, a, m, small_quad(4)), 0.0);
  EXPECT_THROW(dissipation_Dh(a, ThinDeformation(Generator::sine(0.5), 0.2), m, small_quad(4)),
               ConfigError);
}

TEST(Thin3d, DissipationApproachesPlateMetric) {
  GammaOptions opt;
  opt.calibrate = false;
  opt.quad = small_quad(8);
  opt.reference_nodes = 65;
  const GammaReport r = gamma_ladder(Generator::pure_bend(1.0), Generator::zero(), MaterialSpec{},
                                     {0.2, 0.1, 0.05}, opt);
  EXPECT_NEAR(r.rows[0].d0, 1.0 / std::sqrt(3.0), 1e-4);
  EXPECT_TRUE(r.dissipation_gaps_monotone);
  EXPECT_LT(r.rows.back().dissipation_gap, r.rows.front().dissipation_gap);
}

TEST(Thin3d, AveragedDisplacements) {
  Generator g = Generator::pure_bend(1.3);
  const double h = 0.1;
  const AveragedDisplacement a = average_displacements(ThinDeformation(g, h), 0.4, 0.2);
  EXPECT_NEAR(a.u(0), g.u1(0.4, 0.2).f, 1e-15);
  EXPECT_EQ(a.u(1), 0.0);
  EXPECT_NEAR(a.v, g.v(0.4, 0.2).f, 1e-15);

  g.c = [](double, double) { return linear_jet(3.0, 0.0, 0.0); };
  const AveragedDisplacement b = average_displacements(ThinDeformation(g, h), 0.4, 0.2);
  EXPECT_NEAR(b.v, g.v(0.4, 0.2).f + h * h * 3.0 / 12.0, 1e-15);

  // Against a direct x3 quadrature of y.
  const ThinDeformation def(busy_generator(), 0.2);
  const QuadratureRule r = gauss_legendre(4, -0.5, 0.5);
  Vec3 mean = Vec3::Zero();
  for (std::size_t q = 0; q < r.nodes.size(); ++q) mean += r.weights[q] * def.y(0.3, 0.7, r.nodes[q]);
  const AveragedDisplacement c = average_displacements(def, 0.3, 0.7);
  EXPECT_NEAR(c.u(0), (mean(0) - 0.3) / (def.h * def.h), 1e-12);
  EXPECT_NEAR(c.u(1), (mean(1) - 0.7) / (def.h * def.h), 1e-12);
  EXPECT_NEAR(c.v, mean(2) / def.h, 1e-12);
}

TEST(Thin3d, StrainApproachesPlateStrain) {
  const QuadratureSpec q = small_quad(2);
  const std::vector<double> hs{0.1, 0.05, 0.025, 0.0125};
  std::vector<double> gaps, sizes;
  for (double h : hs) {
    double gap = 0.0, size = 0.0;
    for (const StrainSample& s : strain_Gh(ThinDeformation(Generator::pure_bend(1.0), h), q)) {
      Mat2 limit = Mat2::Zero();
      limit(0, 0) = -s.point(2);
      gap = std::max(gap, (s.g.topLeftCorner<2, 2>() - limit).norm());
      size = std::max(size, s.g.norm());
    }
    gaps.push_back(gap);
    sizes.push_back(size);
  }
  for (std::size_t k = 1; k < hs.size(); ++k) EXPECT_LT(gaps[k], gaps[k - 1]);
  EXPECT_LT(gaps.back(), 0.01);
  for (double s : sizes) EXPECT_LE(s, 2.0 * sizes.back());
}

TEST(Thin3d, GammaLadderOfZeroGeneratorIsExact) {
  GammaOptions opt;
  opt.quad = small_quad(2);
  opt.reference_nodes = 9;
  const GammaReport r =
      gamma_ladder(Generator::zero(), Generator::zero(), MaterialSpec{}, {0.2, 0.1}, opt);
  for (const GammaRow& row : r.rows) {
    EXPECT_EQ(row.energy_gap, 0.0);
    EXPECT_EQ(row.dissipation_gap, 0.0);
  }
  EXPECT_THROW(gamma_ladder(Generator::zero(), std::nullopt, MaterialSpec{}, {}, opt), ConfigError);
  EXPECT_THROW(gamma_ladder(Generator::zero(), std::nullopt, MaterialSpec{}, {0.1, 0.1}, opt),
               ConfigError);
}

TEST(Thin3d, IncrementalObjective) {
  const MaterialSpec m;
  const QuadratureSpec q = small_quad(4);
  const ThinDeformation a(Generator::zero(), 0.1), b(Generator::sine(0.3), 0.1);
  EXPECT_EQ(incremental_objective_3d(0.1, b, b, m, q), energy_phi_h(b, m, q).total);
  double prev = std::numeric_limits<double>::infinity();
  for (double tau : {0.01, 0.1, 1.0}) {
    const double v = incremental_objective_3d(tau, a, b, m, q);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_THROW(incremental_objective_3d(0.0, a, b, m, q), ConfigError);
}

TEST(Thin3d, CalibrationReachesTolerance) {
  const MaterialSpec m;
  const ThinDeformation def(Generator::sine(0.5), 0.1);
  const QuadratureSpec q = calibrate_quadrature(def, m, small_quad(2), 1e-8, 256);
  ASSERT_GT(q.cells1, 2);
  QuadratureSpec coarser = q;
  coarser.cells1 /= 2;
  coarser.cells2 /= 2;
  const double fine = energy_phi_h(def, m, q).total;
  EXPECT_LE(std::abs(fine - energy_phi_h(def, m, coarser).total), 1e-8 * std::abs(fine));
  const QuadratureSpec z = calibrate_quadrature(ThinDeformation(Generator::zero(), 0.1), m,
                                                small_quad(2));
  EXPECT_EQ(z.cells1, 4);
}

TEST(Thin3d, QuadratureAndThicknessValidation) {
  QuadratureSpec q;
  q.points_x3 = 0;
  EXPECT_THROW(q.validate(), ConfigError);
  EXPECT_THROW(ThinDeformation(Generator::zero(), 0.0), ConfigError);
  EXPECT_THROW(ThinDeformation(Generator::zero(), std::nan("")), ConfigError);
}

TEST(Thin3d, Presets) {
  EXPECT_EQ(Generator::preset("pure_bend", {2.0}).v(0.5, 0.0).f, 0.25);
  EXPECT_EQ(Generator::preset("membrane_bend", {0.0, 0.1}).u2(0.0, 0.5).f, 0.05);
  EXPECT_NEAR(Generator::preset("sine", {2.0}).v(0.5, 0.5).f, 2.0, 1e-15);
  EXPECT_THROW(Generator::preset("twist", {}), ConfigError);
  try {
    Generator::preset("pure_bend", {1.0, 2.0});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("at most 1"), std::string::npos);
  }
}

TEST(Thin3d, SplineReproducesBilinear) {
  const GridSpec g = GridSpec::make(1.0, 2.0, 7, 9);
  auto f = [](double x, double y) { return 0.5 - 1.5 * x + 0.25 * y + 2.0 * x * y; };
  Eigen::MatrixXd values(g.n1, g.n2);
  for (int j = 0; j < g.n2; ++j)
    for (int i = 0; i < g.n1; ++i) values(i, j) = f(g.node(i, j)(0), g.node(i, j)(1));
  const BicubicSpline s(g, values);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const double x = u(rng), y = 2.0 * u(rng);
    const Jet2 j = s(x, y);
    EXPECT_NEAR(j.f, f(x, y), 1e-12);
    EXPECT_NEAR(j.d1(0), -1.5 + 2.0 * y, 1e-11);
    EXPECT_NEAR(j.d1(1), 0.25 + 2.0 * x, 1e-11);
    EXPECT_NEAR(j.d2(0, 1), 2.0, 1e-10);
    EXPECT_NEAR(j.d2(0, 0), 0.0, 1e-9);
  }
  EXPECT_THROW(BicubicSpline(g, Eigen::MatrixXd::Zero(3, 3)), ConfigError);
}

TEST(Thin3d, GeneratorFromState) {
  const GridSpec g = GridSpec::make(1, 1, 17, 17);
  const PlateState s = sample_generator(Generator::sine(0.4), g);
  const Generator spline = Generator::from_state(s);
  for (int i : {0, 5, 16}) {
    for (int j : {0, 8, 11}) EXPECT_NEAR(spline.v(g.node(i, j)(0), g.node(i, j)(1)).f, s.vn(i, j), 1e-14);
  }
  EXPECT_NEAR(spline.v(0.37, 0.61).f, Generator::sine(0.4).v(0.37, 0.61).f, 1e-4);
  EXPECT_THROW(sample_generator(Generator::sine(0.4), GridSpec::make(2, 1, 5, 5)), ConfigError);
}
