#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "vk/errors.hpp"
#include "vk/plate_field.hpp"

using namespace vk;
using namespace vk::testing;

namespace {

double dot(const CellDerivatives& a, const CellDerivatives& b) {
  return (a.du1.array() * b.du1.array()).sum() + (a.du2.array() * b.du2.array()).sum() +
         (a.dv.array() * b.dv.array()).sum() + (a.hess.array() * b.hess.array()).sum();
}

CellDerivatives random_cot(const GridSpec& g, std::mt19937_64& rng) {
  CellDerivatives c = CellDerivatives::zero(g);
  for (auto* m : {&c.du1, &c.du2, &c.dv}) {
    const Eigen::VectorXd r = random_vector(m->size(), rng);
    *m = Eigen::Map<const Eigen::Matrix2Xd>(r.data(), 2, m->cols());
  }
  const Eigen::VectorXd r = random_vector(c.hess.size(), rng);
  c.hess = Eigen::Map<const Eigen::Matrix3Xd>(r.data(), 3, c.hess.cols());
  return c;
}

PlateState bump_direction(const GridSpec& g, double su, double sv) {
  PlateState d = zero_state(g);
  for (int j = 1; j < g.n2 - 1; ++j) {
    for (int i = 1; i < g.n1 - 1; ++i) {
      const Vec2 x = g.node(i, j);
      const double b = x(0) * (1 - x(0)) * x(1) * (1 - x(1));
      d.u1(i, j) = su * b;
      d.u2(i, j) = -0.5 * su * b * x(0);
      d.vn(i, j) = sv * b * b;
    }
  }
  enforce_boundary(d);
  return d;
}

}  // namespace

TEST(Grid, DerivedQuantities) {
  const GridSpec g = GridSpec::make(2.0, 1.0, 5, 9);
  EXPECT_DOUBLE_EQ(g.dx1(), 0.5);
  EXPECT_DOUBLE_EQ(g.dx2(), 0.125);
  EXPECT_EQ(g.num_cells(), 4 * 8);
  EXPECT_EQ(g.num_dofs(), 3 * 3 * 7);
  EXPECT_THROW(GridSpec::make(1, 1, 3, 8), ConfigError);
  EXPECT_THROW(GridSpec::make(0, 1, 8, 8), ConfigError);
}

TEST(MakeState, ZeroInitOnZeroBoundary) {
  const GridSpec g = GridSpec::make(1, 1, 6, 7);
  const PlateState s = zero_state(g);
  EXPECT_EQ(s.u1.norm() + s.u2.norm() + s.v.norm(), 0.0);
  EXPECT_TRUE(all_finite(s));
}

TEST(MakeState, ConstantExtension) {
  const GridSpec g = GridSpec::make(1, 1, 6, 6);
  auto bc = std::make_shared<BoundaryData>(BoundaryData::zero(g));
  bc->v_hat.setOnes();
  const PlateState s = make_state(g, bc, bc->u1_hat, bc->u2_hat, Eigen::MatrixXd::Ones(6, 6));
  EXPECT_EQ((s.v.array() - 1.0).abs().maxCoeff(), 0.0);
}

TEST(MakeState, BoundaryOverwrittenInteriorKept) {
  const GridSpec g = GridSpec::make(1, 1, 6, 6);
  auto bc = std::make_shared<BoundaryData>(BoundaryData::zero(g));
  const Eigen::MatrixXd v = Eigen::MatrixXd::Constant(6, 6, 3.0);
  const PlateState s = make_state(g, bc, v, v, v);
  for (int j = 0; j < 6; ++j) {
    for (int i = 0; i < 6; ++i) {
      const bool boundary = i == 0 || j == 0 || i == 5 || j == 5;
      EXPECT_EQ(s.vn(i, j), boundary ? 0.0 : 3.0);
      EXPECT_EQ(s.u1(i, j), boundary ? 0.0 : 3.0);
    }
  }
}

TEST(MakeState, ShapeMismatchAndIdempotence) {
  const GridSpec g = GridSpec::make(1, 1, 6, 6);
  auto bc = std::make_shared<BoundaryData>(BoundaryData::zero(g));
  const Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(5, 6);
  EXPECT_THROW(make_state(g, bc, bad, bad, bad), ConfigError);

  std::mt19937_64 rng(4);
  PlateState s = random_interior(pure_bend_state(g, 1.0), rng, 0.1);
  const PlateState once = s;
  enforce_boundary(s);
  EXPECT_EQ(s.u1, once.u1);
  EXPECT_EQ(s.v, once.v);
  const PlateState again = make_state(g, s.bc, s.u1, s.u2, s.v_nodes());
  EXPECT_EQ(again.v, s.v);
}

TEST(MakeState, GhostLayerReproducesQuadratics) {
  const GridSpec g = GridSpec::make(1.3, 0.9, 7, 6);
  auto v = [](double x, double y) { return 0.3 + 0.2 * x - 0.4 * y + 0.7 * x * x - 0.5 * y * y + 0.9 * x * y; };
  const PlateState s = state_from(
      g, [](double, double) { return 0.0; }, [](double, double) { return 0.0; }, v,
      [](double x, double y) { return 0.2 + 1.4 * x + 0.9 * y; },
      [](double x, double y) { return -0.4 - y + 0.9 * x; });
  PlateState full = s;
  for (int j = 0; j < g.n2; ++j)
    for (int i = 0; i < g.n1; ++i) full.vn(i, j) = v(g.node(i, j)(0), g.node(i, j)(1));
  enforce_boundary(full);
  for (int j = 0; j < g.n2; ++j) {
    EXPECT_NEAR(full.vn(-1, j), v(-g.dx1(), j * g.dx2()), 1e-13);
    EXPECT_NEAR(full.vn(g.n1, j), v(g.l1 + g.dx1(), j * g.dx2()), 1e-13);
  }
  for (int i = 0; i < g.n1; ++i) {
    EXPECT_NEAR(full.vn(i, -1), v(i * g.dx1(), -g.dx2()), 1e-13);
    EXPECT_NEAR(full.vn(i, g.n2), v(i * g.dx1(), g.l2 + g.dx2()), 1e-13);
  }
}

TEST(PackInterior, RoundTrip) {
  const GridSpec g = GridSpec::make(1, 1, 6, 8);
  std::mt19937_64 rng(6);
  const Eigen::VectorXd x = random_vector(g.num_dofs(), rng);
  const PlateState s = with_interior(pure_bend_state(g, 0.5), x);
  EXPECT_EQ(pack_interior(s), x);
  EXPECT_NEAR(s.vn(3, 0), pure_bend_state(g, 0.5).vn(3, 0), 0.0);
}

TEST(Strains, ZeroState) {
  const GridSpec g = GridSpec::make(1, 1, 6, 6);
  const StrainPair p = strains(zero_state(g));
  EXPECT_EQ(p.g0.norm() + p.g1.norm(), 0.0);
}

TEST(Strains, LinearDeflectionGivesHalfStretch) {
  const GridSpec g = GridSpec::make(1, 1, 6, 6);
  const PlateState s = state_from(
      g, [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
      [](double x, double) { return x; }, [](double, double) { return 1.0; },
      [](double, double) { return 0.0; });
  const StrainPair p = strains(s);
  for (int c = 0; c < g.num_cells(); ++c) {
    EXPECT_LT((p.g0.col(c) - Voigt2(0.5, 0, 0)).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT(p.g1.col(c).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Strains, AffineFieldsAreExact) {
  const GridSpec g = GridSpec::make(1.5, 1, 7, 5);
  const PlateState s = state_from(
      g, [](double x, double y) { return 0.3 * x - 0.2 * y; },
      [](double x, double y) { return 0.1 * x + 0.4 * y; },
      [](double x, double y) { return 0.6 * x - 0.8 * y + 1.0; },
      [](double, double) { return 0.6; }, [](double, double) { return -0.8; });
  Mat2 du;
  du << 0.3, -0.2, 0.1, 0.4;
  const Vec2 dv(0.6, -0.8);
  const Voigt2 expect = to_voigt(Mat2(0.5 * (du + du.transpose()) + 0.5 * dv * dv.transpose()));
  const StrainPair p = strains(s);
  for (int c = 0; c < g.num_cells(); ++c) {
    EXPECT_LT((p.g0.col(c) - expect).cwiseAbs().maxCoeff(), 1e-13);
  }
  const PlateState stretch = state_from(
      g, [](double x, double) { return x; }, [](double, double) { return 0.0; },
      [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
      [](double, double) { return 0.0; });
  EXPECT_LT((membrane_strain(stretch).colwise() - Voigt2(1, 0, 0)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Strains, BendingExactForQuadratics) {
  const GridSpec g = GridSpec::make(1, 1, 8, 8);
  const PlateState bend = state_from(
      g, [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
      [](double x, double) { return x * x; }, [](double x, double) { return 2 * x; },
      [](double, double) { return 0.0; });
  EXPECT_LT((bending_strain(bend).colwise() - Voigt2(-2, 0, 0)).cwiseAbs().maxCoeff(), 1e-11);

  const PlateState twist = state_from(
      g, [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
      [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
  EXPECT_LT((bending_strain(twist).colwise() - Voigt2(0, 0, -std::sqrt(2.0))).cwiseAbs().maxCoeff(),
            1e-11);

  const PlateState lin = state_from(
      g, [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
      [](double x, double y) { return 2 * x - y; }, [](double, double) { return 2.0; },
      [](double, double) { return -1.0; });
  EXPECT_LT(bending_strain(lin).cwiseAbs().maxCoeff(), 1e-11);

  auto q = [](double x, double y) { return 0.4 * x * x - 1.1 * y * y + 0.3 * x * y + x; };
  const PlateState gen = state_from(
      g, [](double, double) { return 0.0; }, [](double, double) { return 0.0; }, q,
      [](double x, double y) { return 0.8 * x + 0.3 * y + 1; },
      [](double x, double y) { return -2.2 * y + 0.3 * x; });
  Mat2 hess;
  hess << 0.8, 0.3, 0.3, -2.2;
  const Voigt2 expect = -to_voigt(hess);
  PlateState full = gen;
  for (int j = 0; j < g.n2; ++j)
    for (int i = 0; i < g.n1; ++i) full.vn(i, j) = q(g.node(i, j)(0), g.node(i, j)(1));
  enforce_boundary(full);
  EXPECT_LT((bending_strain(full).colwise() - expect).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Adjoint, GradientStencilTransposeIsNegativeDivergence) {
  const GridSpec g = GridSpec::make(1, 1, 6, 6);
  const int m = g.num_interior();
  std::mt19937_64 rng(9);
  const CellDerivatives cot_all = random_cot(g, rng);
  CellDerivatives cot = CellDerivatives::zero(g);
  cot.du1 = cot_all.du1;
  const Eigen::VectorXd adj = derivatives_adjoint(g, cot);
  auto c = [&](int k, int a, int b) { return cot.du1(k, g.cell_index(a, b)); };
  for (int j = 1; j < g.n2 - 1; ++j) {
    for (int i = 1; i < g.n1 - 1; ++i) {
      const double div = (c(0, i, j) + c(0, i, j - 1) - c(0, i - 1, j) - c(0, i - 1, j - 1)) /
                             (2 * g.dx1()) +
                         (c(1, i, j) + c(1, i - 1, j) - c(1, i, j - 1) - c(1, i - 1, j - 1)) /
                             (2 * g.dx2());
      EXPECT_NEAR(adj(g.interior_index(i, j)), -div, 1e-12);
    }
  }
  EXPECT_LT(adj.segment(m, 2 * m).norm(), 1e-15);

  // Full matrix identity <D e_k, c> = <e_k, D^T c> for every interior unit vector.
  for (int k = 0; k < g.num_dofs(); ++k) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(g.num_dofs());
    e(k) = 1.0;
    EXPECT_NEAR(dot(test_derivatives(g, e), cot_all), derivatives_adjoint(g, cot_all)(k), 1e-11);
  }
}

TEST(Adjoint, TestDerivativesMatchStateDerivatives) {
  const GridSpec g = GridSpec::make(1, 1, 7, 6);
  std::mt19937_64 rng(10);
  const Eigen::VectorXd x = random_vector(g.num_dofs(), rng);
  const CellDerivatives a = test_derivatives(g, x);
  const CellDerivatives b = cell_derivatives(with_interior(zero_state(g), x));
  EXPECT_LT((a.du1 - b.du1).norm() + (a.dv - b.dv).norm() + (a.hess - b.hess).norm(), 1e-12);
}

TEST(HOperator, ZeroDirectionAndDecoupledCase) {
  const GridSpec g = GridSpec::make(1, 1, 9, 9);
  std::mt19937_64 rng(12);
  const PlateState at = random_interior(pure_bend_state(g, 1.0), rng, 0.05);
  const StrainPair z = h_operator(zero_state(g), at);
  EXPECT_EQ(z.g0.norm() + z.g1.norm(), 0.0);

  const PlateState dir = bump_direction(g, 1.0, 2.0);
  const StrainPair h = h_operator(dir, zero_state(g));
  PlateState u_only = dir;
  u_only.v.setZero();
  EXPECT_LT((h.g0 - membrane_strain(u_only)).norm(), 1e-13);
  EXPECT_LT((h.g1 - bending_strain(dir)).norm(), 1e-12);
}

TEST(HOperator, CouplingWithLinearDeflection) {
  const GridSpec g = GridSpec::make(1, 1, 9, 9);
  const PlateState at = state_from(
      g, [](double, double) { return 0.0; }, [](double, double) { return 0.0; },
      [](double x, double) { return x; }, [](double, double) { return 1.0; },
      [](double, double) { return 0.0; });
  const PlateState dir = bump_direction(g, 0.0, 1.0);
  const StrainPair h = h_operator(dir, at);
  const CellDerivatives d = cell_derivatives(dir);
  for (int c = 0; c < g.num_cells(); ++c) {
    const Voigt2 expect(d.dv(0, c), 0.0, std::sqrt(2.0) * 0.5 * d.dv(1, c));
    EXPECT_LT((h.g0.col(c) - expect).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(HOperator, RejectsBoundaryTrace) {
  const GridSpec g = GridSpec::make(1, 1, 6, 6);
  PlateState dir = zero_state(g);
  dir.u1(0, 2) = 1e-6;
  EXPECT_THROW(h_operator(dir, zero_state(g)), PreconditionError);
  EXPECT_THROW(h_operator(zero_state(GridSpec::make(1, 1, 7, 6)), zero_state(g)), GridMismatch);
}

TEST(HOperator, AdjointAndMatrixAgree) {
  const GridSpec g = GridSpec::make(1, 1, 8, 7);
  std::mt19937_64 rng(14);
  const PlateState at = random_interior(pure_bend_state(g, 1.0), rng, 0.1);
  const CellDerivatives atd = cell_derivatives(at);
  const Eigen::VectorXd x = random_vector(g.num_dofs(), rng);
  const StrainPair h = h_apply(test_derivatives(g, x), atd);

  StrainPair cot{Eigen::Matrix3Xd(3, g.num_cells()), Eigen::Matrix3Xd(3, g.num_cells())};
  const Eigen::VectorXd r = random_vector(6 * g.num_cells(), rng);
  cot.g0 = Eigen::Map<const Eigen::Matrix3Xd>(r.data(), 3, g.num_cells());
  cot.g1 = Eigen::Map<const Eigen::Matrix3Xd>(r.data() + 3 * g.num_cells(), 3, g.num_cells());
  const double lhs = (h.g0.array() * cot.g0.array()).sum() + (h.g1.array() * cot.g1.array()).sum();
  const double rhs = x.dot(derivatives_adjoint(g, h_adjoint(cot, atd)));
  EXPECT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(lhs)));

  const Eigen::VectorXd jx = h_matrix(g, atd) * x;
  for (int c = 0; c < g.num_cells(); ++c) {
    EXPECT_LT((jx.segment<3>(6 * c) - h.g0.col(c)).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LT((jx.segment<3>(6 * c + 3) - h.g1.col(c)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(StrainDifference, IdentityHoldsExactly) {
  const GridSpec g = GridSpec::make(1, 1, 10, 9);
  std::mt19937_64 rng(15);
  const PlateState base = pure_bend_state(g, 1.0);
  const PlateState s0 = random_interior(base, rng, 0.05);
  EXPECT_EQ(strain_difference_identity_check(s0, s0), 0.0);
  const PlateState s1 = random_interior(base, rng, 0.05);
  EXPECT_LE(strain_difference_identity_check(s0, s1), 1e-13);

  PlateState v_only = s0;
  for (int j = 1; j < g.n2 - 1; ++j)
    for (int i = 1; i < g.n1 - 1; ++i) v_only.vn(i, j) += 0.01 * std::sin(i + 2.0 * j);
  enforce_boundary(v_only);
  EXPECT_LE(strain_difference_identity_check(s0, v_only), 1e-13);
  EXPECT_THROW(strain_difference_identity_check(s0, zero_state(GridSpec::make(1, 1, 6, 6))),
               GridMismatch);
}
