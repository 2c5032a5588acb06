#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "fhdgm/basis.hpp"
#include "fhdgm/error.hpp"

using namespace fhdgm;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::numeric;
}

}  // namespace

// Reference values from an independent B-spline implementation.
TEST(Basis, CubicMatchesReferenceValues) {
  const auto b = BasisSystem::bspline({0.0, 24.0}, 3, 3);
  ASSERT_EQ(b.count(), 7);
  const Eigen::VectorXd at37 = b.eval(3.7);
  const double ref37[] = {0.0563287037037037, 0.5491331018518519, 0.35545408950617285, 0.03908410493827161, 0, 0, 0};
  for (int k = 0; k < 7; ++k) EXPECT_NEAR(at37(k), ref37[k], 1e-14);
  const Eigen::VectorXd at1925 = b.eval(19.25);
  const double ref1925[] = {0, 0, 0, 0.08269434799382716, 0.4852852527006173, 0.4229781539351851, 0.009042245370370369};
  for (int k = 0; k < 7; ++k) EXPECT_NEAR(at1925(k), ref1925[k], 1e-14);
  const Eigen::VectorXd at12 = b.eval(12.0);
  EXPECT_NEAR(at12(2), 1.0 / 6.0, 1e-14);
  EXPECT_NEAR(at12(3), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(at12(4), 1.0 / 6.0, 1e-14);
}

TEST(Basis, QuadraticBernsteinCase) {
  const auto b = BasisSystem::bspline({0.0, 24.0}, 0, 2);
  const Eigen::VectorXd v = b.eval(5.0);
  EXPECT_NEAR(v(0), 0.6267361111111112, 1e-14);
  EXPECT_NEAR(v(1), 0.32986111111111105, 1e-14);
  EXPECT_NEAR(v(2), 0.04340277777777777, 1e-14);
}

TEST(Basis, EndpointsAreInterpolatory) {
  const auto b = BasisSystem::bspline({0.0, 24.0}, 3, 3);
  EXPECT_DOUBLE_EQ(b.eval(0.0)(0), 1.0);
  EXPECT_DOUBLE_EQ(b.eval(24.0)(6), 1.0);
  EXPECT_DOUBLE_EQ(b.eval(24.0).sum(), 1.0);
}

TEST(Basis, PartitionOfUnityAndNonNegativity) {
  for (int degree : {0, 1, 2, 3, 4})
    for (int knots : {0, 1, 5}) {
      const auto b = BasisSystem::bspline({-3.0, 7.0}, knots, degree);
      for (int i = 0; i <= 200; ++i) {
        const double h = -3.0 + 10.0 * i / 200.0;
        const Eigen::VectorXd v = b.eval(h);
        EXPECT_NEAR(v.sum(), 1.0, 1e-13);
        EXPECT_GE(v.minCoeff(), 0.0);
      }
    }
}

TEST(Basis, FourierLayoutAndPeriodicity) {
  const auto f = BasisSystem::fourier({0.0, 24.0}, 5);
  const double w = 2.0 * std::numbers::pi / 24.0;
  const Eigen::VectorXd v = f.eval(5.0);
  EXPECT_DOUBLE_EQ(v(0), 1.0);
  EXPECT_NEAR(v(1), std::sin(w * 5.0), 1e-15);
  EXPECT_NEAR(v(2), std::cos(w * 5.0), 1e-15);
  EXPECT_NEAR(v(3), std::sin(2 * w * 5.0), 1e-15);
  EXPECT_NEAR(v(4), std::cos(2 * w * 5.0), 1e-15);
  EXPECT_TRUE(f.eval(0.0).isApprox(f.eval(24.0), 1e-12));
}

TEST(Basis, ErrorsCarryTheirKind) {
  EXPECT_EQ(kind_of([] { BasisSystem::fourier({0, 24}, 4); }), ErrorKind::contract);
  EXPECT_EQ(kind_of([] { BasisSystem::bspline({2, 1}, 1, 3); }), ErrorKind::domain);
  EXPECT_EQ(kind_of([] { (void)BasisSystem::bspline({0, 24}, 1, 3).eval(24.5); }), ErrorKind::range);
  EXPECT_EQ(kind_of([] { BasisSystem::from_spec({BasisKind::bspline, 2, 3, {0, 24}}); }), ErrorKind::parameter);
  EXPECT_EQ(kind_of([] { basis_kind_from_string("wavelet"); }), ErrorKind::config);
}

TEST(Basis, SpecRoundTrip) {
  const BasisSpec spec{BasisKind::bspline, 7, 3, {0.0, 24.0}};
  EXPECT_EQ(BasisSystem::from_spec(spec).spec(), spec);
  const BasisSpec fs{BasisKind::fourier, 3, 3, {0.0, 24.0}};
  EXPECT_EQ(BasisSystem::from_spec(fs).count(), 3);
}

TEST(Basis, FunctionalCoefficientIsLinearCombination) {
  const auto b = BasisSystem::bspline({0.0, 24.0}, 3, 3);
  const std::vector<double> coeffs(7, 2.5);
  const std::vector<double> grid{0.0, 6.5, 13.0, 24.0};
  const Eigen::VectorXd curve = functional_coefficient(b, coeffs, grid);
  for (auto c : curve) EXPECT_NEAR(c, 2.5, 1e-13);
  const Eigen::MatrixXd m = b.eval_matrix(grid);
  EXPECT_EQ(m.rows(), 4);
  EXPECT_TRUE(m.row(1).transpose().isApprox(b.eval(6.5)));
}
