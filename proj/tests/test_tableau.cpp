#include "ocpreg/tableau.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace {

using namespace ocpreg;

std::vector<Tableau> all_implicit() {
  std::vector<Tableau> out;
  for (int s = 1; s <= 4; ++s) out.push_back(gauss_legendre(s));
  for (int s = 1; s <= 3; ++s) out.push_back(radau2a(s));
  return out;
}

std::vector<EmbeddedTableau> all_explicit() { return {heun_euler(), fehlberg45(), dormand_prince54()}; }

// sum_i w_i c_i^(k-1) - 1/k
double quadrature_residual(const Eigen::VectorXd& w, const Eigen::VectorXd& c, int k) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) s += w[i] * std::pow(c[i], k - 1);
  return s - 1.0 / k;
}

TEST(Tableau, HeunEulerCoefficients) {
  const EmbeddedTableau t = heun_euler();
  EXPECT_EQ(t.stages(), 2);
  EXPECT_EQ(t.base.b, Eigen::Vector2d(0.5, 0.5));
  EXPECT_EQ(t.b_hat, Eigen::Vector2d(1.0, 0.0));
  EXPECT_EQ(t.base.c, Eigen::Vector2d(0.0, 1.0));
  EXPECT_EQ(t.base.A(1, 0), 1.0);
  EXPECT_EQ(t.base.order, 2);
  EXPECT_EQ(t.embedded_order, 1);
  EXPECT_LE(max_abs_residual(check_order_conditions(t.base, 2)), 1e-12);
  EXPECT_DOUBLE_EQ(t.b_hat.sum(), 1.0);
  EXPECT_DOUBLE_EQ(t.b_hat.dot(t.base.c), 0.0);
}

TEST(Tableau, ExplicitEulerWeightsFailSecondOrder) {
  const EmbeddedTableau t = heun_euler();
  const auto conds = check_order_conditions(t.base.A, t.b_hat, t.base.c, 2);
  double second = 0.0;
  for (const auto& c : conds)
    if (c.order == 2) second = c.residual;
  EXPECT_DOUBLE_EQ(std::abs(second), 0.5);
}

TEST(Tableau, ExplicitPairsStageCountsAndOrders) {
  const EmbeddedTableau dp = dormand_prince54();
  EXPECT_EQ(dp.stages(), 7);
  EXPECT_EQ(dp.base.order, 5);
  EXPECT_EQ(dp.embedded_order, 4);
  const EmbeddedTableau f = fehlberg45();
  EXPECT_EQ(f.stages(), 6);
  EXPECT_EQ(f.base.order, 5);
  EXPECT_EQ(f.embedded_order, 4);
}

TEST(Tableau, ExplicitPairsSatisfyOrderConditions) {
  for (const auto& t : all_explicit()) {
    SCOPED_TRACE(t.name());
    EXPECT_TRUE(t.base.is_explicit);
    EXPECT_TRUE(strictly_lower_triangular(t.base.A));
    EXPECT_LE(row_sum_defect(t.base), 1e-12);
    EXPECT_LE(max_abs_residual(check_order_conditions(t.base, t.base.order)), 1e-9);
    EXPECT_LE(max_abs_residual(check_order_conditions(t.base.A, t.b_hat, t.base.c,
                                                      t.embedded_order)),
              1e-9);
    EXPECT_GT(max_abs_residual(check_order_conditions(t.base.A, t.b_hat, t.base.c,
                                                      t.embedded_order + 1)),
              1e-8);
    EXPECT_LT(t.embedded_order, t.base.order);
  }
}

TEST(Tableau, DormandPrinceIsNotSixthOrder) {
  const EmbeddedTableau dp = dormand_prince54();
  EXPECT_GT(max_abs_residual(check_order_conditions(dp.base, 6)), 1e-8);
}

TEST(Tableau, ImplicitMidpoint) {
  const Tableau t = gauss_legendre(1);
  EXPECT_DOUBLE_EQ(t.c[0], 0.5);
  EXPECT_DOUBLE_EQ(t.A(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(t.b[0], 1.0);
  EXPECT_EQ(t.order, 2);
}

TEST(Tableau, ImplicitEuler) {
  const Tableau t = radau2a(1);
  EXPECT_DOUBLE_EQ(t.c[0], 1.0);
  EXPECT_DOUBLE_EQ(t.A(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.b[0], 1.0);
  EXPECT_EQ(t.order, 1);
}

TEST(Tableau, GaussNodesMatchRootOracle) {
  for (int s = 1; s <= 4; ++s) {
    const Tableau t = gauss_legendre(s);
    const std::vector<double> ref = oracle::gauss_nodes(s);
    ASSERT_EQ(static_cast<int>(ref.size()), s);
    for (int i = 0; i < s; ++i) EXPECT_NEAR(t.c[i], ref[i], 1e-13) << "s=" << s;
    EXPECT_EQ(t.order, 2 * s);
  }
  const Tableau t2 = gauss_legendre(2);
  EXPECT_NEAR(t2.c[0], 0.5 - std::sqrt(3.0) / 6.0, 1e-15);
  EXPECT_NEAR(t2.c[1], 0.5 + std::sqrt(3.0) / 6.0, 1e-15);
}

TEST(Tableau, RadauNodesMatchRootOracle) {
  for (int s = 1; s <= 3; ++s) {
    const Tableau t = radau2a(s);
    const std::vector<double> ref = oracle::radau_nodes(s);
    ASSERT_EQ(static_cast<int>(ref.size()), s);
    for (int i = 0; i < s; ++i) EXPECT_NEAR(t.c[i], ref[i], 1e-13) << "s=" << s;
    EXPECT_EQ(t.c[s - 1], 1.0);
    EXPECT_EQ(t.order, 2 * s - 1);
  }
  const Tableau t3 = radau2a(3);
  EXPECT_NEAR(t3.c[0], (4.0 - std::sqrt(6.0)) / 10.0, 1e-15);
  EXPECT_NEAR(t3.c[1], (4.0 + std::sqrt(6.0)) / 10.0, 1e-15);
  const Tableau t2 = radau2a(2);
  EXPECT_NEAR(t2.c[0], 1.0 / 3.0, 1e-15);
}

TEST(Tableau, CollocationOrderConditions) {
  for (const auto& t : all_implicit()) {
    SCOPED_TRACE(t.name);
    EXPECT_FALSE(t.is_explicit);
    EXPECT_LE(row_sum_defect(t), 1e-12);
    EXPECT_LE(max_abs_residual(check_order_conditions(t, t.order)), 1e-9);
    EXPECT_GT(max_abs_residual(check_order_conditions(t, t.order + 1)), 1e-8);
  }
}

TEST(Tableau, CollocationConditionsHoldDirectly) {
  // sum_j a_ij c_j^(k-1) = c_i^k / k, k = 1..s
  for (const auto& t : all_implicit()) {
    const int s = t.stages();
    for (int k = 1; k <= s; ++k)
      for (int i = 0; i < s; ++i) {
        double lhs = 0.0;
        for (int j = 0; j < s; ++j) lhs += t.A(i, j) * std::pow(t.c[j], k - 1);
        EXPECT_NEAR(lhs, std::pow(t.c[i], k) / k, 1e-13) << t.name;
      }
  }
}

TEST(Tableau, UnsupportedStageCounts) {
  EXPECT_THROW(gauss_legendre(0), TableauError);
  EXPECT_THROW(gauss_legendre(5), TableauError);
  EXPECT_THROW(radau2a(0), TableauError);
  EXPECT_THROW(radau2a(4), TableauError);
}

TEST(Tableau, ExtendImplicitEuler) {
  const EmbeddedTableau e = extend_with_embedded(radau2a(1), 0.5);
  ASSERT_EQ(e.stages(), 2);
  EXPECT_DOUBLE_EQ(e.b_hat[0], 0.5);
  EXPECT_DOUBLE_EQ(e.b_hat[1], 0.5);
  EXPECT_EQ(e.base.c[0], 0.0);
  EXPECT_EQ(e.base.b[0], 0.0);
  EXPECT_EQ(e.base.A.row(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(e.base.A.col(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(e.embedded_order, 1);
}

TEST(Tableau, ExtensionQuadratureAndDefect) {
  for (const auto& t : all_implicit()) {
    for (double g : {1.0, -1.0, 0.1, -0.1, 0.01, -0.01}) {
      const EmbeddedTableau e = extend_with_embedded(t, g);
      const int d = t.stages();
      SCOPED_TRACE(t.name + " gamma0=" + std::to_string(g));
      EXPECT_EQ(e.embedded_order, d);
      EXPECT_DOUBLE_EQ(e.b_hat[0], g);
      for (int k = 1; k <= d; ++k)
        EXPECT_LE(std::abs(quadrature_residual(e.b_hat, e.base.c, k)), 1e-10);
      EXPECT_GT(std::abs(quadrature_residual(e.b_hat, e.base.c, d + 1)), 1e-8);
      // the base method is unchanged by the extra stage
      EXPECT_LE(max_abs_residual(check_order_conditions(e.base, t.order)), 1e-9);
      EXPECT_EQ(e.base.b.tail(d), t.b);
    }
  }
}

TEST(Tableau, RadauExtensionOrderConditions) {
  const EmbeddedTableau e = extend_with_embedded(radau2a(3), 0.01);
  EXPECT_LE(max_abs_residual(check_order_conditions(e.base.A, e.b_hat, e.base.c, 3)), 1e-10);
}

TEST(Tableau, GaussExtensionFailsOrderThree) {
  const EmbeddedTableau e = extend_with_embedded(gauss_legendre(2), 0.1);
  double worst = 0.0;
  for (const auto& c : check_order_conditions(e.base.A, e.b_hat, e.base.c, 3))
    if (c.order == 3) worst = std::max(worst, std::abs(c.residual));
  EXPECT_GT(worst, 1e-8);
}

TEST(Tableau, EmbeddedWeightsAffineInGamma) {
  for (const auto& t : all_implicit()) {
    const Eigen::VectorXd b1 = extend_with_embedded(t, 0.1).b_hat;
    const Eigen::VectorXd b2 = extend_with_embedded(t, 0.4).b_hat;
    const Eigen::VectorXd b3 = extend_with_embedded(t, -0.5).b_hat;
    // (b2 - b1) / 0.3 == (b3 - b1) / -0.6
    EXPECT_LE(((b2 - b1) / 0.3 - (b3 - b1) / -0.6).cwiseAbs().maxCoeff(), 1e-10) << t.name;
  }
}

TEST(Tableau, ExtensionRejectsBadInput) {
  EXPECT_THROW(extend_with_embedded(gauss_legendre(2), 0.0), TableauError);
  EXPECT_THROW(extend_with_embedded(gauss_legendre(2), std::nan("")), TableauError);
  Tableau dup = gauss_legendre(2);
  dup.c[1] = dup.c[0] + 1e-12;
  EXPECT_THROW(extend_with_embedded(dup, 0.1), TableauError);
}

TEST(Tableau, HigherOrderIdsUseSimplifyingAssumptions) {
  const auto conds = check_order_conditions(gauss_legendre(4), 8);
  bool has_b8 = false, has_c = false, has_d = false;
  for (const auto& c : conds) {
    has_b8 |= c.id == "B(8)";
    has_c |= c.id.rfind("C(", 0) == 0;
    has_d |= c.id.rfind("D(", 0) == 0;
  }
  EXPECT_TRUE(has_b8);
  EXPECT_TRUE(has_c);
  EXPECT_TRUE(has_d);
}

TEST(Tableau, TreeConditionCountUpToFive) {
  // 1 + 1 + 2 + 4 + 9 rooted trees of orders 1..5
  const auto conds = check_order_conditions(dormand_prince54().base, 5);
  int trees = 0;
  for (const auto& c : conds) trees += c.id.rfind("tree:", 0) == 0;
  EXPECT_EQ(trees, 17);
}

TEST(Tableau, ButcherLayoutMentionsWeights) {
  const std::string text = format_butcher(heun_euler());
  EXPECT_NE(text.find("heun_euler"), std::string::npos);
  EXPECT_GE(std::count(text.begin(), text.end(), '\n'), 4);
}

}  // namespace
