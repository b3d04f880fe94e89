#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "noisyopt/problems.hpp"
#include "noisyopt/trustregion.hpp"

using namespace noisyopt;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Objective sphere(int n) {
  return {n, [](const Vec& x, std::uint64_t) { return x.squaredNorm(); }};
}

// Random quadratic c + g.x + 1/2 x'Hx with symmetric H.
struct RandomQuadratic {
  double c;
  Vec g;
  Mat H;
  double operator()(const Vec& x) const { return c + g.dot(x) + 0.5 * x.dot(H * x); }
};

RandomQuadratic random_quadratic(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0, 1);
  RandomQuadratic q{z(rng), Vec(n), Mat(n, n)};
  for (int i = 0; i < n; ++i) q.g[i] = z(rng);
  Mat a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = z(rng);
  }
  q.H = a + a.transpose();
  return q;
}

}  // namespace

TEST(InitInterpolation, ShiftsStartInward) {
  const auto init = init_interpolation(v2(1, 0), Box::cube(2, -1, 1), 0.1, 5);
  EXPECT_TRUE(init.x0.isApprox(v2(0.9, 0), 1e-15));
  EXPECT_FALSE(init.warnings.empty());
}

TEST(InitInterpolation, CoordinatePointsAndDiagonalFill) {
  const Box box = Box::cube(2, -1, 1);
  const auto five = init_interpolation(v2(0, 0), box, 0.1, 5);
  ASSERT_EQ(five.points.size(), 5u);
  EXPECT_TRUE(five.points[1].isApprox(v2(0.1, 0)));
  EXPECT_TRUE(five.points[2].isApprox(v2(0, 0.1)));
  EXPECT_TRUE(five.points[3].isApprox(v2(-0.1, 0)));
  EXPECT_TRUE(five.points[4].isApprox(v2(0, -0.1)));
  EXPECT_TRUE(five.warnings.empty());

  const auto six = init_interpolation(v2(0, 0), box, 0.1, 6);
  ASSERT_EQ(six.points.size(), 6u);
  EXPECT_TRUE(six.points[5].isApprox(v2(0.1, 0.1)));
}

TEST(InitInterpolation, NarrowCoordinateReducesRho) {
  const Box box(v2(-1, 0), v2(1, 0.1));
  const auto init = init_interpolation(v2(0, 0.05), box, 0.1, 5);
  EXPECT_DOUBLE_EQ(init.rho[1], 0.05);
  EXPECT_FALSE(init.warnings.empty());
  for (const Vec& p : init.points) EXPECT_TRUE(box.contains(p));
}

TEST(Subproblem, SteepestDescentToBoundary) {
  QuadModel m = QuadModel::zero(v2(0, 0));
  m.g = v2(1, 0);
  const Vec s = solve_tr_subproblem(m, v2(0, 0), 0.5, Box::cube(2, -10, 10));
  EXPECT_NEAR(s[0], -0.5, 1e-15);
  EXPECT_NEAR(s[1], 0.0, 1e-15);
}

TEST(Subproblem, InteriorMinimizerMatchesEigenSolve) {
  QuadModel m = QuadModel::zero(v2(0, 0));
  m.g = v2(0.3, -0.2);
  m.B << 2.0, 0.5, 0.5, 1.0;
  const Vec s = solve_tr_subproblem(m, v2(0, 0), 5.0, Box::cube(2, -10, 10));
  // Oracle: s* = -V diag(1/lambda) V' g from the eigendecomposition.
  Eigen::SelfAdjointEigenSolver<Mat> es(m.B);
  const Vec expect = -es.eigenvectors() *
                     es.eigenvalues().cwiseInverse().asDiagonal() *
                     es.eigenvectors().transpose() * m.g;
  EXPECT_TRUE(s.isApprox(expect, 1e-12));
  const double decrease = m.value(v2(0, 0)) - m.value(s);
  EXPECT_NEAR(decrease, 0.5 * m.g.dot(-expect), 1e-14);
}

TEST(Subproblem, ActiveFaceIsClipped) {
  QuadModel m = QuadModel::zero(v2(0, 0));
  m.g = v2(-1, -1);
  const Box box(v2(-1, -1), v2(0.1, 1));
  const Vec s = solve_tr_subproblem(m, v2(0, 0), 0.5, box);
  EXPECT_LE(s[0], 0.1 + 1e-15);
  EXPECT_LE(s.norm(), 0.5 + 1e-12);
  EXPECT_NEAR(s[0], 0.1, 1e-12);
  EXPECT_GT(s[1], 0.3);
}

TEST(Subproblem, ZeroGradientPsdGivesZeroStep) {
  QuadModel m = QuadModel::zero(v2(0, 0));
  m.B = Mat::Identity(2, 2);
  EXPECT_EQ(solve_tr_subproblem(m, v2(0, 0), 0.5, Box::cube(2, -1, 1)).norm(), 0.0);
}

TEST(SubproblemProperty, FeasibleForRandomModels) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + t % 6;
    const auto q = random_quadratic(n, rng);
    QuadModel m = QuadModel::zero(Vec::Zero(n));
    m.g = q.g;
    m.B = q.H;
    const Box box = Box::cube(n, -1, 1);
    Vec center(n);
    for (int i = 0; i < n; ++i) center[i] = u(rng);
    const double radius = 0.05 + std::abs(u(rng));
    const Vec s = solve_tr_subproblem(m, center, radius, box);
    EXPECT_LE(s.norm(), radius + 1e-12);
    EXPECT_TRUE(box.contains(center + s, 1e-15));
    EXPECT_LE(m.value(center + s), m.value(center) + 1e-12);
  }
}

TEST(Model, FullQuadraticIsExact) {
  std::mt19937_64 rng(8);
  for (int n : {1, 2, 3, 4}) {
    const auto q = random_quadratic(n, rng);
    const Box box = Box::cube(n, -1, 1);
    const int m = full_quadratic_size(n);
    const auto init = init_interpolation(Vec::Constant(n, 0.2), box, 0.3, m);
    std::vector<double> vals;
    for (const Vec& p : init.points) vals.push_back(q(p));
    const Vec center = init.points[0];
    const auto model =
        fit_interpolation_model(init.points, vals, center, QuadModel::zero(center), 0.3);
    ASSERT_TRUE(model.has_value());
    EXPECT_NEAR(model->c, q(center), 1e-8);
    EXPECT_TRUE(model->g.isApprox(q.g + q.H * center, 1e-8));
    EXPECT_LE((model->B - q.H).norm(), 1e-8);
  }
}

TEST(Model, MinFrobeniusInterpolates) {
  std::mt19937_64 rng(9);
  for (int n : {2, 5, 8}) {
    const auto q = random_quadratic(n, rng);
    const Box box = Box::cube(n, -1, 1);
    const auto init = init_interpolation(Vec::Zero(n), box, 0.1, 2 * n + 1);
    std::vector<double> vals;
    for (const Vec& p : init.points) vals.push_back(q(p));
    QuadModel prior = QuadModel::zero(Vec::Zero(n));
    prior.B = Mat::Identity(n, n);
    const auto model = fit_interpolation_model(init.points, vals, Vec::Zero(n), prior, 0.1);
    ASSERT_TRUE(model.has_value());
    for (std::size_t k = 0; k < init.points.size(); ++k) {
      EXPECT_NEAR(model->value(init.points[k]), vals[k], 1e-8 * (1 + std::abs(vals[k])));
    }
  }
}

TEST(Model, LagrangeFunctionsAreCardinal) {
  const Box box = Box::cube(3, -1, 1);
  const auto init = init_interpolation(Vec::Zero(3), box, 0.2, 7);
  for (std::size_t k = 0; k < init.points.size(); ++k) {
    const auto lag = lagrange_function(init.points, k, Vec::Zero(3), 0.2);
    ASSERT_TRUE(lag.has_value());
    for (std::size_t j = 0; j < init.points.size(); ++j) {
      EXPECT_NEAR(lag->value(init.points[j]), j == k ? 1.0 : 0.0, 1e-10);
    }
  }
}

TEST(Model, DuplicatePointsAreSingular) {
  std::vector<Vec> pts{v2(0, 0), v2(0.1, 0), v2(0.1, 0), v2(0, 0.1), v2(-0.1, 0)};
  std::vector<double> vals(5, 1.0);
  EXPECT_FALSE(
      fit_interpolation_model(pts, vals, v2(0, 0), QuadModel::zero(v2(0, 0)), 0.1).has_value());
}

TEST(TrustRegion, SphereNoiseFree) {
  const Box box = Box::cube(2, -1, 1);
  const auto out = tr_minimize(sphere(2), box, v2(0.1, 0.1), Budget(100));
  EXPECT_LE(out.best_f, 1e-6);
  EXPECT_TRUE(all_inside(out.history, box));
  EXPECT_LE(out.evals_used(), 100u);
}

TEST(TrustRegion, OptionValidation) {
  const Box box = Box::cube(2, -1, 1);
  TrOptions o;
  o.m_points = 3;
  EXPECT_THROW(o.validate(box), ContractViolation);
  o = TrOptions{};
  o.rho_begin = 1e-5;
  EXPECT_THROW(o.validate(box), ContractViolation);
  o = TrOptions{};
  o.gamma_grow = 0.9;
  EXPECT_THROW(o.validate(box), ContractViolation);
}

TEST(TrustRegion, NoisyObjectiveUsesFullBudget) {
  Objective noisy{2, [](const Vec& x, std::uint64_t s) {
                    auto r = substream(77, s);
                    std::normal_distribution<double> z(0, 0.05);
                    return x.squaredNorm() + z(r);
                  }};
  const auto out = tr_minimize(noisy, Box::cube(2, -1, 1), v2(0.3, 0.3), Budget(300));
  EXPECT_EQ(out.evals_used(), 300u);
  EXPECT_EQ(out.termination, Termination::BudgetExhausted);
}

// Noise at the radius floor must not end the run early: the fixed threshold
// keeps the method sampling until the budget is gone.
TEST(TrustRegion, NoisyMultiwellUsesFullBudget) {
  const auto p = make_synthetic(SyntheticKind::ShallowMultiWell, 2, 5e-2);
  for (const Vec& x0 : {p.default_box.center(), v2(0.7, -0.7)}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto out = tr_minimize(p.objective(seed), p.default_box, x0, Budget(1000));
      EXPECT_EQ(out.evals_used(), 1000u) << "seed " << seed;
    }
  }
}

// Steps stay inside the radius; runs of rejected steps shrink the radius
// geometrically; interpolation residuals stay tiny on smooth problems.
TEST(TrustRegionProperty, TraceInvariants) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 2 + trial % 4;
    const Box box = Box::cube(n, -2, 2);
    const Vec xstar = 0.5 * uniform_design(box, 1, rng()).front();
    Objective obj{n, [=](const Vec& x, std::uint64_t) {
                    const Vec d = x - xstar;
                    return d.squaredNorm() + 0.3 * std::pow(d[0], 4) + std::sin(d[1]);
                  }};
    Evaluator ev(obj, 400);
    TrOptions opts;
    const auto res = tr_run(ev, box, uniform_design(box, 1, rng()).front(), opts);
    EXPECT_TRUE(all_inside(res.outcome.history, box));
    EXPECT_LE(res.max_interp_residual, 1e-8);
    int rejected = 0;
    double radius_at_first_reject = 0.0;
    for (const auto& it : res.trace) {
      EXPECT_LE(it.step_norm, it.radius + 1e-12);
      if (it.alternative) continue;
      if (it.accepted) {
        rejected = 0;
        continue;
      }
      if (rejected == 0) radius_at_first_reject = it.radius;
      EXPECT_LE(it.radius, std::pow(opts.gamma_shrink, rejected) * radius_at_first_reject *
                               (1 + 1e-12));
      ++rejected;
    }
  }
}
