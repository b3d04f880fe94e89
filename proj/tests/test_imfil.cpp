#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "noisyopt/imfil.hpp"

using namespace noisyopt;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Objective quadratic(const Vec& xstar, const Vec& weights) {
  return {static_cast<int>(xstar.size()), [=](const Vec& x, std::uint64_t) {
            return (x - xstar).cwiseAbs2().dot(weights);
          }};
}

bool contains_point(const std::vector<Vec>& pts, const Vec& p) {
  return std::any_of(pts.begin(), pts.end(), [&](const Vec& q) { return (q - p).norm() < 1e-15; });
}

}  // namespace

TEST(Stencil, CoordinatePoints) {
  const auto st = build_stencil(v2(0, 0), 0.25, Box::cube(2, -1, 1));
  ASSERT_EQ(st.points.size(), 4u);
  for (const Vec& p : {v2(0.5, 0), v2(-0.5, 0), v2(0, 0.5), v2(0, -0.5)}) {
    EXPECT_TRUE(contains_point(st.points, p));
  }
}

TEST(Stencil, PointClampedOntoCenterIsDropped) {
  const auto st = build_stencil(v2(1, 0), 0.25, Box::cube(2, -1, 1));
  ASSERT_EQ(st.points.size(), 3u);
  for (const Vec& p : {v2(0.5, 0), v2(1, 0.5), v2(1, -0.5)}) {
    EXPECT_TRUE(contains_point(st.points, p));
  }
}

TEST(Stencil, CustomDirectionAddsTwoPoints) {
  const Box box = Box::cube(2, -1, 1);
  const Vec d = v2(1, 1) / std::sqrt(2.0);
  const auto st = build_stencil(v2(0, 0), 0.25, box, {d});
  ASSERT_EQ(st.points.size(), 6u);
  const Vec offset = (0.25 * d).cwiseProduct(box.width());
  EXPECT_TRUE(contains_point(st.points, offset));
  EXPECT_TRUE(contains_point(st.points, -offset));
}

TEST(Stencil, AllPointsInsideBox) {
  const Box box(v2(-1, 0), v2(2, 0.5));
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto c = uniform_design(box, 1, rng()).front();
    const auto st = build_stencil(c, 0.5, box);
    for (const Vec& p : st.points) {
      EXPECT_TRUE(box.contains(p));
      EXPECT_FALSE((p.array() == c.array()).all());
    }
  }
}

TEST(StencilGradient, SymmetricQuadraticHasZeroGradient) {
  Box box = Box::cube(1, -1, 1);
  Vec c = Vec::Zero(1);
  const auto st = build_stencil(c, 0.25, box);  // h = 0.5
  std::vector<double> vals;
  for (const Vec& p : st.points) vals.push_back(p[0] * p[0]);
  EXPECT_NEAR((*stencil_gradient(st, 0.0, vals))[0], 0.0, 1e-15);
}

TEST(StencilGradient, ExactForLinear) {
  Box box = Box::cube(1, -1, 1);
  const auto st = build_stencil(Vec::Zero(1), 0.25, box);
  std::vector<double> vals;
  for (const Vec& p : st.points) vals.push_back(3.0 * p[0]);
  EXPECT_NEAR((*stencil_gradient(st, 0.0, vals))[0], 3.0, 1e-14);
}

TEST(StencilGradient, CentralDifferenceOfQuadraticIsAnalytic) {
  const Box box = Box::cube(2, -1, 1);
  const Vec c = v2(0.3, -0.3);
  const auto st = build_stencil(c, 0.05, box);  // h = 0.1
  std::vector<double> vals;
  for (const Vec& p : st.points) vals.push_back(p.squaredNorm());
  const Vec g = *stencil_gradient(st, c.squaredNorm(), vals);
  // Oracle: analytic gradient 2x.
  EXPECT_NEAR(g[0], 2 * c[0], 1e-12);
  EXPECT_NEAR(g[1], 2 * c[1], 1e-12);
}

TEST(StencilGradient, OneSidedAndMissing) {
  const Box box = Box::cube(2, -1, 1);
  const Vec c = v2(0.2, 0.0);
  const auto st = build_stencil(c, 0.25, box);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> vals;
  for (std::size_t k = 0; k < st.points.size(); ++k) {
    const Vec& p = st.points[k];
    if (st.axis[k] == 0 && st.sign[k] < 0) {
      vals.push_back(nan);
    } else if (st.axis[k] == 1) {
      vals.push_back(nan);
    } else {
      vals.push_back(5.0 * p[0]);
    }
  }
  const Vec g = *stencil_gradient(st, 5.0 * c[0], vals);
  EXPECT_NEAR(g[0], 5.0, 1e-13);
  EXPECT_EQ(g[1], 0.0);

  std::vector<double> all_nan(st.points.size(), nan);
  EXPECT_FALSE(stencil_gradient(st, 1.0, all_nan).has_value());
}

TEST(ImfilOptions, Validation) {
  ImfilOptions o;
  EXPECT_NO_THROW(o.validate());
  EXPECT_EQ(o.scales.size(), 9u);
  EXPECT_DOUBLE_EQ(o.scales.back(), 1.0 / 512);
  o.scales = {0.5, 0.5};
  EXPECT_THROW(o.validate(), ContractViolation);
  o.scales = {1.5};
  EXPECT_THROW(o.validate(), ContractViolation);
  o = ImfilOptions{};
  o.armijo_c = 1.0;
  EXPECT_THROW(o.validate(), ContractViolation);
}

TEST(Imfil, SphereConvergesNoiseFree) {
  const Box box = Box::cube(2, -1, 1);
  const auto [out, stall] =
      imfil_minimize(quadratic(Vec::Zero(2), Vec::Ones(2)), box, v2(0.3, -0.3), Budget(100));
  EXPECT_LE(out.best_f, 1e-3);
  EXPECT_LE(out.evals_used(), 100u);
  EXPECT_TRUE(all_inside(out.history, box));
}

TEST(Imfil, ConstantObjectiveExhaustsScales) {
  Objective flat{2, [](const Vec&, std::uint64_t) { return 1.0; }};
  const auto [out, stall] =
      imfil_minimize(flat, Box::cube(2, -1, 1), v2(0.2, 0.1), Budget(10000));
  EXPECT_EQ(out.termination, Termination::ScaleExhausted);
  EXPECT_EQ(out.best_x, v2(0.2, 0.1));
  EXPECT_EQ(stall.failed_scale, stall.last_good_scale);
}

TEST(Imfil, NaNEverywhereIsStencilFailure) {
  Objective bad{2, [](const Vec&, std::uint64_t) {
                  return std::numeric_limits<double>::quiet_NaN();
                }};
  const auto [out, stall] = imfil_minimize(bad, Box::cube(2, -1, 1), v2(0, 0), Budget(100));
  EXPECT_EQ(out.termination, Termination::StencilFailure);
  EXPECT_TRUE(std::isnan(out.best_f));
}

TEST(Imfil, RespectsBudgetAndRejectsOutsideStart) {
  const Box box = Box::cube(2, -1, 1);
  const auto obj = quadratic(v2(0.7, 0.1), Vec::Ones(2));
  const auto [out, stall] = imfil_minimize(obj, box, v2(-0.9, 0.9), Budget(17));
  EXPECT_EQ(out.evals_used(), 17u);
  EXPECT_EQ(out.termination, Termination::BudgetExhausted);
  EXPECT_THROW(imfil_minimize(obj, box, v2(2, 0), Budget(10)), ContractViolation);
}

TEST(Imfil, StallReportOrdering) {
  const Box box = Box::cube(2, -1, 1);
  const auto [out, stall] =
      imfil_minimize(quadratic(v2(0.11, -0.23), v2(1, 3)), box, v2(0.8, 0.8), Budget(2000));
  EXPECT_LE(stall.failed_scale, stall.last_good_scale);
  EXPECT_EQ(stall.last_good_center, out.best_x);
}

// Running best never increases and stencil scales never grow.
TEST(ImfilProperty, MonotoneBestAndScales) {
  const Box box = Box::cube(3, -2, 1);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec xstar = uniform_design(box, 1, rng()).front();
    const Vec x0 = uniform_design(box, 1, rng()).front();
    const std::uint64_t seed = rng();
    Objective obj{3, [=](const Vec& x, std::uint64_t s) {
                    auto r = substream(seed, s);
                    std::normal_distribution<double> z(0, 0.01);
                    return (x - xstar).squaredNorm() + z(r);
                  }};
    Evaluator ev(obj, 300);
    const auto res = imfil_run(ev, box, x0, {});
    double running = std::numeric_limits<double>::infinity();
    double prev = running;
    for (const auto& r : res.outcome.history) {
      running = std::min(running, r.f);
      EXPECT_LE(running, prev);
      prev = running;
      EXPECT_TRUE(box.contains(r.x));
    }
    EXPECT_TRUE(std::is_sorted(res.scale_trace.rbegin(), res.scale_trace.rend()));
  }
}

// Noise-free convex quadratics: ||best_x - x*||_inf <= 2 * smallest scale * max width.
TEST(ImfilProperty, ConvexQuadraticAccuracy) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> w(0.5, 4.0);
  for (int n : {1, 2, 5, 9, 14}) {
    const Box box = Box::cube(n, -1, 1);
    for (int trial = 0; trial < 3; ++trial) {
      Vec weights(n);
      for (int i = 0; i < n; ++i) weights[i] = w(rng);
      const Vec xstar = 0.8 * uniform_design(box, 1, rng()).front();
      const Vec x0 = uniform_design(box, 1, rng()).front();
      ImfilOptions opts;
      const auto [out, stall] =
          imfil_minimize(quadratic(xstar, weights), box, x0, Budget(60 * n), opts);
      const double tol = 2 * opts.scales.back() * box.width().maxCoeff();
      EXPECT_LE((out.best_x - xstar).lpNorm<Eigen::Infinity>(), tol) << "n=" << n;
    }
  }
}
