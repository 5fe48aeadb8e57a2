#include "trades/affine.hpp"
#include "trades/assumptions.hpp"
#include "trades/diagnostics.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace trades;

namespace {

GameDefinition scalar_game(const std::vector<double>& c, double k, double lo = -10, double hi = 10) {
  std::vector<Agent> agents;
  for (double ci : c) {
    CostOracle cost;
    cost.grad1 = [ci, k](const Vec& x, const Vec& s) { return Vec::Constant(1, x[0] - ci + k * s[0]); };
    cost.grad2 = [k](const Vec& x, const Vec&) { return Vec::Constant(1, k * x[0]); };
    agents.push_back(Agent{cost, linear_rule(Mat::Identity(1, 1)),
                           FeasibleSetProjector(ConvexSet::box(Vec::Constant(1, lo), Vec::Constant(1, hi)))});
  }
  return GameDefinition(std::move(agents), 1);
}

QuadraticFamily family(std::uint64_t seed = 1, double box = std::numeric_limits<double>::infinity()) {
  QuadraticFamilyParams p;
  p.seed = seed;
  p.box_half_width = box;
  return make_quadratic_family(p);
}

WeightedDigraph graph(Index n, double eta, std::uint64_t seed) {
  return make_doubly_stochastic(gen_digraph(n, eta, seed), WeightMethod::metropolis_symmetrized);
}

}  // namespace

TEST(Init, FeasibleStartUnchangedAndZeroTrackers) {
  auto fam = family(1, 1.0);
  StrategyProfile x0(fam.game.dims());
  x0.stacked().setConstant(0.25);
  const auto s = init(fam.game, x0);
  EXPECT_EQ(s.x.stacked(), x0.stacked());
  EXPECT_EQ(s.z, RowMat::Zero(10, 2));
  EXPECT_EQ(s.t, 0);
}

TEST(Init, SeededDrawIsReproducibleAndProjected) {
  auto fam = family(2, 0.5);
  const auto a = init(fam.game, 42, 3.0), b = init(fam.game, 42, 3.0);
  EXPECT_EQ(a.x.stacked(), b.x.stacked());
  EXPECT_LE(a.x.stacked().cwiseAbs().maxCoeff(), 0.5);
  EXPECT_NE(init(fam.game, 43, 3.0).x.stacked(), a.x.stacked());
}

TEST(Step, HandComputedTwoAgentScalar) {
  const auto game = scalar_game({0.5, 2.0}, 0.4);
  const auto g = graph(2, 1.0, 1);
  TradesConfig cfg;
  cfg.gamma = 0.1;
  cfg.delta = 0.5;
  TradesState s{StrategyProfile({1, 1}, (Vec(2) << 1.0, -1.0).finished()), RowMat(2, 1), 0};
  s.z << 0.3, -0.3;
  const auto next = step(game, g, cfg, s);
  EXPECT_NEAR(next.x.stacked()[0], 0.939, 1e-14);
  EXPECT_NEAR(next.x.stacked()[1], -0.814, 1e-14);
  EXPECT_NEAR(next.z(0, 0), -1.0, 1e-14);
  EXPECT_NEAR(next.z(1, 0), 1.0, 1e-14);
  EXPECT_EQ(next.t, 1);
}

TEST(Step, SingleAgentIsProjectedGradient) {
  const auto game = scalar_game({3.0}, 0.5, 0.0, 2.5);
  const auto g = graph(1, 1.0, 1);
  TradesConfig cfg;
  cfg.gamma = 0.2;
  cfg.delta = 0.7;
  TradesState s = init(game, StrategyProfile({1}, Vec::Constant(1, 0.4)));
  for (int k = 0; k < 30; ++k) {
    const double x = s.x.stacked()[0];
    // J(x, phi(x)) = 1/2 (x - 3)^2 + 0.5 x^2  => d/dx = 2x - 3 (phi = identity, N = 1)
    const double expect = x + cfg.delta * (std::clamp(x - cfg.gamma * (2 * x - 3.0), 0.0, 2.5) - x);
    s = step(game, g, cfg, s);
    EXPECT_NEAR(s.x.stacked()[0], expect, 1e-15);
    EXPECT_EQ(s.z(0, 0), 0.0);
  }
}

TEST(Step, EquilibriumWithExactTrackersIsStationary) {
  auto fam = family(3, 0.4);
  const auto g = graph(10, 0.5, 2);
  const auto xs = solve_ne_oracle(fam.game).x;
  TradesConfig cfg;
  TradesState s{xs, exact_trackers(fam.game, xs), 0};
  const auto next = step(fam.game, g, cfg, s);
  EXPECT_LE(distance(next.x, xs), 1e-11);
  EXPECT_LE((next.z - s.z).norm(), 1e-11);
}

TEST(Step, NonFiniteDetected) {
  auto fam = family(4);
  const auto g = graph(10, 0.7, 3);
  TradesConfig cfg;
  cfg.gamma = 10.0;
  cfg.max_iter = 5000;
  try {
    run(fam.game, g, cfg, init(fam.game, 1).x);
    FAIL() << "expected divergence";
  } catch (const NonFiniteDetected& e) {
    EXPECT_GT(e.iteration(), 0);
  }
}

TEST(Config, Validation) {
  TradesConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.delta = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.delta = 0.5;
  cfg.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.gamma = 0.01;
  cfg.stop_tol = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Run, LinearConvergenceAndInvariants) {
  auto fam = family(5, 2.0);
  const auto g = graph(10, 0.7, 4);
  const auto xs = solve_ne_oracle(fam.game).x;
  TradesConfig cfg;
  RunOptions opts;
  opts.x_star = xs;
  const auto res = run(fam.game, g, cfg, init(fam.game, 5).x, opts);
  EXPECT_TRUE(res.report.pass());
  EXPECT_GT(res.report.fit.a2, 0.0);
  EXPECT_GE(res.report.fit.r_squared, 0.98);
  EXPECT_LE(res.report.final_err, 1e-8);
  EXPECT_LE(res.report.max_tracker_sum, 1e-10);
  EXPECT_LE(res.report.max_feasibility, 1e-12);
  for (std::size_t k = 1; k < res.trace.size(); ++k) EXPECT_GT(res.trace.t[k], res.trace.t[k - 1]);
}

TEST(Run, StrideKeepsFirstAndLast) {
  auto fam = family(6);
  const auto g = graph(10, 0.7, 4);
  TradesConfig cfg;
  cfg.max_iter = 95;
  cfg.trace_stride = 10;
  const auto res = run(fam.game, g, cfg, init(fam.game, 1).x);
  EXPECT_EQ(res.trace.t.front(), 0.0);
  EXPECT_EQ(res.trace.t.back(), 95.0);
  EXPECT_EQ(res.trace.size(), 11u);
  EXPECT_EQ(res.report.stop, StopReason::max_iter);
  EXPECT_EQ(res.report.fit_source, "step_norm");
}

TEST(Run, DeterministicReplay) {
  auto fam = family(7);
  const auto g = graph(10, 0.7, 4);
  TradesConfig cfg;
  cfg.max_iter = 500;
  std::ostringstream a, b;
  write_trace_csv(a, run(fam.game, g, cfg, init(fam.game, 9).x).trace);
  write_trace_csv(b, run(fam.game, g, cfg, init(fam.game, 9).x).trace);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "t, err_x, est_err_max, disagreement, step_norm");
}

TEST(Run, DisagreementEqualsBasisCoordinates) {
  auto fam = family(8);
  const auto g = graph(10, 0.3, 5);
  TradesConfig cfg;
  TradesState s = init(fam.game, 3);
  for (int k = 0; k < 5; ++k) s = step(fam.game, g, cfg, s);
  const ConsensusBasis basis(10);
  const RowMat phi = aggregation_outputs(fam.game, s.x);
  const RowMat h = -basis.project(phi);
  const auto c = decompose_tracker(basis, s.z);
  EXPECT_LE(c.mean.norm(), 1e-14);
  EXPECT_NEAR((c.perp - h).norm(), basis.project(s.z + phi).norm(), 1e-13);
}

TEST(RateFit, RecoversExponent) {
  std::vector<double> t, e;
  for (int k = 0; k < 400; ++k) t.push_back(k), e.push_back(3.0 * std::exp(-0.05 * k));
  const auto fit = fit_linear_rate(t, e);
  EXPECT_NEAR(fit.a2, 0.05, 1e-10);
  EXPECT_NEAR(fit.a1, 3.0, 1e-8);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
  EXPECT_EQ(fit.window_begin, 50u);
}

TEST(RateFit, IgnoresFloorAndFallsBack) {
  std::vector<double> t, e;
  for (int k = 0; k < 200; ++k) t.push_back(k), e.push_back(k < 60 ? std::exp(-0.5 * k) : 0.0);
  const auto fit = fit_linear_rate(t, e);
  EXPECT_NEAR(fit.a2, 0.5, 1e-9);
  const auto few = fit_linear_rate({0, 1, 2}, {1.0, 0.5, 0.25});
  EXPECT_NEAR(few.a2, std::log(2.0), 1e-12);
  EXPECT_FALSE(fit_linear_rate({0}, {1.0}).valid());
}

TEST(BoundaryLayer, CompleteGraphConvergesInOneStep) {
  auto fam = family(9);
  const auto g = graph(10, 1.0, 1);
  const auto rep = boundary_layer_probe(g, fam.game, init(fam.game, 2).x, 3);
  EXPECT_GT(rep.est_err_max[0], 0.1);
  EXPECT_LE(rep.est_err_max[1], 1e-14);
}

TEST(BoundaryLayer, SingleAgentAlreadyConverged) {
  const auto game = scalar_game({1.0}, 0.2);
  const auto rep = boundary_layer_probe(graph(1, 1.0, 1), game, StrategyProfile({1}, Vec::Constant(1, 0.7)), 3);
  for (double e : rep.est_err_max) EXPECT_EQ(e, 0.0);
}

TEST(BoundaryLayer, GeometricDecayAtSpectralRate) {
  auto fam = family(10);
  const auto g = graph(10, 0.2, 6);
  const double rho = spectrum(g).rho_disagreement;
  const auto rep = boundary_layer_probe(g, fam.game, init(fam.game, 3).x, 200);
  const double floor = 1e-8 * rep.disagreement[0];
  for (std::size_t k = 10; k < rep.ratios.size(); ++k) {
    if (rep.disagreement[k] < floor) break;
    EXPECT_LE(rep.ratios[k], rho + 0.01) << "step " << k;
  }
  EXPECT_LE(rep.est_err_max.back(), 1e-10 * std::max(1.0, rep.est_err_max.front()));
}

TEST(Reduced, ExactTrackingMatchesCentralized) {
  auto fam = family(11, 0.5);
  const auto g = graph(10, 0.4, 7);
  TradesConfig cfg;
  const auto x0 = init(fam.game, 4).x;
  const auto a = reduced_system_run(fam.game, cfg, x0, 200);
  const auto b = exact_tracking_run(fam.game, g, cfg, x0, 200);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LE(distance(a[k], b[k]), 1e-12);
}

TEST(Reduced, MonotoneErrorDecrease) {
  auto fam = family(12);
  TradesConfig cfg;
  const auto xs = solve_ne_oracle(fam.game).x;
  const auto traj = reduced_system_run(fam.game, cfg, init(fam.game, 5).x, 300);
  for (std::size_t k = 1; k < traj.size(); ++k) EXPECT_LE(distance(traj[k], xs), distance(traj[k - 1], xs) + 1e-15);
}

TEST(Baseline, ScheduleValidation) {
  EXPECT_NO_THROW((DiminishingSchedule{0.01, 0.6}.validate()));
  EXPECT_THROW((DiminishingSchedule{0.01, 2.0}.validate()), std::invalid_argument);  // gamma0 / t^2 is summable
  EXPECT_THROW((DiminishingSchedule{0.01, 0.5}.validate()), std::invalid_argument);
  EXPECT_DOUBLE_EQ((DiminishingSchedule{0.5, 1.0}(3)), 0.125);
}

TEST(Baseline, ConstantScheduleIsUndampedTrades) {
  auto fam = family(13);
  const auto g = graph(10, 0.5, 8);
  const auto x0 = init(fam.game, 6).x;
  BaselineOptions bo;
  bo.iterations = 50;
  bo.check_schedule = false;
  const auto base = baseline_diminishing(fam.game, g, DiminishingSchedule{0.01, 0.0}, x0, bo);
  TradesConfig cfg;
  cfg.gamma = 0.01;
  cfg.delta = 1.0;  // step() itself does not validate; delta = 1 is the undamped update
  TradesState s = init(fam.game, x0);
  for (int k = 0; k < 50; ++k) s = step(fam.game, g, cfg, s);
  EXPECT_LE(distance(s.x, base.state.x), 1e-14);
  EXPECT_LE((s.z - base.state.z).norm(), 1e-14);
}

TEST(Baseline, SlowerTailThanTrades) {
  auto fam = family(14);
  const auto g = graph(10, 0.7, 9);
  const auto xs = solve_ne_oracle(fam.game).x;
  const auto x0 = init(fam.game, 7).x;
  BaselineOptions bo;
  bo.iterations = 3000;
  bo.x_star = xs;
  const auto base = baseline_diminishing(fam.game, g, DiminishingSchedule{0.01, 0.6}, x0, bo);
  TradesConfig cfg;
  cfg.max_iter = 3000;
  RunOptions opts;
  opts.x_star = xs;
  const auto tr = run(fam.game, g, cfg, x0, opts);
  EXPECT_LT(tr.report.final_err, base.err_x.back());
}
