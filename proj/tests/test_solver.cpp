#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "imucal/calib_problem.hpp"
#include "imucal/experiments.hpp"
#include "imucal/solver.hpp"
#include "test_support.hpp"

using namespace imucal;
using imucal::testing::layout_rig;
using imucal::testing::noiseless;
using imucal::testing::simulate_excitation;
using imucal::testing::truncated;
using imucal::testing::truth_state;

namespace {

/// Linear least squares with two 3-column time blocks and a 3-column global
/// block: per-time data rows, one coupling row between the time blocks.
class LinearToy {
 public:
  using State = Eigen::VectorXd;

  explicit LinearToy(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto* m : {&a0_, &a1_, &g0_, &g1_, &c_}) {
      for (int i = 0; i < 9; ++i) (*m)(i / 3, i % 3) = n(rng);
    }
    for (auto* v : {&b0_, &b1_, &b2_}) *v = Vec3(n(rng), n(rng), n(rng));
  }

  BlockStructure structure() const { return {2, 3, 3}; }

  double cost(const State& x) const {
    double total = 0.0;
    for (const Vec3& r : residuals(x)) total += r.squaredNorm();
    return total;
  }

  void linearize(const State& x, BlockVisitor& visitor) const {
    const auto r = residuals(x);
    const SliceJacobian first[] = {{0, a0_}, {6, g0_}};
    const SliceJacobian second[] = {{3, a1_}, {6, g1_}};
    const SliceJacobian coupling[] = {{0, -c_}, {3, c_}};
    visitor.visit(r[0], first);
    visitor.visit(r[1], second);
    visitor.visit(r[2], coupling);
  }

  State retract(const State& x, const Eigen::VectorXd& d) const { return x + d; }

  Eigen::MatrixXd dense_jacobian() const {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(9, 9);
    j.block<3, 3>(0, 0) = a0_;
    j.block<3, 3>(0, 6) = g0_;
    j.block<3, 3>(3, 3) = a1_;
    j.block<3, 3>(3, 6) = g1_;
    j.block<3, 3>(6, 0) = -c_;
    j.block<3, 3>(6, 3) = c_;
    return j;
  }

  Eigen::VectorXd rhs() const {
    Eigen::VectorXd b(9);
    b << b0_, b1_, b2_;
    return b;
  }

 private:
  std::array<Vec3, 3> residuals(const State& x) const {
    return {a0_ * x.segment<3>(0) + g0_ * x.segment<3>(6) - b0_,
            a1_ * x.segment<3>(3) + g1_ * x.segment<3>(6) - b1_,
            c_ * (x.segment<3>(3) - x.segment<3>(0)) - b2_};
  }

  Mat3 a0_, a1_, g0_, g1_, c_;
  Vec3 b0_, b1_, b2_;
};

/// One residual block r = [3, 4, 0] / sigma.
class SingleBlock {
 public:
  using State = double;
  explicit SingleBlock(double sigma) : sigma_(sigma) {}
  BlockStructure structure() const { return {0, 3, 3}; }
  double cost(const State&) const { return (Vec3(3, 4, 0) / sigma_).squaredNorm(); }
  void linearize(const State&, BlockVisitor&) const {}
  State retract(const State& x, const Eigen::VectorXd&) const { return x; }

 private:
  double sigma_;
};

/// Records every linearization.
class Recorder : public BlockVisitor {
 public:
  explicit Recorder(int dim) : jtj(Eigen::MatrixXd::Zero(dim, dim)), jtr(Eigen::VectorXd::Zero(dim)) {}
  void visit(const Vec3& r, std::span<const SliceJacobian> slices) override {
    for (const auto& a : slices) {
      jtr.segment<3>(a.offset) += a.jacobian.transpose() * r;
      for (const auto& b : slices) {
        jtj.block<3, 3>(a.offset, b.offset) += a.jacobian.transpose() * b.jacobian;
      }
    }
  }
  Eigen::MatrixXd jtj;
  Eigen::VectorXd jtr;
};

ParameterVector perturbed_state(const Simulation& sim, double mm, double deg, std::uint64_t seed) {
  InitialGuessSpec spec;
  spec.position_std_mm = mm;
  spec.orientation_std_deg = deg;
  spec.fixed_magnitude = true;
  spec.seed = seed;
  ExtrinsicSet guess = perturbed_guess(sim.truth.extrinsics, spec);
  return initial_guess(sim.measurements, guess);
}

double max_position_error(const ExtrinsicSet& a, const ExtrinsicSet& b) {
  double worst = 0.0;
  for (int n = 1; n < a.num_imus(); ++n) worst = std::max(worst, (a.position[n] - b.position[n]).norm());
  return worst;
}

double max_orientation_error(const ExtrinsicSet& a, const ExtrinsicSet& b) {
  double worst = 0.0;
  for (int n = 1; n < a.num_imus(); ++n) {
    worst = std::max(worst, geodesic_angle(a.orientation[n], b.orientation[n]));
  }
  return worst;
}

}  // namespace

TEST(SolverOptions, Validation) {
  EXPECT_NO_THROW(SolverOptions{}.validate());
  SolverOptions o;
  o.damping_up = 1.0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
  o = {};
  o.damping_down = 1.5;
  EXPECT_THROW(o.validate(), std::invalid_argument);
  o = {};
  o.max_iterations = 0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
  o = {};
  o.cost_tolerance = -1.0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
}

TEST(EvaluateCost, Whitening) {
  EXPECT_DOUBLE_EQ(evaluate_cost(SingleBlock(1.0), 0.0), 25.0);
  EXPECT_DOUBLE_EQ(evaluate_cost(SingleBlock(0.5), 0.0), 100.0);
}

TEST(Solve, LinearProblemInOneIteration) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const LinearToy toy(seed);
    const Eigen::VectorXd closed = toy.dense_jacobian().colPivHouseholderQr().solve(toy.rhs());
    SolverOptions o;
    o.initial_damping = 1e-15;
    o.max_iterations = 1;
    const auto [x, report] = solve(toy, Eigen::VectorXd::Zero(9).eval(), o);
    EXPECT_EQ(report.iterations, 1);
    EXPECT_LT((x - closed).lpNorm<Eigen::Infinity>(), 1e-9 * (1.0 + closed.lpNorm<Eigen::Infinity>()));
  }
}

TEST(Solve, BlockSolveMatchesDenseNormalEquations) {
  const auto sim = truncated(simulate_excitation(layout_rig(2, 1.0, 3)), 30);
  ProblemOptions po;
  const ParameterVector x = perturbed_state(sim, 5.0, 5.0, 8);
  const CalibrationProblem p = assemble(sim.measurements, po, x);
  ASSERT_LE(p.layout().dimension(), 500);
  BlockNormalEquations normal(p.structure());
  p.linearize(x, normal);
  Recorder dense(p.layout().dimension());
  p.linearize(x, dense);
  EXPECT_LT((normal.dense() - dense.jtj).norm(), 1e-9 * dense.jtj.norm());
  for (double lambda : {1e-4, 1e-2, 1.0}) {
    const Eigen::VectorXd damping = lambda * normal.diagonal().cwiseMax(1e-6);
    const auto step = normal.solve(damping, -normal.gradient());
    ASSERT_TRUE(step.has_value());
    Eigen::MatrixXd h = dense.jtj;
    h.diagonal() += damping;
    const Eigen::VectorXd reference = h.ldlt().solve(-dense.jtr);
    EXPECT_LT((*step - reference).lpNorm<Eigen::Infinity>(), 1e-8 * (1.0 + reference.lpNorm<Eigen::Infinity>()))
        << "lambda " << lambda;
  }
}

TEST(Solve, AtTruthOnNoiselessData) {
  const auto sim = truncated(simulate_excitation(noiseless(layout_rig(2, 1.0, 4))), 50);
  ASSERT_EQ(sim.measurements.num_samples, 50);
  const ParameterVector truth = truth_state(sim);
  const CalibrationProblem p = assemble(sim.measurements, {}, truth);
  const auto [x, report] = solve(p, truth);
  EXPECT_TRUE(report.converged());
  EXPECT_LE(report.iterations, 2);
  EXPECT_LT(report.final_cost, 1e-16);
}

TEST(Solve, RecoversExtrinsicsOnNoiselessData) {
  // four IMUs keep the misalignments observable
  const auto sim = simulate_excitation(noiseless(layout_rig(4, 5.0, 5)));
  const ParameterVector x0 = perturbed_state(sim, 5.0, 5.0, 6);
  const CalibrationProblem p = assemble(sim.measurements, {}, x0);
  SolverOptions o;
  o.keep_log = true;
  const auto [x, report] = solve(p, x0, o);
  ASSERT_TRUE(report.converged()) << report.message;
  EXPECT_LT(max_position_error(x.extrinsics, sim.truth.extrinsics), 1e-7);
  EXPECT_LT(max_orientation_error(x.extrinsics, sim.truth.extrinsics), 1e-7);
  double last = report.initial_cost;
  for (const auto& rec : report.log) {
    EXPECT_LE(rec.cost, last);
    if (rec.accepted) last = rec.cost;
  }
  EXPECT_LE(report.final_cost, report.initial_cost);
}

TEST(Solve, RecoversExtrinsicsWithoutMisalignment) {
  RigScenario sc = noiseless(layout_rig(2, 5.0, 7));
  sc.extrinsics.misalignment.assign(2, UnitQuaternion());
  sc.misalignment_std_deg = 0.0;
  const auto sim = simulate_excitation(sc);
  ProblemOptions po;
  po.estimate_misalignment = false;
  const ParameterVector x0 = perturbed_state(sim, 5.0, 5.0, 9);
  const auto [x, report] = solve(assemble(sim.measurements, po, x0), x0);
  ASSERT_TRUE(report.converged()) << report.message;
  EXPECT_LT(max_position_error(x.extrinsics, sim.truth.extrinsics), 1e-7);
  EXPECT_LT(max_orientation_error(x.extrinsics, sim.truth.extrinsics), 1e-7);
}

TEST(Solve, IndependentOfTrajectoryPhase) {
  RigScenario sc = noiseless(layout_rig(2, 5.0, 10));
  sc.extrinsics.misalignment.assign(2, UnitQuaternion());
  sc.misalignment_std_deg = 0.0;
  ProblemOptions po;
  po.estimate_misalignment = false;
  std::vector<ExtrinsicSet> estimates;
  for (double shift : {0.0, 0.7, 2.1}) {
    MotionProfile m = MotionProfile::excitation();
    m.angular_phase.array() += shift;
    m.linear_phase.array() += shift;
    const auto sim = simulate_excitation(sc, 0.01, m);
    const ParameterVector x0 = perturbed_state(sim, 5.0, 5.0, 11);
    const auto [x, report] = solve(assemble(sim.measurements, po, x0), x0);
    ASSERT_TRUE(report.converged()) << report.message;
    estimates.push_back(x.extrinsics);
  }
  for (std::size_t i = 1; i < estimates.size(); ++i) {
    EXPECT_LT(max_position_error(estimates[i], estimates[0]), 1e-9);
    EXPECT_LT(max_orientation_error(estimates[i], estimates[0]), 1e-9);
  }
}

TEST(Solve, MonotoneCostOnNoisyData) {
  const auto sim = simulate_excitation(layout_rig(4, 5.0, 12));
  const ParameterVector x0 = perturbed_state(sim, 5.0, 5.0, 13);
  SolverOptions o;
  o.keep_log = true;
  const auto [x, report] = solve(assemble(sim.measurements, {}, x0), x0, o);
  EXPECT_TRUE(report.converged()) << report.message;
  double last = report.initial_cost;
  for (const auto& rec : report.log) {
    if (!rec.accepted) continue;
    EXPECT_LE(rec.cost, last);
    last = rec.cost;
  }
  EXPECT_EQ(last, report.final_cost);
}
