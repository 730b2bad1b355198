#include <gtest/gtest.h>

#include <cmath>

#include "imucal/observability.hpp"
#include "test_support.hpp"

using namespace imucal;
using imucal::testing::layout_rig;
using imucal::testing::noiseless;
using imucal::testing::simulate_excitation;
using imucal::testing::truncated;
using imucal::testing::truth_state;

namespace {

Simulation constant_translation(int num_imus, int num_samples) {
  MotionProfile m;
  m.angular_amplitude.setZero();
  m.linear_amplitude.setZero();
  m.accel_offset = Vec3(0.5, -0.2, 0.1);
  RigScenario sc = noiseless(layout_rig(num_imus, 1.0, 3));
  return truncated(simulate(sc, make_trajectory(sc.duration, 0.01, m)), num_samples);
}

Simulation single_axis_rate(int num_imus, int num_samples) {
  MotionProfile m;
  m.angular_amplitude.setZero();
  m.omega_offset = Vec3(0, 0, 1.5);
  RigScenario sc = noiseless(layout_rig(num_imus, 1.0, 4));
  return truncated(simulate(sc, make_trajectory(sc.duration, 0.01, m)), num_samples);
}

RankReport rank_at_truth(const Simulation& sim, bool misalignment, RankMethod method = RankMethod::kAuto) {
  ProblemOptions po;
  po.estimate_misalignment = misalignment;
  const ParameterVector x = truth_state(sim);
  RankOptions ro;
  ro.method = method;
  return check_rank(assemble(sim.measurements, po, x), x, ro);
}

}  // namespace

TEST(CheckRank, ConstantTranslationIsDeficient) {
  const RankReport r = rank_at_truth(constant_translation(2, 30), false);
  EXPECT_TRUE(r.deficient);
  EXPECT_EQ(r.dimension, 6);
  ASSERT_GE(r.null_directions.cols(), 1);
  // every unobservable direction lies in the span of p and q; the position
  // block must take part
  double position_weight = 0.0;
  for (Eigen::Index c = 0; c < r.null_directions.cols(); ++c) {
    position_weight = std::max(position_weight, r.null_directions.col(c).head<3>().norm());
  }
  EXPECT_GT(position_weight, 0.5);
  EXPECT_EQ(r.labels.front(), "p1.x");
}

TEST(CheckRank, SingleAxisRateIsDeficient) {
  for (bool mis : {false, true}) {
    EXPECT_TRUE(rank_at_truth(single_axis_rate(2, 30), mis).deficient);
    EXPECT_TRUE(rank_at_truth(single_axis_rate(3, 30), mis).deficient);
  }
}

TEST(CheckRank, ExcitationIsFullRank) {
  const Simulation sim = truncated(simulate_excitation(noiseless(layout_rig(2, 1.0, 5))), 30);
  const RankReport r = rank_at_truth(sim, false);
  EXPECT_FALSE(r.deficient);
  EXPECT_EQ(r.rank, 6);
  EXPECT_EQ(r.null_directions.cols(), 0);
  const RankReport four = rank_at_truth(truncated(simulate_excitation(noiseless(layout_rig(4, 1.0, 6))), 30), true);
  EXPECT_FALSE(four.deficient);
  EXPECT_EQ(four.dimension, 30);
}

TEST(CheckRank, SingleSampleIsDeficient) {
  const Simulation sim = truncated(simulate_excitation(noiseless(layout_rig(2, 1.0, 7))), 1);
  const RankReport r = rank_at_truth(sim, true);
  EXPECT_TRUE(r.deficient);
  EXPECT_LT(r.full_rank, r.full_dimension);
}

TEST(CheckRank, DenseAndStructuredPathsAgree) {
  for (const Simulation& sim : {truncated(simulate_excitation(noiseless(layout_rig(3, 1.0, 8))), 20),
                                single_axis_rate(3, 20), constant_translation(2, 20)}) {
    for (bool mis : {false, true}) {
      const RankReport dense = rank_at_truth(sim, mis, RankMethod::kDense);
      const RankReport structured = rank_at_truth(sim, mis, RankMethod::kStructured);
      EXPECT_EQ(dense.rank, structured.rank);
      EXPECT_EQ(dense.deficient, structured.deficient);
      ASSERT_EQ(dense.singular_values.size(), structured.singular_values.size());
      for (std::size_t i = 0; i < dense.singular_values.size(); ++i) {
        EXPECT_NEAR(dense.singular_values[i], structured.singular_values[i],
                    1e-9 * dense.reference_singular_value);
      }
    }
  }
}

TEST(CheckRank, InvariantToResidualRescaling) {
  const Simulation sim = truncated(simulate_excitation(noiseless(layout_rig(2, 1.0, 9))), 30);
  const RankReport base = rank_at_truth(sim, false);
  for (double c : {1e-3, 10.0, 1e3}) {
    Simulation scaled = sim;
    for (auto& n : scaled.measurements.noise) {
      n.sigma_a *= c;
      n.sigma_g *= c;
      n.sigma_ba *= c;
      n.sigma_bg *= c;
    }
    const RankReport r = rank_at_truth(scaled, false);
    EXPECT_EQ(r.rank, base.rank);
    EXPECT_EQ(r.deficient, base.deficient);
  }
  const RankReport degenerate = rank_at_truth(single_axis_rate(2, 30), false);
  Simulation scaled = single_axis_rate(2, 30);
  for (auto& n : scaled.measurements.noise) n.sigma_bg *= 100.0;
  EXPECT_EQ(rank_at_truth(scaled, false).rank, degenerate.rank);
}

TEST(CheckRank, RejectsNonFiniteJacobianAndBadThreshold) {
  const Simulation sim = truncated(simulate_excitation(noiseless(layout_rig(2, 1.0, 10))), 10);
  ParameterVector x = truth_state(sim);
  const CalibrationProblem p = assemble(sim.measurements, {}, x);
  RankOptions bad;
  bad.threshold = 0.0;
  EXPECT_THROW(check_rank(p, x, bad), std::invalid_argument);
  x.extrinsics.position[1].x() = std::numeric_limits<double>::infinity();
  EXPECT_THROW(check_rank(p, x), std::domain_error);
}

TEST(CalibrationLabels, TangentOrder) {
  const std::vector<std::string> with = calibration_labels(ParameterLayout(3, 5, true));
  ASSERT_EQ(with.size(), 21u);
  EXPECT_EQ(with[0], "p1.x");
  EXPECT_EQ(with[3], "q1.x");
  EXPECT_EQ(with[6], "p2.x");
  EXPECT_EQ(with[12], "m0.x");
  EXPECT_EQ(with[20], "m2.z");
  EXPECT_EQ(calibration_labels(ParameterLayout(3, 5, false)).size(), 12u);
}

TEST(JacobianBlockDims, CaseList) {
  EXPECT_EQ(jacobian_block_dims(1, 10, 0, true), std::make_pair(12, 12));
  EXPECT_EQ(jacobian_block_dims(10, 10, 1, true), std::make_pair(6, 15));
  EXPECT_EQ(jacobian_block_dims(3, 10, 2, false), std::make_pair(12, 12));
  EXPECT_EQ(jacobian_block_dims(10, 10, 0, false), std::make_pair(6, 9));
}
