#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "imucal/experiments.hpp"
#include "test_support.hpp"

using namespace imucal;

namespace {

ExperimentOptions quick(int trials) {
  ExperimentOptions o;
  o.trials = trials;
  o.grid_trials = trials;
  o.duration = 4.0;
  o.seed = 31;
  return o;
}

}  // namespace

TEST(PerturbedGuess, FixedMagnitude) {
  const ExtrinsicSet truth = ExtrinsicSet::reference_layout();
  InitialGuessSpec spec;
  spec.position_std_mm = 20.0;
  spec.orientation_std_deg = 30.0;
  spec.fixed_magnitude = true;
  for (std::uint64_t seed = 1; seed < 20; ++seed) {
    spec.seed = seed;
    const ExtrinsicSet g = perturbed_guess(truth, spec);
    EXPECT_EQ(g.position[0], Vec3::Zero());
    for (int n = 1; n < 4; ++n) {
      EXPECT_NEAR((g.position[n] - truth.position[n]).norm(), 0.020, 1e-12);
      EXPECT_NEAR(rad2deg(geodesic_angle(g.orientation[n], truth.orientation[n])), 30.0, 1e-9);
    }
    for (int n = 0; n < 4; ++n) EXPECT_EQ(g.misalignment[n].xyzw(), UnitQuaternion().xyzw());
  }
}

TEST(PerturbedGuess, ZeroPerturbationKeepsPoses) {
  const ExtrinsicSet truth = ExtrinsicSet::reference_layout();
  InitialGuessSpec spec;
  spec.position_std_mm = 0.0;
  spec.orientation_std_deg = 0.0;
  const ExtrinsicSet g = perturbed_guess(truth, spec);
  for (int n = 1; n < 4; ++n) {
    EXPECT_EQ(g.position[n], truth.position[n]);
    EXPECT_LT(geodesic_angle(g.orientation[n], truth.orientation[n]), 1e-15);
  }
}

TEST(PerturbedGuess, NormalModeSpread) {
  const ExtrinsicSet truth = ExtrinsicSet::reference_layout();
  InitialGuessSpec spec;
  double sq = 0.0;
  int count = 0;
  for (std::uint64_t seed = 1; seed <= 400; ++seed) {
    spec.seed = seed;
    const ExtrinsicSet g = perturbed_guess(truth, spec);
    for (int n = 1; n < 4; ++n) {
      const Vec3 d = g.position[n] - truth.position[n];
      sq += d.squaredNorm() / 3.0;
      ++count;
    }
  }
  // per-axis standard deviation of 5 mm
  EXPECT_NEAR(std::sqrt(sq / count) * 1e3, 5.0, 0.3);
}

TEST(RunParallel, ResultsIndependentOfJobs) {
  const std::function<int(int)> square = [](int i) { return i * i; };
  const auto serial = run_parallel<int>(50, 1, square);
  const auto parallel = run_parallel<int>(50, 4, square);
  EXPECT_EQ(serial, parallel);
  EXPECT_EQ(serial[7], 49);
  EXPECT_TRUE(run_parallel<int>(0, 3, square).empty());
}

TEST(RunParallel, PropagatesExceptions) {
  std::atomic<int> calls{0};
  const std::function<int(int)> task = [&](int i) {
    ++calls;
    if (i == 3) throw std::runtime_error("boom");
    return i;
  };
  EXPECT_THROW(run_parallel<int>(8, 2, task), std::runtime_error);
}

TEST(RunTrial, ReferenceSetupConverges) {
  TrialSetup setup = reference_setup(5.0, 12);
  const TrialOutcome out = run_trial(setup);
  EXPECT_TRUE(out.result.report.converged()) << out.result.report.message;
  EXPECT_FALSE(out.fit.suspect);
  EXPECT_GT(out.fit.reduced_chi2, 0.5);
  EXPECT_LT(out.fit.reduced_chi2, 1.5);
  const TrialSummary s = summarize(out);
  EXPECT_LT(s.extrinsics.position_mm, 2.0);
  EXPECT_LT(s.extrinsics.orientation_deg, 0.3);
}

TEST(RunTrial, Deterministic) {
  const TrialSetup setup = reference_setup(3.0, 13);
  const TrialOutcome a = run_trial(setup);
  const TrialOutcome b = run_trial(setup);
  for (int n = 0; n < 4; ++n) {
    EXPECT_EQ(a.result.estimate.extrinsics.position[n], b.result.estimate.extrinsics.position[n]);
  }
  EXPECT_EQ(a.result.report.final_cost, b.result.report.final_cost);
}

TEST(Reproduce, UnknownIdThrows) {
  EXPECT_THROW(reproduce("nope", quick(1)), std::invalid_argument);
  const auto& ids = experiment_ids();
  EXPECT_NE(std::find(ids.begin(), ids.end(), "rmse_study"), ids.end());
  EXPECT_NE(std::find(ids.begin(), ids.end(), "robustness_grid"), ids.end());
}

TEST(Reproduce, OutputIndependentOfJobs) {
  ExperimentOptions o = quick(2);
  const std::string serial = render_tables(reproduce("rmse_study", o), TableFormat::kJson);
  o.jobs = 2;
  EXPECT_EQ(render_tables(reproduce("rmse_study", o), TableFormat::kJson), serial);
}

TEST(Reproduce, AblationPairsColumns) {
  const auto tables = reproduce("misalign_ablation", quick(1));
  ASSERT_FALSE(tables.empty());
  bool paired = false;
  for (const auto& t : tables) {
    for (const auto& c : t.columns) paired = paired || c.find("without") != std::string::npos;
  }
  EXPECT_TRUE(paired);
}

TEST(Reproduce, GridCoversFourByFour) {
  ExperimentOptions o = quick(1);
  o.duration = 3.0;
  const std::vector<GridCell> cells = robustness_grid(o);
  ASSERT_EQ(cells.size(), 16u);
  for (const auto& c : cells) EXPECT_EQ(c.study.trials.size(), 1u);
  const auto tables = grid_tables(cells);
  ASSERT_FALSE(tables.empty());
  EXPECT_EQ(tables.front().rows.size(), 4u);
  EXPECT_EQ(tables.front().columns.size(), 5u);
}
