#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "imucal/imu_model.hpp"

using namespace imucal;

namespace {

double sample_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / (v.size() - 1));
}

}  // namespace

TEST(AccelMeasure, StationaryMeasuresMinusGravity) {
  const Vec3 m = accel_measure(Vec3::Zero(), Vec3(0, 0, -9.81), Vec3::Zero(), Vec3::Zero());
  EXPECT_EQ(m, Vec3(0, 0, 9.81));
}

TEST(AccelMeasure, Additive) {
  EXPECT_EQ(accel_measure(Vec3(1, 2, 3), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()), Vec3(1, 2, 3));
  const Vec3 m = accel_measure(Vec3::Zero(), Vec3::Zero(), Vec3(0.01, 0, 0), Vec3(0, 0.001, 0));
  EXPECT_EQ(m, Vec3(0.01, 0.001, 0));
}

TEST(GyroMeasure, Examples) {
  EXPECT_EQ(gyro_measure(Vec3(0, 0, 1), UnitQuaternion(), Vec3::Zero(), Vec3::Zero()), Vec3(0, 0, 1));
  const Vec3 r = gyro_measure(Vec3(0.1, 0, 0), exp_map(Vec3(0, 0, kPi / 2)), Vec3::Zero(), Vec3::Zero());
  EXPECT_LT((r - Vec3(0, 0.1, 0)).norm(), 1e-15);
  EXPECT_EQ(gyro_measure(Vec3::Zero(), UnitQuaternion(), Vec3(0, 0, 0.002), Vec3::Zero()),
            Vec3(0, 0, 0.002));
}

TEST(Measure, AffineInBiasAndNoise) {
  const Vec3 a(0.3, -1.2, 2.0), g(0.5, 0.2, -9.7), b(0.01, -0.02, 0.03), n(-0.001, 0.002, 0.0005);
  const Vec3 base = accel_measure(a, g, Vec3::Zero(), Vec3::Zero());
  EXPECT_LT((accel_measure(a, g, b, n) - (base + b + n)).norm(), 1e-15);
  const UnitQuaternion m = exp_map(Vec3(0.01, -0.02, 0.015));
  const Vec3 w(0.4, 0.1, -0.7);
  const Vec3 gbase = gyro_measure(w, m, Vec3::Zero(), Vec3::Zero());
  EXPECT_LT((gyro_measure(w, m, b, n) - (gbase + b + n)).norm(), 1e-15);
}

TEST(SampleNoise, ReferenceStandardDeviations) {
  const ImuNoiseSpec spec = ImuNoiseSpec::reference();
  Rng rng(42);
  std::vector<double> a, g;
  for (int i = 0; i < 100000; ++i) {
    const auto [na, ng] = sample_noise(spec, rng);
    a.push_back(na.x());
    g.push_back(ng.y());
  }
  EXPECT_NEAR(sample_std(a), 2e-2, 0.02 * 2e-2);
  EXPECT_NEAR(sample_std(g), 1.6968e-3, 0.02 * 1.6968e-3);
}

TEST(SampleNoise, Reproducible) {
  const ImuNoiseSpec spec = ImuNoiseSpec::reference();
  Rng r1(9), r2(9);
  for (int i = 0; i < 100; ++i) {
    const auto x = sample_noise(spec, r1);
    const auto y = sample_noise(spec, r2);
    EXPECT_EQ(x.first, y.first);
    EXPECT_EQ(x.second, y.second);
  }
}

TEST(StepBias, IncrementStandardDeviations) {
  const ImuNoiseSpec spec = ImuNoiseSpec::reference();
  Rng rng(43);
  std::vector<double> a, g;
  for (int i = 0; i < 100000; ++i) {
    a.push_back(step_bias(spec, Vec3::Zero(), rng, SensorKind::kAccel).z());
    g.push_back(step_bias(spec, Vec3::Zero(), rng, SensorKind::kGyro).x());
  }
  EXPECT_NEAR(sample_std(a), 3e-4, 0.02 * 3e-4);
  EXPECT_NEAR(sample_std(g), 1.9393e-6, 0.02 * 1.9393e-6);
}

TEST(StepBias, ZeroIntensityKeepsBias) {
  ImuNoiseSpec spec = ImuNoiseSpec::reference();
  spec.sigma_ba = 0.0;
  Rng rng(1);
  const Vec3 b(0.01, 0.02, -0.03);
  EXPECT_EQ(step_bias(spec, b, rng, SensorKind::kAccel), b);
}

TEST(StepBias, WalkVarianceGrowsLinearly) {
  const ImuNoiseSpec spec = ImuNoiseSpec::reference();
  Rng rng(44);
  constexpr int kSteps = 100;
  std::vector<double> ends;
  for (int path = 0; path < 10000; ++path) {
    Vec3 b = Vec3::Zero();
    for (int k = 1; k < kSteps; ++k) b = step_bias(spec, b, rng, SensorKind::kAccel);
    ends.push_back(b.x());
  }
  const double expected = spec.sigma_ba * spec.sigma_ba * spec.dt * (kSteps - 1);
  const double s = sample_std(ends);
  EXPECT_NEAR(s * s, expected, 0.05 * expected);
}

TEST(NoiseSpec, Validation) {
  EXPECT_NO_THROW(ImuNoiseSpec::reference().validate());
  ImuNoiseSpec bad = ImuNoiseSpec::reference();
  bad.dt = 0.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = ImuNoiseSpec::reference();
  bad.sigma_g = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(DeriveSeed, DistinctStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 7), derive_seed(5, 7));
}
