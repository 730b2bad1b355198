#include "imucal/simulator.hpp"

#include <cmath>
#include <stdexcept>
#include <tuple>

namespace imucal {

namespace {

Vec3 sinusoid(const Vec3& offset, const Vec3& amp, const Vec3& freq, const Vec3& phase, double t) {
  return offset + Vec3(amp.x() * std::sin(freq.x() * t + phase.x()),
                       amp.y() * std::sin(freq.y() * t + phase.y()),
                       amp.z() * std::sin(freq.z() * t + phase.z()));
}

Vec3 sinusoid_rate(const Vec3& amp, const Vec3& freq, const Vec3& phase, double t) {
  return Vec3(amp.x() * freq.x() * std::cos(freq.x() * t + phase.x()),
              amp.y() * freq.y() * std::cos(freq.y() * t + phase.y()),
              amp.z() * freq.z() * std::cos(freq.z() * t + phase.z()));
}

}  // namespace

MotionProfile MotionProfile::excitation() { return MotionProfile{}; }

int sample_count(double duration, double dt) {
  return static_cast<int>(std::llround(duration / dt));
}

Trajectory make_trajectory(double duration, double dt, const MotionProfile& profile) {
  if (!std::isfinite(dt) || dt <= 0.0) throw std::invalid_argument("trajectory: dt must be > 0");
  if (!std::isfinite(duration) || duration <= 0.0) {
    throw std::invalid_argument("trajectory: duration must be > 0");
  }
  const int count = sample_count(duration, dt);
  if (count < 1) throw std::invalid_argument("trajectory: duration shorter than one sample");

  const Vec3 gravity_world(0.0, 0.0, -profile.gravity);
  const auto omega_at = [&](double t) {
    return sinusoid(profile.omega_offset, profile.angular_amplitude, profile.angular_frequency,
                    profile.angular_phase, t);
  };

  Trajectory out;
  out.reserve(count);
  UnitQuaternion orientation = profile.initial_orientation;
  for (int k = 0; k < count; ++k) {
    const double t = k * dt;
    TrajectorySample s;
    s.t = t;
    s.omega = omega_at(t);
    s.alpha = sinusoid_rate(profile.angular_amplitude, profile.angular_frequency,
                            profile.angular_phase, t);
    s.accel = sinusoid(profile.accel_offset, profile.linear_amplitude, profile.linear_frequency,
                       profile.linear_phase, t);
    s.world_from_base = quat_to_rot(orientation);
    s.gravity = s.world_from_base.transpose() * gravity_world;
    out.push_back(s);
    // midpoint rate, exact exponential over the step
    orientation = retract(orientation, omega_at(t + 0.5 * dt) * dt);
  }
  return out;
}

Trajectory make_excitation_trajectory(double duration, double dt, const MotionProfile& profile) {
  if (duration < 1.0) throw std::invalid_argument("trajectory: duration must be >= 1 s");
  if (profile.angular_amplitude.cwiseAbs().maxCoeff() == 0.0) {
    throw std::invalid_argument("trajectory: all angular amplitudes are zero (degenerate motion)");
  }
  return make_trajectory(duration, dt, profile);
}

Vec3 lever_arm_accel(const Vec3& omega, const Vec3& alpha, const Vec3& p) {
  return omega.cross(omega.cross(p)) + alpha.cross(p);
}

ImuKinematics propagate_rigid_body(const TrajectorySample& base, const Vec3& p,
                                   const UnitQuaternion& q) {
  const Rotation3 r = quat_to_rot(q);
  const Vec3 base_specific = base.accel - base.gravity;
  return {r.transpose() * (base_specific + lever_arm_accel(base.omega, base.alpha, p)),
          r.transpose() * base.omega};
}

RigScenario RigScenario::reference(double duration, std::uint64_t seed) {
  RigScenario s;
  s.extrinsics = ExtrinsicSet::reference_layout();
  s.noise.assign(s.extrinsics.num_imus(), ImuNoiseSpec::reference());
  s.duration = duration;
  s.seed = seed;
  s.misalignment_std_deg = 1.0;
  return s;
}

void RigScenario::validate() const {
  extrinsics.validate();
  if (noise.size() != static_cast<std::size_t>(extrinsics.num_imus())) {
    throw std::invalid_argument("scenario: need one noise spec per IMU");
  }
  for (const auto& n : noise) {
    if (!(n.dt > 0.0) || n.sigma_a < 0 || n.sigma_g < 0 || n.sigma_ba < 0 || n.sigma_bg < 0) {
      throw std::invalid_argument("scenario: invalid noise spec");
    }
  }
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw std::invalid_argument("scenario: duration must be > 0");
  }
  if (!(initial_bias_range >= 0.0)) throw std::invalid_argument("scenario: negative bias range");
  if (!(misalignment_std_deg >= 0.0)) {
    throw std::invalid_argument("scenario: negative misalignment std");
  }
}

Vec3 sample_unit_vector(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const double x = n(rng);
    const double y = n(rng);
    const double z = n(rng);
    const Vec3 v(x, y, z);
    const double norm = v.norm();
    if (norm > 1e-12) return v / norm;
  }
}

UnitQuaternion sample_rotation_perturbation(double std_rad, Rng& rng) {
  const Vec3 axis = sample_unit_vector(rng);
  std::normal_distribution<double> n(0.0, std_rad);
  return exp_map(n(rng) * axis);
}

UnitQuaternion sample_fixed_angle_rotation(double angle_rad, Rng& rng) {
  return exp_map(angle_rad * sample_unit_vector(rng));
}

Simulation simulate(const RigScenario& scenario, const Trajectory& trajectory) {
  scenario.validate();
  if (trajectory.size() < 2) throw std::invalid_argument("simulate: trajectory too short");
  const int num_imus = scenario.extrinsics.num_imus();
  const int num_samples = static_cast<int>(trajectory.size());
  const double dt = trajectory[1].t - trajectory[0].t;
  for (const auto& n : scenario.noise) {
    if (std::abs(n.dt - dt) > 1e-9 * dt) {
      throw std::invalid_argument("simulate: noise spec dt does not match trajectory sampling");
    }
  }

  Rng rng(scenario.seed);
  Simulation sim;
  GroundTruthLog& truth = sim.truth;
  truth.extrinsics = scenario.extrinsics;
  truth.seed = scenario.seed;
  truth.gravity = trajectory.front().gravity.norm();
  truth.dt = dt;

  if (scenario.misalignment_std_deg > 0.0) {
    for (int n = 0; n < num_imus; ++n) {
      truth.extrinsics.misalignment[n] =
          sample_rotation_perturbation(deg2rad(scenario.misalignment_std_deg), rng);
    }
  }

  std::vector<Vec3> ba(num_imus, Vec3::Zero());
  std::vector<Vec3> bg(num_imus, Vec3::Zero());
  if (scenario.initial_bias_range > 0.0) {
    std::uniform_real_distribution<double> u(-scenario.initial_bias_range,
                                             scenario.initial_bias_range);
    for (int n = 0; n < num_imus; ++n) {
      for (int i = 0; i < 3; ++i) ba[n][i] = u(rng);
      for (int i = 0; i < 3; ++i) bg[n][i] = u(rng);
    }
  }

  std::vector<Rotation3> rot(num_imus);
  for (int n = 0; n < num_imus; ++n) rot[n] = quat_to_rot(truth.extrinsics.orientation[n]);

  MeasurementSeries& meas = sim.measurements;
  meas.num_imus = num_imus;
  meas.num_samples = num_samples;
  meas.dt = dt;
  meas.noise = scenario.noise;
  meas.readings.resize(static_cast<std::size_t>(num_imus) * num_samples);
  truth.alpha.resize(num_samples);
  truth.accel_bias.resize(meas.readings.size());
  truth.gyro_bias.resize(meas.readings.size());

  for (int k = 0; k < num_samples; ++k) {
    const TrajectorySample& s = trajectory[k];
    truth.alpha[k] = s.alpha;
    for (int n = 0; n < num_imus; ++n) {
      const Vec3& p = truth.extrinsics.position[n];
      const Vec3 accel_n = rot[n].transpose() * (s.accel + lever_arm_accel(s.omega, s.alpha, p));
      const Vec3 gravity_n = rot[n].transpose() * s.gravity;
      const Vec3 omega_n = rot[n].transpose() * s.omega;

      Vec3 na = Vec3::Zero();
      Vec3 ng = Vec3::Zero();
      if (scenario.add_noise) std::tie(na, ng) = sample_noise(scenario.noise[n], rng);

      const std::size_t idx = static_cast<std::size_t>(k) * num_imus + n;
      truth.accel_bias[idx] = ba[n];
      truth.gyro_bias[idx] = bg[n];
      meas.readings[idx].accel = accel_measure(accel_n, gravity_n, ba[n], na);
      meas.readings[idx].gyro = gyro_measure(omega_n, truth.extrinsics.misalignment[n], bg[n], ng);

      if (scenario.bias_random_walk) {
        ba[n] = step_bias(scenario.noise[n], ba[n], rng, SensorKind::kAccel);
        bg[n] = step_bias(scenario.noise[n], bg[n], rng, SensorKind::kGyro);
      }
    }
  }
  return sim;
}

}  // namespace imucal
