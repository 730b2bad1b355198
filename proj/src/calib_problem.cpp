#include "imucal/calib_problem.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace imucal {

namespace {

double positive_inverse_sqrt(double variance, const char* what) {
  if (!std::isfinite(variance) || variance <= 0.0) {
    throw std::invalid_argument(std::string("covariance for ") + what + " must be finite and > 0");
  }
  return 1.0 / std::sqrt(variance);
}

}  // namespace

ResidualVariances residual_variances(const ImuNoiseSpec& noise) {
  return residual_variances(noise, noise);
}

ResidualVariances residual_variances(const ImuNoiseSpec& base, const ImuNoiseSpec& imu) {
  const double dt = imu.dt;
  const double gyro_sq = base.sigma_g * base.sigma_g / dt;
  return ResidualVariances{
      .accel = (base.sigma_a * base.sigma_a + imu.sigma_a * imu.sigma_a) / dt + gyro_sq * gyro_sq,
      .gyro = (base.sigma_g * base.sigma_g + imu.sigma_g * imu.sigma_g) / dt,
      .accel_walk = imu.sigma_ba * imu.sigma_ba * dt,
      .gyro_walk = imu.sigma_bg * imu.sigma_bg * dt,
  };
}

CovarianceWeights covariance_weights(const ResidualVariances& v) {
  return CovarianceWeights{
      .accel = positive_inverse_sqrt(v.accel, "accel residual"),
      .gyro = positive_inverse_sqrt(v.gyro, "gyro residual"),
      .accel_walk = positive_inverse_sqrt(v.accel_walk, "accel bias walk"),
      .gyro_walk = positive_inverse_sqrt(v.gyro_walk, "gyro bias walk"),
  };
}

CovarianceWeights covariance_weights(const ImuNoiseSpec& noise) {
  return covariance_weights(residual_variances(noise));
}

ParameterLayout::ParameterLayout(int num_imus, int num_samples, bool estimate_misalignment)
    : num_imus_(num_imus), num_samples_(num_samples), misalign_(estimate_misalignment) {
  if (num_imus < 2) throw std::invalid_argument("layout: need at least two IMUs");
  if (num_samples < 1) throw std::invalid_argument("layout: need at least one sample");
}

Vec3 residual_accel(const ImuParams& imu, const BaseParams& base, const Vec3& accel_n,
                    const Vec3& accel_0, const Vec3& gyro_0) {
  const Rotation3 rn = quat_to_rot(imu.orientation);
  const Rotation3 rg0 = quat_to_rot(base.gyro_misalignment);
  const Vec3 a0 = accel_0 - base.accel_bias;
  const Vec3 w0 = rg0.transpose() * (gyro_0 - base.gyro_bias);
  const Vec3 predicted =
      rn.transpose() * (a0 + w0.cross(w0.cross(imu.position)) + base.alpha.cross(imu.position));
  return (accel_n - imu.accel_bias) - predicted;
}

Vec3 residual_gyro(const ImuParams& imu, const BaseParams& base, const Vec3& gyro_n,
                   const Vec3& gyro_0) {
  const Rotation3 rn = quat_to_rot(imu.orientation);
  const Rotation3 rgn = quat_to_rot(imu.gyro_misalignment);
  const Rotation3 rg0 = quat_to_rot(base.gyro_misalignment);
  return rn * rgn.transpose() * (gyro_n - imu.gyro_bias) -
         rg0.transpose() * (gyro_0 - base.gyro_bias);
}

Vec3 residual_bias_walk(const Vec3& next, const Vec3& prev) { return next - prev; }

ParameterVector initial_guess(const MeasurementSeries& measurements,
                              const ExtrinsicSet& extrinsic_guess) {
  const int num_samples = measurements.num_samples;
  if (num_samples < 3) throw std::invalid_argument("initial guess: need at least three samples");
  if (extrinsic_guess.num_imus() != measurements.num_imus) {
    throw std::invalid_argument("initial guess: IMU count mismatch");
  }
  const double dt = measurements.dt;
  ParameterVector x;
  x.extrinsics = extrinsic_guess;
  x.alpha.resize(num_samples);
  for (int k = 0; k < num_samples; ++k) {
    if (k == 0) {
      x.alpha[k] = (measurements.at(1, 0).gyro - measurements.at(0, 0).gyro) / dt;
    } else if (k == num_samples - 1) {
      x.alpha[k] = (measurements.at(k, 0).gyro - measurements.at(k - 1, 0).gyro) / dt;
    } else {
      x.alpha[k] = (measurements.at(k + 1, 0).gyro - measurements.at(k - 1, 0).gyro) / (2.0 * dt);
    }
  }
  const std::size_t count = static_cast<std::size_t>(num_samples) * measurements.num_imus;
  x.accel_bias.assign(count, Vec3::Zero());
  x.gyro_bias.assign(count, Vec3::Zero());
  return x;
}

ParameterVector pin_slack_gauge(const ParameterVector& x, const ParameterVector& reference) {
  const int num_imus = x.num_imus();
  const int num_samples = x.num_samples();
  if (num_samples == 0 || reference.num_samples() != num_samples ||
      reference.num_imus() != num_imus || reference.accel_bias.size() != x.accel_bias.size()) {
    throw std::invalid_argument("gauge: reference does not match the state");
  }
  std::vector<Rotation3> rot(num_imus);
  for (int n = 0; n < num_imus; ++n) rot[n] = quat_to_rot(x.extrinsics.orientation[n]);

  ParameterVector out = x;
  Vec3 offset = Vec3::Zero();
  for (int k = 0; k < num_samples; ++k) offset += reference.alpha[k] - x.alpha[k];
  offset /= num_samples;
  for (int k = 0; k < num_samples; ++k) {
    out.alpha[k] += offset;
    for (int n = 1; n < num_imus; ++n) {
      out.accel_bias[out.index(k, n)] -= rot[n].transpose() * offset.cross(x.extrinsics.position[n]);
    }
  }

  Vec3 common = Vec3::Zero();
  for (int k = 0; k < num_samples; ++k) {
    for (int n = 0; n < num_imus; ++n) {
      const std::size_t i = out.index(k, n);
      common += rot[n] * (reference.accel_bias[i] - out.accel_bias[i]);
    }
  }
  common /= static_cast<double>(num_samples) * num_imus;
  for (int k = 0; k < num_samples; ++k) {
    for (int n = 0; n < num_imus; ++n) out.accel_bias[out.index(k, n)] += rot[n].transpose() * common;
  }
  return out;
}

struct CalibrationProblem::Rotations {
  std::vector<Rotation3> imu;    // C(q_n)
  std::vector<Rotation3> gyro;   // C(misalign_n)
};

CalibrationProblem::CalibrationProblem(MeasurementSeries m, ProblemOptions o)
    : measurements_(std::move(m)),
      options_(o),
      layout_(measurements_.num_imus, measurements_.num_samples, o.estimate_misalignment) {}

CalibrationProblem assemble(const MeasurementSeries& measurements, const ProblemOptions& options,
                            const ParameterVector& guess) {
  if (measurements.num_samples < 1 || measurements.readings.empty()) {
    throw std::invalid_argument("assemble: empty measurement set");
  }
  measurements.validate();
  CalibrationProblem problem(measurements, options);
  problem.check_state(guess);

  const int num_imus = measurements.num_imus;
  const int num_samples = measurements.num_samples;
  const ParameterLayout& layout = problem.layout_;

  double omega_ms = 0.0;
  if (options.sigma_a_alt) {
    for (int k = 0; k < num_samples; ++k) omega_ms += measurements.at(k, 0).gyro.squaredNorm();
    omega_ms /= num_samples;
  }

  problem.weights_.resize(num_imus);
  for (int n = 0; n < num_imus; ++n) {
    const ImuNoiseSpec& base = measurements.noise[0];
    const ImuNoiseSpec& imu = measurements.noise[n];
    ResidualVariances v = residual_variances(base, imu);
    if (options.sigma_a_alt) {
      // first-order lever-arm propagation: |d(w x (w x p))/dw| <= 2 |w| |p|
      const double lever = 2.0 * std::sqrt(omega_ms) * guess.extrinsics.position[n].norm();
      v.accel = (base.sigma_a * base.sigma_a + imu.sigma_a * imu.sigma_a) / imu.dt +
                base.sigma_g * base.sigma_g / imu.dt * lever * lever;
    }
    problem.weights_[n] = covariance_weights(v);
  }

  auto& blocks = problem.blocks_;
  blocks.reserve(2 * static_cast<std::size_t>(num_imus - 1) * num_samples +
                 2 * static_cast<std::size_t>(num_imus) * (num_samples - 1));
  for (int k = 0; k < num_samples; ++k) {
    for (int n = 1; n < num_imus; ++n) {
      ResidualBlock a;
      a.kind = ResidualKind::kAccel;
      a.k = k;
      a.n = n;
      a.weight = problem.weights_[n].accel;
      a.slices = {layout.alpha(k), layout.accel_bias(k, 0), layout.gyro_bias(k, 0),
                  layout.accel_bias(k, n), layout.position(n), layout.orientation(n),
                  layout.misalignment(0)};
      a.num_slices = options.estimate_misalignment ? 7 : 6;
      blocks.push_back(a);

      ResidualBlock g;
      g.kind = ResidualKind::kGyro;
      g.k = k;
      g.n = n;
      g.weight = problem.weights_[n].gyro;
      g.slices = {layout.gyro_bias(k, 0), layout.gyro_bias(k, n), layout.orientation(n),
                  layout.misalignment(n), layout.misalignment(0), 0, 0};
      g.num_slices = options.estimate_misalignment ? 5 : 3;
      blocks.push_back(g);
    }
    if (k + 1 < num_samples) {
      for (int n = 0; n < num_imus; ++n) {
        ResidualBlock ba;
        ba.kind = ResidualKind::kAccelBiasWalk;
        ba.k = k;
        ba.n = n;
        ba.weight = problem.weights_[n].accel_walk;
        ba.slices = {layout.accel_bias(k + 1, n), layout.accel_bias(k, n), 0, 0, 0, 0, 0};
        ba.num_slices = 2;
        blocks.push_back(ba);

        ResidualBlock bg = ba;
        bg.kind = ResidualKind::kGyroBiasWalk;
        bg.weight = problem.weights_[n].gyro_walk;
        bg.slices = {layout.gyro_bias(k + 1, n), layout.gyro_bias(k, n), 0, 0, 0, 0, 0};
        blocks.push_back(bg);
      }
    }
  }
  return problem;
}

void CalibrationProblem::check_state(const ParameterVector& x) const {
  const std::size_t count = static_cast<std::size_t>(layout_.num_samples()) * layout_.num_imus();
  if (x.num_imus() != layout_.num_imus() || x.num_samples() != layout_.num_samples() ||
      x.accel_bias.size() != count || x.gyro_bias.size() != count ||
      x.extrinsics.orientation.size() != x.extrinsics.position.size() ||
      x.extrinsics.misalignment.size() != x.extrinsics.position.size()) {
    throw std::invalid_argument("parameter vector does not match the problem dimensions");
  }
}

CalibrationProblem::Rotations CalibrationProblem::rotations(const ParameterVector& x) const {
  Rotations r;
  const int num_imus = layout_.num_imus();
  r.imu.resize(num_imus);
  r.gyro.resize(num_imus);
  for (int n = 0; n < num_imus; ++n) {
    r.imu[n] = quat_to_rot(x.extrinsics.orientation[n]);
    r.gyro[n] = quat_to_rot(x.extrinsics.misalignment[n]);
  }
  return r;
}

Vec3 CalibrationProblem::evaluate(const ResidualBlock& block, const ParameterVector& x,
                                  std::span<Mat3> jacobians) const {
  return evaluate_with(block, x, rotations(x), jacobians);
}

// Jacobians use the right perturbation R <- R (I + [d]x) for every rotation.
Vec3 CalibrationProblem::evaluate_with(const ResidualBlock& block, const ParameterVector& x,
                                       const Rotations& rot, std::span<Mat3> jac) const {
  const bool want_jac = !jac.empty();
  if (want_jac && static_cast<int>(jac.size()) != block.num_slices) {
    throw std::invalid_argument("evaluate: jacobian span size mismatch");
  }
  const int k = block.k;
  const int n = block.n;
  const double w = block.weight;

  switch (block.kind) {
    case ResidualKind::kAccel: {
      const std::size_t i0 = x.index(k, 0);
      const std::size_t in = x.index(k, n);
      const Rotation3& rn = rot.imu[n];
      const Rotation3& rg0 = rot.gyro[0];
      const Vec3& p = x.extrinsics.position[n];
      const Vec3& alpha = x.alpha[k];
      const Vec3 a0 = measurements_.at(k, 0).accel - x.accel_bias[i0];
      const Vec3 w0 = rg0.transpose() * (measurements_.at(k, 0).gyro - x.gyro_bias[i0]);
      const Vec3 v = a0 + w0.cross(w0.cross(p)) + alpha.cross(p);
      const Vec3 u = rn.transpose() * v;
      const Vec3 r = (measurements_.at(k, n).accel - x.accel_bias[in]) - u;
      if (want_jac) {
        const Mat3 rnt = rn.transpose();
        // d(w x (w x p))/dw
        const Mat3 dcentripetal = -(skew(w0.cross(p)) + skew(w0) * skew(p));
        const Mat3 dr_dw0 = -rnt * dcentripetal;
        jac[0] = w * (rnt * skew(p));                          // alpha_k
        jac[1] = w * rnt;                                      // b_a0
        jac[2] = w * (dr_dw0 * -rg0.transpose());              // b_g0
        jac[3] = -w * Mat3::Identity();                        // b_an
        jac[4] = -w * (rnt * (skew(w0) * skew(w0) + skew(alpha)));  // p_n
        jac[5] = -w * skew(u);                                 // theta_n
        if (block.num_slices == 7) jac[6] = w * (dr_dw0 * skew(w0));  // misalignment_0
      }
      return w * r;
    }
    case ResidualKind::kGyro: {
      const std::size_t i0 = x.index(k, 0);
      const std::size_t in = x.index(k, n);
      const Rotation3& rn = rot.imu[n];
      const Rotation3& rgn = rot.gyro[n];
      const Rotation3& rg0 = rot.gyro[0];
      const Vec3 wn = rgn.transpose() * (measurements_.at(k, n).gyro - x.gyro_bias[in]);
      const Vec3 w0 = rg0.transpose() * (measurements_.at(k, 0).gyro - x.gyro_bias[i0]);
      const Vec3 r = rn * wn - w0;
      if (want_jac) {
        jac[0] = w * rg0.transpose();               // b_g0
        jac[1] = -w * (rn * rgn.transpose());       // b_gn
        jac[2] = -w * (rn * skew(wn));              // theta_n
        if (block.num_slices == 5) {
          jac[3] = w * (rn * skew(wn));             // misalignment_n
          jac[4] = -w * skew(w0);                   // misalignment_0
        }
      }
      return w * r;
    }
    case ResidualKind::kAccelBiasWalk:
    case ResidualKind::kGyroBiasWalk: {
      const auto& b = block.kind == ResidualKind::kAccelBiasWalk ? x.accel_bias : x.gyro_bias;
      const Vec3 r = residual_bias_walk(b[x.index(k + 1, n)], b[x.index(k, n)]);
      if (want_jac) {
        jac[0] = w * Mat3::Identity();
        jac[1] = -w * Mat3::Identity();
      }
      return w * r;
    }
  }
  return Vec3::Zero();
}

double CalibrationProblem::cost(const ParameterVector& x) const {
  check_state(x);
  const Rotations rot = rotations(x);
  double total = 0.0;
  for (const auto& b : blocks_) total += evaluate_with(b, x, rot, {}).squaredNorm();
  return total;
}

void CalibrationProblem::linearize(const ParameterVector& x, BlockVisitor& visitor) const {
  check_state(x);
  const Rotations rot = rotations(x);
  std::array<Mat3, ResidualBlock::kMaxSlices> jac;
  std::array<SliceJacobian, ResidualBlock::kMaxSlices> slices;
  for (const auto& b : blocks_) {
    const std::span<Mat3> js(jac.data(), static_cast<std::size_t>(b.num_slices));
    const Vec3 r = evaluate_with(b, x, rot, js);
    for (int i = 0; i < b.num_slices; ++i) slices[i] = SliceJacobian{b.slices[i], jac[i]};
    visitor.visit(r, std::span<const SliceJacobian>(slices.data(), b.num_slices));
  }
}

ParameterVector CalibrationProblem::retract(const ParameterVector& x,
                                            const Eigen::VectorXd& delta) const {
  check_state(x);
  if (delta.size() != layout_.dimension()) {
    throw std::invalid_argument("retract: delta dimension mismatch");
  }
  ParameterVector out = x;
  const int num_imus = layout_.num_imus();
  for (int k = 0; k < layout_.num_samples(); ++k) {
    out.alpha[k] += delta.segment<3>(layout_.alpha(k));
    for (int n = 0; n < num_imus; ++n) {
      out.accel_bias[x.index(k, n)] += delta.segment<3>(layout_.accel_bias(k, n));
      out.gyro_bias[x.index(k, n)] += delta.segment<3>(layout_.gyro_bias(k, n));
    }
  }
  for (int n = 1; n < num_imus; ++n) {
    out.extrinsics.position[n] += delta.segment<3>(layout_.position(n));
    out.extrinsics.orientation[n] =
        imucal::retract(x.extrinsics.orientation[n], delta.segment<3>(layout_.orientation(n)));
  }
  if (layout_.estimates_misalignment()) {
    for (int n = 0; n < num_imus; ++n) {
      out.extrinsics.misalignment[n] = imucal::retract(
          x.extrinsics.misalignment[n], delta.segment<3>(layout_.misalignment(n)));
    }
  }
  return out;
}

Eigen::VectorXd CalibrationProblem::residual_vector(const ParameterVector& x) const {
  check_state(x);
  const Rotations rot = rotations(x);
  Eigen::VectorXd r(3 * static_cast<Eigen::Index>(blocks_.size()));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    r.segment<3>(3 * static_cast<Eigen::Index>(i)) = evaluate_with(blocks_[i], x, rot, {});
  }
  return r;
}

Eigen::MatrixXd CalibrationProblem::dense_jacobian(const ParameterVector& x) const {
  check_state(x);
  const Rotations rot = rotations(x);
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3 * static_cast<Eigen::Index>(blocks_.size()),
                                            layout_.dimension());
  std::array<Mat3, ResidualBlock::kMaxSlices> jac;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    evaluate_with(b, x, rot, std::span<Mat3>(jac.data(), static_cast<std::size_t>(b.num_slices)));
    for (int s = 0; s < b.num_slices; ++s) {
      j.block<3, 3>(3 * static_cast<Eigen::Index>(i), b.slices[s]) += jac[s];
    }
  }
  return j;
}

}  // namespace imucal
