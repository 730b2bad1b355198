#pragma once

// Levenberg-Marquardt over a manifold-valued state whose normal equations
// follow BlockStructure (time blocks eliminated before the global block).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "imucal/block_structure.hpp"
#include "imucal/normal_equations.hpp"

namespace imucal {

struct SolverOptions {
  int max_iterations = 100;
  double cost_tolerance = 1e-10;      ///< relative cost change
  double gradient_tolerance = 1e-12;  ///< max-norm of J^T r
  double parameter_tolerance = 1e-12; ///< max-norm of an accepted step
  double initial_damping = 1e-4;
  double damping_up = 10.0;
  double damping_down = 0.1;
  double min_damping = 1e-15;
  double max_damping = 1e16;
  bool keep_log = false;

  /// Throws std::invalid_argument on non-positive values or bad factors.
  void validate() const;
};

enum class SolveStatus { kConverged, kMaxIterations, kNumericalFailure };

std::string to_string(SolveStatus status);

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;          ///< cost after the iteration
  double damping = 0.0;       ///< lambda used for the trial step
  double step_norm = 0.0;     ///< max-norm of the trial step
  bool accepted = false;
};

struct SolveReport {
  SolveStatus status = SolveStatus::kMaxIterations;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double wall_time_s = 0.0;
  std::string message;
  std::vector<IterationRecord> log;

  bool converged() const { return status == SolveStatus::kConverged; }
};

template <class P>
concept BlockLeastSquares = requires(const P& p, const typename P::State& x, BlockVisitor& visitor,
                                     const Eigen::VectorXd& delta) {
  { p.structure() } -> std::convertible_to<BlockStructure>;
  { p.cost(x) } -> std::convertible_to<double>;
  p.linearize(x, visitor);
  { p.retract(x, delta) } -> std::convertible_to<typename P::State>;
};

template <BlockLeastSquares P>
double evaluate_cost(const P& problem, const typename P::State& x) {
  return problem.cost(x);
}

template <BlockLeastSquares P>
std::pair<typename P::State, SolveReport> solve(const P& problem, typename P::State x,
                                                const SolverOptions& options = {}) {
  options.validate();
  const auto start = std::chrono::steady_clock::now();
  SolveReport report;
  BlockNormalEquations normal(problem.structure());

  const auto finish = [&](SolveStatus status, std::string message) {
    report.status = status;
    report.message = std::move(message);
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  normal.clear();
  problem.linearize(x, normal);
  double cost = normal.cost();
  report.initial_cost = cost;
  report.final_cost = cost;
  if (!std::isfinite(cost)) {
    finish(SolveStatus::kNumericalFailure, "initial cost is not finite");
    return {std::move(x), std::move(report)};
  }

  double lambda = options.initial_damping;
  bool relinearize = false;
  while (true) {
    if (relinearize) {
      normal.clear();
      problem.linearize(x, normal);
      relinearize = false;
    }
    const Eigen::VectorXd& gradient = normal.gradient();
    if (gradient.size() == 0 || gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      finish(SolveStatus::kConverged, "gradient below tolerance");
      break;
    }
    if (report.iterations >= options.max_iterations) {
      finish(SolveStatus::kMaxIterations, "iteration limit reached");
      break;
    }
    ++report.iterations;

    const Eigen::VectorXd diagonal = normal.diagonal();
    const double floor = std::max(1e-6, 1e-6 * diagonal.maxCoeff());
    const Eigen::VectorXd scale = diagonal.cwiseMax(floor).cwiseMin(1e32);
    const auto step = normal.solve(lambda * scale, -gradient);
    IterationRecord record;
    record.iteration = report.iterations;
    record.damping = lambda;
    if (!step) {
      record.cost = cost;
      if (options.keep_log) report.log.push_back(record);
      if (lambda >= 1e8) {
        finish(SolveStatus::kNumericalFailure,
               "factorization failed at high damping; the problem may be rank deficient");
        break;
      }
      lambda *= options.damping_up;
      continue;
    }

    const Eigen::VectorXd& delta = *step;
    record.step_norm = delta.lpNorm<Eigen::Infinity>();
    // model decrease of |r + J d|^2
    const double predicted = -(2.0 * gradient.dot(delta) + delta.dot(normal.multiply(delta)));
    typename P::State candidate = problem.retract(x, delta);
    const double new_cost = problem.cost(candidate);

    if (std::isfinite(new_cost) && new_cost < cost) {
      const double relative = (cost - new_cost) / cost;
      x = std::move(candidate);
      cost = new_cost;
      report.final_cost = cost;
      record.cost = cost;
      record.accepted = true;
      if (options.keep_log) report.log.push_back(record);
      lambda = std::max(lambda * options.damping_down, options.min_damping);
      relinearize = true;
      if (relative < options.cost_tolerance) {
        finish(SolveStatus::kConverged, "relative cost change below tolerance");
        break;
      }
      if (record.step_norm < options.parameter_tolerance) {
        finish(SolveStatus::kConverged, "step below tolerance");
        break;
      }
      continue;
    }

    record.cost = cost;
    if (options.keep_log) report.log.push_back(record);
    if (!(predicted > options.cost_tolerance * cost)) {
      finish(SolveStatus::kConverged, "no further decrease available");
      break;
    }
    lambda *= options.damping_up;
    if (lambda > options.max_damping) {
      finish(SolveStatus::kNumericalFailure, "damping exceeded its limit without a decrease");
      break;
    }
  }
  return {std::move(x), std::move(report)};
}

}  // namespace imucal
