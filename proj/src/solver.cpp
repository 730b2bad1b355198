#include "imucal/solver.hpp"

namespace imucal {

void SolverOptions::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("solver: max_iterations must be >= 1");
  if (!(cost_tolerance > 0.0) || !(gradient_tolerance > 0.0) || !(parameter_tolerance > 0.0)) {
    throw std::invalid_argument("solver: tolerances must be > 0");
  }
  if (!(initial_damping > 0.0) || !(min_damping > 0.0) || !(max_damping > initial_damping)) {
    throw std::invalid_argument("solver: invalid damping range");
  }
  if (!(damping_up > 1.0)) throw std::invalid_argument("solver: damping_up must be > 1");
  if (!(damping_down > 0.0 && damping_down < 1.0)) {
    throw std::invalid_argument("solver: damping_down must be in (0, 1)");
  }
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::kConverged: return "converged";
    case SolveStatus::kMaxIterations: return "max_iterations";
    case SolveStatus::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

}  // namespace imucal
