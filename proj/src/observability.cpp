#include "imucal/observability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace imucal {

namespace {

constexpr double kAuxThreshold = 1e-11;

struct StoredBlock {
  Vec3 residual;
  std::vector<SliceJacobian> slices;
};

class Recorder : public BlockVisitor {
 public:
  void visit(const Vec3& residual, std::span<const SliceJacobian> slices) override {
    for (const auto& s : slices) {
      if (!s.jacobian.allFinite()) throw std::domain_error("check_rank: non-finite Jacobian entry");
    }
    blocks.push_back({residual, {slices.begin(), slices.end()}});
  }
  std::vector<StoredBlock> blocks;
};

struct Profiled {
  Eigen::MatrixXd calibration;   // P J_cal
  double scale = 0.0;            // largest singular value of J_cal before projection
  int aux_rank = 0;
};

// Orthonormal basis of the column space of `a` at a relative threshold.
Eigen::MatrixXd column_basis(const Eigen::MatrixXd& a, int* rank) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(kAuxThreshold);
  *rank = static_cast<int>(qr.rank());
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), *rank);
  return q;
}

double largest_singular_value(const Eigen::MatrixXd& gram) {
  if (gram.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), 0.0));
}

Profiled profile_dense(const CalibrationProblem& problem, const ParameterVector& x) {
  const Eigen::MatrixXd j = problem.dense_jacobian(x);
  if (!j.allFinite()) throw std::domain_error("check_rank: non-finite Jacobian entry");
  const int local = problem.structure().local_size();
  const int global = problem.structure().global_size;
  Profiled out;
  const Eigen::MatrixXd basis = column_basis(j.leftCols(local), &out.aux_rank);
  const Eigen::MatrixXd cal = j.rightCols(global);
  out.scale = largest_singular_value(cal.transpose() * cal);
  out.calibration = cal - basis * (basis.transpose() * cal);
  return out;
}

// Sequential orthogonal elimination, one time block at a time. Rows whose
// earliest time block is k are stacked with the rows carried over from block
// k-1; a rank-revealing QR of the block-k columns removes their span, and the
// remainder (compressed to its R factor) moves on to block k+1.
Profiled profile_structured(const CalibrationProblem& problem, const ParameterVector& x) {
  const BlockStructure s = problem.structure();
  const int m = s.time_block_size;
  const int g = s.global_size;
  const int num_blocks = s.num_time_blocks;

  Recorder recorder;
  problem.linearize(x, recorder);
  std::vector<std::vector<const StoredBlock*>> buckets(num_blocks);
  std::vector<const StoredBlock*> global_only;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(g, g);
  for (const auto& b : recorder.blocks) {
    for (const auto& si : b.slices) {
      if (!s.is_global(si.offset)) continue;
      for (const auto& sj : b.slices) {
        if (!s.is_global(sj.offset)) continue;
        gram.block<3, 3>(si.offset - s.local_size(), sj.offset - s.local_size()) +=
            si.jacobian.transpose() * sj.jacobian;
      }
    }
    int first = num_blocks;
    for (const auto& sl : b.slices) {
      if (!s.is_global(sl.offset)) first = std::min(first, s.time_block_of(sl.offset));
    }
    if (first == num_blocks) {
      global_only.push_back(&b);
    } else {
      buckets[first].push_back(&b);
    }
  }

  Profiled out;
  out.scale = largest_singular_value(gram);
  const int width = 2 * m + g;   // [block k | block k+1 | global]
  Eigen::MatrixXd carried(0, m + g);   // [block k | global]
  for (int k = 0; k < num_blocks; ++k) {
    const int rows = static_cast<int>(carried.rows()) + 3 * static_cast<int>(buckets[k].size());
    Eigen::MatrixXd stack = Eigen::MatrixXd::Zero(rows, width);
    stack.block(0, 0, carried.rows(), m) = carried.leftCols(m);
    stack.block(0, 2 * m, carried.rows(), g) = carried.rightCols(g);
    int row = static_cast<int>(carried.rows());
    for (const StoredBlock* b : buckets[k]) {
      for (const auto& sl : b->slices) {
        int col = 0;
        if (s.is_global(sl.offset)) {
          col = 2 * m + (sl.offset - s.local_size());
        } else {
          const int tb = s.time_block_of(sl.offset);
          if (tb > k + 1) throw std::logic_error("check_rank: residual spans non-adjacent blocks");
          col = (tb - k) * m + (sl.offset - tb * m);
        }
        stack.block<3, 3>(row, col) += sl.jacobian;
      }
      row += 3;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stack.leftCols(m));
    qr.setThreshold(kAuxThreshold);
    const int r = static_cast<int>(qr.rank());
    out.aux_rank += r;
    Eigen::MatrixXd rest = stack.rightCols(m + g);
    rest.applyOnTheLeft(qr.householderQ().transpose());
    Eigen::MatrixXd remainder = rest.bottomRows(rows - r);
    if (remainder.rows() > m + g) {
      Eigen::HouseholderQR<Eigen::MatrixXd> compress(remainder);
      remainder = compress.matrixQR().topRows(m + g).triangularView<Eigen::Upper>();
    }
    carried = std::move(remainder);
  }

  // Rows left after the last block only touch global columns.
  Eigen::MatrixXd cal(carried.rows() + 3 * static_cast<Eigen::Index>(global_only.size()), g);
  cal.topRows(carried.rows()) = carried.rightCols(g);
  Eigen::Index row = carried.rows();
  for (const StoredBlock* b : global_only) {
    cal.middleRows(row, 3).setZero();
    for (const auto& sl : b->slices) cal.block(row, sl.offset - s.local_size(), 3, 3) += sl.jacobian;
    row += 3;
  }
  out.calibration = std::move(cal);
  return out;
}

const char* axis_name(int i) { return i == 0 ? "x" : (i == 1 ? "y" : "z"); }

}  // namespace

std::vector<double> RankReport::smallest(int count) const {
  std::vector<double> out(singular_values.rbegin(), singular_values.rend());
  if (static_cast<int>(out.size()) > count) out.resize(std::max(count, 0));
  return out;
}

std::vector<std::string> calibration_labels(const ParameterLayout& layout) {
  std::vector<std::string> labels(layout.global_size());
  const int base = layout.global_offset();
  for (int n = 1; n < layout.num_imus(); ++n) {
    for (int i = 0; i < 3; ++i) {
      labels[layout.position(n) - base + i] = "p" + std::to_string(n) + "." + axis_name(i);
      labels[layout.orientation(n) - base + i] = "q" + std::to_string(n) + "." + axis_name(i);
    }
  }
  if (layout.estimates_misalignment()) {
    for (int n = 0; n < layout.num_imus(); ++n) {
      for (int i = 0; i < 3; ++i) {
        labels[layout.misalignment(n) - base + i] = "m" + std::to_string(n) + "." + axis_name(i);
      }
    }
  }
  return labels;
}

RankReport check_rank(const CalibrationProblem& problem, const ParameterVector& x,
                      const RankOptions& options) {
  if (!(options.threshold > 0.0 && options.threshold < 1.0)) {
    throw std::invalid_argument("check_rank: threshold must be in (0, 1)");
  }
  problem.check_state(x);
  const BlockStructure s = problem.structure();
  bool dense = false;
  switch (options.method) {
    case RankMethod::kDense: dense = true; break;
    case RankMethod::kStructured: dense = false; break;
    case RankMethod::kAuto: dense = s.dimension() <= options.dense_limit; break;
  }
  const Profiled profiled = dense ? profile_dense(problem, x) : profile_structured(problem, x);
  if (!profiled.calibration.allFinite()) {
    throw std::domain_error("check_rank: non-finite Jacobian entry");
  }

  RankReport report;
  report.method = dense ? "dense" : "structured";
  report.threshold = options.threshold;
  report.reference_singular_value = profiled.scale;
  report.dimension = s.global_size;
  report.full_dimension = s.dimension();
  report.labels = calibration_labels(problem.layout());

  const int g = s.global_size;
  int rank = 0;
  if (g > 0 && profiled.calibration.rows() > 0) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(profiled.calibration, Eigen::ComputeFullV);
    const Eigen::VectorXd sv = svd.singularValues();
    report.singular_values.assign(g, 0.0);
    for (Eigen::Index i = 0; i < sv.size(); ++i) report.singular_values[i] = sv[i];
    const double cutoff = options.threshold * profiled.scale;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv[i] > cutoff && sv[i] > 0.0) ++rank;
    }
    report.null_directions = svd.matrixV().rightCols(g - rank);
  } else {
    report.singular_values.assign(g, 0.0);
    report.null_directions = Eigen::MatrixXd::Identity(g, g);
  }
  report.rank = rank;
  report.deficient = rank < g;
  report.full_rank = profiled.aux_rank + rank;
  return report;
}

std::pair<int, int> jacobian_block_dims(int k, int num_samples, int n, bool estimate_misalignment) {
  if (num_samples < 1 || k < 1 || k > num_samples || n < 0) {
    throw std::invalid_argument("jacobian_block_dims: index out of range");
  }
  const int rows = k < num_samples ? 12 : 6;
  int cols = n == 0 ? 12 : 15;
  if (!estimate_misalignment) cols -= 3;
  return {rows, cols};
}

}  // namespace imucal
