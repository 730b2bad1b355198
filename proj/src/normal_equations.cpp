#include "imucal/normal_equations.hpp"

#include <stdexcept>

#include <Eigen/Cholesky>

namespace imucal {

BlockNormalEquations::BlockNormalEquations(const BlockStructure& structure)
    : structure_(structure) {
  if (structure.num_time_blocks < 1 || structure.time_block_size < 1 || structure.global_size < 0) {
    throw std::invalid_argument("normal equations: invalid block structure");
  }
  const int m = structure.time_block_size;
  const int g = structure.global_size;
  diag_.assign(structure.num_time_blocks, Eigen::MatrixXd::Zero(m, m));
  upper_.assign(structure.num_time_blocks - 1, Eigen::MatrixXd::Zero(m, m));
  border_.assign(structure.num_time_blocks, Eigen::MatrixXd::Zero(m, g));
  global_ = Eigen::MatrixXd::Zero(g, g);
  gradient_ = Eigen::VectorXd::Zero(structure.dimension());
}

void BlockNormalEquations::clear() {
  for (auto& d : diag_) d.setZero();
  for (auto& u : upper_) u.setZero();
  for (auto& b : border_) b.setZero();
  global_.setZero();
  gradient_.setZero();
  cost_ = 0.0;
}

// Accumulates H(row, col) += block for the stored triangle of the pattern;
// ordered pairs that land in the implicit lower part are dropped.
void BlockNormalEquations::add(int row, int col, const Mat3& block) {
  const BlockStructure& s = structure_;
  const bool row_global = s.is_global(row);
  const bool col_global = s.is_global(col);
  const int m = s.time_block_size;
  if (row_global && col_global) {
    global_.block<3, 3>(row - s.local_size(), col - s.local_size()) += block;
    return;
  }
  if (col_global) {
    const int k = s.time_block_of(row);
    border_[k].block<3, 3>(row - k * m, col - s.local_size()) += block;
    return;
  }
  if (row_global) return;
  const int kr = s.time_block_of(row);
  const int kc = s.time_block_of(col);
  if (kr == kc) {
    diag_[kr].block<3, 3>(row - kr * m, col - kc * m) += block;
  } else if (kc == kr + 1) {
    upper_[kr].block<3, 3>(row - kr * m, col - kc * m) += block;
  } else if (kr == kc + 1) {
    return;
  } else {
    throw std::logic_error("normal equations: residual couples non-adjacent time blocks");
  }
}

void BlockNormalEquations::visit(const Vec3& residual, std::span<const SliceJacobian> slices) {
  cost_ += residual.squaredNorm();
  for (const auto& si : slices) {
    gradient_.segment<3>(si.offset) += si.jacobian.transpose() * residual;
    for (const auto& sj : slices) {
      add(si.offset, sj.offset, si.jacobian.transpose() * sj.jacobian);
    }
  }
}

Eigen::VectorXd BlockNormalEquations::diagonal() const {
  const BlockStructure& s = structure_;
  Eigen::VectorXd d(s.dimension());
  for (int k = 0; k < s.num_time_blocks; ++k) {
    d.segment(k * s.time_block_size, s.time_block_size) = diag_[k].diagonal();
  }
  d.tail(s.global_size) = global_.diagonal();
  return d;
}

std::optional<Eigen::VectorXd> BlockNormalEquations::solve(const Eigen::VectorXd& damping,
                                                           const Eigen::VectorXd& rhs) const {
  const BlockStructure& s = structure_;
  const int num_blocks = s.num_time_blocks;
  const int m = s.time_block_size;
  const int g = s.global_size;
  if (damping.size() != s.dimension() || rhs.size() != s.dimension()) {
    throw std::invalid_argument("normal equations: solve dimension mismatch");
  }

  // Block Cholesky of the time-block part: A = L L^T with L_kk lower
  // triangular and sub-diagonal blocks W_k^T = (L_{k-1}^{-1} U_{k-1})^T.
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol(num_blocks);
  std::vector<Eigen::MatrixXd> w(num_blocks);   // W_k, k >= 1
  std::vector<Eigen::MatrixXd> y(num_blocks);   // L^-1 B, block k
  std::vector<Eigen::VectorXd> z(num_blocks);   // L^-1 rhs_local, block k

  for (int k = 0; k < num_blocks; ++k) {
    Eigen::MatrixXd pivot = diag_[k];
    pivot.diagonal() += damping.segment(k * m, m);
    Eigen::MatrixXd border = border_[k];
    Eigen::VectorXd r = rhs.segment(k * m, m);
    if (k > 0) {
      w[k] = chol[k - 1].matrixL().solve(upper_[k - 1]);
      pivot.noalias() -= w[k].transpose() * w[k];
      if (g > 0) border.noalias() -= w[k].transpose() * y[k - 1];
      r.noalias() -= w[k].transpose() * z[k - 1];
    }
    chol[k].compute(pivot);
    if (chol[k].info() != Eigen::Success) return std::nullopt;
    if (g > 0) y[k] = chol[k].matrixL().solve(border);
    z[k] = chol[k].matrixL().solve(r);
  }

  Eigen::VectorXd global_step(g);
  if (g > 0) {
    Eigen::MatrixXd schur = global_;
    schur.diagonal() += damping.tail(g);
    Eigen::VectorXd schur_rhs = rhs.tail(g);
    for (int k = 0; k < num_blocks; ++k) {
      schur.noalias() -= y[k].transpose() * y[k];
      schur_rhs.noalias() -= y[k].transpose() * z[k];
    }
    Eigen::LLT<Eigen::MatrixXd> schur_chol(schur);
    if (schur_chol.info() != Eigen::Success) return std::nullopt;
    global_step = schur_chol.solve(schur_rhs);
  }

  Eigen::VectorXd x(s.dimension());
  Eigen::VectorXd next;
  for (int k = num_blocks - 1; k >= 0; --k) {
    Eigen::VectorXd t = z[k];
    if (g > 0) t.noalias() -= y[k] * global_step;
    if (k + 1 < num_blocks) t.noalias() -= w[k + 1] * next;
    next = chol[k].matrixU().solve(t);
    x.segment(k * m, m) = next;
  }
  x.tail(g) = global_step;
  if (!x.allFinite()) return std::nullopt;
  return x;
}

Eigen::VectorXd BlockNormalEquations::multiply(const Eigen::VectorXd& v) const {
  const BlockStructure& s = structure_;
  const int m = s.time_block_size;
  const int g = s.global_size;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(s.dimension());
  const auto vg = v.tail(g);
  for (int k = 0; k < s.num_time_blocks; ++k) {
    const auto vk = v.segment(k * m, m);
    out.segment(k * m, m) += diag_[k] * vk;
    if (g > 0) {
      out.segment(k * m, m) += border_[k] * vg;
      out.tail(g) += border_[k].transpose() * vk;
    }
    if (k + 1 < s.num_time_blocks) {
      out.segment(k * m, m) += upper_[k] * v.segment((k + 1) * m, m);
      out.segment((k + 1) * m, m) += upper_[k].transpose() * vk;
    }
  }
  if (g > 0) out.tail(g) += global_ * vg;
  return out;
}

Eigen::MatrixXd BlockNormalEquations::dense() const {
  const BlockStructure& s = structure_;
  const int m = s.time_block_size;
  const int g = s.global_size;
  const int l = s.local_size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(s.dimension(), s.dimension());
  for (int k = 0; k < s.num_time_blocks; ++k) {
    h.block(k * m, k * m, m, m) = diag_[k];
    if (g > 0) {
      h.block(k * m, l, m, g) = border_[k];
      h.block(l, k * m, g, m) = border_[k].transpose();
    }
    if (k + 1 < s.num_time_blocks) {
      h.block(k * m, (k + 1) * m, m, m) = upper_[k];
      h.block((k + 1) * m, k * m, m, m) = upper_[k].transpose();
    }
  }
  if (g > 0) h.block(l, l, g, g) = global_;
  return h;
}

}  // namespace imucal
