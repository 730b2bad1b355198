#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "imucal/block_structure.hpp"

namespace imucal {

/// Gauss-Newton normal equations H = J^T J, g = J^T r, stored in the
/// block-tridiagonal-plus-border pattern of BlockStructure:
///
///   [ D_0  U_0                B_0 ]
///   [ U_0' D_1  U_1           B_1 ]
///   [      ...  ...  ...      ... ]
///   [ B_0' B_1' ...       C       ]
///
/// Time blocks are eliminated first; the remaining system in the global
/// columns is the Schur complement C - B' A^-1 B.
class BlockNormalEquations : public BlockVisitor {
 public:
  explicit BlockNormalEquations(const BlockStructure& structure);

  void clear();
  void visit(const Vec3& residual, std::span<const SliceJacobian> slices) override;

  const BlockStructure& structure() const { return structure_; }
  /// J^T r
  const Eigen::VectorXd& gradient() const { return gradient_; }
  /// Sum of squared residuals seen since clear().
  double cost() const { return cost_; }
  Eigen::VectorXd diagonal() const;

  /// Solves (H + diag(damping)) x = rhs. Returns nullopt when a pivot block
  /// is not positive definite.
  std::optional<Eigen::VectorXd> solve(const Eigen::VectorXd& damping,
                                       const Eigen::VectorXd& rhs) const;

  /// H * v, used for the model decrease.
  Eigen::VectorXd multiply(const Eigen::VectorXd& v) const;

  /// Assembles the dense H. Intended for tests on small instances.
  Eigen::MatrixXd dense() const;

  const std::vector<Eigen::MatrixXd>& diag_blocks() const { return diag_; }
  const std::vector<Eigen::MatrixXd>& upper_blocks() const { return upper_; }
  const std::vector<Eigen::MatrixXd>& border_blocks() const { return border_; }
  const Eigen::MatrixXd& global_block() const { return global_; }

 private:
  void add(int row, int col, const Mat3& block);

  BlockStructure structure_;
  std::vector<Eigen::MatrixXd> diag_;    // D_k
  std::vector<Eigen::MatrixXd> upper_;   // U_k couples k and k+1
  std::vector<Eigen::MatrixXd> border_;  // B_k couples k and the global block
  Eigen::MatrixXd global_;               // C
  Eigen::VectorXd gradient_;
  double cost_ = 0.0;
};

}  // namespace imucal
