#pragma once

#include <span>

#include "imucal/so3.hpp"

namespace imucal {

/// Tangent-space layout seen by the solver: `num_time_blocks` consecutive
/// blocks of `time_block_size` columns, followed by `global_size` columns.
/// A residual may couple at most two adjacent time blocks plus any global
/// columns.
struct BlockStructure {
  int num_time_blocks = 0;
  int time_block_size = 0;
  int global_size = 0;

  int local_size() const { return num_time_blocks * time_block_size; }
  int dimension() const { return local_size() + global_size; }
  bool is_global(int offset) const { return offset >= local_size(); }
  int time_block_of(int offset) const { return offset / time_block_size; }
};

/// Derivative of a 3-vector residual with respect to three consecutive
/// tangent columns starting at `offset`.
struct SliceJacobian {
  int offset = 0;
  Mat3 jacobian = Mat3::Zero();
};

/// Receives whitened residual blocks and their Jacobians.
class BlockVisitor {
 public:
  virtual ~BlockVisitor() = default;
  virtual void visit(const Vec3& residual, std::span<const SliceJacobian> slices) = 0;
};

}  // namespace imucal
