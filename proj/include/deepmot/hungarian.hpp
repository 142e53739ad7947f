#pragma once

#include <cstddef>
#include <vector>

#include "deepmot/tensor.hpp"

namespace deepmot {

// Binary assignment between N rows (tracks) and M columns (objects). At most
// one match per row and per column.
struct Assignment {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::ptrdiff_t> row_to_col;  // -1 = unmatched
  std::vector<std::ptrdiff_t> col_to_row;  // -1 = unmatched

  Tensor matrix() const;  // N x M of {0, 1}
  std::size_t match_count() const;
  // Sum of matched cost entries, accumulated in row order.
  double cost(const Tensor& d) const;

  bool operator==(const Assignment& other) const {
    return rows == other.rows && cols == other.cols &&
           row_to_col == other.row_to_col;
  }
};

Assignment assignment_from_matrix(const Tensor& m);
bool is_valid_assignment(const Tensor& m);

// Exact minimum-cost assignment with exactly min(N, M) matches.
// Deterministic tie-break among equal-cost optima: the per-row matched
// column vector (unmatched = M) is lexicographically smallest.
// Rejects empty or non-finite matrices.
Assignment solve(const Tensor& d);

// Pairs with d > tau are infeasible. Maximizes the number of feasible
// matches, then minimizes total cost, then applies the same tie-break.
// Requires 0 < tau <= 1 for distance matrices in [0, 1]; any finite tau > 0
// is accepted for general costs.
Assignment solve_thresholded(const Tensor& d, double tau);

}  // namespace deepmot
