#pragma once

// Minimum-cost one-to-one assignment on a rectangular cost matrix
// (shortest augmenting paths with potentials, O(n^2 m)).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace contexthoi {

// Returns (row, col) pairs; min(rows, cols) of them.
template <typename Derived>
std::vector<std::pair<Eigen::Index, Eigen::Index>> hungarian(const Eigen::MatrixBase<Derived>& cost) {
  using Scalar = typename Derived::Scalar;
  using Index = Eigen::Index;
  const Index rows = cost.rows();
  const Index cols = cost.cols();
  std::vector<std::pair<Index, Index>> result;
  if (rows == 0 || cols == 0) return result;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      if (!std::isfinite(static_cast<double>(cost(i, j)))) {
        throw std::invalid_argument("hungarian: non-finite cost");
      }

  // The solver assigns every row of an n x m matrix with n <= m.
  const bool transposed = rows > cols;
  const Index n = transposed ? cols : rows;
  const Index m = transposed ? rows : cols;
  auto a = [&](Index i, Index j) -> Scalar {
    return transposed ? cost(j - 1, i - 1) : cost(i - 1, j - 1);
  };

  const Scalar inf = std::numeric_limits<Scalar>::max();
  std::vector<Scalar> u(n + 1, 0), v(m + 1, 0);
  std::vector<Index> p(m + 1, 0), way(m + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<Scalar> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const Index i0 = p[j0];
      Scalar delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const Scalar cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (Index j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) {
      result.emplace_back(j - 1, p[j] - 1);
    } else {
      result.emplace_back(p[j] - 1, j - 1);
    }
  }
  std::sort(result.begin(), result.end());
  return result;
}

}  // namespace contexthoi
