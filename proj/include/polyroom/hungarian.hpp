#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace polyroom {

struct Assignment {
  // row_to_col[r] is the column given to row r, or kUnassigned.
  std::vector<std::size_t> row_to_col;
  double cost = 0.0;

  static constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();
};

/// Minimum-cost assignment on a rows x cols cost matrix (row-major).
///
/// Every row gets a column when rows <= cols, otherwise every column gets a
/// row. Shortest augmenting paths with dual potentials, O(min^2 * max).
/// The reported cost is re-summed over rows in index order.
template <typename Cost>
Assignment solve_assignment(const std::vector<Cost>& cost, std::size_t rows, std::size_t cols) {
  Assignment out;
  out.row_to_col.assign(rows, Assignment::kUnassigned);
  if (rows == 0 || cols == 0) return out;

  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;  // the side that is fully matched
  const std::size_t m = transposed ? rows : cols;
  auto at = [&](std::size_t i, std::size_t j) -> double {
    return static_cast<double>(transposed ? cost[j * cols + i] : cost[i * cols + j]);
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) {
      out.row_to_col[j - 1] = p[j] - 1;
    } else {
      out.row_to_col[p[j] - 1] = j - 1;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (out.row_to_col[r] != Assignment::kUnassigned) out.cost += static_cast<double>(cost[r * cols + out.row_to_col[r]]);
  }
  return out;
}

}  // namespace polyroom
