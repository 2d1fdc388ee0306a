#include "vsr/matching.hpp"

#include <cmath>
#include <limits>

#include "vsr/errors.hpp"

namespace vsr {

namespace {

// Shortest-augmenting-path assignment with potentials on a square matrix,
// 1-indexed with column 0 as the sentinel. Returns col -> row matching.
std::vector<int> solve_square(const std::vector<double>& a, int n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_to_row(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) col_to_row[static_cast<std::size_t>(j - 1)] = p[static_cast<std::size_t>(j)] - 1;
  return col_to_row;
}

}  // namespace

Assignment hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  const int m = static_cast<int>(cost[0].size());
  if (m == 0) return {};
  double max_entry = -std::numeric_limits<double>::infinity();
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != m) throw shape_error("hungarian: ragged cost matrix");
    for (double c : row) {
      if (std::isnan(c)) throw argument_error("hungarian: NaN cost entry");
      if (!std::isfinite(c)) throw argument_error("hungarian: non-finite cost entry");
      max_entry = std::max(max_entry, c);
    }
  }
  const int s = std::max(n, m);
  const double pad = max_entry + 1.0;
  std::vector<double> square(static_cast<std::size_t>(s) * s, pad);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) square[static_cast<std::size_t>(i) * s + j] = cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

  const std::vector<int> col_to_row = solve_square(square, s);

  Assignment out;
  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < m; ++j) {
    const int i = col_to_row[static_cast<std::size_t>(j)];
    if (i < n) pairs.emplace_back(i, j);
  }
  // report in ascending proposal index so the total is order-stable
  std::sort(pairs.begin(), pairs.end());
  for (auto [i, j] : pairs) out.total_cost += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  out.pairs = std::move(pairs);
  return out;
}

}  // namespace vsr
