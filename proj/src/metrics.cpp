#include "fpci/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fpci {

// Hungarian algorithm in the potentials formulation (shortest augmenting
// paths), O(n^3). Indices are 1-based internally; column 0 is the virtual
// root.
Assignment solve_assignment_exact(const std::vector<double>& cost, int64_t n) {
  if (n < 1) throw ArgumentError("solve_assignment_exact: empty problem");
  if (static_cast<int64_t>(cost.size()) != n * n)
    throw ShapeError("solve_assignment_exact: cost matrix size mismatch");
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
  std::vector<int64_t> p(static_cast<size_t>(n + 1), 0), way(static_cast<size_t>(n + 1), 0);
  for (int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    int64_t j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n + 1), kInf);
    std::vector<char> used(static_cast<size_t>(n + 1), 0);
    do {
      used[static_cast<size_t>(j0)] = 1;
      const int64_t i0 = p[static_cast<size_t>(j0)];
      int64_t j1 = 0;
      double delta = kInf;
      for (int64_t j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        const double cur = cost[static_cast<size_t>((i0 - 1) * n + (j - 1))] -
                           u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int64_t j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      const int64_t j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  Assignment out;
  out.mapping.assign(static_cast<size_t>(n), -1);
  double total = 0.0;
  for (int64_t j = 1; j <= n; ++j) {
    const int64_t i = p[static_cast<size_t>(j)];
    out.mapping[static_cast<size_t>(i - 1)] = j - 1;
    total += cost[static_cast<size_t>((i - 1) * n + (j - 1))];
  }
  out.total_cost = total / static_cast<double>(n);
  return out;
}

// Bertsekas forward auction with epsilon scaling. Costs are integerized at
// a fixed scale so every phase provably terminates; prices persist across
// phases while assignments are rebuilt.
double solve_assignment_auction(const std::vector<double>& cost, int64_t n, double eps_final) {
  if (n < 1) throw ArgumentError("solve_assignment_auction: empty problem");
  if (static_cast<int64_t>(cost.size()) != n * n)
    throw ShapeError("solve_assignment_auction: cost matrix size mismatch");
  constexpr double kScale = 1e7;
  std::vector<int64_t> value(cost.size());
  int64_t vmax = 0;
  for (size_t i = 0; i < cost.size(); ++i) {
    value[i] = -static_cast<int64_t>(std::llround(cost[i] * kScale));
    vmax = std::max(vmax, std::abs(value[i]));
  }
  const int64_t eps_final_i = std::max<int64_t>(1, std::llround(eps_final * kScale));
  int64_t eps = std::max<int64_t>(eps_final_i, vmax / 4 + 1);

  std::vector<int64_t> price(static_cast<size_t>(n), 0);
  std::vector<int64_t> owner(static_cast<size_t>(n));   // object -> person
  std::vector<int64_t> object(static_cast<size_t>(n));  // person -> object

  while (true) {
    std::fill(owner.begin(), owner.end(), int64_t(-1));
    std::fill(object.begin(), object.end(), int64_t(-1));
    std::vector<int64_t> queue;
    queue.reserve(static_cast<size_t>(n));
    for (int64_t i = n - 1; i >= 0; --i) queue.push_back(i);
    while (!queue.empty()) {
      const int64_t i = queue.back();
      queue.pop_back();
      // best and second-best net value for person i
      int64_t best_j = -1, best = std::numeric_limits<int64_t>::min(),
              second = std::numeric_limits<int64_t>::min();
      const int64_t* row = value.data() + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const int64_t net = row[j] - price[static_cast<size_t>(j)];
        if (net > best) {
          second = best;
          best = net;
          best_j = j;
        } else if (net > second) {
          second = net;
        }
      }
      const int64_t bump = (n == 1) ? eps : (best - second + eps);
      price[static_cast<size_t>(best_j)] += bump;
      const int64_t prev = owner[static_cast<size_t>(best_j)];
      if (prev >= 0) {
        object[static_cast<size_t>(prev)] = -1;
        queue.push_back(prev);
      }
      owner[static_cast<size_t>(best_j)] = i;
      object[static_cast<size_t>(i)] = best_j;
    }
    if (eps <= eps_final_i) break;
    eps = std::max(eps_final_i, eps / 5);
  }

  double total = 0.0;
  for (int64_t i = 0; i < n; ++i)
    total += cost[static_cast<size_t>(i * n + object[static_cast<size_t>(i)])];
  return total / static_cast<double>(n);
}

}  // namespace fpci
