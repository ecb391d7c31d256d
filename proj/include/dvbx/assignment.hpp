// dvbx/assignment.hpp

// Copyright 2026 The DVBx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
// row/column potentials, O(n^3)).

#ifndef DVBX_ASSIGNMENT_HPP_
#define DVBX_ASSIGNMENT_HPP_

#include <limits>
#include <vector>

#include "dvbx/common.hpp"

namespace dvbx {

/// Returns assignment[row] = column minimizing sum_row cost(row, assignment[row]).
inline std::vector<Index> SolveAssignment(const Matrix &cost) {
  RequireShape(cost.rows() == cost.cols(), "assignment: cost matrix must be square");
  RequireFinite(cost, "assignment");
  const Index n = cost.rows();
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual source.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Index row = 1; row <= n; ++row) {
    match[0] = row;
    Index col0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(col0)] = true;
      const Index r0 = match[static_cast<std::size_t>(col0)];
      double delta = inf;
      Index col1 = 0;
      for (Index c = 1; c <= n; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        if (used[cu]) continue;
        const double cur = cost(r0 - 1, c - 1) - u[static_cast<std::size_t>(r0)] - v[cu];
        if (cur < minv[cu]) {
          minv[cu] = cur;
          way[cu] = col0;
        }
        if (minv[cu] < delta) {
          delta = minv[cu];
          col1 = c;
        }
      }
      for (Index c = 0; c <= n; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        if (used[cu]) {
          u[static_cast<std::size_t>(match[cu])] += delta;
          v[cu] -= delta;
        } else {
          minv[cu] -= delta;
        }
      }
      col0 = col1;
    } while (match[static_cast<std::size_t>(col0)] != 0);
    do {
      const Index col1 = way[static_cast<std::size_t>(col0)];
      match[static_cast<std::size_t>(col0)] = match[static_cast<std::size_t>(col1)];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<Index> assignment(static_cast<std::size_t>(n));
  for (Index c = 1; c <= n; ++c)
    assignment[static_cast<std::size_t>(match[static_cast<std::size_t>(c)] - 1)] = c - 1;
  return assignment;
}

/// Sum of the selected costs, accumulated in row order.
inline double AssignmentCost(const Matrix &cost, const std::vector<Index> &assignment) {
  double total = 0.0;
  for (std::size_t r = 0; r < assignment.size(); ++r)
    total += cost(static_cast<Index>(r), assignment[r]);
  return total;
}

}  // namespace dvbx

#endif  // DVBX_ASSIGNMENT_HPP_
