// Exact linear assignment (Hungarian method, shortest-augmenting-path
// formulation) for rectangular cost matrices with rows <= cols. O(n^2 m).
#pragma once

#include <limits>
#include <vector>

#include "openncd/errors.hpp"
#include "openncd/matrix.hpp"

namespace openncd {

// Assigns every row to a distinct column minimizing total cost.
// Returns row -> column. Requires rows() <= cols().
inline std::vector<int> min_cost_assignment(const Matrix& cost) {
    const int n = cost.rows(), m = cost.cols();
    if (n == 0) return {};
    if (n > m) throw ContractViolation("min_cost_assignment: more rows than columns");

    const double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; col_of_row0[j] is the row currently assigned to column j.
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> assigned_row(m + 1, 0), parent_col(m + 1, 0);

    for (int i = 1; i <= n; ++i) {
        assigned_row[0] = i;
        int j0 = 0;
        std::vector<double> min_reduced(m + 1, inf);
        std::vector<char> visited(m + 1, 0);
        do {
            visited[j0] = 1;
            const int i0 = assigned_row[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= m; ++j) {
                if (visited[j]) continue;
                const double reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (reduced < min_reduced[j]) {
                    min_reduced[j] = reduced;
                    parent_col[j] = j0;
                }
                if (min_reduced[j] < delta) {
                    delta = min_reduced[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (visited[j]) {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_reduced[j] -= delta;
                }
            }
            j0 = j1;
        } while (assigned_row[j0] != 0);
        // Augment along the alternating path.
        do {
            const int j1 = parent_col[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (assigned_row[j] > 0) row_to_col[assigned_row[j] - 1] = j - 1;
    return row_to_col;
}

// Assigns every row to a distinct column maximizing total benefit.
inline std::vector<int> max_benefit_assignment(const Matrix& benefit) {
    Matrix cost(benefit.rows(), benefit.cols());
    for (int i = 0; i < benefit.rows(); ++i)
        for (int j = 0; j < benefit.cols(); ++j) cost(i, j) = -benefit(i, j);
    return min_cost_assignment(cost);
}

}  // namespace openncd
