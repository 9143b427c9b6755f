// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0
//
// Assignment solvers.
//
// Exact: Kuhn-Munkres in the shortest-augmenting-path form with row/column
// potentials, O(n^3). The potentials returned by the primal solve certify
// optimality; by complementary slackness every optimal assignment lives on
// the subgraph of dual-tight edges, so the lexicographic tie-break walks
// rows in order and greedily takes the smallest tight column that still
// leaves the remaining rows a perfect matching.
//
// Approximate: forward auction with epsilon scaling. A completed auction at
// scale eps satisfies eps-complementary-slackness, which bounds the final
// cost within n*eps of optimal.

#include "cmt/emd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cmt::emd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const CostMatrix& c) {
    if (c.n == 0) throw InvalidArgument("assignment: empty cost matrix");
    if (c.costs.size() != c.n * c.n) throw InvalidArgument("assignment: cost buffer size != n*n");
    for (double v : c.costs) {
        if (!std::isfinite(v)) throw InvalidArgument("assignment: non-finite cost");
        if (v < 0.0) throw InvalidArgument("assignment: negative cost");
    }
}

// Shortest augmenting path solve; fills row->col matching and dual
// potentials u (rows), v (cols) with c[i][j] - u[i] - v[j] >= 0 everywhere
// and == 0 on matched edges (up to roundoff).
void solve_with_potentials(const CostMatrix& c, std::vector<int>& row_match,
                           std::vector<double>& u, std::vector<double>& v) {
    const int n = static_cast<int>(c.n);
    std::vector<double> uu(n + 1, 0.0), vv(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<double> minv(n + 1);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c.at(i0 - 1, j - 1) - uu[i0] - vv[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    uu[p[j]] += delta;
                    vv[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    row_match.assign(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) row_match[p[j] - 1] = j - 1;
    u.assign(n, 0.0);
    v.assign(n, 0.0);
    for (int i = 1; i <= n; ++i) u[i - 1] = uu[i];
    for (int j = 1; j <= n; ++j) v[j - 1] = vv[j];
}

// Kuhn augmenting search over the tight subgraph, restricted to movable rows
// (index > fixed_upto) and columns not owned by fixed rows.
bool kuhn_augment(int row, const std::vector<std::vector<int>>& adj, int fixed_upto,
                  std::vector<int>& col_owner, std::vector<int>& row_match,
                  std::vector<char>& visited) {
    for (int j : adj[row]) {
        if (visited[j]) continue;
        const int owner = col_owner[j];
        if (owner != -1 && owner <= fixed_upto) continue;
        visited[j] = 1;
        if (owner == -1 ||
            kuhn_augment(owner, adj, fixed_upto, col_owner, row_match, visited)) {
            col_owner[j] = row;
            row_match[row] = j;
            return true;
        }
    }
    return false;
}

}  // namespace

Matching solve_assignment_exact(const CostMatrix& c) {
    validate(c);
    const int n = static_cast<int>(c.n);

    std::vector<int> row_match;
    std::vector<double> u, v;
    solve_with_potentials(c, row_match, u, v);

    // Tight subgraph: all optimal assignments live on it.
    double cmax = 0.0;
    for (double x : c.costs) cmax = std::max(cmax, std::abs(x));
    const double tol = 1e-9 * std::max(1.0, cmax);
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (c.at(i, j) - u[i] - v[j] <= tol) adj[i].push_back(j);

    std::vector<int> col_owner(n, -1);
    for (int i = 0; i < n; ++i) col_owner[row_match[i]] = i;

    // Lexicographic refinement, row by row.
    std::vector<char> visited(n);
    for (int i = 0; i < n; ++i) {
        for (int j : adj[i]) {
            if (j >= row_match[i]) break;  // adj is ascending; can only improve downward
            const int displaced = col_owner[j];
            if (displaced != -1 && displaced < i) continue;  // owned by a fixed row
            const int old_j = row_match[i];
            col_owner[old_j] = -1;
            col_owner[j] = i;
            row_match[i] = j;
            bool ok = true;
            if (displaced != -1) {
                std::fill(visited.begin(), visited.end(), 0);
                visited[j] = 1;
                ok = kuhn_augment(displaced, adj, i, col_owner, row_match, visited);
            }
            if (ok) break;
            col_owner[j] = displaced;
            col_owner[old_j] = i;
            row_match[i] = old_j;
        }
    }

    Matching m;
    m.assignment = row_match;
    m.total_cost = 0.0;
    for (int i = 0; i < n; ++i) m.total_cost += c.at(i, row_match[i]);
    return m;
}

Matching solve_assignment_auction(const CostMatrix& c, double epsilon) {
    validate(c);
    if (!(epsilon > 0.0)) throw InvalidArgument("auction: epsilon must be positive");
    const int n = static_cast<int>(c.n);

    // Maximize benefit = cmax - cost so the textbook forward auction applies.
    double cmax = 0.0;
    for (double x : c.costs) cmax = std::max(cmax, x);
    std::vector<double> benefit(c.costs.size());
    for (std::size_t k = 0; k < c.costs.size(); ++k) benefit[k] = cmax - c.costs[k];

    std::vector<double> price(n, 0.0);
    std::vector<int> row_to_col(n, -1), col_to_row(n, -1);

    double eps = std::max(epsilon, cmax / 2.0);
    bool last_phase = false;
    while (true) {
        if (eps <= epsilon) {
            eps = epsilon;
            last_phase = true;
        }
        std::fill(row_to_col.begin(), row_to_col.end(), -1);
        std::fill(col_to_row.begin(), col_to_row.end(), -1);
        std::vector<int> queue;
        queue.reserve(n);
        for (int i = n - 1; i >= 0; --i) queue.push_back(i);
        while (!queue.empty()) {
            const int i = queue.back();
            queue.pop_back();
            // Best and second-best net value for bidder i.
            int best_j = -1;
            double best = -kInf, second = -kInf;
            const double* brow = benefit.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                const double val = brow[j] - price[j];
                if (val > best) {
                    second = best;
                    best = val;
                    best_j = j;
                } else if (val > second) {
                    second = val;
                }
            }
            if (n == 1) second = best;
            price[best_j] += best - second + eps;
            const int prev = col_to_row[best_j];
            col_to_row[best_j] = i;
            row_to_col[i] = best_j;
            if (prev != -1) {
                row_to_col[prev] = -1;
                queue.push_back(prev);
            }
        }
        if (last_phase) break;
        eps /= 4.0;
    }

    Matching m;
    m.assignment = row_to_col;
    m.total_cost = 0.0;
    for (int i = 0; i < n; ++i) m.total_cost += c.at(i, row_to_col[i]);
    return m;
}

EmdResult emd_loss(const geom::PointCloud& p, const geom::PointCloud& q, Solver solver,
                   Reduction reduction, double auction_epsilon) {
    const std::size_t n = p.size();
    if (n != q.size())
        throw InvalidArgument("emd_loss: clouds must have equal size (" + std::to_string(n) +
                              " vs " + std::to_string(q.size()) + ")");
    if (n == 0) throw InvalidArgument("emd_loss: empty clouds");

    CostMatrix c;
    c.n = n;
    c.costs.resize(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) c.at(i, j) = (p.points[i] - q.points[j]).norm();

    const bool exact = solver == Solver::Exact || (solver == Solver::Auto && n <= 256);
    EmdResult out;
    out.matching = exact ? solve_assignment_exact(c) : solve_assignment_auction(c, auction_epsilon);

    const double scale = reduction == Reduction::Sum ? 1.0 : 1.0 / static_cast<double>(n);
    out.dp = diff::NumArray::zeros({n, 3});
    out.dq = diff::NumArray::zeros({n, 3});
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = static_cast<std::size_t>(out.matching.assignment[i]);
        const geom::Vec3 d = p.points[i] - q.points[j];
        const double dist = d.norm();
        value += dist;
        if (dist > 0.0) {
            const double g = scale / dist;
            out.dp.at(i, 0) += d.x * g;
            out.dp.at(i, 1) += d.y * g;
            out.dp.at(i, 2) += d.z * g;
            out.dq.at(j, 0) -= d.x * g;
            out.dq.at(j, 1) -= d.y * g;
            out.dq.at(j, 2) -= d.z * g;
        }
    }
    out.value = value * scale;
    return out;
}

}  // namespace cmt::emd
