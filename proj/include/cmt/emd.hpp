// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "cmt/geometry.hpp"
#include "cmt/numarray.hpp"

namespace cmt::emd {

// Square matrix of non-negative pairwise costs, row-major.
struct CostMatrix {
    std::size_t n = 0;
    std::vector<double> costs;

    double at(std::size_t i, std::size_t j) const { return costs[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return costs[i * n + j]; }
};

// A bijection between two equal-size sets: assignment[i] is the index in the
// second set matched to element i of the first, plus its total cost.
struct Matching {
    std::vector<int> assignment;
    double total_cost = 0.0;
};

// Globally optimal assignment (Kuhn-Munkres with potentials, O(n^3)). Among
// cost-equal optima the lexicographically smallest assignment array is
// returned, resolved on the dual-tight edge subgraph.
Matching solve_assignment_exact(const CostMatrix& c);

// Epsilon-scaling auction. The returned cost is within n*epsilon of optimal.
Matching solve_assignment_auction(const CostMatrix& c, double epsilon);

enum class Solver { Exact, Auction, Auto };      // Auto: exact for n <= 256
enum class Reduction { Sum, Mean };              // per-cloud sum (literal) or mean over points

struct EmdResult {
    double value = 0.0;
    diff::NumArray dp;  // [N x 3], gradient holding the matching fixed
    diff::NumArray dq;
    Matching matching;
};

// Earth Mover's Distance between equal-size clouds under Euclidean ground
// cost. Gradients are computed with the optimal matching held fixed
// (envelope reasoning); a zero-distance pair contributes zero gradient.
EmdResult emd_loss(const geom::PointCloud& p, const geom::PointCloud& q,
                   Solver solver = Solver::Auto, Reduction reduction = Reduction::Sum,
                   double auction_epsilon = 1e-6);

}  // namespace cmt::emd
