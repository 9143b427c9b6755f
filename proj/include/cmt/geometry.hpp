// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "cmt/errors.hpp"
#include "cmt/rng.hpp"

namespace cmt::geom {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const;
    Vec3 normalized() const;
};

// Ordered point set. `normalized` records that the cloud has been through
// unit-sphere normalization (centroid at origin, max radius 1).
struct PointCloud {
    std::vector<Vec3> points;
    bool normalized = false;

    std::size_t size() const { return points.size(); }
};

struct LabeledCloud {
    PointCloud cloud;
    int label = 0;
};

using IndexSet = std::vector<int>;

struct AugmentConfig {
    double scale_min = 0.8;
    double scale_max = 1.25;
    double shift_range = 0.1;  // per-axis translation drawn from [-shift_range, shift_range]
};

// Center at the centroid and scale so the farthest point sits on the unit
// sphere. An all-coincident cloud maps to the origin rather than raising.
PointCloud normalize_unit_sphere(const PointCloud& pc);

// Deterministic greedy farthest point sampling: the first pick is `start`,
// each next pick maximizes the minimum distance to the selected set, ties
// broken by lowest index.
IndexSet farthest_point_sample(const PointCloud& pc, int k, int start);

// Index of the lexicographically smallest point (x, then y, then z); lowest
// index among exact duplicates. A permutation-stable FPS start.
int lexicographic_min_index(const PointCloud& pc);

// For each center, the k nearest points by Euclidean distance (the center
// itself is eligible), ties broken by lowest index, sorted near-to-far.
std::vector<IndexSet> knn(const PointCloud& pc, const IndexSet& centers, int k);

// Uniform random scale plus per-axis translation. Draw order is fixed:
// scale, then shift x, y, z.
PointCloud augment(const PointCloud& pc, const AugmentConfig& cfg, Rng& rng);

}  // namespace cmt::geom
