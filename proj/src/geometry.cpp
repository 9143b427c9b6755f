// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cmt::geom {

double Vec3::norm() const { return std::sqrt(squared_norm()); }

Vec3 Vec3::normalized() const {
    double n = norm();
    if (n <= 0.0) return {0.0, 0.0, 0.0};
    return {x / n, y / n, z / n};
}

PointCloud normalize_unit_sphere(const PointCloud& pc) {
    const std::size_t n = pc.size();
    if (n == 0) throw InvalidArgument("normalize_unit_sphere: empty cloud");
    for (const Vec3& p : pc.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw InvalidArgument("normalize_unit_sphere: non-finite coordinate");
    }
    Vec3 centroid{0, 0, 0};
    for (const Vec3& p : pc.points) centroid = centroid + p;
    centroid = centroid * (1.0 / static_cast<double>(n));

    double max_r = 0.0;
    for (const Vec3& p : pc.points) max_r = std::max(max_r, (p - centroid).norm());

    PointCloud out;
    out.points.resize(n);
    out.normalized = true;
    if (max_r <= 0.0) {
        // All points coincident; collapse to the origin.
        for (Vec3& p : out.points) p = {0.0, 0.0, 0.0};
        return out;
    }
    const double inv = 1.0 / max_r;
    for (std::size_t i = 0; i < n; ++i) out.points[i] = (pc.points[i] - centroid) * inv;
    return out;
}

IndexSet farthest_point_sample(const PointCloud& pc, int k, int start) {
    const int n = static_cast<int>(pc.size());
    if (k < 1 || k > n) throw InvalidArgument("farthest_point_sample: k must be in [1, N]");
    if (start < 0 || start >= n) throw InvalidArgument("farthest_point_sample: start out of range");

    IndexSet picked;
    picked.reserve(k);
    picked.push_back(start);
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    int last = start;
    for (int step = 1; step < k; ++step) {
        int best = -1;
        double best_d2 = -1.0;
        for (int i = 0; i < n; ++i) {
            double d2 = (pc.points[i] - pc.points[last]).squared_norm();
            if (d2 < min_d2[i]) min_d2[i] = d2;
            if (min_d2[i] > best_d2) {  // strict > keeps the lowest index on ties
                best_d2 = min_d2[i];
                best = i;
            }
        }
        picked.push_back(best);
        last = best;
    }
    return picked;
}

int lexicographic_min_index(const PointCloud& pc) {
    if (pc.size() == 0) throw InvalidArgument("lexicographic_min_index: empty cloud");
    int best = 0;
    for (int i = 1; i < static_cast<int>(pc.size()); ++i) {
        const Vec3& a = pc.points[i];
        const Vec3& b = pc.points[best];
        if (a.x < b.x || (a.x == b.x && (a.y < b.y || (a.y == b.y && a.z < b.z)))) best = i;
    }
    return best;
}

std::vector<IndexSet> knn(const PointCloud& pc, const IndexSet& centers, int k) {
    const int n = static_cast<int>(pc.size());
    if (k < 1 || k > n) throw InvalidArgument("knn: k must be in [1, N]");

    std::vector<IndexSet> out;
    out.reserve(centers.size());
    std::vector<std::pair<double, int>> dist(n);
    for (int c : centers) {
        if (c < 0 || c >= n) throw InvalidArgument("knn: center index out of range");
        for (int i = 0; i < n; ++i) dist[i] = {(pc.points[i] - pc.points[c]).squared_norm(), i};
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        IndexSet nbrs(k);
        for (int i = 0; i < k; ++i) nbrs[i] = dist[i].second;
        out.push_back(std::move(nbrs));
    }
    return out;
}

PointCloud augment(const PointCloud& pc, const AugmentConfig& cfg, Rng& rng) {
    const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
    const Vec3 shift{rng.uniform(-cfg.shift_range, cfg.shift_range),
                     rng.uniform(-cfg.shift_range, cfg.shift_range),
                     rng.uniform(-cfg.shift_range, cfg.shift_range)};
    PointCloud out;
    out.points.resize(pc.size());
    for (std::size_t i = 0; i < pc.size(); ++i) out.points[i] = pc.points[i] * s + shift;
    const bool identity = s == 1.0 && shift.x == 0.0 && shift.y == 0.0 && shift.z == 0.0;
    out.normalized = pc.normalized && identity;
    return out;
}

}  // namespace cmt::geom
