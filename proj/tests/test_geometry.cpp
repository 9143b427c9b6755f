// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <limits>

#include "cmt/geometry.hpp"
#include "doctest.h"

using namespace cmt;
using geom::PointCloud;
using geom::Vec3;

namespace {

PointCloud random_cloud(std::size_t n, Rng& rng) {
    PointCloud pc;
    for (std::size_t i = 0; i < n; ++i)
        pc.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    return pc;
}

// Independent greedy FPS: re-scans every candidate against the whole
// selected set at each step (no incremental cache).
std::vector<int> fps_oracle(const PointCloud& pc, int k, int start) {
    std::vector<int> sel{start};
    while (static_cast<int>(sel.size()) < k) {
        int best = -1;
        double best_d = -1.0;
        for (int i = 0; i < static_cast<int>(pc.size()); ++i) {
            double min_d = std::numeric_limits<double>::infinity();
            for (int s : sel) min_d = std::min(min_d, (pc.points[i] - pc.points[s]).squared_norm());
            if (min_d > best_d) {
                best_d = min_d;
                best = i;
            }
        }
        sel.push_back(best);
    }
    return sel;
}

}  // namespace

TEST_CASE("normalize: two collinear points") {
    PointCloud pc;
    pc.points = {{2, 0, 0}, {4, 0, 0}};
    const PointCloud out = geom::normalize_unit_sphere(pc);
    CHECK(out.normalized);
    CHECK(out.points[0].x == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(out.points[1].x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.points[0].y == 0.0);
    CHECK(out.points[1].z == 0.0);
}

TEST_CASE("normalize: single point collapses to origin") {
    PointCloud pc;
    pc.points = {{5, 5, 5}};
    const PointCloud out = geom::normalize_unit_sphere(pc);
    CHECK(out.normalized);
    CHECK(out.points[0].x == 0.0);
    CHECK(out.points[0].y == 0.0);
    CHECK(out.points[0].z == 0.0);
}

TEST_CASE("normalize: random cloud centroid and radius") {
    Rng rng(7);
    const PointCloud out = geom::normalize_unit_sphere(random_cloud(100, rng));
    Vec3 centroid{0, 0, 0};
    for (const Vec3& p : out.points) centroid = centroid + p;
    centroid = centroid * (1.0 / 100.0);
    CHECK(std::abs(centroid.x) < 1e-9);
    CHECK(std::abs(centroid.y) < 1e-9);
    CHECK(std::abs(centroid.z) < 1e-9);
    double max_r = 0.0;
    for (const Vec3& p : out.points) max_r = std::max(max_r, p.norm());
    CHECK(max_r == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("normalize: idempotent within 1e-12") {
    Rng rng(11);
    const PointCloud once = geom::normalize_unit_sphere(random_cloud(50, rng));
    const PointCloud twice = geom::normalize_unit_sphere(once);
    for (std::size_t i = 0; i < once.size(); ++i)
        CHECK((once.points[i] - twice.points[i]).norm() < 1e-12);
}

TEST_CASE("normalize: non-finite input rejected") {
    PointCloud pc;
    pc.points = {{0, 0, 0}, {std::numeric_limits<double>::quiet_NaN(), 0, 0}};
    CHECK_THROWS_AS(geom::normalize_unit_sphere(pc), InvalidArgument);
    pc.points[1].x = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(geom::normalize_unit_sphere(pc), InvalidArgument);
}

TEST_CASE("fps: farthest of three collinear points") {
    PointCloud pc;
    pc.points = {{0, 0, 0}, {0.1, 0, 0}, {1, 0, 0}};
    const auto idx = geom::farthest_point_sample(pc, 2, 0);
    CHECK(idx == geom::IndexSet{0, 2});
}

TEST_CASE("fps: k equals N exhausts all indices") {
    Rng rng(3);
    const PointCloud pc = random_cloud(9, rng);
    for (int start : {0, 4, 8}) {
        auto idx = geom::farthest_point_sample(pc, 9, start);
        std::sort(idx.begin(), idx.end());
        for (int i = 0; i < 9; ++i) CHECK(idx[i] == i);
    }
}

TEST_CASE("fps: matches the independent oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const PointCloud pc = random_cloud(16, rng);
        const int start = rng.uniform_int(16);
        CHECK(geom::farthest_point_sample(pc, 4, start) == fps_oracle(pc, 4, start));
    }
}

TEST_CASE("fps: permutation covariance") {
    Rng rng(33);
    const PointCloud pc = random_cloud(12, rng);
    std::vector<int> perm(12);
    for (int i = 0; i < 12; ++i) perm[i] = i;
    for (int i = 11; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);

    PointCloud relabeled;
    relabeled.points.resize(12);
    std::vector<int> inverse(12);
    for (int i = 0; i < 12; ++i) {
        relabeled.points[i] = pc.points[perm[i]];
        inverse[perm[i]] = i;
    }
    const int start = 5;
    const auto base = geom::farthest_point_sample(pc, 6, start);
    const auto moved = geom::farthest_point_sample(relabeled, 6, inverse[start]);
    for (std::size_t t = 0; t < base.size(); ++t) CHECK(moved[t] == inverse[base[t]]);
}

TEST_CASE("fps: k out of range") {
    Rng rng(1);
    const PointCloud pc = random_cloud(4, rng);
    CHECK_THROWS_AS(geom::farthest_point_sample(pc, 5, 0), InvalidArgument);
    CHECK_THROWS_AS(geom::farthest_point_sample(pc, 0, 0), InvalidArgument);
}

TEST_CASE("knn: nearest along a line") {
    PointCloud pc;
    pc.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
    const auto res = geom::knn(pc, {0}, 2);
    CHECK(res[0] == geom::IndexSet{0, 1});
}

TEST_CASE("knn: k=1 returns the center itself") {
    Rng rng(5);
    const PointCloud pc = random_cloud(8, rng);
    const auto res = geom::knn(pc, {0, 3, 7}, 1);
    CHECK(res[0] == geom::IndexSet{0});
    CHECK(res[1] == geom::IndexSet{3});
    CHECK(res[2] == geom::IndexSet{7});
}

TEST_CASE("knn: equals the full-sort oracle and distances are sorted") {
    Rng rng(17);
    const PointCloud pc = random_cloud(32, rng);
    geom::IndexSet centers;
    for (int c = 0; c < 32; c += 7) centers.push_back(c);
    const auto res = geom::knn(pc, centers, 5);
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
        std::vector<std::pair<double, int>> all;
        for (int i = 0; i < 32; ++i)
            all.push_back({(pc.points[i] - pc.points[centers[ci]]).squared_norm(), i});
        std::sort(all.begin(), all.end());
        for (int i = 0; i < 5; ++i) CHECK(res[ci][i] == all[i].second);
        for (int i = 1; i < 5; ++i) {
            const double prev = (pc.points[res[ci][i - 1]] - pc.points[centers[ci]]).norm();
            const double cur = (pc.points[res[ci][i]] - pc.points[centers[ci]]).norm();
            CHECK(prev <= cur);
        }
    }
    CHECK_THROWS_AS(geom::knn(pc, centers, 33), InvalidArgument);
}

TEST_CASE("augment: degenerate ranges are the identity") {
    Rng data_rng(2);
    const PointCloud pc = geom::normalize_unit_sphere(random_cloud(20, data_rng));
    geom::AugmentConfig cfg;
    cfg.scale_min = cfg.scale_max = 1.0;
    cfg.shift_range = 0.0;
    Rng rng(99);
    const PointCloud out = geom::augment(pc, cfg, rng);
    for (std::size_t i = 0; i < pc.size(); ++i) {
        CHECK(out.points[i].x == pc.points[i].x);
        CHECK(out.points[i].y == pc.points[i].y);
        CHECK(out.points[i].z == pc.points[i].z);
    }
    CHECK(out.normalized == pc.normalized);
}

TEST_CASE("augment: deterministic under a fixed seed") {
    Rng data_rng(2);
    const PointCloud pc = geom::normalize_unit_sphere(random_cloud(20, data_rng));
    Rng a(1234), b(1234);
    const PointCloud first = geom::augment(pc, {}, a);
    const PointCloud second = geom::augment(pc, {}, b);
    for (std::size_t i = 0; i < pc.size(); ++i)
        CHECK((first.points[i] - second.points[i]).norm() == 0.0);
}

TEST_CASE("augment: pure doubling doubles every radius") {
    Rng data_rng(8);
    const PointCloud pc = geom::normalize_unit_sphere(random_cloud(20, data_rng));
    geom::AugmentConfig cfg;
    cfg.scale_min = cfg.scale_max = 2.0;
    cfg.shift_range = 0.0;
    Rng rng(5);
    const PointCloud out = geom::augment(pc, cfg, rng);
    for (std::size_t i = 0; i < pc.size(); ++i)
        CHECK(out.points[i].norm() == doctest::Approx(2.0 * pc.points[i].norm()).epsilon(1e-12));
    CHECK_FALSE(out.normalized);
}
