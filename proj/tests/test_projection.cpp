// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "cmt/projection.hpp"
#include "doctest.h"

using namespace cmt;
using geom::PointCloud;
using geom::Vec3;
using proj::Camera;

namespace {

PointCloud unit_sphere_cloud(std::size_t n, Rng& rng) {
    PointCloud pc;
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        pc.points.push_back(v.normalized());
    }
    return geom::normalize_unit_sphere(pc);
}

// Reference pinhole math, independent of the production rasterizer.
struct ProjectedPoint {
    double u = 0.0, v = 0.0, depth = 0.0;
    bool in_front = false;
};
ProjectedPoint oracle_project(const Vec3& p, const Camera& cam) {
    const Vec3 forward = (cam.look_at - cam.position).normalized();
    const Vec3 right = forward.cross(cam.up).normalized();
    const Vec3 up = right.cross(forward);
    const Vec3 rel = p - cam.position;
    ProjectedPoint out;
    out.depth = rel.dot(forward);
    out.in_front = out.depth > 0.0;
    if (out.in_front) {
        out.u = cam.principal_x + cam.focal * rel.dot(right) / out.depth;
        out.v = cam.principal_y - cam.focal * rel.dot(up) / out.depth;
    }
    return out;
}

}  // namespace

TEST_CASE("rig: six axis cameras at the requested distance") {
    const auto rig = proj::default_view_rig(6, 2.2);
    REQUIRE(rig.size() == 6);
    CHECK(rig[0].position.x == doctest::Approx(2.2));
    CHECK(rig[0].position.y == 0.0);
    CHECK(rig[0].position.z == 0.0);
    CHECK(rig[0].look_at.norm() == 0.0);
    for (const Camera& cam : rig) CHECK(cam.position.norm() == doctest::Approx(2.2).epsilon(1e-12));
}

TEST_CASE("rig: twenty-view rig attains the dodecahedral minimum angle") {
    const auto rig = proj::default_view_rig(20, 3.0);
    REQUIRE(rig.size() == 20);
    double min_angle = 10.0;
    for (std::size_t i = 0; i < rig.size(); ++i)
        for (std::size_t j = i + 1; j < rig.size(); ++j) {
            const double c = rig[i].position.dot(rig[j].position) /
                             (rig[i].position.norm() * rig[j].position.norm());
            min_angle = std::min(min_angle, std::acos(std::clamp(c, -1.0, 1.0)));
        }
    // Adjacent dodecahedron vertices subtend arccos(sqrt(5)/3).
    CHECK(min_angle == doctest::Approx(std::acos(std::sqrt(5.0) / 3.0)).epsilon(1e-9));
}

TEST_CASE("rig: unsupported view counts and distances rejected") {
    CHECK_THROWS_AS(proj::default_view_rig(8, 2.2), InvalidArgument);
    CHECK_THROWS_AS(proj::default_view_rig(6, 0.5), InvalidArgument);
}

TEST_CASE("project: a point at the origin lights the principal point at 0.5") {
    PointCloud pc;
    pc.points = {{0, 0, 0}};
    pc.normalized = true;
    const auto rig = proj::default_view_rig(6, 2.2, 32, 32);
    const auto views = proj::project_views(pc, rig, 32, 32);
    for (const auto& img : views.images) {
        CHECK(img[16 * 32 + 16] == doctest::Approx(0.5).epsilon(1e-12));
        double lit_sum = 0.0;
        for (double v : img) lit_sum += v > 0 ? 1.0 : 0.0;
        CHECK(lit_sum == 5.0);  // 1-pixel-radius disk
    }
}

TEST_CASE("project: nearer point wins the z-buffer") {
    PointCloud pc;
    pc.points = {{0, 0, 0}, {0.5, 0, 0}};
    pc.normalized = true;
    const auto rig = proj::default_view_rig(6, 2.2, 32, 32);
    const auto views = proj::project_views(pc, rig, 32, 32);
    // Camera 0 sits on +x: the x=0.5 point is at depth 1.7 of [1.2, 3.2].
    CHECK(views.images[0][16 * 32 + 16] == doctest::Approx(0.75).epsilon(1e-12));
    // Camera 1 on -x sees the origin point in front (depth 2.2 -> 0.5).
    CHECK(views.images[1][16 * 32 + 16] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("project: lit fraction of a unit sphere stays in a sane band") {
    Rng rng(31);
    const PointCloud pc = unit_sphere_cloud(512, rng);
    const auto rig = proj::default_view_rig(6, 2.2, 32, 32);
    const auto views = proj::project_views(pc, rig, 32, 32);
    for (const auto& img : views.images) {
        double lit = 0.0;
        for (double v : img) lit += v > 0 ? 1.0 : 0.0;
        const double fraction = lit / static_cast<double>(img.size());
        CHECK(fraction >= 0.05);
        CHECK(fraction <= 0.9);
    }
}

TEST_CASE("project: rotating the cloud 90 degrees about +z cycles the side views") {
    Rng rng(17);
    const PointCloud pc = unit_sphere_cloud(64, rng);
    PointCloud rotated;
    rotated.normalized = true;
    for (const Vec3& p : pc.points) rotated.points.push_back({-p.y, p.x, p.z});

    const auto rig = proj::default_view_rig(6, 2.2, 32, 32);
    const auto base = proj::project_views(pc, rig, 32, 32);
    const auto turned = proj::project_views(rotated, rig, 32, 32);

    // R^-1 maps +x -> -y view, -x -> +y, +y -> +x, -y -> -x.
    const int cycle[4] = {3, 2, 0, 1};
    for (int v = 0; v < 4; ++v)
        for (std::size_t i = 0; i < base.images[0].size(); ++i)
            CHECK(turned.images[v][i] == base.images[cycle[v]][i]);
}

TEST_CASE("project: doubling focal doubles continuous offsets and rasterization follows") {
    Rng rng(5);
    Camera cam;
    cam.position = {2.2, 0, 0};
    cam.look_at = {0, 0, 0};
    cam.up = {0, 0, 1};
    cam.focal = 12.0;
    cam.principal_x = 16.0;
    cam.principal_y = 16.0;
    Camera cam2 = cam;
    cam2.focal = 24.0;

    for (int t = 0; t < 8; ++t) {
        PointCloud pc;
        pc.points = {{rng.uniform(-0.3, 0.3), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)}};
        pc.normalized = true;
        const ProjectedPoint a = oracle_project(pc.points[0], cam);
        const ProjectedPoint b = oracle_project(pc.points[0], cam2);
        CHECK(b.u - 16.0 == doctest::Approx(2.0 * (a.u - 16.0)).epsilon(1e-12));
        CHECK(b.v - 16.0 == doctest::Approx(2.0 * (a.v - 16.0)).epsilon(1e-12));

        // The rasterizer lights exactly the unit-disk pixels around (u, v).
        const auto views = proj::project_views(pc, {cam}, 32, 32);
        for (long py = 0; py < 32; ++py)
            for (long px = 0; px < 32; ++px) {
                const double du = px - a.u, dv = py - a.v;
                const bool inside = du * du + dv * dv <= 1.0;
                const bool lit = views.images[0][py * 32 + px] > 0.0;
                CHECK(lit == inside);
            }
    }
}

TEST_CASE("project: output invariant to point order") {
    Rng rng(23);
    const PointCloud pc = unit_sphere_cloud(128, rng);
    PointCloud shuffled = pc;
    for (std::size_t i = shuffled.points.size(); i-- > 1;)
        std::swap(shuffled.points[i], shuffled.points[rng.uniform_int(static_cast<int>(i + 1))]);
    const auto rig = proj::default_view_rig(6, 2.2, 32, 32);
    const auto a = proj::project_views(pc, rig, 32, 32);
    const auto b = proj::project_views(shuffled, rig, 32, 32);
    for (std::size_t v = 0; v < a.images.size(); ++v)
        for (std::size_t i = 0; i < a.images[v].size(); ++i) CHECK(a.images[v][i] == b.images[v][i]);
}

TEST_CASE("project: points behind the camera are skipped") {
    PointCloud pc;
    pc.points = {{5.0, 0, 0}};  // behind the +x camera at 2.2
    pc.normalized = true;
    const auto rig = proj::default_view_rig(6, 2.2, 32, 32);
    const auto views = proj::project_views(pc, rig, 32, 32);
    for (double v : views.images[0]) CHECK(v == 0.0);
}

TEST_CASE("pgm: writes a valid P5 header and payload") {
    Rng rng(2);
    std::vector<double> img(16 * 16);
    for (double& v : img) v = rng.uniform();
    const auto dir = std::filesystem::temp_directory_path() / "cmt_pgm_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "view.pgm").string();
    proj::write_pgm(path, img, 16, 16);

    std::ifstream in(path, std::ios::binary);
    std::string magic, dims1, dims2, maxval;
    in >> magic >> dims1 >> dims2 >> maxval;
    CHECK(magic == "P5");
    CHECK(dims1 == "16");
    CHECK(dims2 == "16");
    CHECK(maxval == "255");
    in.get();  // single whitespace after maxval
    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(payload.size() == 256);
}
