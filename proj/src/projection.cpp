// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace cmt::proj {

using geom::Vec3;

std::vector<Camera> default_view_rig(int v_count, double distance, std::size_t h, std::size_t w) {
    if (v_count != 6 && v_count != 20)
        throw InvalidArgument("default_view_rig: v_count must be 6 or 20");
    if (!(distance > 1.0)) throw InvalidArgument("default_view_rig: distance must exceed 1");

    // Focal sized so a unit sphere spans ~70% of the image side.
    const double focal = 0.35 * static_cast<double>(w) * distance;
    const double cx = static_cast<double>(w) / 2.0;
    const double cy = static_cast<double>(h) / 2.0;

    std::vector<Vec3> dirs;
    if (v_count == 6) {
        dirs = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    } else {
        // Regular dodecahedron vertices: cube corners plus the three cyclic
        // golden-ratio rectangles, all at radius sqrt(3).
        const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
        const double inv = 1.0 / phi;
        for (double sx : {-1.0, 1.0})
            for (double sy : {-1.0, 1.0})
                for (double sz : {-1.0, 1.0}) dirs.push_back({sx, sy, sz});
        for (double a : {-inv, inv})
            for (double b : {-phi, phi}) {
                dirs.push_back({0, a, b});
                dirs.push_back({a, b, 0});
                dirs.push_back({b, 0, a});
            }
        for (Vec3& d : dirs) d = d.normalized();
    }

    std::vector<Camera> rig;
    rig.reserve(dirs.size());
    for (const Vec3& d : dirs) {
        Camera cam;
        cam.position = d * distance;
        cam.look_at = {0, 0, 0};
        const bool along_z = std::abs(d.x) < 1e-12 && std::abs(d.y) < 1e-12;
        cam.up = along_z ? Vec3{0, 1, 0} : Vec3{0, 0, 1};
        cam.focal = focal;
        cam.principal_x = cx;
        cam.principal_y = cy;
        rig.push_back(cam);
    }
    return rig;
}

ViewImageSet project_views(const geom::PointCloud& pc, const std::vector<Camera>& rig,
                           std::size_t h, std::size_t w) {
    ViewImageSet out;
    out.height = h;
    out.width = w;
    out.rig_id = "rig" + std::to_string(rig.size());
    out.images.reserve(rig.size());

    // Candidate cells for the 1-pixel-radius disk around a fractional
    // center: the 3x3 block always covers it since |lround(u) - u| <= 1/2.
    static const int disk[9][2] = {{0, 0},  {-1, 0}, {1, 0},  {0, -1}, {0, 1},
                                   {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};

    std::vector<double> zbuf;
    for (const Camera& cam : rig) {
        const Vec3 forward = (cam.look_at - cam.position).normalized();
        const Vec3 right = forward.cross(cam.up).normalized();
        const Vec3 up = right.cross(forward);
        const double cam_distance = (cam.position - cam.look_at).norm();
        const double d_min = cam_distance - 1.0;
        const double d_max = cam_distance + 1.0;

        std::vector<double> img(h * w, 0.0);
        zbuf.assign(h * w, std::numeric_limits<double>::infinity());
        for (const Vec3& p : pc.points) {
            const Vec3 rel = p - cam.position;
            const double depth = rel.dot(forward);
            if (depth <= 0.0) continue;  // behind the camera
            const double u = cam.principal_x + cam.focal * rel.dot(right) / depth;
            const double v = cam.principal_y - cam.focal * rel.dot(up) / depth;
            const long cu = std::lround(u);
            const long cv = std::lround(v);
            for (const auto& off : disk) {
                const long px = cu + off[0];
                const long py = cv + off[1];
                if (px < 0 || py < 0 || px >= static_cast<long>(w) || py >= static_cast<long>(h))
                    continue;
                const double du = static_cast<double>(px) - u;
                const double dv = static_cast<double>(py) - v;
                if (du * du + dv * dv > 1.0) continue;
                const std::size_t idx = static_cast<std::size_t>(py) * w + static_cast<std::size_t>(px);
                if (depth < zbuf[idx]) {  // strict: equal depth keeps the earlier point
                    zbuf[idx] = depth;
                    img[idx] = std::clamp(1.0 - (depth - d_min) / (d_max - d_min), 0.0, 1.0);
                }
            }
        }
        out.images.push_back(std::move(img));
    }
    return out;
}

void write_pgm(const std::string& path, const std::vector<double>& image, std::size_t h,
               std::size_t w) {
    if (image.size() != h * w) throw InvalidArgument("write_pgm: image size != h*w");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_pgm: cannot open " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    for (double v : image) {
        const int byte = std::clamp(static_cast<int>(std::lround(v * 255.0)), 0, 255);
        out.put(static_cast<char>(byte));
    }
    if (!out) throw DataError("write_pgm: short write to " + path);
}

}  // namespace cmt::proj
