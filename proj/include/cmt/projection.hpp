// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cmt/geometry.hpp"

namespace cmt::proj {

struct Camera {
    geom::Vec3 position;
    geom::Vec3 look_at;
    geom::Vec3 up;        // unit, not parallel to the view direction
    double focal = 1.0;   // pixel units
    double principal_x = 0.0;
    double principal_y = 0.0;
};

// V single-channel depth images, values in [0,1], background exactly 0,
// brighter = nearer.
struct ViewImageSet {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::vector<double>> images;  // row-major h*w per view
    std::string rig_id;
};

// Cameras looking at the origin from the given distance. v_count 6 places
// them on the +-x/+-y/+-z axes (global +z up, except the +-z cameras which
// use +y); v_count 20 uses the vertices of a regular dodecahedron.
// Focal and principal point are filled for the given image size.
std::vector<Camera> default_view_rig(int v_count, double distance, std::size_t h = 32,
                                     std::size_t w = 32);

// Perspective projection with z-buffering. Each point splats to a 1-pixel
// radius disk; the nearest point wins a pixel (exact-depth ties keep the
// lower point index). Pixel value = 1 - (depth - (d-1)) / 2 clamped to
// [0,1], with d the camera's distance from its look-at target.
ViewImageSet project_views(const geom::PointCloud& pc, const std::vector<Camera>& rig,
                           std::size_t h, std::size_t w);

// Binary PGM (P5, maxval 255) dump of one view.
void write_pgm(const std::string& path, const std::vector<double>& image, std::size_t h,
               std::size_t w);

}  // namespace cmt::proj
