// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cmt/errors.hpp"

namespace cmt::diff {

// Dense row-major double array with an explicit shape. All training math in
// this project runs through these; everything is double precision.
struct NumArray {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    NumArray() = default;
    NumArray(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static NumArray zeros(std::vector<std::size_t> s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return NumArray(std::move(s), std::vector<double>(n, 0.0));
    }

    static NumArray scalar(double v) { return NumArray({1}, {v}); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) { return data[(i * shape[1] + j) * shape[2] + k]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return data[(i * shape[1] + j) * shape[2] + k]; }

    bool same_shape(const NumArray& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) {
        for (double& x : data) x = v;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline void require_shape(const NumArray& a, const NumArray& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace cmt::diff
