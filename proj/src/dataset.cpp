// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmt/errors.hpp"

namespace cmt::pipe {

namespace {

using geom::Vec3;

struct Rotation {
    double m[3][3];
    Vec3 apply(const Vec3& p) const {
        return {m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z,
                m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z,
                m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z};
    }
};

// Uniform rotation from a random unit quaternion.
Rotation random_rotation(Rng& rng) {
    double q[4];
    double norm = 0.0;
    for (double& v : q) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : q) v /= norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Rotation r;
    r.m[0][0] = 1 - 2 * (y * y + z * z);
    r.m[0][1] = 2 * (x * y - w * z);
    r.m[0][2] = 2 * (x * z + w * y);
    r.m[1][0] = 2 * (x * y + w * z);
    r.m[1][1] = 1 - 2 * (x * x + z * z);
    r.m[1][2] = 2 * (y * z - w * x);
    r.m[2][0] = 2 * (x * z - w * y);
    r.m[2][1] = 2 * (y * z + w * x);
    r.m[2][2] = 1 - 2 * (x * x + y * y);
    return r;
}

Vec3 sample_sphere(Rng& rng) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = v.norm();
    if (n < 1e-12) return {1, 0, 0};
    return v * (1.0 / n);
}

Vec3 sample_cube(Rng& rng) {
    const int face = rng.uniform_int(6);
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    switch (face) {
        case 0: return {1, a, b};
        case 1: return {-1, a, b};
        case 2: return {a, 1, b};
        case 3: return {a, -1, b};
        case 4: return {a, b, 1};
        default: return {a, b, -1};
    }
}

Vec3 sample_cylinder(Rng& rng) {
    // Radius 1, height 2; lateral area 4*pi vs cap area 2*pi.
    const double u = rng.uniform();
    const double theta = rng.uniform(0.0, 6.283185307179586476925286766559);
    if (u < 2.0 / 3.0) {
        const double z = rng.uniform(-1.0, 1.0);
        return {std::cos(theta), std::sin(theta), z};
    }
    const double zcap = rng.uniform_int(2) == 0 ? 1.0 : -1.0;
    const double r = std::sqrt(rng.uniform());
    return {r * std::cos(theta), r * std::sin(theta), zcap};
}

Vec3 sample_dumbbell(Rng& rng) {
    const double cx = rng.uniform_int(2) == 0 ? 0.75 : -0.75;
    return sample_sphere(rng) * 0.5 + Vec3{cx, 0.0, 0.0};
}

}  // namespace

Dataset synth_dataset(int n_per_class, int n_points, std::uint64_t seed, const std::string& split) {
    if (n_per_class < 1) throw InvalidArgument("synth_dataset: n_per_class must be at least 1");
    if (n_points < 64) throw InvalidArgument("synth_dataset: n_points must be at least 64");

    Dataset ds;
    ds.class_names = {"sphere", "cube", "cylinder", "dumbbell"};
    ds.split = split;
    Rng rng(seed);
    for (int cls = 0; cls < 4; ++cls) {
        for (int s = 0; s < n_per_class; ++s) {
            const Rotation rot = random_rotation(rng);
            geom::PointCloud pc;
            pc.points.reserve(n_points);
            while (static_cast<int>(pc.points.size()) < n_points) {
                Vec3 p;
                switch (cls) {
                    case 0:
                        // Antipodal pairs keep the sample centroid at the
                        // origin, so normalization barely moves the radii.
                        p = sample_sphere(rng);
                        pc.points.push_back(p);
                        if (static_cast<int>(pc.points.size()) < n_points)
                            pc.points.push_back(p * -1.0);
                        continue;
                    case 1: p = sample_cube(rng); break;
                    case 2: p = sample_cylinder(rng); break;
                    default: p = sample_dumbbell(rng); break;
                }
                pc.points.push_back(p);
            }
            for (Vec3& p : pc.points) {
                p = rot.apply(p);
                p = p + Vec3{rng.normal() * 0.01, rng.normal() * 0.01, rng.normal() * 0.01};
            }
            ds.samples.push_back({geom::normalize_unit_sphere(pc), cls});
        }
    }
    return ds;
}

Dataset load_dataset(const std::string& root, const std::string& split) {
    namespace fs = std::filesystem;
    const fs::path base(root);

    Dataset ds;
    ds.split = split.empty() ? base.filename().string() : split;

    {
        std::ifstream in(base / "classes.txt");
        if (!in) throw DataError("load_dataset: missing " + (base / "classes.txt").string());
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
            if (!line.empty()) ds.class_names.push_back(line);
        }
        if (ds.class_names.empty())
            throw DataError("load_dataset: classes.txt declares no classes");
    }

    std::ifstream labels(base / "labels.csv");
    if (!labels) throw DataError("load_dataset: missing " + (base / "labels.csv").string());
    std::string line;
    int label_line = 0;
    while (std::getline(labels, line)) {
        ++label_line;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos)
            throw DataError("load_dataset: labels.csv:" + std::to_string(label_line) +
                            ": expected 'relative_path,label'");
        const std::string rel = line.substr(0, comma);
        int label = 0;
        try {
            std::size_t pos = 0;
            label = std::stoi(line.substr(comma + 1), &pos);
            if (pos != line.size() - comma - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw DataError("load_dataset: labels.csv:" + std::to_string(label_line) +
                            ": bad label '" + line.substr(comma + 1) + "'");
        }
        if (label < 0 || static_cast<std::size_t>(label) >= ds.num_classes())
            throw DataError("load_dataset: labels.csv:" + std::to_string(label_line) + ": label " +
                            std::to_string(label) + " outside [0," +
                            std::to_string(ds.num_classes()) + ")");

        const fs::path file = base / rel;
        std::ifstream pts(file);
        if (!pts) throw DataError("load_dataset: missing point file " + file.string());
        geom::PointCloud pc;
        std::string pline;
        int pline_no = 0;
        while (std::getline(pts, pline)) {
            ++pline_no;
            std::istringstream ss(pline);
            double x, y, z;
            if (!(ss >> x)) {
                std::string probe;
                std::istringstream blank(pline);
                if (!(blank >> probe)) continue;  // whitespace-only line
                throw DataError("load_dataset: " + file.string() + ":" + std::to_string(pline_no) +
                                ": expected 'x y z'");
            }
            std::string extra;
            if (!(ss >> y >> z) || (ss >> extra))
                throw DataError("load_dataset: " + file.string() + ":" + std::to_string(pline_no) +
                                ": expected 'x y z'");
            pc.points.push_back({x, y, z});
        }
        if (pc.points.empty())
            throw DataError("load_dataset: " + file.string() + ": no points");
        try {
            ds.samples.push_back({geom::normalize_unit_sphere(pc), label});
        } catch (const InvalidArgument& e) {
            throw DataError("load_dataset: " + file.string() + ": " + e.what());
        }
    }
    if (ds.samples.empty()) throw DataError("load_dataset: no samples listed in labels.csv");
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& root) {
    namespace fs = std::filesystem;
    const fs::path base(root);
    fs::create_directories(base / "clouds");

    {
        std::ofstream out(base / "classes.txt", std::ios::trunc);
        if (!out) throw DataError("save_dataset: cannot write classes.txt under " + root);
        for (const std::string& name : ds.class_names) out << name << "\n";
    }

    std::ofstream labels(base / "labels.csv", std::ios::trunc);
    if (!labels) throw DataError("save_dataset: cannot write labels.csv under " + root);
    std::vector<int> per_class_count(ds.num_classes(), 0);
    for (const geom::LabeledCloud& lc : ds.samples) {
        const std::string name = ds.class_names[lc.label] + "_" +
                                 std::to_string(per_class_count[lc.label]++) + ".xyz";
        const std::string rel = "clouds/" + name;
        labels << rel << "," << lc.label << "\n";
        std::ofstream pts(base / rel, std::ios::trunc);
        if (!pts) throw DataError("save_dataset: cannot write " + rel);
        char buf[128];
        for (const geom::Vec3& p : lc.cloud.points) {
            std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p.x, p.y, p.z);
            pts << buf;
        }
    }
}

void validate_train_split(const Dataset& ds) {
    std::vector<int> count(ds.num_classes(), 0);
    for (const geom::LabeledCloud& lc : ds.samples) ++count[lc.label];
    for (std::size_t c = 0; c < count.size(); ++c)
        if (count[c] == 0)
            throw DataError("train split has no samples of class '" + ds.class_names[c] + "'");
}

Dataset stratified_subset(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("stratified_subset: fraction must lie in (0, 1]");
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        by_class[ds.samples[i].label].push_back(i);

    Rng rng(mix_seed(seed, 0x5u));
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        const std::size_t take =
            static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        if (take < 1)
            throw ConfigError("stratified_subset: fraction " + std::to_string(fraction) +
                              " leaves class '" + ds.class_names[c] + "' empty");
        for (std::size_t i = idx.size(); i-- > 1;)
            std::swap(idx[i], idx[rng.uniform_int(static_cast<int>(i + 1))]);
        for (std::size_t i = 0; i < take; ++i) keep.push_back(idx[i]);
    }
    std::sort(keep.begin(), keep.end());

    Dataset out;
    out.class_names = ds.class_names;
    out.split = ds.split;
    for (std::size_t i : keep) out.samples.push_back(ds.samples[i]);
    return out;
}

}  // namespace cmt::pipe
