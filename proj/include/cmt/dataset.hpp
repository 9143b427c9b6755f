// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmt/geometry.hpp"

namespace cmt::pipe {

struct Dataset {
    std::vector<geom::LabeledCloud> samples;
    std::vector<std::string> class_names;
    std::string split;  // "train" or "test"

    std::size_t num_classes() const { return class_names.size(); }
};

// Four parametric surface classes (sphere, cube, cylinder, two-sphere
// dumbbell), each sample randomly rotated, jittered with sigma 0.01 and
// unit-sphere normalized. Deterministic per seed.
Dataset synth_dataset(int n_per_class, int n_points, std::uint64_t seed,
                      const std::string& split = "train");

// On-disk layout: root/classes.txt (one name per line), root/labels.csv
// (lines `relative_path,label_index`), and plain-text point files with one
// `x y z` triple per line. Clouds are normalized on load.
Dataset load_dataset(const std::string& root, const std::string& split = "");
void save_dataset(const Dataset& ds, const std::string& root);

// Train-split invariant: every declared class must be represented.
void validate_train_split(const Dataset& ds);

// Per-class subsample keeping round(fraction * per-class count) samples,
// at least one per class (ConfigError otherwise). Selection is a seeded
// shuffle within each class.
Dataset stratified_subset(const Dataset& ds, double fraction, std::uint64_t seed);

}  // namespace cmt::pipe
