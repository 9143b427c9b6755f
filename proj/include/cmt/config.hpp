// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmt/distill.hpp"
#include "cmt/emd.hpp"
#include "cmt/networks.hpp"

namespace cmt::pipe {

// Run configuration. On disk this is flat UTF-8 `key = value` lines with `#`
// comments; unknown keys are an error so typos in experiment scripts fail
// loudly. parse -> serialize -> parse is a fixed point.
struct RunConfig {
    std::uint64_t seed = 1;
    int stage1_epochs = 50;
    int stage2_epochs = 50;
    int stage3_epochs = 100;
    int batch_size = 16;
    double sgd_lr = 0.01;
    double sgd_momentum = 0.9;
    double adam_lr = 1e-3;
    double alpha = 30.0;
    double beta = 0.3;
    double kl_temperature = 1.0;

    std::size_t feature_dim = 128;
    std::size_t n_gen = 128;
    std::vector<std::size_t> point_mlp_widths = {64, 128, 128};
    std::vector<std::size_t> cnn_channels = {8, 16, 32};
    std::size_t classifier_hidden = 64;
    std::vector<std::size_t> cmpg_hidden = {256, 512};
    bool grouped_stage = false;

    int views = 6;
    double cam_distance = 2.2;
    std::size_t image_size = 32;

    // Eq. 4 is a literal sum; training defaults to the mean-normalized
    // variant so the alpha = 30 weighting is independent of n_gen.
    emd::Reduction emd_reduction = emd::Reduction::Mean;
    emd::Solver emd_solver = emd::Solver::Auto;

    std::string train_dir;  // empty: synthesize
    std::string test_dir;
    std::string out_dir = "out";
    int synth_train_per_class = 200;
    int synth_test_per_class = 100;
    int synth_points = 256;

    std::vector<std::uint64_t> harness_seeds = {1, 2, 3, 4};
    std::vector<double> fractions = {0.1, 0.25, 0.5, 1.0};
    std::vector<std::string> kd_methods = {"baseline", "hinton", "normalize1_mse",
                                           "normalize2_mse", "pointcmt"};

    distill::LossWeights weights() const { return {alpha, beta}; }
    nets::NetworkConfig network_config(std::size_t num_classes) const;
    void validate() const;  // ConfigError on bad values or unresolvable paths
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// FNV-1a over the canonical serialization; stamped into harness CSVs.
std::string config_hash(const RunConfig& cfg);

}  // namespace cmt::pipe
