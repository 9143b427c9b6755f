// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0
//
// The four concrete networks: point encoder (shared per-point MLP + set max
// pool, optional FPS+kNN grouped stage), image encoder (tiny shared CNN per
// view + view-wise max aggregation), the classifier MLP shared in design by
// both modalities, and the cross-modal point generator. Forward calls can
// record a trace; the matching backward consumes it and accumulates
// parameter gradients.

#pragma once

#include <cstddef>
#include <vector>

#include "cmt/diffcore.hpp"
#include "cmt/geometry.hpp"
#include "cmt/projection.hpp"

namespace cmt::nets {

struct NetworkConfig {
    std::vector<std::size_t> point_mlp_widths = {64, 128, 128};
    bool grouped_stage = false;
    std::vector<std::size_t> cnn_channels = {8, 16, 32};
    std::vector<std::size_t> classifier_widths = {128, 64, 4};
    std::vector<std::size_t> cmpg_widths = {128, 256, 512, 384};
    std::size_t n_gen = 128;
    std::size_t feature_dim = 128;
    std::size_t num_classes = 4;
    std::size_t image_h = 32;
    std::size_t image_w = 32;

    static NetworkConfig make(std::size_t num_classes, std::size_t feature_dim = 128,
                              std::size_t n_gen = 128);
    void validate() const;
};

// Canonical checkpoint name prefixes.
inline constexpr const char* kEncPtsPrefix = "enc_pts.";
inline constexpr const char* kEncImgPrefix = "enc_img.";
inline constexpr const char* kClsPtsPrefix = "cls_pts.";
inline constexpr const char* kClsImgPrefix = "cls_img.";
inline constexpr const char* kCmpgPrefix = "cmpg.";

// ---------------------------------------------------------------------------
// Point encoder

struct PointEncoderTrace {
    std::vector<diff::NumArray> inputs;   // input to each linear layer
    std::vector<diff::NumArray> preacts;  // pre-relu activations
    diff::SetMaxPool local_pool;          // grouped stage only
    diff::SetMaxPool global_pool;
    std::size_t batch = 0;
    bool grouped = false;
};

void init_point_encoder(diff::ParamStore& ps, const NetworkConfig& cfg, Rng& rng);
diff::NumArray point_encoder_forward(const std::vector<const geom::PointCloud*>& clouds,
                                     const diff::ParamStore& ps, const NetworkConfig& cfg,
                                     PointEncoderTrace* trace = nullptr);
void point_encoder_backward(const PointEncoderTrace& trace, const diff::NumArray& d_feature,
                            diff::ParamStore& ps);

// ---------------------------------------------------------------------------
// Image encoder

struct ConvBlockTrace {
    diff::NumArray col;       // im2col matrix
    diff::NumArray preact;    // conv output before relu
    std::vector<int> pool_src;  // winning source row per (pooled row, channel)
    std::size_t in_h = 0, in_w = 0, in_c = 0, out_c = 0, n_imgs = 0;
};

struct ImageEncoderTrace {
    std::vector<ConvBlockTrace> blocks;
    diff::NumArray fc_in;
    diff::SetMaxPool view_pool;
    std::size_t batch = 0, views = 0;
};

void init_image_encoder(diff::ParamStore& ps, const NetworkConfig& cfg, Rng& rng);
diff::NumArray image_encoder_forward(const std::vector<const proj::ViewImageSet*>& views,
                                     const diff::ParamStore& ps, const NetworkConfig& cfg,
                                     ImageEncoderTrace* trace = nullptr);
void image_encoder_backward(const ImageEncoderTrace& trace, const diff::NumArray& d_feature,
                            diff::ParamStore& ps);

// ---------------------------------------------------------------------------
// Classifier (one design serving both modalities; distinct stores)

struct MlpTrace {
    std::vector<diff::NumArray> inputs;
    std::vector<diff::NumArray> preacts;
};

void init_classifier(diff::ParamStore& ps, const NetworkConfig& cfg, Rng& rng);
diff::NumArray classifier_forward(const diff::NumArray& features, const diff::ParamStore& ps,
                                  const NetworkConfig& cfg, MlpTrace* trace = nullptr);
// Returns the gradient w.r.t. the input features; parameter gradients are
// accumulated unless the store is frozen and accumulate is false.
diff::NumArray classifier_backward(const MlpTrace& trace, const diff::NumArray& dlogits,
                                   diff::ParamStore& ps, bool accumulate_param_grads = true);

// ---------------------------------------------------------------------------
// Cross-modal point generator: three linear layers, feature -> N_gen x 3

void init_cmpg(diff::ParamStore& ps, const NetworkConfig& cfg, Rng& rng);
diff::NumArray cmpg_forward(const diff::NumArray& features, const diff::ParamStore& ps,
                            const NetworkConfig& cfg, MlpTrace* trace = nullptr);
diff::NumArray cmpg_backward(const MlpTrace& trace, const diff::NumArray& d_points,
                             diff::ParamStore& ps, bool accumulate_param_grads);

// One generated sample of a [B x N_gen x 3] output as a (non-normalized) cloud.
geom::PointCloud cmpg_output_cloud(const diff::NumArray& points, std::size_t sample);

}  // namespace cmt::nets
