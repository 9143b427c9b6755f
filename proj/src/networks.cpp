// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/networks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cmt::nets {

using diff::NumArray;
using diff::ParamStore;

namespace {

std::string lw(std::size_t i) { return "l" + std::to_string(i) + ".w"; }
std::string lb(std::size_t i) { return "l" + std::to_string(i) + ".b"; }

void init_mlp(ParamStore& ps, const std::vector<std::size_t>& widths, std::size_t in_dim, Rng& rng) {
    std::size_t prev = in_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        ps.add(lw(i), diff::uniform_fanin_init({prev, widths[i]}, prev, rng));
        ps.add(lb(i), NumArray::zeros({widths[i]}));
        prev = widths[i];
    }
}

// Shared MLP walk: linear layers with relu between them; no activation on
// the last layer unless relu_last.
NumArray mlp_forward(const NumArray& x, const ParamStore& ps, std::size_t layers, bool relu_last,
                     MlpTrace* trace) {
    NumArray h = x;
    for (std::size_t i = 0; i < layers; ++i) {
        if (trace) trace->inputs.push_back(h);
        NumArray z = diff::linear_forward(h, ps.value(lw(i)), ps.value(lb(i)));
        if (trace) trace->preacts.push_back(z);
        h = (i + 1 < layers || relu_last) ? diff::relu_forward(z) : std::move(z);
    }
    return h;
}

NumArray mlp_backward(const MlpTrace& trace, const NumArray& d_out, ParamStore& ps, bool relu_last,
                      bool accumulate) {
    const std::size_t layers = trace.inputs.size();
    NumArray d = d_out;
    // Throwaway accumulators when the caller wants input gradients only.
    for (std::size_t ii = layers; ii-- > 0;) {
        if (ii + 1 < layers || relu_last) d = diff::relu_backward(trace.preacts[ii], d);
        if (accumulate) {
            d = diff::linear_backward(trace.inputs[ii], ps.value(lw(ii)), d, ps.grad(lw(ii)),
                                      ps.grad(lb(ii)));
        } else {
            NumArray dw = NumArray::zeros(ps.value(lw(ii)).shape);
            NumArray db = NumArray::zeros(ps.value(lb(ii)).shape);
            d = diff::linear_backward(trace.inputs[ii], ps.value(lw(ii)), d, dw, db);
        }
    }
    return d;
}

}  // namespace

NetworkConfig NetworkConfig::make(std::size_t num_classes, std::size_t feature_dim,
                                  std::size_t n_gen) {
    NetworkConfig cfg;
    cfg.feature_dim = feature_dim;
    cfg.num_classes = num_classes;
    cfg.n_gen = n_gen;
    cfg.point_mlp_widths = {64, 128, feature_dim};
    cfg.classifier_widths = {feature_dim, 64, num_classes};
    cfg.cmpg_widths = {feature_dim, 256, 512, 3 * n_gen};
    cfg.validate();
    return cfg;
}

void NetworkConfig::validate() const {
    if (feature_dim == 0 || num_classes == 0 || n_gen == 0)
        throw InvalidArgument("NetworkConfig: zero-sized dimension");
    if (point_mlp_widths.empty() || point_mlp_widths.back() != feature_dim)
        throw InvalidArgument("NetworkConfig: point_mlp_widths must end at feature_dim");
    if (cnn_channels.empty()) throw InvalidArgument("NetworkConfig: cnn_channels empty");
    if (classifier_widths.size() < 2 || classifier_widths.front() != feature_dim ||
        classifier_widths.back() != num_classes)
        throw InvalidArgument("NetworkConfig: classifier_widths must run feature_dim..num_classes");
    if (cmpg_widths.size() != 4)
        throw InvalidArgument("NetworkConfig: cmpg must have exactly three learnable layers");
    if (cmpg_widths.front() != feature_dim || cmpg_widths.back() != 3 * n_gen)
        throw InvalidArgument("NetworkConfig: cmpg_widths must run feature_dim..3*n_gen");
    if (image_h < 8 || image_w < 8) throw InvalidArgument("NetworkConfig: image size below 8x8");
    // Spot-check the chains through the shared layer validator.
    for (std::size_t i = 1; i < classifier_widths.size(); ++i)
        diff::LayerSpec{diff::LayerSpec::Kind::Linear, {classifier_widths[i - 1], classifier_widths[i]}}
            .validate();
    for (std::size_t i = 1; i < cmpg_widths.size(); ++i)
        diff::LayerSpec{diff::LayerSpec::Kind::Linear, {cmpg_widths[i - 1], cmpg_widths[i]}}.validate();
}

// ---------------------------------------------------------------------------
// Point encoder

void init_point_encoder(ParamStore& ps, const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    init_mlp(ps, cfg.point_mlp_widths, 3, rng);
}

diff::NumArray point_encoder_forward(const std::vector<const geom::PointCloud*>& clouds,
                                     const ParamStore& ps, const NetworkConfig& cfg,
                                     PointEncoderTrace* trace) {
    const std::size_t B = clouds.size();
    if (B == 0) throw InvalidArgument("point_encoder_forward: empty batch");
    const std::size_t N = clouds[0]->size();
    for (const auto* c : clouds)
        if (c->size() != N)
            throw InvalidArgument("point_encoder_forward: clouds in a batch must share N");

    PointEncoderTrace local;
    PointEncoderTrace& tr = trace ? *trace : local;
    tr = PointEncoderTrace{};
    tr.batch = B;
    tr.grouped = cfg.grouped_stage;

    const std::size_t layers = cfg.point_mlp_widths.size();
    NumArray h;
    std::size_t set_size = N;  // elements pooled by the global pool, per sample

    if (!cfg.grouped_stage) {
        h = NumArray::zeros({B * N, 3});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t n = 0; n < N; ++n) {
                const geom::Vec3& p = clouds[b]->points[n];
                h.at(b * N + n, 0) = p.x;
                h.at(b * N + n, 1) = p.y;
                h.at(b * N + n, 2) = p.z;
            }
        for (std::size_t i = 0; i < layers; ++i) {
            tr.inputs.push_back(h);
            NumArray z = diff::linear_forward(h, ps.value(lw(i)), ps.value(lb(i)));
            tr.preacts.push_back(z);
            h = diff::relu_forward(z);
        }
    } else {
        // One local stage: FPS centers, kNN neighborhoods, layer-0 MLP on
        // relative coordinates, max over each neighborhood. The FPS start is
        // the lexicographically smallest point so the stage stays
        // permutation-stable.
        const std::size_t n_centers = std::max<std::size_t>(1, N / 4);
        const int k = static_cast<int>(std::min<std::size_t>(16, N));
        NumArray rel = NumArray::zeros({B * n_centers * k, 3});
        for (std::size_t b = 0; b < B; ++b) {
            const geom::PointCloud& pc = *clouds[b];
            const geom::IndexSet centers = geom::farthest_point_sample(
                pc, static_cast<int>(n_centers), geom::lexicographic_min_index(pc));
            const auto nbrs = geom::knn(pc, centers, k);
            for (std::size_t ci = 0; ci < n_centers; ++ci) {
                const geom::Vec3& center = pc.points[centers[ci]];
                for (int ni = 0; ni < k; ++ni) {
                    const geom::Vec3 d = pc.points[nbrs[ci][ni]] - center;
                    const std::size_t row = (b * n_centers + ci) * k + ni;
                    rel.at(row, 0) = d.x;
                    rel.at(row, 1) = d.y;
                    rel.at(row, 2) = d.z;
                }
            }
        }
        tr.inputs.push_back(rel);
        NumArray z0 = diff::linear_forward(rel, ps.value(lw(0)), ps.value(lb(0)));
        tr.preacts.push_back(z0);
        NumArray a0 = diff::relu_forward(z0);
        a0.shape = {B * n_centers, static_cast<std::size_t>(k), cfg.point_mlp_widths[0]};
        tr.local_pool = diff::set_max_pool_forward(a0);
        h = tr.local_pool.pooled;  // [B*n_centers x w0]
        for (std::size_t i = 1; i < layers; ++i) {
            tr.inputs.push_back(h);
            NumArray z = diff::linear_forward(h, ps.value(lw(i)), ps.value(lb(i)));
            tr.preacts.push_back(z);
            h = diff::relu_forward(z);
        }
        set_size = n_centers;
    }

    h.shape = {B, set_size, cfg.feature_dim};
    tr.global_pool = diff::set_max_pool_forward(h);
    return tr.global_pool.pooled;
}

void point_encoder_backward(const PointEncoderTrace& trace, const NumArray& d_feature,
                            ParamStore& ps) {
    NumArray d = diff::set_max_pool_backward(trace.global_pool, d_feature);
    const std::size_t rows = d.dim(0) * d.dim(1);
    d.shape = {rows, d.dim(2)};

    const std::size_t layers = trace.preacts.size();
    const std::size_t stop = trace.grouped ? 1 : 0;
    for (std::size_t ii = layers; ii-- > stop;) {
        d = diff::relu_backward(trace.preacts[ii], d);
        d = diff::linear_backward(trace.inputs[ii], ps.value(lw(ii)), d, ps.grad(lw(ii)),
                                  ps.grad(lb(ii)));
    }
    if (trace.grouped) {
        // Through the local pool and layer 0; coordinates take no gradient.
        NumArray da0 = diff::set_max_pool_backward(trace.local_pool, d);
        da0.shape = {da0.dim(0) * da0.dim(1), da0.dim(2)};
        NumArray dz0 = diff::relu_backward(trace.preacts[0], da0);
        diff::linear_backward(trace.inputs[0], ps.value(lw(0)), dz0, ps.grad(lw(0)), ps.grad(lb(0)));
    }
}

// ---------------------------------------------------------------------------
// Image encoder

namespace {

std::string cw(std::size_t i) { return "conv" + std::to_string(i) + ".w"; }
std::string cb(std::size_t i) { return "conv" + std::to_string(i) + ".b"; }

// im2col for a 3x3 kernel with pad 1 over NHWC data.
NumArray im2col3x3(const NumArray& x, std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
    NumArray col = NumArray::zeros({n * h * w, 9 * c});
    for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                double* dst = col.data.data() + ((img * h + y) * w + xx) * 9 * c;
                std::size_t k = 0;
                for (int ky = -1; ky <= 1; ++ky) {
                    for (int kx = -1; kx <= 1; ++kx, ++k) {
                        const long sy = static_cast<long>(y) + ky;
                        const long sx = static_cast<long>(xx) + kx;
                        if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w))
                            continue;  // zero padding
                        const double* src =
                            x.data.data() + ((img * h + static_cast<std::size_t>(sy)) * w +
                                             static_cast<std::size_t>(sx)) * c;
                        std::copy(src, src + c, dst + k * c);
                    }
                }
            }
        }
    }
    return col;
}

void col2im3x3_add(const NumArray& dcol, NumArray& dx, std::size_t n, std::size_t h, std::size_t w,
                   std::size_t c) {
    for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                const double* src = dcol.data.data() + ((img * h + y) * w + xx) * 9 * c;
                std::size_t k = 0;
                for (int ky = -1; ky <= 1; ++ky) {
                    for (int kx = -1; kx <= 1; ++kx, ++k) {
                        const long sy = static_cast<long>(y) + ky;
                        const long sx = static_cast<long>(xx) + kx;
                        if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w))
                            continue;
                        double* dst = dx.data.data() + ((img * h + static_cast<std::size_t>(sy)) * w +
                                                        static_cast<std::size_t>(sx)) * c;
                        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[k * c + ch];
                    }
                }
            }
        }
    }
}

// 2x2 max pool, stride 2, floor semantics; pool_src records the winning
// source row per (pooled position, channel).
NumArray maxpool2_forward(const NumArray& a, std::size_t n, std::size_t h, std::size_t w,
                          std::size_t c, std::vector<int>& pool_src) {
    const std::size_t ho = h / 2, wo = w / 2;
    NumArray out = NumArray::zeros({n * ho * wo, c});
    pool_src.assign(n * ho * wo * c, 0);
    for (std::size_t img = 0; img < n; ++img) {
        for (std::size_t y = 0; y < ho; ++y) {
            for (std::size_t xx = 0; xx < wo; ++xx) {
                const std::size_t orow = (img * ho + y) * wo + xx;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    double best = -std::numeric_limits<double>::infinity();
                    int best_row = 0;
                    for (std::size_t dy = 0; dy < 2; ++dy) {
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            const std::size_t srow = (img * h + 2 * y + dy) * w + 2 * xx + dx;
                            const double v = a.data[srow * c + ch];
                            if (v > best) {
                                best = v;
                                best_row = static_cast<int>(srow);
                            }
                        }
                    }
                    out.data[orow * c + ch] = best;
                    pool_src[orow * c + ch] = best_row;
                }
            }
        }
    }
    return out;
}

void maxpool2_backward(const NumArray& d_out, const std::vector<int>& pool_src, NumArray& da,
                       std::size_t c) {
    for (std::size_t orow = 0; orow < d_out.dim(0); ++orow)
        for (std::size_t ch = 0; ch < c; ++ch)
            da.data[static_cast<std::size_t>(pool_src[orow * c + ch]) * c + ch] +=
                d_out.data[orow * c + ch];
}

}  // namespace

void init_image_encoder(ParamStore& ps, const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    std::size_t in_c = 1, h = cfg.image_h, w = cfg.image_w;
    for (std::size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
        const std::size_t out_c = cfg.cnn_channels[i];
        ps.add(cw(i), diff::uniform_fanin_init({9 * in_c, out_c}, 9 * in_c, rng));
        ps.add(cb(i), NumArray::zeros({out_c}));
        in_c = out_c;
        h /= 2;
        w /= 2;
        if (h == 0 || w == 0)
            throw InvalidArgument("init_image_encoder: image too small for the conv stack");
    }
    const std::size_t flat = h * w * in_c;
    ps.add("fc.w", diff::uniform_fanin_init({flat, cfg.feature_dim}, flat, rng));
    ps.add("fc.b", NumArray::zeros({cfg.feature_dim}));
}

diff::NumArray image_encoder_forward(const std::vector<const proj::ViewImageSet*>& views,
                                     const ParamStore& ps, const NetworkConfig& cfg,
                                     ImageEncoderTrace* trace) {
    const std::size_t B = views.size();
    if (B == 0) throw InvalidArgument("image_encoder_forward: empty batch");
    const std::size_t V = views[0]->images.size();
    const std::size_t H = views[0]->height, W = views[0]->width;
    if (H < 8 || W < 8) throw InvalidArgument("image_encoder_forward: views below 8x8 minimum");
    for (const auto* vs : views)
        if (vs->images.size() != V || vs->height != H || vs->width != W)
            throw InvalidArgument("image_encoder_forward: all views must share V and size");

    ImageEncoderTrace local;
    ImageEncoderTrace& tr = trace ? *trace : local;
    tr = ImageEncoderTrace{};
    tr.batch = B;
    tr.views = V;

    const std::size_t n = B * V;
    NumArray x = NumArray::zeros({n * H * W, 1});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t v = 0; v < V; ++v)
            std::copy(views[b]->images[v].begin(), views[b]->images[v].end(),
                      x.data.begin() + (b * V + v) * H * W);

    std::size_t h = H, w = W, in_c = 1;
    for (std::size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
        ConvBlockTrace block;
        block.n_imgs = n;
        block.in_h = h;
        block.in_w = w;
        block.in_c = in_c;
        block.out_c = cfg.cnn_channels[i];
        block.col = im2col3x3(x, n, h, w, in_c);
        block.preact = diff::linear_forward(block.col, ps.value(cw(i)), ps.value(cb(i)));
        NumArray a = diff::relu_forward(block.preact);
        x = maxpool2_forward(a, n, h, w, block.out_c, block.pool_src);
        h /= 2;
        w /= 2;
        in_c = block.out_c;
        tr.blocks.push_back(std::move(block));
    }

    tr.fc_in = std::move(x);
    tr.fc_in.shape = {n, h * w * in_c};
    NumArray per_view = diff::linear_forward(tr.fc_in, ps.value("fc.w"), ps.value("fc.b"));
    per_view.shape = {B, V, cfg.feature_dim};
    tr.view_pool = diff::set_max_pool_forward(per_view);
    return tr.view_pool.pooled;
}

void image_encoder_backward(const ImageEncoderTrace& trace, const NumArray& d_feature,
                            ParamStore& ps) {
    NumArray d = diff::set_max_pool_backward(trace.view_pool, d_feature);
    d.shape = {trace.batch * trace.views, d.dim(2)};
    d = diff::linear_backward(trace.fc_in, ps.value("fc.w"), d, ps.grad("fc.w"), ps.grad("fc.b"));

    for (std::size_t ii = trace.blocks.size(); ii-- > 0;) {
        const ConvBlockTrace& block = trace.blocks[ii];
        // d arrives as the pooled-output gradient [n*ho*wo x out_c].
        NumArray da = NumArray::zeros({block.n_imgs * block.in_h * block.in_w, block.out_c});
        d.shape = {d.numel() / block.out_c, block.out_c};
        maxpool2_backward(d, block.pool_src, da, block.out_c);
        NumArray dz = diff::relu_backward(block.preact, da);
        NumArray dcol = diff::linear_backward(block.col, ps.value(cw(ii)), dz, ps.grad(cw(ii)),
                                              ps.grad(cb(ii)));
        if (ii == 0) break;  // image pixels take no gradient
        NumArray dx = NumArray::zeros({block.n_imgs * block.in_h * block.in_w, block.in_c});
        col2im3x3_add(dcol, dx, block.n_imgs, block.in_h, block.in_w, block.in_c);
        d = std::move(dx);
    }
}

// ---------------------------------------------------------------------------
// Classifier

void init_classifier(ParamStore& ps, const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<std::size_t> widths(cfg.classifier_widths.begin() + 1, cfg.classifier_widths.end());
    init_mlp(ps, widths, cfg.classifier_widths.front(), rng);
}

diff::NumArray classifier_forward(const NumArray& features, const ParamStore& ps,
                                  const NetworkConfig& cfg, MlpTrace* trace) {
    if (features.rank() != 2 || features.dim(1) != cfg.feature_dim)
        throw ShapeError("classifier_forward: features must be [Bx" +
                         std::to_string(cfg.feature_dim) + "], got " + features.shape_str());
    MlpTrace local;
    MlpTrace& tr = trace ? *trace : local;
    tr = MlpTrace{};
    return mlp_forward(features, ps, cfg.classifier_widths.size() - 1, false, &tr);
}

diff::NumArray classifier_backward(const MlpTrace& trace, const NumArray& dlogits, ParamStore& ps,
                                   bool accumulate_param_grads) {
    if (accumulate_param_grads && ps.frozen())
        throw ContractViolation("classifier_backward: store is frozen");
    return mlp_backward(trace, dlogits, ps, false, accumulate_param_grads);
}

// ---------------------------------------------------------------------------
// CMPG

void init_cmpg(ParamStore& ps, const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<std::size_t> widths(cfg.cmpg_widths.begin() + 1, cfg.cmpg_widths.end());
    init_mlp(ps, widths, cfg.cmpg_widths.front(), rng);
}

diff::NumArray cmpg_forward(const NumArray& features, const ParamStore& ps,
                            const NetworkConfig& cfg, MlpTrace* trace) {
    if (features.rank() != 2 || features.dim(1) != cfg.feature_dim)
        throw ShapeError("cmpg_forward: features must be [Bx" + std::to_string(cfg.feature_dim) +
                         "], got " + features.shape_str());
    MlpTrace local;
    MlpTrace& tr = trace ? *trace : local;
    tr = MlpTrace{};
    NumArray out = mlp_forward(features, ps, cfg.cmpg_widths.size() - 1, false, &tr);
    out.shape = {features.dim(0), cfg.n_gen, 3};
    return out;
}

diff::NumArray cmpg_backward(const MlpTrace& trace, const NumArray& d_points, ParamStore& ps,
                             bool accumulate_param_grads) {
    if (accumulate_param_grads && ps.frozen())
        throw ContractViolation("cmpg_backward: store is frozen");
    NumArray d = d_points;
    d.shape = {d.dim(0), d.dim(1) * d.dim(2)};
    return mlp_backward(trace, d, ps, false, accumulate_param_grads);
}

geom::PointCloud cmpg_output_cloud(const NumArray& points, std::size_t sample) {
    geom::PointCloud pc;
    const std::size_t n = points.dim(1);
    pc.points.resize(n);
    pc.normalized = false;
    for (std::size_t i = 0; i < n; ++i)
        pc.points[i] = {points.at(sample, i, 0), points.at(sample, i, 1), points.at(sample, i, 2)};
    return pc;
}

}  // namespace cmt::nets
