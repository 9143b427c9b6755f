// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/distill.hpp"

#include <cmath>

namespace cmt::distill {

using diff::NumArray;

FeatureLossResult feature_enhancement_loss(const NumArray& f_pts, const NumArray& f_img,
                                           diff::ParamStore& cmpg, const nets::NetworkConfig& cfg,
                                           emd::Solver solver, emd::Reduction reduction) {
    if (!cmpg.frozen())
        throw ContractViolation("feature_enhancement_loss: generator must be frozen first");
    require_shape(f_pts, f_img, "feature_enhancement_loss");
    const std::size_t B = f_pts.dim(0);

    nets::MlpTrace pts_trace;
    const NumArray gen_pts = nets::cmpg_forward(f_pts, cmpg, cfg, &pts_trace);
    const NumArray gen_img = nets::cmpg_forward(f_img, cmpg, cfg);

    NumArray d_gen = NumArray::zeros(gen_pts.shape);
    double value = 0.0;
    const double invB = 1.0 / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        const geom::PointCloud p = nets::cmpg_output_cloud(gen_pts, b);
        const geom::PointCloud q = nets::cmpg_output_cloud(gen_img, b);
        const emd::EmdResult r = emd::emd_loss(p, q, solver, reduction);
        value += r.value;
        for (std::size_t i = 0; i < cfg.n_gen; ++i)
            for (std::size_t k = 0; k < 3; ++k) d_gen.at(b, i, k) = r.dp.at(i, k) * invB;
    }

    FeatureLossResult out;
    out.value = value * invB;
    out.d_f_pts = nets::cmpg_backward(pts_trace, d_gen, cmpg, /*accumulate_param_grads=*/false);
    return out;
}

ClassifierLossResult classifier_enhancement_loss(const NumArray& f_img, const NumArray& f_pts,
                                                 diff::ParamStore& cls_pts,
                                                 const nets::NetworkConfig& cfg, double temperature,
                                                 double weight) {
    require_shape(f_img, f_pts, "classifier_enhancement_loss");

    nets::MlpTrace img_trace, pts_trace;
    const NumArray logits_img = nets::classifier_forward(f_img, cls_pts, cfg, &img_trace);
    const NumArray logits_pts = nets::classifier_forward(f_pts, cls_pts, cfg, &pts_trace);

    diff::KlFull kl = diff::kl_divergence_full(logits_img, logits_pts, temperature);
    if (weight != 1.0) {
        for (double& v : kl.dp_logits.data) v *= weight;
        for (double& v : kl.dq_logits.data) v *= weight;
    }

    // Image path: classifier parameters only; the input gradient is dropped.
    nets::classifier_backward(img_trace, kl.dp_logits, cls_pts);
    ClassifierLossResult out;
    out.value = kl.value;
    out.d_f_pts = nets::classifier_backward(pts_trace, kl.dq_logits, cls_pts);
    return out;
}

diff::LossGrad hinton_kd_loss(const NumArray& img_logits, const NumArray& pts_logits,
                              double temperature) {
    return diff::kl_divergence(img_logits, pts_logits, temperature);
}

LossReport total_loss(double ce, double feature, double classifier, const LossWeights& w) {
    const char* names[3] = {"ce", "feature", "classifier"};
    const double vals[3] = {ce, feature, classifier};
    for (int i = 0; i < 3; ++i)
        if (!std::isfinite(vals[i]))
            throw DivergenceError(std::string("total_loss: non-finite component '") + names[i] + "'");
    LossReport r;
    r.ce = ce;
    r.feature = feature;
    r.classifier = classifier;
    r.total = ce + w.alpha * feature + w.beta * classifier;
    if (!std::isfinite(r.total)) throw DivergenceError("total_loss: non-finite component 'total'");
    return r;
}

NumArray normalize_gaussian(const NumArray& f_img_batch, const NumArray& f_pts_batch) {
    require_shape(f_img_batch, f_pts_batch, "normalize_gaussian");
    if (f_img_batch.rank() != 2 || f_img_batch.dim(0) < 2)
        throw InvalidArgument("normalize_gaussian: needs a [BxD] batch with B >= 2");
    const std::size_t B = f_img_batch.dim(0), D = f_img_batch.dim(1);

    auto stats = [&](const NumArray& f, std::vector<double>& mean, std::vector<double>& stdev) {
        mean.assign(D, 0.0);
        stdev.assign(D, 0.0);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t d = 0; d < D; ++d) mean[d] += f.at(b, d);
        for (std::size_t d = 0; d < D; ++d) mean[d] /= static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t d = 0; d < D; ++d) {
                const double c = f.at(b, d) - mean[d];
                stdev[d] += c * c;
            }
        for (std::size_t d = 0; d < D; ++d) stdev[d] = std::sqrt(stdev[d] / static_cast<double>(B));
    };

    std::vector<double> mean_img, std_img, mean_pts, std_pts;
    stats(f_img_batch, mean_img, std_img);
    stats(f_pts_batch, mean_pts, std_pts);
    for (std::size_t d = 0; d < D; ++d)
        if (std_img[d] < 1e-12)
            throw DegenerateBatch("normalize_gaussian: image-feature std below 1e-12 in dim " +
                                  std::to_string(d));

    NumArray out = NumArray::zeros({B, D});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d)
            out.at(b, d) = (f_img_batch.at(b, d) - mean_img[d]) / std_img[d] * std_pts[d] + mean_pts[d];
    return out;
}

NumArray normalize_scale(const NumArray& f_img_batch, const NumArray& f_pts_batch) {
    require_shape(f_img_batch, f_pts_batch, "normalize_scale");
    if (f_img_batch.rank() != 2 || f_img_batch.dim(0) < 1)
        throw InvalidArgument("normalize_scale: needs a [BxD] batch");
    const std::size_t B = f_img_batch.dim(0), D = f_img_batch.dim(1);

    auto mean_norm = [&](const NumArray& f) {
        double total = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            double s = 0.0;
            for (std::size_t d = 0; d < D; ++d) s += f.at(b, d) * f.at(b, d);
            total += std::sqrt(s);
        }
        return total / static_cast<double>(B);
    };

    const double n_img = mean_norm(f_img_batch);
    const double n_pts = mean_norm(f_pts_batch);
    if (n_img < 1e-12) throw DegenerateBatch("normalize_scale: zero mean norm in image features");

    NumArray out = f_img_batch;
    const double scale = n_pts / n_img;
    for (double& v : out.data) v *= scale;
    return out;
}

MseLossResult mse_feature_kd_loss(const NumArray& f_pts, const NumArray& target) {
    require_shape(f_pts, target, "mse_feature_kd_loss");
    MseLossResult out;
    out.d_f_pts = NumArray::zeros(f_pts.shape);
    const double inv = 1.0 / static_cast<double>(f_pts.numel());
    double total = 0.0;
    for (std::size_t i = 0; i < f_pts.numel(); ++i) {
        const double d = f_pts.data[i] - target.data[i];
        total += d * d;
        out.d_f_pts.data[i] = 2.0 * d * inv;
    }
    out.value = total * inv;
    return out;
}

}  // namespace cmt::distill
