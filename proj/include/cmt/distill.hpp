// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0
//
// Cross-modal training objectives.
//
// Feature enhancement maps both modality features through the frozen point
// generator and compares the generated clouds under EMD; its gradient flows
// through the generator into the point feature only.
//
// Classifier enhancement feeds the image feature into the *point* classifier
// and KL-aligns the two output distributions; the image-feature path updates
// classifier parameters only (never the image feature), while the
// point-feature path updates both the classifier and the point feature.

#pragma once

#include "cmt/diffcore.hpp"
#include "cmt/emd.hpp"
#include "cmt/networks.hpp"

namespace cmt::distill {

struct LossWeights {
    double alpha = 30.0;
    double beta = 0.3;
};

struct LossReport {
    double ce = 0.0;
    double feature = 0.0;
    double classifier = 0.0;
    double total = 0.0;
};

struct FeatureLossResult {
    double value = 0.0;
    diff::NumArray d_f_pts;  // [B x D]
};

// EMD between the generator's images of f_pts and f_img, averaged over the
// batch. cmpg must be frozen; its gradient slots stay untouched and f_img
// receives no gradient.
FeatureLossResult feature_enhancement_loss(const diff::NumArray& f_pts, const diff::NumArray& f_img,
                                           diff::ParamStore& cmpg, const nets::NetworkConfig& cfg,
                                           emd::Solver solver = emd::Solver::Auto,
                                           emd::Reduction reduction = emd::Reduction::Sum);

struct ClassifierLossResult {
    double value = 0.0;
    diff::NumArray d_f_pts;  // [B x D]
};

// KL(Cls_pts(f_img) || Cls_pts(f_pts)) averaged over the batch. Accumulates
// `weight`-scaled gradients into cls_pts from both input paths and returns
// the weight-scaled gradient for the point feature. No gradient leaves
// through f_img.
ClassifierLossResult classifier_enhancement_loss(const diff::NumArray& f_img,
                                                 const diff::NumArray& f_pts,
                                                 diff::ParamStore& cls_pts,
                                                 const nets::NetworkConfig& cfg,
                                                 double temperature = 1.0, double weight = 1.0);

// Classic distillation baseline: KL from the (constant) teacher logits to
// the student logits.
diff::LossGrad hinton_kd_loss(const diff::NumArray& img_logits, const diff::NumArray& pts_logits,
                              double temperature = 1.0);

// Weighted sum with the report invariant total = ce + alpha*feature +
// beta*classifier. Raises DivergenceError naming the non-finite component.
LossReport total_loss(double ce, double feature, double classifier, const LossWeights& w);

// Batch renormalizations of the image features toward the point-feature
// statistics (per dimension: mean/std; scalar: mean 2-norm).
diff::NumArray normalize_gaussian(const diff::NumArray& f_img_batch,
                                  const diff::NumArray& f_pts_batch);
diff::NumArray normalize_scale(const diff::NumArray& f_img_batch,
                               const diff::NumArray& f_pts_batch);

struct MseLossResult {
    double value = 0.0;
    diff::NumArray d_f_pts;
};

// Mean squared difference over all entries; gradient to the student feature
// only.
MseLossResult mse_feature_kd_loss(const diff::NumArray& f_pts, const diff::NumArray& target);

}  // namespace cmt::distill
