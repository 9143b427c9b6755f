// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cmt/distill.hpp"
#include "doctest.h"

using namespace cmt;
using diff::NumArray;
using diff::ParamStore;
using nets::NetworkConfig;

namespace {

NetworkConfig tiny_config() {
    NetworkConfig cfg;
    cfg.feature_dim = 6;
    cfg.num_classes = 3;
    cfg.n_gen = 5;
    cfg.point_mlp_widths = {4, 6};
    cfg.classifier_widths = {6, 4, 3};
    cfg.cmpg_widths = {6, 8, 10, 15};
    return cfg;
}

NumArray random_features(std::size_t b, std::size_t d, Rng& rng) {
    NumArray f = NumArray::zeros({b, d});
    for (double& v : f.data) v = rng.uniform(-1, 1);
    return f;
}

ParamStore frozen_cmpg(const NetworkConfig& cfg, std::uint64_t seed) {
    ParamStore cmpg;
    Rng rng(seed);
    nets::init_cmpg(cmpg, cfg, rng);
    for (const std::string& name : cmpg.param_names())
        if (name.ends_with(".b"))
            for (double& v : cmpg.value(name).data) v = rng.uniform(-0.05, 0.05);
    cmpg.freeze();
    return cmpg;
}

}  // namespace

TEST_CASE("feature enhancement: identical features give zero loss and zero gradient") {
    const NetworkConfig cfg = tiny_config();
    ParamStore cmpg = frozen_cmpg(cfg, 1);
    Rng rng(2);
    const NumArray f = random_features(3, 6, rng);
    const auto r = distill::feature_enhancement_loss(f, f, cmpg, cfg);
    CHECK(r.value == doctest::Approx(0.0));
    for (double v : r.d_f_pts.data) CHECK(v == 0.0);
}

TEST_CASE("feature enhancement: generator gradient slots stay zero") {
    const NetworkConfig cfg = tiny_config();
    ParamStore cmpg = frozen_cmpg(cfg, 3);
    Rng rng(4);
    const NumArray f_pts = random_features(2, 6, rng);
    const NumArray f_img = random_features(2, 6, rng);
    const auto r = distill::feature_enhancement_loss(f_pts, f_img, cmpg, cfg);
    CHECK(r.value > 0.0);
    for (const std::string& name : cmpg.param_names())
        for (double v : cmpg.grad(name).data) CHECK(v == 0.0);
}

TEST_CASE("feature enhancement: unfrozen generator is a contract violation") {
    const NetworkConfig cfg = tiny_config();
    ParamStore cmpg;
    Rng rng(5);
    nets::init_cmpg(cmpg, cfg, rng);
    const NumArray f = random_features(2, 6, rng);
    CHECK_THROWS_AS(distill::feature_enhancement_loss(f, f, cmpg, cfg), ContractViolation);
}

TEST_CASE("feature enhancement: gradient matches finite differences through generator and EMD") {
    const NetworkConfig cfg = tiny_config();
    ParamStore cmpg = frozen_cmpg(cfg, 6);
    Rng rng(7);
    const NumArray f_img = random_features(2, 6, rng);
    ParamStore holder;
    holder.add("f_pts", random_features(2, 6, rng));

    auto loss = [&]() {
        const auto r = distill::feature_enhancement_loss(holder.value("f_pts"), f_img, cmpg, cfg);
        for (std::size_t i = 0; i < r.d_f_pts.numel(); ++i)
            holder.grad("f_pts").data[i] += r.d_f_pts.data[i];
        return r.value;
    };
    const auto report = diff::grad_check(loss, holder, 1e-6, 1e-4);
    INFO("err=", report.max_rel_error);
    CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("classifier enhancement: identical features give zero, random ones non-negative") {
    const NetworkConfig cfg = tiny_config();
    ParamStore cls;
    Rng rng(8);
    nets::init_classifier(cls, cfg, rng);
    const NumArray f = random_features(3, 6, rng);
    const auto same = distill::classifier_enhancement_loss(f, f, cls, cfg);
    CHECK(same.value == doctest::Approx(0.0));

    for (int t = 0; t < 10; ++t) {
        const NumArray a = random_features(3, 6, rng);
        const NumArray b = random_features(3, 6, rng);
        cls.zero_grads();
        CHECK(distill::classifier_enhancement_loss(a, b, cls, cfg).value >= 0.0);
    }
}

TEST_CASE("classifier enhancement: gradients respect the stop-gradient structure") {
    const NetworkConfig cfg = tiny_config();
    Rng rng(9);
    // One store holds both the classifier parameters and the point feature;
    // the image feature is a held-out constant.
    ParamStore ps;
    nets::init_classifier(ps, cfg, rng);
    for (const std::string& name : ps.param_names())
        if (name.ends_with(".b"))
            for (double& v : ps.value(name).data) v = rng.uniform(-0.1, 0.1);
    ps.add("f_pts", random_features(2, 6, rng));
    const NumArray f_img = random_features(2, 6, rng);

    auto loss = [&]() {
        const auto r =
            distill::classifier_enhancement_loss(f_img, ps.value("f_pts"), ps, cfg, 1.0, 1.0);
        for (std::size_t i = 0; i < r.d_f_pts.numel(); ++i)
            ps.grad("f_pts").data[i] += r.d_f_pts.data[i];
        return r.value;
    };
    const auto report = diff::grad_check(loss, ps, 1e-6, 1e-4);
    INFO("worst=", report.worst_param, " err=", report.max_rel_error);
    CHECK(report.max_rel_error <= 1e-4);
}

TEST_CASE("classifier enhancement: weight scales gradients but not the reported value") {
    const NetworkConfig cfg = tiny_config();
    ParamStore cls1, cls2;
    Rng rng(10);
    nets::init_classifier(cls1, cfg, rng);
    Rng rng2(10);
    nets::init_classifier(cls2, cfg, rng2);
    Rng frng(11);
    const NumArray f_img = random_features(2, 6, frng);
    const NumArray f_pts = random_features(2, 6, frng);

    const auto unit = distill::classifier_enhancement_loss(f_img, f_pts, cls1, cfg, 1.0, 1.0);
    const auto scaled = distill::classifier_enhancement_loss(f_img, f_pts, cls2, cfg, 1.0, 0.3);
    CHECK(scaled.value == doctest::Approx(unit.value).epsilon(1e-12));
    for (std::size_t i = 0; i < unit.d_f_pts.numel(); ++i)
        CHECK(scaled.d_f_pts.data[i] == doctest::Approx(0.3 * unit.d_f_pts.data[i]).epsilon(1e-12));
    for (const std::string& name : cls1.param_names())
        for (std::size_t i = 0; i < cls1.grad(name).numel(); ++i)
            CHECK(cls2.grad(name).data[i] ==
                  doctest::Approx(0.3 * cls1.grad(name).data[i]).epsilon(1e-10));
}

TEST_CASE("hinton kd: equal logits give zero; closed-form two-class case") {
    Rng rng(12);
    const NumArray logits = random_features(2, 4, rng);
    CHECK(distill::hinton_kd_loss(logits, logits).value <= 1e-12);

    // Teacher (0,0) -> (1/2, 1/2); student (ln 3, 0) -> (3/4, 1/4).
    // KL = 0.5 ln(2/3) + 0.5 ln 2 = 0.5 ln(4/3).
    NumArray teacher = NumArray::zeros({1, 2});
    NumArray student = NumArray::zeros({1, 2});
    student.at(0, 0) = std::log(3.0);
    const auto r = distill::hinton_kd_loss(teacher, student);
    CHECK(r.value == doctest::Approx(0.5 * std::log(4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("hinton kd: student gradient finite differences") {
    Rng rng(13);
    const NumArray teacher = random_features(3, 4, rng);
    ParamStore ps;
    ps.add("student", random_features(3, 4, rng));
    auto loss = [&]() {
        const auto r = distill::hinton_kd_loss(teacher, ps.value("student"));
        for (std::size_t i = 0; i < r.dlogits.numel(); ++i)
            ps.grad("student").data[i] += r.dlogits.data[i];
        return r.value;
    };
    CHECK(diff::grad_check(loss, ps, 1e-6, 1e-6).max_rel_error <= 1e-6);
}

TEST_CASE("total loss: weighted sum and its invariant") {
    const distill::LossWeights w{30.0, 0.3};
    const auto r = distill::total_loss(1.0, 0.1, 2.0, w);
    CHECK(r.total == doctest::Approx(4.6).epsilon(1e-12));

    const auto base = distill::total_loss(1.7, 0.5, 0.9, {0.0, 0.0});
    CHECK(base.total == 1.7);
    const auto ce_only = distill::total_loss(1.7, 0.0, 0.0, w);
    CHECK(ce_only.total == 1.7);

    Rng rng(14);
    for (int t = 0; t < 20; ++t) {
        const double ce = rng.uniform(0, 5), fe = rng.uniform(0, 5), cl = rng.uniform(0, 5);
        const auto rep = distill::total_loss(ce, fe, cl, w);
        CHECK(std::abs(rep.total - (rep.ce + w.alpha * rep.feature + w.beta * rep.classifier)) <=
              1e-9);
    }
}

TEST_CASE("total loss: non-finite components are named") {
    const distill::LossWeights w{30.0, 0.3};
    try {
        distill::total_loss(1.0, std::nan(""), 0.0, w);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("feature") != std::string::npos);
    }
    CHECK_THROWS_AS(distill::total_loss(std::nan(""), 0, 0, w), DivergenceError);
}

TEST_CASE("normalize gaussian: output batch statistics match the point features") {
    Rng rng(15);
    const NumArray f_img = random_features(8, 5, rng);
    NumArray f_pts = random_features(8, 5, rng);
    for (double& v : f_pts.data) v = 2.0 * v + 0.7;
    const NumArray out = distill::normalize_gaussian(f_img, f_pts);

    for (std::size_t d = 0; d < 5; ++d) {
        double mo = 0, mp = 0;
        for (std::size_t b = 0; b < 8; ++b) {
            mo += out.at(b, d);
            mp += f_pts.at(b, d);
        }
        mo /= 8;
        mp /= 8;
        double so = 0, sp = 0;
        for (std::size_t b = 0; b < 8; ++b) {
            so += (out.at(b, d) - mo) * (out.at(b, d) - mo);
            sp += (f_pts.at(b, d) - mp) * (f_pts.at(b, d) - mp);
        }
        CHECK(std::abs(mo - mp) <= 1e-9);
        CHECK(std::abs(std::sqrt(so / 8) - std::sqrt(sp / 8)) <= 1e-9);
    }
}

TEST_CASE("normalize gaussian: already-matching batch is unchanged") {
    Rng rng(16);
    const NumArray f = random_features(6, 4, rng);
    const NumArray out = distill::normalize_gaussian(f, f);
    for (std::size_t i = 0; i < f.numel(); ++i)
        CHECK(out.data[i] == doctest::Approx(f.data[i]).epsilon(1e-12));
}

TEST_CASE("normalize gaussian: identical image features are a degenerate batch") {
    Rng rng(17);
    NumArray f_img = NumArray::zeros({2, 4});
    for (std::size_t d = 0; d < 4; ++d) f_img.at(0, d) = f_img.at(1, d) = 0.3 * (d + 1.0);
    const NumArray f_pts = random_features(2, 4, rng);
    CHECK_THROWS_AS(distill::normalize_gaussian(f_img, f_pts), DegenerateBatch);
    // A single-row batch cannot define a standard deviation at all.
    CHECK_THROWS_AS(
        distill::normalize_gaussian(random_features(1, 4, rng), random_features(1, 4, rng)),
        InvalidArgument);
}

TEST_CASE("normalize scale: mean 2-norms match and directions are preserved") {
    Rng rng(18);
    const NumArray f_img = random_features(5, 6, rng);
    const NumArray f_pts = random_features(5, 6, rng);
    const NumArray out = distill::normalize_scale(f_img, f_pts);

    auto mean_norm = [](const NumArray& f) {
        double total = 0;
        for (std::size_t b = 0; b < f.dim(0); ++b) {
            double s = 0;
            for (std::size_t d = 0; d < f.dim(1); ++d) s += f.at(b, d) * f.at(b, d);
            total += std::sqrt(s);
        }
        return total / static_cast<double>(f.dim(0));
    };
    CHECK(std::abs(mean_norm(out) - mean_norm(f_pts)) <= 1e-9);

    // Each row is a positive scalar multiple of its input row.
    const double scale = out.at(0, 0) / f_img.at(0, 0);
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(out.data[i] == doctest::Approx(scale * f_img.data[i]).epsilon(1e-12));
    CHECK(scale > 0.0);
}

TEST_CASE("normalize scale: already-matched scale is unchanged; zero norms rejected") {
    Rng rng(19);
    const NumArray f = random_features(4, 3, rng);
    const NumArray out = distill::normalize_scale(f, f);
    for (std::size_t i = 0; i < f.numel(); ++i)
        CHECK(out.data[i] == doctest::Approx(f.data[i]).epsilon(1e-12));
    CHECK_THROWS_AS(distill::normalize_scale(NumArray::zeros({4, 3}), f), DegenerateBatch);
}

TEST_CASE("mse feature kd: values and gradient") {
    NumArray f = NumArray::zeros({1, 2});
    f.at(0, 0) = 1.0;
    const auto r = distill::mse_feature_kd_loss(f, NumArray::zeros({1, 2}));
    CHECK(r.value == doctest::Approx(0.5).epsilon(1e-12));  // mean over 2 dims

    Rng rng(20);
    const NumArray equal = random_features(3, 4, rng);
    CHECK(distill::mse_feature_kd_loss(equal, equal).value == 0.0);

    const NumArray target = random_features(3, 4, rng);
    ParamStore ps;
    ps.add("f", random_features(3, 4, rng));
    auto loss = [&]() {
        const auto res = distill::mse_feature_kd_loss(ps.value("f"), target);
        for (std::size_t i = 0; i < res.d_f_pts.numel(); ++i)
            ps.grad("f").data[i] += res.d_f_pts.data[i];
        return res.value;
    };
    CHECK(diff::grad_check(loss, ps, 1e-6, 1e-6).max_rel_error <= 1e-6);
}

TEST_CASE("identical cross-modal features collapse the total to cross-entropy") {
    const NetworkConfig cfg = tiny_config();
    ParamStore cmpg = frozen_cmpg(cfg, 21);
    ParamStore cls;
    Rng rng(22);
    nets::init_classifier(cls, cfg, rng);
    const NumArray f = random_features(2, 6, rng);

    const auto fe = distill::feature_enhancement_loss(f, f, cmpg, cfg);
    const auto ce = distill::classifier_enhancement_loss(f, f, cls, cfg);
    CHECK(fe.value == 0.0);
    CHECK(ce.value == 0.0);
    const auto report = distill::total_loss(1.25, fe.value, ce.value, {30.0, 0.3});
    CHECK(report.total == 1.25);
}
