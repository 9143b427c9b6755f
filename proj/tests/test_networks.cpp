// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "cmt/networks.hpp"
#include "doctest.h"

using namespace cmt;
using diff::NumArray;
using diff::ParamStore;
using geom::PointCloud;
using nets::NetworkConfig;

namespace {

PointCloud random_cloud(std::size_t n, Rng& rng) {
    PointCloud pc;
    for (std::size_t i = 0; i < n; ++i)
        pc.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    return geom::normalize_unit_sphere(pc);
}

NetworkConfig tiny_config() {
    NetworkConfig cfg;
    cfg.feature_dim = 8;
    cfg.num_classes = 3;
    cfg.n_gen = 6;
    cfg.point_mlp_widths = {6, 8};
    cfg.cnn_channels = {2, 3};
    cfg.classifier_widths = {8, 5, 3};
    cfg.cmpg_widths = {8, 10, 12, 18};
    cfg.image_h = 8;
    cfg.image_w = 8;
    return cfg;
}

proj::ViewImageSet random_views(std::size_t v, std::size_t h, std::size_t w, Rng& rng) {
    proj::ViewImageSet set;
    set.height = h;
    set.width = w;
    for (std::size_t i = 0; i < v; ++i) {
        std::vector<double> img(h * w);
        for (double& px : img) px = rng.uniform();
        set.images.push_back(std::move(img));
    }
    return set;
}

NumArray random_features(std::size_t b, std::size_t d, Rng& rng) {
    NumArray f = NumArray::zeros({b, d});
    for (double& v : f.data) v = rng.uniform(-1, 1);
    return f;
}

}  // namespace

TEST_CASE("point encoder: bitwise invariant to point permutation") {
    for (const bool grouped : {false, true}) {
        NetworkConfig cfg = tiny_config();
        cfg.grouped_stage = grouped;
        Rng rng(1);
        ParamStore ps;
        nets::init_point_encoder(ps, cfg, rng);

        Rng cloud_rng(2);
        const PointCloud pc = random_cloud(32, cloud_rng);
        PointCloud shuffled = pc;
        for (std::size_t i = shuffled.points.size(); i-- > 1;)
            std::swap(shuffled.points[i],
                      shuffled.points[cloud_rng.uniform_int(static_cast<int>(i + 1))]);

        const NumArray a = nets::point_encoder_forward({&pc}, ps, cfg);
        const NumArray b = nets::point_encoder_forward({&shuffled}, ps, cfg);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data[i] == b.data[i]);
    }
}

TEST_CASE("point encoder: duplicating every point changes nothing") {
    NetworkConfig cfg = tiny_config();
    Rng rng(3);
    ParamStore ps;
    nets::init_point_encoder(ps, cfg, rng);

    Rng cloud_rng(4);
    const PointCloud pc = random_cloud(16, cloud_rng);
    PointCloud doubled = pc;
    doubled.points.insert(doubled.points.end(), pc.points.begin(), pc.points.end());

    const NumArray a = nets::point_encoder_forward({&pc}, ps, cfg);
    const NumArray b = nets::point_encoder_forward({&doubled}, ps, cfg);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("point encoder: parameter gradients match finite differences") {
    for (const bool grouped : {false, true}) {
        NetworkConfig cfg = tiny_config();
        cfg.grouped_stage = grouped;
        Rng rng(5);
        ParamStore ps;
        nets::init_point_encoder(ps, cfg, rng);
        // Zero biases put the grouped stage's center rows (relative
        // coordinates 0) exactly on the relu kink; move off it before
        // finite-differencing.
        for (const std::string& name : ps.param_names())
            if (name.ends_with(".b"))
                for (double& v : ps.value(name).data) v = rng.uniform(0.01, 0.1);

        Rng cloud_rng(6);
        const PointCloud c0 = random_cloud(20, cloud_rng);
        const PointCloud c1 = random_cloud(20, cloud_rng);
        const std::vector<const PointCloud*> batch = {&c0, &c1};

        auto loss = [&]() {
            nets::PointEncoderTrace trace;
            const NumArray f = nets::point_encoder_forward(batch, ps, cfg, &trace);
            double s = 0.0;
            NumArray df = NumArray::zeros(f.shape);
            for (std::size_t i = 0; i < f.numel(); ++i) {
                const double wgt = 0.3 + 0.1 * static_cast<double>(i);
                s += wgt * f.data[i];
                df.data[i] = wgt;
            }
            nets::point_encoder_backward(trace, df, ps);
            return s;
        };
        const auto report = diff::grad_check(loss, ps, 1e-6, 1e-5);
        INFO("grouped=", grouped, " worst=", report.worst_param, " err=", report.max_rel_error);
        CHECK(report.max_rel_error <= 1e-5);
    }
}

TEST_CASE("image encoder: bitwise invariant to view order; V=1 equals duplicated views") {
    NetworkConfig cfg = tiny_config();
    Rng rng(7);
    ParamStore ps;
    nets::init_image_encoder(ps, cfg, rng);

    Rng view_rng(8);
    proj::ViewImageSet views = random_views(4, 8, 8, view_rng);
    proj::ViewImageSet reordered = views;
    std::rotate(reordered.images.begin(), reordered.images.begin() + 2, reordered.images.end());

    const NumArray a = nets::image_encoder_forward({&views}, ps, cfg);
    const NumArray b = nets::image_encoder_forward({&reordered}, ps, cfg);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data[i] == b.data[i]);

    proj::ViewImageSet single = views;
    single.images.resize(1);
    proj::ViewImageSet twice = single;
    twice.images.push_back(single.images[0]);
    const NumArray c = nets::image_encoder_forward({&single}, ps, cfg);
    const NumArray d = nets::image_encoder_forward({&twice}, ps, cfg);
    for (std::size_t i = 0; i < c.numel(); ++i) CHECK(c.data[i] == d.data[i]);
}

TEST_CASE("image encoder: undersized views rejected") {
    NetworkConfig cfg = tiny_config();
    Rng rng(9);
    ParamStore ps;
    nets::init_image_encoder(ps, cfg, rng);
    Rng view_rng(10);
    proj::ViewImageSet tiny = random_views(2, 4, 4, view_rng);
    CHECK_THROWS_AS(nets::image_encoder_forward({&tiny}, ps, cfg), InvalidArgument);
}

TEST_CASE("image encoder: gradients through conv stack and aggregation") {
    NetworkConfig cfg = tiny_config();
    Rng rng(11);
    ParamStore ps;
    nets::init_image_encoder(ps, cfg, rng);

    Rng view_rng(12);
    const proj::ViewImageSet v0 = random_views(2, 8, 8, view_rng);
    const proj::ViewImageSet v1 = random_views(2, 8, 8, view_rng);
    const std::vector<const proj::ViewImageSet*> batch = {&v0, &v1};

    auto loss = [&]() {
        nets::ImageEncoderTrace trace;
        const NumArray f = nets::image_encoder_forward(batch, ps, cfg, &trace);
        double s = 0.0;
        NumArray df = NumArray::zeros(f.shape);
        for (std::size_t i = 0; i < f.numel(); ++i) {
            const double wgt = 0.2 + 0.05 * static_cast<double>(i);
            s += wgt * f.data[i];
            df.data[i] = wgt;
        }
        nets::image_encoder_backward(trace, df, ps);
        return s;
    };
    const auto report = diff::grad_check(loss, ps, 1e-6, 1e-5);
    INFO("worst=", report.worst_param, " err=", report.max_rel_error);
    CHECK(report.max_rel_error <= 1e-5);
}

TEST_CASE("classifier: identity-initialized single layer passes the prefix through") {
    NetworkConfig cfg = tiny_config();
    cfg.classifier_widths = {8, 3};  // one linear layer
    ParamStore ps;
    Rng rng(13);
    nets::init_classifier(ps, cfg, rng);
    ps.value("l0.w").fill(0.0);
    for (std::size_t i = 0; i < 3; ++i) ps.value("l0.w").at(i, i) = 1.0;
    ps.value("l0.b").fill(0.0);

    Rng frng(14);
    const NumArray f = random_features(2, 8, frng);
    const NumArray logits = nets::classifier_forward(f, ps, cfg);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 3; ++c) CHECK(logits.at(b, c) == f.at(b, c));
}

TEST_CASE("classifier: zero feature yields the composed biases") {
    NetworkConfig cfg = tiny_config();
    ParamStore ps;
    Rng rng(15);
    nets::init_classifier(ps, cfg, rng);
    for (std::size_t i = 0; i < ps.value("l0.b").numel(); ++i)
        ps.value("l0.b").data[i] = 0.1 * (i + 1.0);
    for (std::size_t i = 0; i < ps.value("l1.b").numel(); ++i)
        ps.value("l1.b").data[i] = -0.2 * (i + 1.0);

    const NumArray logits = nets::classifier_forward(NumArray::zeros({1, 8}), ps, cfg);
    // Expected: l1(relu(l0.b)) + l1.b computed by hand.
    const NumArray hidden = diff::relu_forward(ps.value("l0.b"));
    for (std::size_t c = 0; c < 3; ++c) {
        double expect = ps.value("l1.b").data[c];
        for (std::size_t h = 0; h < 5; ++h) expect += hidden.data[h] * ps.value("l1.w").at(h, c);
        CHECK(logits.at(0, c) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("classifier: gradient check at 1e-6") {
    NetworkConfig cfg = tiny_config();
    ParamStore ps;
    Rng rng(16);
    nets::init_classifier(ps, cfg, rng);
    Rng frng(17);
    const NumArray f = random_features(4, 8, frng);

    auto loss = [&]() {
        nets::MlpTrace trace;
        const NumArray logits = nets::classifier_forward(f, ps, cfg, &trace);
        double s = 0.0;
        NumArray dl = NumArray::zeros(logits.shape);
        for (std::size_t i = 0; i < logits.numel(); ++i) {
            const double wgt = 0.5 - 0.07 * static_cast<double>(i);
            s += wgt * logits.data[i];
            dl.data[i] = wgt;
        }
        nets::classifier_backward(trace, dl, ps);
        return s;
    };
    CHECK(diff::grad_check(loss, ps, 1e-6, 1e-6).max_rel_error <= 1e-6);
}

TEST_CASE("cmpg: zero feature and zero biases give the all-zero cloud") {
    NetworkConfig cfg = tiny_config();
    ParamStore ps;
    Rng rng(18);
    nets::init_cmpg(ps, cfg, rng);
    for (const std::string& name : ps.param_names())
        if (name.ends_with(".b")) ps.value(name).fill(0.0);
    const NumArray out = nets::cmpg_forward(NumArray::zeros({1, 8}), ps, cfg);
    CHECK(out.shape == std::vector<std::size_t>{1, 6, 3});
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("cmpg: output shape fixed by config regardless of inputs") {
    NetworkConfig cfg = tiny_config();
    ParamStore ps;
    Rng rng(19);
    nets::init_cmpg(ps, cfg, rng);
    Rng frng(20);
    for (int t = 0; t < 3; ++t) {
        const NumArray out = nets::cmpg_forward(random_features(2, 8, frng), ps, cfg);
        CHECK(out.shape == std::vector<std::size_t>{2, 6, 3});
        CHECK(out.all_finite());
    }
}

TEST_CASE("cmpg: input gradient matches finite differences at 1e-6") {
    NetworkConfig cfg = tiny_config();
    ParamStore cmpg;
    Rng rng(21);
    nets::init_cmpg(cmpg, cfg, rng);

    ParamStore holder;
    Rng frng(22);
    holder.add("f", random_features(2, 8, frng));

    auto loss = [&]() {
        nets::MlpTrace trace;
        const NumArray out = nets::cmpg_forward(holder.value("f"), cmpg, cfg, &trace);
        double s = 0.0;
        NumArray dout = NumArray::zeros(out.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const double wgt = 0.1 + 0.02 * static_cast<double>(i % 7);
            s += wgt * out.data[i];
            dout.data[i] = wgt;
        }
        const NumArray df = nets::cmpg_backward(trace, dout, cmpg, false);
        for (std::size_t i = 0; i < df.numel(); ++i) holder.grad("f").data[i] += df.data[i];
        return s;
    };
    CHECK(diff::grad_check(loss, holder, 1e-6, 1e-6).max_rel_error <= 1e-6);
}

TEST_CASE("cmpg: parameter gradients also check out") {
    NetworkConfig cfg = tiny_config();
    ParamStore cmpg;
    Rng rng(23);
    nets::init_cmpg(cmpg, cfg, rng);
    Rng frng(24);
    const NumArray f = random_features(2, 8, frng);

    auto loss = [&]() {
        nets::MlpTrace trace;
        const NumArray out = nets::cmpg_forward(f, cmpg, cfg, &trace);
        double s = 0.0;
        NumArray dout = NumArray::zeros(out.shape);
        for (std::size_t i = 0; i < out.numel(); ++i) {
            s += out.data[i] * out.data[i];
            dout.data[i] = 2.0 * out.data[i];
        }
        nets::cmpg_backward(trace, dout, cmpg, true);
        return s;
    };
    CHECK(diff::grad_check(loss, cmpg, 1e-6, 1e-5).max_rel_error <= 1e-5);
}

TEST_CASE("config validation rejects broken chains") {
    NetworkConfig cfg = tiny_config();
    cfg.point_mlp_widths = {6, 9};  // does not end at feature_dim
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = tiny_config();
    cfg.cmpg_widths = {8, 10, 18};  // two layers, not three
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = tiny_config();
    cfg.classifier_widths = {7, 5, 3};  // head does not match feature_dim
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
