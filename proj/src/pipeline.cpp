// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cmt/distill.hpp"

namespace cmt::pipe {

using diff::NumArray;
using diff::ParamStore;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_out_dir(const RunConfig& cfg) { std::filesystem::create_directories(cfg.out_dir); }

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i-- > 1;)
        std::swap(idx[i], idx[rng.uniform_int(static_cast<int>(i + 1))]);
    return idx;
}

// Teacher features for every sample, in dataset order.
NumArray cache_image_features(const Dataset& ds, const ViewCache& views, const TeacherNets& teacher,
                              const nets::NetworkConfig& net, int batch_size) {
    const std::size_t M = ds.samples.size();
    NumArray out = NumArray::zeros({M, net.feature_dim});
    for (std::size_t begin = 0; begin < M; begin += batch_size) {
        const std::size_t end = std::min(M, begin + batch_size);
        std::vector<const proj::ViewImageSet*> batch;
        for (std::size_t i = begin; i < end; ++i) batch.push_back(&views.views[i]);
        const NumArray f = nets::image_encoder_forward(batch, teacher.enc, net);
        std::copy(f.data.begin(), f.data.end(), out.data.begin() + begin * net.feature_dim);
    }
    return out;
}

NumArray gather_rows(const NumArray& table, const std::vector<std::size_t>& rows) {
    const std::size_t D = table.dim(1);
    NumArray out = NumArray::zeros({rows.size(), D});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(table.data.begin() + rows[i] * D, table.data.begin() + (rows[i] + 1) * D,
                  out.data.begin() + i * D);
    return out;
}

int argmax_row(const NumArray& logits, std::size_t row) {
    int best = 0;
    for (std::size_t c = 1; c < logits.dim(1); ++c)
        if (logits.at(row, c) > logits.at(row, best)) best = static_cast<int>(c);
    return best;
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<EpochRecord>& trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write metrics csv: " + path);
    out << "epoch,loss_ce,loss_feature,loss_classifier,loss_total,train_acc\n";
    for (const EpochRecord& r : trace)
        out << r.epoch << "," << fmt_double(r.loss_ce) << "," << fmt_double(r.loss_feature) << ","
            << fmt_double(r.loss_classifier) << "," << fmt_double(r.loss_total) << ","
            << fmt_double(r.train_acc) << "\n";
}

ViewCache project_all(const Dataset& ds, const RunConfig& cfg) {
    const auto rig =
        proj::default_view_rig(cfg.views, cfg.cam_distance, cfg.image_size, cfg.image_size);
    ViewCache cache;
    cache.views.reserve(ds.samples.size());
    for (const geom::LabeledCloud& lc : ds.samples)
        cache.views.push_back(proj::project_views(lc.cloud, rig, cfg.image_size, cfg.image_size));
    return cache;
}

Dataset load_or_synth_train(const RunConfig& cfg) {
    if (!cfg.train_dir.empty()) return load_dataset(cfg.train_dir, "train");
    return synth_dataset(cfg.synth_train_per_class, cfg.synth_points,
                         mix_seed(cfg.seed, kStreamSynthTrain), "train");
}

Dataset load_or_synth_test(const RunConfig& cfg) {
    if (!cfg.test_dir.empty()) return load_dataset(cfg.test_dir, "test");
    return synth_dataset(cfg.synth_test_per_class, cfg.synth_points,
                         mix_seed(cfg.seed, kStreamSynthTest), "test");
}

// ---------------------------------------------------------------------------
// Network construction / checkpoint binding

TeacherNets init_teacher(const nets::NetworkConfig& net, Rng& rng) {
    TeacherNets t;
    nets::init_image_encoder(t.enc, net, rng);
    nets::init_classifier(t.cls, net, rng);
    return t;
}

StudentNets init_student(const nets::NetworkConfig& net, Rng& rng) {
    StudentNets s;
    nets::init_point_encoder(s.enc, net, rng);
    nets::init_classifier(s.cls, net, rng);
    return s;
}

TeacherNets load_teacher(const std::string& ckpt_path, const nets::NetworkConfig& net) {
    Rng scratch(0);
    TeacherNets t = init_teacher(net, scratch);
    const auto entries = diff::read_checkpoint(ckpt_path);
    diff::load_param_store(entries, nets::kEncImgPrefix, t.enc);
    diff::load_param_store(entries, nets::kClsImgPrefix, t.cls);
    t.enc.freeze();
    t.cls.freeze();
    return t;
}

diff::ParamStore load_cmpg(const std::string& ckpt_path, const nets::NetworkConfig& net) {
    Rng scratch(0);
    ParamStore cmpg;
    nets::init_cmpg(cmpg, net, scratch);
    const auto entries = diff::read_checkpoint(ckpt_path);
    diff::load_param_store(entries, nets::kCmpgPrefix, cmpg);
    cmpg.freeze();
    return cmpg;
}

StudentNets load_student(const std::string& ckpt_path, const nets::NetworkConfig& net) {
    Rng scratch(0);
    StudentNets s = init_student(net, scratch);
    const auto entries = diff::read_checkpoint(ckpt_path);
    diff::load_param_store(entries, nets::kEncPtsPrefix, s.enc);
    diff::load_param_store(entries, nets::kClsPtsPrefix, s.cls);
    return s;
}

void save_teacher(const std::string& path, const TeacherNets& t) {
    diff::save_param_stores(path, {{nets::kEncImgPrefix, &t.enc}, {nets::kClsImgPrefix, &t.cls}});
}

void save_student(const std::string& path, const StudentNets& s) {
    diff::save_param_stores(path, {{nets::kEncPtsPrefix, &s.enc}, {nets::kClsPtsPrefix, &s.cls}});
}

void save_cmpg(const std::string& path, const diff::ParamStore& cmpg) {
    diff::save_param_stores(path, {{nets::kCmpgPrefix, &cmpg}});
}

// ---------------------------------------------------------------------------
// Stage I: image network

StageArtifacts stage1_train_image(const Dataset& ds, const RunConfig& cfg, const ViewCache* views) {
    validate_train_split(ds);
    ensure_out_dir(cfg);
    const nets::NetworkConfig net = cfg.network_config(ds.num_classes());

    ViewCache local;
    if (!views) {
        local = project_all(ds, cfg);
        views = &local;
    }

    Rng init_rng = derive_rng(cfg.seed, kStreamTeacherInit);
    TeacherNets teacher = init_teacher(net, init_rng);

    Rng shuffle_rng = derive_rng(cfg.seed, kStreamStage1Shuffle);
    const std::size_t M = ds.samples.size();
    StageArtifacts art;
    for (int epoch = 1; epoch <= cfg.stage1_epochs; ++epoch) {
        const auto order = shuffled_indices(M, shuffle_rng);
        double ce_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < M; begin += cfg.batch_size) {
            const std::size_t end = std::min(M, begin + cfg.batch_size);
            std::vector<const proj::ViewImageSet*> batch;
            std::vector<int> labels;
            for (std::size_t i = begin; i < end; ++i) {
                batch.push_back(&views->views[order[i]]);
                labels.push_back(ds.samples[order[i]].label);
            }
            nets::ImageEncoderTrace enc_trace;
            nets::MlpTrace cls_trace;
            const NumArray f = nets::image_encoder_forward(batch, teacher.enc, net, &enc_trace);
            const NumArray logits = nets::classifier_forward(f, teacher.cls, net, &cls_trace);
            const diff::LossGrad ce = diff::softmax_xent(logits, labels);
            if (!std::isfinite(ce.value))
                throw DivergenceError("stage1: non-finite loss at epoch " + std::to_string(epoch));
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (argmax_row(logits, i) == labels[i]) ++correct;
            ce_sum += ce.value * static_cast<double>(labels.size());

            const NumArray d_f = nets::classifier_backward(cls_trace, ce.dlogits, teacher.cls);
            nets::image_encoder_backward(enc_trace, d_f, teacher.enc);
            diff::sgd_step(teacher.enc, cfg.sgd_lr, cfg.sgd_momentum);
            diff::sgd_step(teacher.cls, cfg.sgd_lr, cfg.sgd_momentum);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_ce = ce_sum / static_cast<double>(M);
        rec.loss_total = rec.loss_ce;
        rec.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(M);
        art.trace.push_back(rec);
    }

    art.checkpoint_path = cfg.out_dir + "/teacher.ckpt";
    art.metrics_path = cfg.out_dir + "/metrics_stage1.csv";
    save_teacher(art.checkpoint_path, teacher);
    write_metrics_csv(art.metrics_path, art.trace);
    art.final_train_acc = art.trace.empty() ? 0.0 : art.trace.back().train_acc;
    return art;
}

// ---------------------------------------------------------------------------
// Stage II: cross-modal point generator

StageArtifacts stage2_train_cmpg(const Dataset& ds, const std::string& teacher_ckpt,
                                 const RunConfig& cfg, const ViewCache* views) {
    validate_train_split(ds);
    ensure_out_dir(cfg);
    const nets::NetworkConfig net = cfg.network_config(ds.num_classes());
    const std::size_t M = ds.samples.size();

    ViewCache local;
    if (!views) {
        local = project_all(ds, cfg);
        views = &local;
    }
    const TeacherNets teacher = load_teacher(teacher_ckpt, net);
    const NumArray f_img = cache_image_features(ds, *views, teacher, net, cfg.batch_size);

    // Fixed per-sample reconstruction targets: an FPS subsample of each cloud.
    Rng start_rng = derive_rng(cfg.seed, kStreamFpsStart);
    std::vector<geom::PointCloud> targets;
    targets.reserve(M);
    for (const geom::LabeledCloud& lc : ds.samples) {
        const std::size_t N = lc.cloud.size();
        if (net.n_gen > N)
            throw ConfigError("stage2: n_gen " + std::to_string(net.n_gen) + " exceeds cloud size " +
                              std::to_string(N));
        const int start = start_rng.uniform_int(static_cast<int>(N));
        const geom::IndexSet idx =
            geom::farthest_point_sample(lc.cloud, static_cast<int>(net.n_gen), start);
        geom::PointCloud target;
        target.normalized = lc.cloud.normalized;
        target.points.reserve(net.n_gen);
        for (int i : idx) target.points.push_back(lc.cloud.points[i]);
        targets.push_back(std::move(target));
    }

    Rng init_rng = derive_rng(cfg.seed, kStreamCmpgInit);
    ParamStore cmpg;
    nets::init_cmpg(cmpg, net, init_rng);

    Rng shuffle_rng = derive_rng(cfg.seed, kStreamStage2Shuffle);
    StageArtifacts art;
    for (int epoch = 1; epoch <= cfg.stage2_epochs; ++epoch) {
        const auto order = shuffled_indices(M, shuffle_rng);
        double emd_sum = 0.0;
        for (std::size_t begin = 0; begin < M; begin += cfg.batch_size) {
            const std::size_t end = std::min(M, begin + cfg.batch_size);
            std::vector<std::size_t> rows(order.begin() + begin, order.begin() + end);
            const NumArray f = gather_rows(f_img, rows);
            nets::MlpTrace trace;
            const NumArray gen = nets::cmpg_forward(f, cmpg, net, &trace);

            const double invB = 1.0 / static_cast<double>(rows.size());
            NumArray d_gen = NumArray::zeros(gen.shape);
            double batch_emd = 0.0;
            for (std::size_t b = 0; b < rows.size(); ++b) {
                const geom::PointCloud gen_cloud = nets::cmpg_output_cloud(gen, b);
                const emd::EmdResult r =
                    emd::emd_loss(gen_cloud, targets[rows[b]], cfg.emd_solver, cfg.emd_reduction);
                batch_emd += r.value;
                for (std::size_t i = 0; i < net.n_gen; ++i)
                    for (std::size_t k = 0; k < 3; ++k) d_gen.at(b, i, k) = r.dp.at(i, k) * invB;
            }
            batch_emd *= invB;
            if (!std::isfinite(batch_emd))
                throw DivergenceError("stage2: non-finite loss at epoch " + std::to_string(epoch));
            emd_sum += batch_emd * static_cast<double>(rows.size());

            nets::cmpg_backward(trace, d_gen, cmpg, /*accumulate_param_grads=*/true);
            diff::adam_step(cmpg, cfg.adam_lr);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_feature = emd_sum / static_cast<double>(M);
        rec.loss_total = rec.loss_feature;
        art.trace.push_back(rec);
    }

    art.checkpoint_path = cfg.out_dir + "/cmpg.ckpt";
    art.metrics_path = cfg.out_dir + "/metrics_stage2.csv";
    save_cmpg(art.checkpoint_path, cmpg);
    write_metrics_csv(art.metrics_path, art.trace);
    return art;
}

// ---------------------------------------------------------------------------
// Student training (stage III, baseline, KD comparators)

StageArtifacts train_student(const Dataset& ds, const RunConfig& cfg, StudentMethod method,
                             const std::string& teacher_ckpt, const std::string& cmpg_ckpt,
                             const std::string& tag, const ViewCache* views) {
    validate_train_split(ds);
    ensure_out_dir(cfg);
    const nets::NetworkConfig net = cfg.network_config(ds.num_classes());
    const std::size_t M = ds.samples.size();

    const bool wants_teacher = method != StudentMethod::Baseline;
    const bool pointcmt_active =
        method == StudentMethod::PointCMT && (cfg.alpha > 0.0 || cfg.beta > 0.0);
    const bool wants_features =
        pointcmt_active || method == StudentMethod::Hinton ||
        method == StudentMethod::Normalize1Mse || method == StudentMethod::Normalize2Mse;

    TeacherNets teacher;
    ParamStore cmpg;
    NumArray f_img_all;
    NumArray teacher_logits_all;
    if (wants_teacher) {
        teacher = load_teacher(teacher_ckpt, net);
        if (method == StudentMethod::PointCMT) cmpg = load_cmpg(cmpg_ckpt, net);
        if (wants_features) {
            ViewCache local;
            if (!views) {
                local = project_all(ds, cfg);
                views = &local;
            }
            f_img_all = cache_image_features(ds, *views, teacher, net, cfg.batch_size);
            if (method == StudentMethod::Hinton)
                teacher_logits_all = nets::classifier_forward(f_img_all, teacher.cls, net);
        }
    }

    const distill::LossWeights w =
        method == StudentMethod::PointCMT ? cfg.weights() : distill::LossWeights{
            (method == StudentMethod::Normalize1Mse || method == StudentMethod::Normalize2Mse)
                ? 1.0
                : 0.0,
            method == StudentMethod::Hinton ? cfg.beta : 0.0};

    Rng init_rng = derive_rng(cfg.seed, kStreamStudentInit);
    StudentNets student = init_student(net, init_rng);

    Rng shuffle_rng = derive_rng(cfg.seed, kStreamStudentShuffle);
    StageArtifacts art;
    for (int epoch = 1; epoch <= cfg.stage3_epochs; ++epoch) {
        const auto order = shuffled_indices(M, shuffle_rng);
        double ce_sum = 0.0, feature_sum = 0.0, classifier_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < M; begin += cfg.batch_size) {
            const std::size_t end = std::min(M, begin + cfg.batch_size);
            std::vector<std::size_t> rows(order.begin() + begin, order.begin() + end);
            const std::size_t B = rows.size();

            std::vector<const geom::PointCloud*> clouds;
            std::vector<int> labels;
            for (std::size_t i : rows) {
                clouds.push_back(&ds.samples[i].cloud);
                labels.push_back(ds.samples[i].label);
            }

            nets::PointEncoderTrace enc_trace;
            nets::MlpTrace cls_trace;
            const NumArray f_pts = nets::point_encoder_forward(clouds, student.enc, net, &enc_trace);
            const NumArray logits = nets::classifier_forward(f_pts, student.cls, net, &cls_trace);
            const diff::LossGrad ce = diff::softmax_xent(logits, labels);
            for (std::size_t i = 0; i < B; ++i)
                if (argmax_row(logits, i) == labels[i]) ++correct;

            double feature_v = 0.0, classifier_v = 0.0;
            NumArray dlogits = ce.dlogits;
            NumArray d_f_extra;  // enhancement-term gradient for f_pts

            if (method == StudentMethod::PointCMT) {
                const NumArray f_img = wants_features ? gather_rows(f_img_all, rows) : NumArray();
                if (cfg.alpha > 0.0) {
                    distill::FeatureLossResult fe = distill::feature_enhancement_loss(
                        f_pts, f_img, cmpg, net, cfg.emd_solver, cfg.emd_reduction);
                    feature_v = fe.value;
                    d_f_extra = std::move(fe.d_f_pts);
                    for (double& v : d_f_extra.data) v *= cfg.alpha;
                }
                if (cfg.beta > 0.0) {
                    distill::ClassifierLossResult cl = distill::classifier_enhancement_loss(
                        f_img, f_pts, student.cls, net, cfg.kl_temperature, cfg.beta);
                    classifier_v = cl.value;
                    if (d_f_extra.numel() == 0) d_f_extra = std::move(cl.d_f_pts);
                    else
                        for (std::size_t i = 0; i < d_f_extra.numel(); ++i)
                            d_f_extra.data[i] += cl.d_f_pts.data[i];
                }
            } else if (method == StudentMethod::Hinton && cfg.beta > 0.0) {
                const NumArray t_logits = gather_rows(teacher_logits_all, rows);
                const diff::LossGrad kd =
                    distill::hinton_kd_loss(t_logits, logits, cfg.kl_temperature);
                classifier_v = kd.value;
                for (std::size_t i = 0; i < dlogits.numel(); ++i)
                    dlogits.data[i] += cfg.beta * kd.dlogits.data[i];
            } else if (method == StudentMethod::Normalize1Mse ||
                       method == StudentMethod::Normalize2Mse) {
                const NumArray f_img = gather_rows(f_img_all, rows);
                const NumArray target = method == StudentMethod::Normalize1Mse
                                            ? distill::normalize_gaussian(f_img, f_pts)
                                            : distill::normalize_scale(f_img, f_pts);
                distill::MseLossResult mse = distill::mse_feature_kd_loss(f_pts, target);
                feature_v = mse.value;
                d_f_extra = std::move(mse.d_f_pts);  // weight 1.0
            }

            const distill::LossReport report = distill::total_loss(ce.value, feature_v, classifier_v, w);
            ce_sum += report.ce * static_cast<double>(B);
            feature_sum += report.feature * static_cast<double>(B);
            classifier_sum += report.classifier * static_cast<double>(B);

            NumArray d_f = nets::classifier_backward(cls_trace, dlogits, student.cls);
            if (d_f_extra.numel() != 0)
                for (std::size_t i = 0; i < d_f.numel(); ++i) d_f.data[i] += d_f_extra.data[i];
            nets::point_encoder_backward(enc_trace, d_f, student.enc);
            diff::sgd_step(student.enc, cfg.sgd_lr, cfg.sgd_momentum);
            diff::sgd_step(student.cls, cfg.sgd_lr, cfg.sgd_momentum);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss_ce = ce_sum / static_cast<double>(M);
        rec.loss_feature = feature_sum / static_cast<double>(M);
        rec.loss_classifier = classifier_sum / static_cast<double>(M);
        const distill::LossReport epoch_report =
            distill::total_loss(rec.loss_ce, rec.loss_feature, rec.loss_classifier, w);
        rec.loss_total = epoch_report.total;
        rec.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(M);
        art.trace.push_back(rec);
    }

    art.checkpoint_path = cfg.out_dir + "/student_" + tag + ".ckpt";
    art.metrics_path = cfg.out_dir + "/metrics_" + tag + ".csv";
    save_student(art.checkpoint_path, student);
    write_metrics_csv(art.metrics_path, art.trace);
    art.final_train_acc = art.trace.empty() ? 0.0 : art.trace.back().train_acc;
    return art;
}

StageArtifacts stage3_train_student(const Dataset& ds, const std::string& teacher_ckpt,
                                    const std::string& cmpg_ckpt, const RunConfig& cfg,
                                    const ViewCache* views) {
    return train_student(ds, cfg, StudentMethod::PointCMT, teacher_ckpt, cmpg_ckpt, "stage3", views);
}

StageArtifacts train_baseline(const Dataset& ds, const RunConfig& cfg) {
    return train_student(ds, cfg, StudentMethod::Baseline, "", "", "baseline");
}

}  // namespace cmt::pipe
