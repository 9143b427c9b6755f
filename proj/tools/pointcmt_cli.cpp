// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver. Exit codes: 0 success, 2 config error, 3 data or
// checkpoint error, 4 training divergence.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "cmt/evalharness.hpp"
#include "cmt/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration file (key = value lines)");
    cmd->add_option("--seed", args.seed, "override the run seed");
    cmd->add_option("--out", args.out_dir, "override the output directory");
}

cmt::pipe::RunConfig resolve_config(const CommonArgs& args) {
    cmt::pipe::RunConfig cfg;
    if (!args.config_path.empty()) cfg = cmt::pipe::load_config(args.config_path);
    if (args.seed) cfg.seed = *args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    cfg.validate();
    return cfg;
}

int run(int argc, char** argv) {
    CLI::App app{"pointcmt: cross-modal training for point cloud classification"};
    app.require_subcommand(1);

    CommonArgs gen_args, project_args, s1_args, s2_args, s3_args, base_args, eval_args, kd_args,
        eff_args;
    std::string eval_ckpt;
    std::string project_sample;

    auto* gen = app.add_subcommand("gen-data", "synthesize the 4-class dataset to disk");
    add_common(gen, gen_args);

    auto* project = app.add_subcommand("project", "write view images of the train split as PGM");
    add_common(project, project_args);
    project->add_option("--sample", project_sample,
                        "only this sample index (default: first of each class)");

    auto* s1 = app.add_subcommand("train-image", "stage I: train the image network");
    add_common(s1, s1_args);
    auto* s2 = app.add_subcommand("train-cmpg", "stage II: train the point generator");
    add_common(s2, s2_args);
    auto* s3 = app.add_subcommand("train-pointcmt", "stage III: train the enhanced student");
    add_common(s3, s3_args);
    auto* base = app.add_subcommand("train-baseline", "train the cross-entropy-only student");
    add_common(base, base_args);

    auto* ev = app.add_subcommand("eval", "evaluate a student checkpoint on the test split");
    add_common(ev, eval_args);
    ev->add_option("--ckpt", eval_ckpt, "student checkpoint (default: <out>/student_stage3.ckpt)");

    auto* kd = app.add_subcommand("compare-kd", "train and compare the KD method family");
    add_common(kd, kd_args);
    auto* eff = app.add_subcommand("data-efficiency", "train on stratified subsets and compare");
    add_common(eff, eff_args);

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        const auto cfg = resolve_config(gen_args);
        const auto train = cmt::pipe::synth_dataset(cfg.synth_train_per_class, cfg.synth_points,
                                                    cmt::mix_seed(cfg.seed, cmt::pipe::kStreamSynthTrain),
                                                    "train");
        const auto test = cmt::pipe::synth_dataset(cfg.synth_test_per_class, cfg.synth_points,
                                                   cmt::mix_seed(cfg.seed, cmt::pipe::kStreamSynthTest),
                                                   "test");
        cmt::pipe::save_dataset(train, cfg.out_dir + "/train");
        cmt::pipe::save_dataset(test, cfg.out_dir + "/test");
        std::cout << "wrote " << train.samples.size() << " train / " << test.samples.size()
                  << " test samples under " << cfg.out_dir << "\n";
        return 0;
    }

    if (project->parsed()) {
        const auto cfg = resolve_config(project_args);
        const auto ds = cmt::pipe::load_or_synth_train(cfg);
        const auto rig = cmt::proj::default_view_rig(cfg.views, cfg.cam_distance, cfg.image_size,
                                                     cfg.image_size);
        std::filesystem::create_directories(cfg.out_dir);
        std::vector<std::size_t> picks;
        if (!project_sample.empty()) {
            picks.push_back(std::stoul(project_sample));
        } else {
            std::vector<bool> seen(ds.num_classes(), false);
            for (std::size_t i = 0; i < ds.samples.size(); ++i)
                if (!seen[ds.samples[i].label]) {
                    seen[ds.samples[i].label] = true;
                    picks.push_back(i);
                }
        }
        for (std::size_t i : picks) {
            if (i >= ds.samples.size()) throw cmt::DataError("project: sample index out of range");
            const auto views =
                cmt::proj::project_views(ds.samples[i].cloud, rig, cfg.image_size, cfg.image_size);
            for (std::size_t v = 0; v < views.images.size(); ++v) {
                const std::string path = cfg.out_dir + "/" + ds.class_names[ds.samples[i].label] +
                                         std::to_string(i) + "_" + std::to_string(v) + ".pgm";
                cmt::proj::write_pgm(path, views.images[v], views.height, views.width);
            }
        }
        std::cout << "wrote " << picks.size() * rig.size() << " views under " << cfg.out_dir << "\n";
        return 0;
    }

    if (s1->parsed()) {
        const auto cfg = resolve_config(s1_args);
        const auto ds = cmt::pipe::load_or_synth_train(cfg);
        const auto art = cmt::pipe::stage1_train_image(ds, cfg);
        std::cout << "stage I done: train acc " << art.final_train_acc << "%, checkpoint "
                  << art.checkpoint_path << "\n";
        return 0;
    }
    if (s2->parsed()) {
        const auto cfg = resolve_config(s2_args);
        const auto ds = cmt::pipe::load_or_synth_train(cfg);
        const auto art =
            cmt::pipe::stage2_train_cmpg(ds, cfg.out_dir + "/teacher.ckpt", cfg);
        std::cout << "stage II done: final EMD "
                  << (art.trace.empty() ? 0.0 : art.trace.back().loss_feature) << ", checkpoint "
                  << art.checkpoint_path << "\n";
        return 0;
    }
    if (s3->parsed()) {
        const auto cfg = resolve_config(s3_args);
        const auto ds = cmt::pipe::load_or_synth_train(cfg);
        const auto art = cmt::pipe::stage3_train_student(ds, cfg.out_dir + "/teacher.ckpt",
                                                         cfg.out_dir + "/cmpg.ckpt", cfg);
        std::cout << "stage III done: train acc " << art.final_train_acc << "%, checkpoint "
                  << art.checkpoint_path << "\n";
        return 0;
    }
    if (base->parsed()) {
        const auto cfg = resolve_config(base_args);
        const auto ds = cmt::pipe::load_or_synth_train(cfg);
        const auto art = cmt::pipe::train_baseline(ds, cfg);
        std::cout << "baseline done: train acc " << art.final_train_acc << "%, checkpoint "
                  << art.checkpoint_path << "\n";
        return 0;
    }

    if (ev->parsed()) {
        const auto cfg = resolve_config(eval_args);
        const auto test = cmt::pipe::load_or_synth_test(cfg);
        const std::string ckpt =
            eval_ckpt.empty() ? cfg.out_dir + "/student_stage3.ckpt" : eval_ckpt;
        const auto report = cmt::eval::evaluate(ckpt, test, cfg);
        std::cout << cmt::eval::format_report(report);
        std::filesystem::create_directories(cfg.out_dir);
        cmt::eval::write_eval_csv(cfg.out_dir + "/eval.csv", report);
        return 0;
    }

    if (kd->parsed()) {
        const auto cfg = resolve_config(kd_args);
        const auto result = cmt::eval::kd_comparison_run(cfg.kd_methods, cfg.harness_seeds, cfg);
        std::filesystem::create_directories(cfg.out_dir);
        cmt::eval::write_kd_comparison_csv(cfg.out_dir + "/kd_comparison.csv", result, cfg);
        for (const auto& s : result.summary)
            std::printf("%-16s OA %6.2f%% +- %.2f over %zu seeds\n", s.method.c_str(), s.mean_oa,
                        s.std_oa, s.per_seed.size());
        return 0;
    }

    if (eff->parsed()) {
        const auto cfg = resolve_config(eff_args);
        const auto rows = cmt::eval::data_efficiency_run(cfg.fractions, cfg.harness_seeds, cfg);
        std::filesystem::create_directories(cfg.out_dir);
        cmt::eval::write_data_efficiency_csv(cfg.out_dir + "/data_efficiency.csv", rows, cfg);
        for (const auto& r : rows)
            std::printf("fraction %.3f  baseline %6.2f%% +- %.2f   pointcmt %6.2f%% +- %.2f\n",
                        r.fraction, r.baseline_mean, r.baseline_std, r.pointcmt_mean, r.pointcmt_std);
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cmt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const cmt::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const cmt::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 3;
    } catch (const cmt::DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
