// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0
//
// The three-stage training pipeline: stage I trains the image network on
// projected views, stage II pre-trains the point generator on frozen image
// features under EMD, stage III trains the point network with the
// feature/classifier enhancement terms added to cross-entropy. Baseline and
// KD-comparison students run through the same inner loop so that seed-for-
// seed comparisons share initialization and data order exactly.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmt/checkpoint.hpp"
#include "cmt/config.hpp"
#include "cmt/dataset.hpp"
#include "cmt/projection.hpp"

namespace cmt::pipe {

struct EpochRecord {
    int epoch = 0;
    double loss_ce = 0.0;
    double loss_feature = 0.0;
    double loss_classifier = 0.0;
    double loss_total = 0.0;
    double train_acc = 0.0;  // percent
};

struct StageArtifacts {
    std::string checkpoint_path;
    std::string metrics_path;
    std::vector<EpochRecord> trace;
    double final_train_acc = 0.0;
};

// Named RNG streams derived from the run seed; stages draw from disjoint
// streams so one stage cannot shift another's sequence.
enum : std::uint64_t {
    kStreamTeacherInit = 1,
    kStreamCmpgInit = 2,
    kStreamStudentInit = 3,
    kStreamStage1Shuffle = 4,
    kStreamStage2Shuffle = 5,
    kStreamStudentShuffle = 6,
    kStreamSynthTrain = 7,
    kStreamSynthTest = 8,
    kStreamFpsStart = 9,
};

// Projected views for every sample, cached once per dataset.
struct ViewCache {
    std::vector<proj::ViewImageSet> views;
};
ViewCache project_all(const Dataset& ds, const RunConfig& cfg);

// Loads cfg.train_dir/test_dir when set, otherwise synthesizes from the run
// seed (streams 7/8).
Dataset load_or_synth_train(const RunConfig& cfg);
Dataset load_or_synth_test(const RunConfig& cfg);

StageArtifacts stage1_train_image(const Dataset& ds, const RunConfig& cfg,
                                  const ViewCache* views = nullptr);
StageArtifacts stage2_train_cmpg(const Dataset& ds, const std::string& teacher_ckpt,
                                 const RunConfig& cfg, const ViewCache* views = nullptr);
StageArtifacts stage3_train_student(const Dataset& ds, const std::string& teacher_ckpt,
                                    const std::string& cmpg_ckpt, const RunConfig& cfg,
                                    const ViewCache* views = nullptr);
StageArtifacts train_baseline(const Dataset& ds, const RunConfig& cfg);

// Shared inner loop behind stage III, the baseline, and the KD comparators.
enum class StudentMethod { Baseline, PointCMT, Hinton, Normalize1Mse, Normalize2Mse };
StageArtifacts train_student(const Dataset& ds, const RunConfig& cfg, StudentMethod method,
                             const std::string& teacher_ckpt, const std::string& cmpg_ckpt,
                             const std::string& tag, const ViewCache* views = nullptr);

// Checkpoint binding helpers.
struct TeacherNets {
    diff::ParamStore enc;
    diff::ParamStore cls;
};
struct StudentNets {
    diff::ParamStore enc;
    diff::ParamStore cls;
};

TeacherNets init_teacher(const nets::NetworkConfig& net, Rng& rng);
StudentNets init_student(const nets::NetworkConfig& net, Rng& rng);
TeacherNets load_teacher(const std::string& ckpt_path, const nets::NetworkConfig& net);  // frozen
diff::ParamStore load_cmpg(const std::string& ckpt_path, const nets::NetworkConfig& net);  // frozen
StudentNets load_student(const std::string& ckpt_path, const nets::NetworkConfig& net);

void save_teacher(const std::string& path, const TeacherNets& t);
void save_student(const std::string& path, const StudentNets& s);
void save_cmpg(const std::string& path, const diff::ParamStore& cmpg);

void write_metrics_csv(const std::string& path, const std::vector<EpochRecord>& trace);

}  // namespace cmt::pipe
