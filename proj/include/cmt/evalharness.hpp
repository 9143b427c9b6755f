// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmt/pipeline.hpp"

namespace cmt::eval {

struct EvalReport {
    double overall_accuracy = 0.0;    // percent
    double class_mean_accuracy = 0.0;  // percent, unweighted over present classes
    std::vector<std::pair<std::string, double>> per_class;
    std::size_t n_test = 0;
    bool all_classes_present = true;
};

EvalReport evaluate(const std::string& student_ckpt, const pipe::Dataset& ds_test,
                    const pipe::RunConfig& cfg);
EvalReport evaluate_student(const pipe::StudentNets& student, const pipe::Dataset& ds_test,
                            const pipe::RunConfig& cfg);

std::string format_report(const EvalReport& r);
void write_eval_csv(const std::string& path, const EvalReport& r);

// One trained-and-evaluated cell of a comparison harness.
struct CellResult {
    std::string method;
    std::uint64_t seed = 0;
    double test_oa = 0.0;
    double stage2_first_emd = 0.0;  // pointcmt cells only
    double stage2_last_emd = 0.0;
};

struct MethodSummary {
    std::string method;
    double mean_oa = 0.0;
    double std_oa = 0.0;
    std::vector<double> per_seed;
};

struct KdComparison {
    std::vector<CellResult> cells;
    std::vector<MethodSummary> summary;
};

// Trains the student once per (method, seed) with identical data order and
// evaluates on the full test split. Teacher and generator artifacts are
// trained once per seed and shared by the methods that need them.
// Independent seeds run in parallel; outputs are aggregation-order fixed.
KdComparison kd_comparison_run(const std::vector<std::string>& methods,
                               const std::vector<std::uint64_t>& seeds,
                               const pipe::RunConfig& cfg);
void write_kd_comparison_csv(const std::string& path, const KdComparison& result,
                             const pipe::RunConfig& cfg);

struct DataEfficiencyRow {
    double fraction = 0.0;
    double baseline_mean = 0.0, baseline_std = 0.0;
    double pointcmt_mean = 0.0, pointcmt_std = 0.0;
};

std::vector<DataEfficiencyRow> data_efficiency_run(const std::vector<double>& fractions,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   const pipe::RunConfig& cfg);
void write_data_efficiency_csv(const std::string& path,
                               const std::vector<DataEfficiencyRow>& rows,
                               const pipe::RunConfig& cfg);

// Stage-III weight ablation: feature enhancement only, classifier
// enhancement only, both. Reports the final test OA per row.
struct AblationRow {
    std::string name;
    double alpha = 0.0, beta = 0.0;
    double test_oa = 0.0;
};
std::vector<AblationRow> ablation_run(const pipe::RunConfig& cfg);
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        const pipe::RunConfig& cfg);

}  // namespace cmt::eval
