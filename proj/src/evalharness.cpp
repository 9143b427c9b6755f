// Copyright Contributors to the PointCMT Project
// SPDX-License-Identifier: Apache-2.0

#include "cmt/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>
#include <tuple>

namespace cmt::eval {

using pipe::Dataset;
using pipe::RunConfig;

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

// Runs jobs 0..n-1 over a small thread pool; each job owns its slot.
void run_parallel(std::size_t n, const std::function<void(std::size_t)>& job) {
    const std::size_t workers =
        std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) job(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

EvalReport evaluate_student(const pipe::StudentNets& student, const Dataset& ds_test,
                            const RunConfig& cfg) {
    if (ds_test.samples.empty()) throw DataError("evaluate: empty test set");
    const nets::NetworkConfig net = cfg.network_config(ds_test.num_classes());
    const std::size_t C = ds_test.num_classes();
    std::vector<std::size_t> per_class_total(C, 0), per_class_correct(C, 0);

    const std::size_t M = ds_test.samples.size();
    for (std::size_t begin = 0; begin < M; begin += cfg.batch_size) {
        const std::size_t end = std::min(M, begin + cfg.batch_size);
        std::vector<const geom::PointCloud*> clouds;
        for (std::size_t i = begin; i < end; ++i) clouds.push_back(&ds_test.samples[i].cloud);
        const diff::NumArray f = nets::point_encoder_forward(clouds, student.enc, net);
        const diff::NumArray logits = nets::classifier_forward(f, student.cls, net);
        for (std::size_t i = begin; i < end; ++i) {
            const int label = ds_test.samples[i].label;
            int pred = 0;  // argmax, lowest class index on ties
            for (std::size_t c = 1; c < C; ++c)
                if (logits.at(i - begin, c) > logits.at(i - begin, pred)) pred = static_cast<int>(c);
            ++per_class_total[label];
            if (pred == label) ++per_class_correct[label];
        }
    }

    EvalReport report;
    report.n_test = M;
    std::size_t correct = 0;
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < C; ++c) {
        correct += per_class_correct[c];
        if (per_class_total[c] == 0) {
            report.all_classes_present = false;
            continue;
        }
        const double recall = 100.0 * static_cast<double>(per_class_correct[c]) /
                              static_cast<double>(per_class_total[c]);
        report.per_class.emplace_back(ds_test.class_names[c], recall);
        recall_sum += recall;
        ++present;
    }
    report.overall_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(M);
    report.class_mean_accuracy = present ? recall_sum / static_cast<double>(present) : 0.0;
    return report;
}

EvalReport evaluate(const std::string& student_ckpt, const Dataset& ds_test, const RunConfig& cfg) {
    const nets::NetworkConfig net = cfg.network_config(ds_test.num_classes());
    const pipe::StudentNets student = pipe::load_student(student_ckpt, net);
    return evaluate_student(student, ds_test, cfg);
}

std::string format_report(const EvalReport& r) {
    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "overall accuracy    %8.3f%%  (n=%zu)\n", r.overall_accuracy,
                  r.n_test);
    out << buf;
    std::snprintf(buf, sizeof(buf), "class mean accuracy %8.3f%%%s\n", r.class_mean_accuracy,
                  r.all_classes_present ? "" : "  (over present classes only)");
    out << buf;
    for (const auto& [name, acc] : r.per_class) {
        std::snprintf(buf, sizeof(buf), "  %-16s %8.3f%%\n", name.c_str(), acc);
        out << buf;
    }
    return out.str();
}

void write_eval_csv(const std::string& path, const EvalReport& r) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << "class,accuracy\n";
    for (const auto& [name, acc] : r.per_class) out << name << "," << fmt_double(acc) << "\n";
    out << "__overall__," << fmt_double(r.overall_accuracy) << "\n";
    out << "__class_mean__," << fmt_double(r.class_mean_accuracy) << "\n";
}

// ---------------------------------------------------------------------------
// KD comparison harness

KdComparison kd_comparison_run(const std::vector<std::string>& methods,
                               const std::vector<std::uint64_t>& seeds, const RunConfig& cfg) {
    for (const std::string& m : methods)
        if (m != "baseline" && m != "hinton" && m != "normalize1_mse" && m != "normalize2_mse" &&
            m != "pointcmt")
            throw ConfigError("kd_comparison_run: unknown method '" + m + "'");
    if (methods.empty() || seeds.empty())
        throw ConfigError("kd_comparison_run: methods and seeds must be non-empty");

    const Dataset train = pipe::load_or_synth_train(cfg);
    const Dataset test = pipe::load_or_synth_test(cfg);
    const bool any_teacher =
        std::any_of(methods.begin(), methods.end(), [](const std::string& m) { return m != "baseline"; });
    const bool any_cmpg = std::find(methods.begin(), methods.end(), "pointcmt") != methods.end();
    const pipe::ViewCache views = any_teacher ? pipe::project_all(train, cfg) : pipe::ViewCache{};

    struct SeedRow {
        std::vector<CellResult> cells;
    };
    std::vector<SeedRow> rows(seeds.size());

    run_parallel(seeds.size(), [&](std::size_t si) {
        RunConfig cell_cfg = cfg;
        cell_cfg.seed = seeds[si];
        cell_cfg.out_dir = cfg.out_dir + "/seed" + std::to_string(seeds[si]);

        std::string teacher_ckpt, cmpg_ckpt;
        double first_emd = 0.0, last_emd = 0.0;
        if (any_teacher) {
            const auto art1 = pipe::stage1_train_image(train, cell_cfg, &views);
            teacher_ckpt = art1.checkpoint_path;
        }
        if (any_cmpg) {
            const auto art2 = pipe::stage2_train_cmpg(train, teacher_ckpt, cell_cfg, &views);
            cmpg_ckpt = art2.checkpoint_path;
            if (!art2.trace.empty()) {
                first_emd = art2.trace.front().loss_feature;
                last_emd = art2.trace.back().loss_feature;
            }
        }

        for (const std::string& method : methods) {
            pipe::StudentMethod sm = pipe::StudentMethod::Baseline;
            if (method == "pointcmt") sm = pipe::StudentMethod::PointCMT;
            else if (method == "hinton") sm = pipe::StudentMethod::Hinton;
            else if (method == "normalize1_mse") sm = pipe::StudentMethod::Normalize1Mse;
            else if (method == "normalize2_mse") sm = pipe::StudentMethod::Normalize2Mse;

            if (sm != pipe::StudentMethod::Baseline && teacher_ckpt.empty())
                throw ConfigError("kd_comparison_run: method '" + method +
                                  "' needs stage-I artifacts");
            const auto art = pipe::train_student(train, cell_cfg, sm, teacher_ckpt, cmpg_ckpt,
                                                 method, &views);
            const EvalReport rep = evaluate(art.checkpoint_path, test, cell_cfg);
            CellResult cell;
            cell.method = method;
            cell.seed = seeds[si];
            cell.test_oa = rep.overall_accuracy;
            if (method == "pointcmt") {
                cell.stage2_first_emd = first_emd;
                cell.stage2_last_emd = last_emd;
            }
            rows[si].cells.push_back(cell);
        }
    });

    KdComparison result;
    for (const std::string& method : methods) {
        MethodSummary s;
        s.method = method;
        for (std::size_t si = 0; si < seeds.size(); ++si)
            for (const CellResult& c : rows[si].cells)
                if (c.method == method) {
                    result.cells.push_back(c);
                    s.per_seed.push_back(c.test_oa);
                }
        std::tie(s.mean_oa, s.std_oa) = mean_std(s.per_seed);
        result.summary.push_back(std::move(s));
    }
    return result;
}

void write_kd_comparison_csv(const std::string& path, const KdComparison& result,
                             const RunConfig& cfg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << "# config-hash: " << pipe::config_hash(cfg) << "\n";
    out << "method,mean_oa,std_oa,n_seeds\n";
    for (const MethodSummary& s : result.summary)
        out << s.method << "," << fmt_double(s.mean_oa) << "," << fmt_double(s.std_oa) << ","
            << s.per_seed.size() << "\n";
}

// ---------------------------------------------------------------------------
// Data-efficiency harness

std::vector<DataEfficiencyRow> data_efficiency_run(const std::vector<double>& fractions,
                                                   const std::vector<std::uint64_t>& seeds,
                                                   const RunConfig& cfg) {
    if (fractions.empty() || seeds.empty())
        throw ConfigError("data_efficiency_run: fractions and seeds must be non-empty");

    const Dataset train = pipe::load_or_synth_train(cfg);
    const Dataset test = pipe::load_or_synth_test(cfg);

    struct Cell {
        double baseline_oa = 0.0;
        double pointcmt_oa = 0.0;
    };
    std::vector<Cell> cells(fractions.size() * seeds.size());

    run_parallel(cells.size(), [&](std::size_t ci) {
        const std::size_t fi = ci / seeds.size();
        const std::size_t si = ci % seeds.size();
        RunConfig cell_cfg = cfg;
        cell_cfg.seed = seeds[si];
        cell_cfg.out_dir = cfg.out_dir + "/frac" + std::to_string(fi) + "_seed" +
                           std::to_string(seeds[si]);

        const Dataset subset = pipe::stratified_subset(train, fractions[fi], seeds[si]);
        const pipe::ViewCache views = pipe::project_all(subset, cell_cfg);

        const auto art1 = pipe::stage1_train_image(subset, cell_cfg, &views);
        const auto art2 = pipe::stage2_train_cmpg(subset, art1.checkpoint_path, cell_cfg, &views);
        const auto art3 = pipe::stage3_train_student(subset, art1.checkpoint_path,
                                                     art2.checkpoint_path, cell_cfg, &views);
        const auto art_base = pipe::train_baseline(subset, cell_cfg);

        cells[ci].pointcmt_oa = evaluate(art3.checkpoint_path, test, cell_cfg).overall_accuracy;
        cells[ci].baseline_oa = evaluate(art_base.checkpoint_path, test, cell_cfg).overall_accuracy;
    });

    std::vector<DataEfficiencyRow> rows;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        std::vector<double> base, cmtv;
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            base.push_back(cells[fi * seeds.size() + si].baseline_oa);
            cmtv.push_back(cells[fi * seeds.size() + si].pointcmt_oa);
        }
        DataEfficiencyRow row;
        row.fraction = fractions[fi];
        std::tie(row.baseline_mean, row.baseline_std) = mean_std(base);
        std::tie(row.pointcmt_mean, row.pointcmt_std) = mean_std(cmtv);
        rows.push_back(row);
    }
    return rows;
}

void write_data_efficiency_csv(const std::string& path, const std::vector<DataEfficiencyRow>& rows,
                               const RunConfig& cfg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << "# config-hash: " << pipe::config_hash(cfg) << "\n";
    out << "fraction,baseline_mean,baseline_std,pointcmt_mean,pointcmt_std\n";
    for (const DataEfficiencyRow& r : rows)
        out << fmt_double(r.fraction) << "," << fmt_double(r.baseline_mean) << ","
            << fmt_double(r.baseline_std) << "," << fmt_double(r.pointcmt_mean) << ","
            << fmt_double(r.pointcmt_std) << "\n";
}

// ---------------------------------------------------------------------------
// Stage-III weight ablation

std::vector<AblationRow> ablation_run(const RunConfig& cfg) {
    const Dataset train = pipe::load_or_synth_train(cfg);
    const Dataset test = pipe::load_or_synth_test(cfg);
    const pipe::ViewCache views = pipe::project_all(train, cfg);

    const auto art1 = pipe::stage1_train_image(train, cfg, &views);
    const auto art2 = pipe::stage2_train_cmpg(train, art1.checkpoint_path, cfg, &views);

    std::vector<AblationRow> rows = {{"fe_only", cfg.alpha, 0.0, 0.0},
                                     {"ce_only", 0.0, cfg.beta, 0.0},
                                     {"fe_ce", cfg.alpha, cfg.beta, 0.0}};
    for (AblationRow& row : rows) {
        RunConfig run_cfg = cfg;
        run_cfg.alpha = row.alpha;
        run_cfg.beta = row.beta;
        run_cfg.out_dir = cfg.out_dir + "/ablation_" + row.name;
        const auto art = pipe::train_student(train, run_cfg, pipe::StudentMethod::PointCMT,
                                             art1.checkpoint_path, art2.checkpoint_path, row.name,
                                             &views);
        row.test_oa = evaluate(art.checkpoint_path, test, run_cfg).overall_accuracy;
    }
    return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        const RunConfig& cfg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << "# config-hash: " << pipe::config_hash(cfg) << "\n";
    out << "setting,alpha,beta,test_oa\n";
    for (const AblationRow& r : rows)
        out << r.name << "," << fmt_double(r.alpha) << "," << fmt_double(r.beta) << ","
            << fmt_double(r.test_oa) << "\n";
}

}  // namespace cmt::eval
