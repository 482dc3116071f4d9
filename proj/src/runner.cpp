#include "bosc/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "json.hpp"

namespace fs = std::filesystem;

namespace bosc::cli {

namespace {

data::DatasetManifest manifest_for(const ExperimentConfig& cfg) {
    if (!cfg.dataset.manifest.empty()) return data::read_manifest(cfg.dataset.manifest);
    const fs::path mpath = fs::path(cfg.dataset.out_dir) / "manifest.json";
    if (fs::exists(mpath)) {
        auto m = data::read_manifest(mpath);
        const auto sc = synth_config_from(cfg.dataset);
        if (m.generation_seed == sc.seed && m.preset == sc.preset && m.shape == sc.shape) return m;
        fail(Errc::invalid_config, "existing dataset at " + cfg.dataset.out_dir +
                                       " was generated with different parameters; "
                                       "point dataset.manifest at it explicitly or regenerate");
    }
    return data::synth_dataset(synth_config_from(cfg.dataset));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) fail(Errc::io_error, "cannot write " + path.string());
    out << text;
}

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string sanitize_tag(std::string s) {
    for (auto& c : s)
        if (c == '=' || c == '.') c = '-';
    return s;
}

void write_summary_json(const fs::path& path, const metrics::EvalSummary& s, const ckpt::Checkpoint& c,
                        const std::string& dataset_label, const std::string& robustness_tag) {
    nlohmann::ordered_json j;
    j["method"] = std::string(train::mode_name(c.mode)) + "/" + s.score_kind;
    j["mode"] = train::mode_name(c.mode);
    j["score_kind"] = s.score_kind;
    j["dataset"] = dataset_label;
    j["robustness"] = robustness_tag;
    j["seed"] = c.seed;
    j["alpha"] = c.alpha;
    j["target_fpr"] = s.target_fpr;
    j["nu"] = s.nu;
    j["accuracy"] = s.accuracy;
    j["au_roc"] = s.au_roc;
    j["eer"] = s.eer;
    j["au_oscr"] = s.au_oscr;
    j["tpr_at_fpr"] = s.tpr_at_fpr;
    j["ccr_at_fpr"] = s.ccr_at_fpr;
    j["n_in_set"] = s.n_in_set;
    j["n_out_of_set"] = s.n_out_of_set;
    j["metadata"] = {{"oscr_axes", "ccr_vs_fnr"},
                     {"out_of_set_event", "positive"},
                     {"jpeg_like", "block-DCT quantization approximation, no entropy coding"},
                     {"nu_calibration", "in-set validation split"},
                     {"config_snapshot", "config_snapshot.json"}};
    write_text(path, j.dump(2) + "\n");
}

}  // namespace

backdoor::TriggerSet resolve_triggers(const TrainSection& ts, int n_classes,
                                      const std::array<int, 3>& shape) {
    if (!ts.trigger_dir.empty()) return backdoor::load_triggers(ts.trigger_dir, n_classes, shape);
    return backdoor::generate_default_triggers(n_classes, shape, ts.trigger_seed);
}

std::vector<infer::ScoreKind> resolve_score_kinds(const std::string& score, train::Mode mode) {
    using infer::ScoreKind;
    if (score == "all")
        return {ScoreKind::CLS_M, ScoreKind::TLS_M, ScoreKind::MLS_M, ScoreKind::MLS, ScoreKind::MSP};
    if (score.empty() || score == "default")
        return {mode == train::Mode::Baseline ? ScoreKind::MLS : infer::kDefaultScore};
    return {infer::score_kind_from_name(score)};
}

data::DatasetManifest cmd_gen_data(const ExperimentConfig& cfg) {
    return data::synth_dataset(synth_config_from(cfg.dataset));
}

RunArtifacts cmd_train(const ExperimentConfig& cfg) {
    const auto manifest = manifest_for(cfg);
    const auto dataset = data::load_dataset(manifest);

    RunArtifacts art;
    art.run_dir = resolve_output_dir(cfg.report.out_dir);
    fs::create_directories(art.run_dir);
    art.config_snapshot = art.run_dir / "config_snapshot.json";
    write_text(art.config_snapshot, config_snapshot(cfg));
    art.seed = cfg.train.cfg.seed;

    nn::ModelConfig mc;
    mc.input_shape = dataset.shape;
    mc.conv_channels = cfg.model.conv_channels;
    mc.kernel = cfg.model.kernel;
    mc.dense_hidden = cfg.model.dense_hidden;
    mc.num_outputs = dataset.n_classes + 1;

    const bool bosc_mode = cfg.train.cfg.mode == train::Mode::Bosc;
    backdoor::TriggerSet triggers;
    if (bosc_mode) triggers = resolve_triggers(cfg.train, dataset.n_classes, dataset.shape);

    const auto out = train::train(dataset, mc, cfg.train.cfg, bosc_mode ? &triggers : nullptr);

    ckpt::Checkpoint c;
    c.model = out.model;
    c.stats = out.stats;
    c.mode = cfg.train.cfg.mode;
    c.alpha = cfg.train.cfg.inject.alpha;
    c.trigger_digest = bosc_mode ? backdoor::trigger_digest(triggers) : 0;
    c.trigger_source = bosc_mode ? triggers.source : "";
    c.seed = cfg.train.cfg.seed;
    c.class_names = dataset.class_names;
    art.checkpoint = art.run_dir / "checkpoint.bosc";
    ckpt::save_checkpoint(art.checkpoint, c);
    train::write_train_report_csv((art.run_dir / "train_report.csv").string(), out.report);
    return art;
}

RunArtifacts cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint_path,
                      const std::optional<data::ProcessingOp>& robustness) {
    const auto c = ckpt::load_checkpoint(checkpoint_path);
    const auto manifest = manifest_for(cfg);
    auto dataset = data::load_dataset(manifest);
    if (dataset.n_classes != c.model.num_classes())
        fail(Errc::invalid_config, "checkpoint expects N=" + std::to_string(c.model.num_classes()) +
                                       " but dataset has N=" + std::to_string(dataset.n_classes));

    const auto kinds = resolve_score_kinds(cfg.inference.score, c.mode);
    bool needs_matrix = false;
    for (auto k : kinds) needs_matrix = needs_matrix || infer::score_needs_matrix(k);

    backdoor::TriggerSet triggers;
    const backdoor::TriggerSet* trig_ptr = nullptr;
    if (needs_matrix) {
        triggers = resolve_triggers(cfg.train, dataset.n_classes, dataset.shape);
        ckpt::validate_trigger_binding(c, triggers);
        trig_ptr = &triggers;
    }

    const double alpha = cfg.inference.alpha.value_or(c.alpha);
    const int threads = cfg.inference.threads;

    RunArtifacts art;
    art.run_dir = resolve_output_dir(cfg.report.out_dir);
    fs::create_directories(art.run_dir);
    art.config_snapshot = art.run_dir / "config_snapshot.json";
    write_text(art.config_snapshot, config_snapshot(cfg));
    art.checkpoint = checkpoint_path;
    art.seed = c.seed;

    // Threshold calibration on the in-set validation split (clean images).
    const auto val_records = infer::classify_dataset_multi(c.model, trig_ptr, c.stats, dataset.val, alpha,
                                                           kinds, {0.0}, threads);
    std::vector<double> nus(kinds.size());
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        std::vector<double> scores;
        scores.reserve(val_records[k].size());
        for (const auto& r : val_records[k]) scores.push_back(r.xi);
        nus[k] = metrics::threshold_at_fpr(scores, cfg.inference.target_fpr);
    }

    // Optional robustness processing of the test inputs; trigger injection
    // happens after processing, inside the test procedure.
    std::string tag;
    if (robustness) {
        tag = sanitize_tag(data::processing_op_name(*robustness));
        for (auto& s : dataset.test) s.image = data::process_image(s.image, *robustness);
    }

    const auto records = infer::classify_dataset_multi(c.model, trig_ptr, c.stats, dataset.test, alpha,
                                                       kinds, nus, threads);

    const std::string dataset_label = manifest.preset.empty() ? manifest.digest : manifest.preset;
    std::string summary_csv =
        "method,dataset,robustness,score_kind,accuracy,au_roc,eer,au_oscr,tpr_at_fpr,ccr_at_fpr,nu,seed\n";
    const bool want_json = std::count(cfg.report.formats.begin(), cfg.report.formats.end(), "json") > 0;
    const bool want_csv = std::count(cfg.report.formats.begin(), cfg.report.formats.end(), "csv") > 0;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        const std::string kname = infer::score_kind_name(kinds[k]);
        const std::string suffix = tag.empty() ? kname : kname + "_" + tag;
        infer::write_score_csv((art.run_dir / ("scores_" + suffix + ".csv")).string(), records[k]);
        const auto curve = metrics::roc_curve(records[k]);
        metrics::write_curve_csv((art.run_dir / ("roc_" + suffix + ".csv")).string(), curve);
        metrics::write_curve_csv((art.run_dir / ("oscr_" + suffix + ".csv")).string(),
                                 metrics::oscr_curve(records[k]));
        const auto summary = metrics::summarize(records[k], cfg.inference.target_fpr, nus[k]);
        const auto confusion =
            metrics::confusion_with_rejection(records[k], dataset.n_classes, nus[k]);
        metrics::write_confusion_csv((art.run_dir / ("confusion_" + suffix + ".csv")).string(), confusion,
                                     dataset.class_names);
        if (want_json) {
            const fs::path spath = art.run_dir / ("summary_" + suffix + ".json");
            write_summary_json(spath, summary, c, dataset_label, tag);
            art.summaries.push_back(spath);
        }
        summary_csv += std::string(train::mode_name(c.mode)) + "/" + kname + "," + dataset_label + "," +
                       tag + "," + kname + "," + fmt(summary.accuracy) + "," + fmt(summary.au_roc) + "," +
                       fmt(summary.eer) + "," + fmt(summary.au_oscr) + "," + fmt(summary.tpr_at_fpr) + "," +
                       fmt(summary.ccr_at_fpr) + "," + fmt(summary.nu) + "," + std::to_string(c.seed) + "\n";
    }
    if (want_csv)
        write_text(art.run_dir / (tag.empty() ? std::string("summary.csv") : "summary_" + tag + ".csv"),
                   summary_csv);
    return art;
}

void cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
    struct Cell {
        double acc = 0, auroc = 0, eer = 0, auoscr = 0;
    };
    std::map<std::string, std::map<std::string, Cell>> table;  // method -> config -> cell
    std::vector<std::string> config_order;
    bool any = false;
    for (const auto& dir : run_dirs) {
        bool found = false;
        if (fs::is_directory(dir)) {
            for (const auto& entry : fs::directory_iterator(dir)) {
                const auto name = entry.path().filename().string();
                if (name.rfind("summary_", 0) != 0 || entry.path().extension() != ".json") continue;
                std::ifstream in(entry.path());
                nlohmann::json j;
                try {
                    in >> j;
                } catch (const std::exception&) {
                    std::cerr << "warning: unreadable summary " << entry.path() << ", skipped\n";
                    continue;
                }
                const std::string method = j.value("method", "?");
                std::string config = j.value("dataset", "?");
                const std::string rob = j.value("robustness", "");
                if (!rob.empty()) config += "+" + rob;
                Cell cell{j.value("accuracy", 0.0), j.value("au_roc", 0.0), j.value("eer", 0.0),
                          j.value("au_oscr", 0.0)};
                table[method][config] = cell;
                if (std::find(config_order.begin(), config_order.end(), config) == config_order.end())
                    config_order.push_back(config);
                found = true;
                any = true;
            }
        }
        if (!found) std::cerr << "warning: no summaries in " << dir << ", skipped\n";
    }
    if (!any) fail(Errc::eval_error, "no run summaries found");

    fs::create_directories(out_dir);
    std::string csv = "method";
    for (const auto& cfg : config_order)
        csv += "," + cfg + "_accuracy," + cfg + "_au_roc," + cfg + "_au_oscr";
    csv += ",avg_accuracy,avg_au_roc,avg_eer,avg_au_oscr\n";
    std::string md = "| Method |";
    for (const auto& cfg : config_order) md += " " + cfg + " Acc | AU-ROC | AU-OSCR |";
    md += " Avg Acc | Avg AU-ROC | Avg EER | Avg AU-OSCR |\n|---|";
    for (std::size_t i = 0; i < config_order.size(); ++i) md += "---|---|---|";
    md += "---|---|---|---|\n";

    char buf[64];
    auto pct = [&buf](double v) {
        std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
        return std::string(buf);
    };
    for (const auto& [method, row] : table) {
        csv += method;
        md += "| " + method + " |";
        Cell avg;
        int n = 0;
        for (const auto& cfg : config_order) {
            const auto it = row.find(cfg);
            if (it == row.end()) {
                csv += ",,,";
                md += " - | - | - |";
                continue;
            }
            const Cell& c = it->second;
            csv += "," + fmt(c.acc) + "," + fmt(c.auroc) + "," + fmt(c.auoscr);
            md += " " + pct(c.acc) + " | " + pct(c.auroc) + " | " + pct(c.auoscr) + " |";
            avg.acc += c.acc;
            avg.auroc += c.auroc;
            avg.eer += c.eer;
            avg.auoscr += c.auoscr;
            ++n;
        }
        if (n > 0) {
            avg.acc /= n;
            avg.auroc /= n;
            avg.eer /= n;
            avg.auoscr /= n;
        }
        csv += "," + fmt(avg.acc) + "," + fmt(avg.auroc) + "," + fmt(avg.eer) + "," + fmt(avg.auoscr) + "\n";
        md += " " + pct(avg.acc) + " | " + pct(avg.auroc) + " | " + pct(avg.eer) + " | " + pct(avg.auoscr) +
              " |\n";
    }
    write_text(out_dir / "report.csv", csv);
    write_text(out_dir / "report.md", md);
}

}  // namespace bosc::cli
