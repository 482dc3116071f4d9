// bosc: train, evaluate, and report on backdoor-based open-set classifiers.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bosc/config.hpp"
#include "bosc/runner.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

bosc::cli::ExperimentConfig load_or_default(const std::string& config_path) {
    if (config_path.empty()) return bosc::cli::ExperimentConfig{};
    return bosc::cli::load_config(config_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BOSC: backdoor-based open-set classification"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "experiment config (JSON)")->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "synthesize a fingerprint dataset");
    std::string gen_preset;
    std::optional<std::uint64_t> gen_seed;
    std::string gen_out;
    gen->add_option("--preset", gen_preset, "s1-analog | s2-analog | s3-analog");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "output directory");

    // train
    auto* tr = app.add_subcommand("train", "train a classifier");
    std::string tr_mode;
    std::optional<std::uint64_t> tr_seed;
    std::string tr_out;
    tr->add_option("--mode", tr_mode, "bosc | baseline");
    tr->add_option("--seed", tr_seed, "training seed");
    tr->add_option("--out", tr_out, "run directory");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_checkpoint, ev_scores, ev_robustness, ev_out;
    std::optional<double> ev_fpr;
    ev->add_option("--checkpoint", ev_checkpoint, "checkpoint file")->required();
    ev->add_option("--scores", ev_scores, "msp|mls|mls-m|tls-m|cls-m|all");
    ev->add_option("--fpr", ev_fpr, "target FPR for threshold calibration");
    ev->add_option("--robustness", ev_robustness, "processing op, e.g. blur=1.0 or jpeg=80");
    ev->add_option("--out", ev_out, "run directory");

    // report
    auto* rp = app.add_subcommand("report", "merge run summaries into a comparison table");
    std::vector<std::string> rp_dirs;
    std::string rp_out = "report";
    rp->add_option("dirs", rp_dirs, "run directories")->required();
    rp->add_option("--out", rp_out, "report output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        bosc::cli::ExperimentConfig cfg;
        try {
            cfg = load_or_default(config_path);
            if (gen->parsed() || tr->parsed() || ev->parsed()) {
                if (!gen_preset.empty()) cfg.dataset.preset = gen_preset;
                if (gen_seed) cfg.dataset.seed = *gen_seed;
                if (!gen_out.empty()) cfg.dataset.out_dir = gen_out;
                if (!tr_mode.empty()) cfg.train.cfg.mode = bosc::train::mode_from_name(tr_mode);
                if (tr_seed) cfg.train.cfg.seed = *tr_seed;
                if (!tr_out.empty()) cfg.report.out_dir = tr_out;
                if (!ev_scores.empty()) cfg.inference.score = ev_scores;
                if (ev_fpr) cfg.inference.target_fpr = *ev_fpr;
                if (!ev_out.empty()) cfg.report.out_dir = ev_out;
                cfg.train.cfg.validate();
            }
        } catch (const bosc::Error& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kExitUsage;
        }

        if (gen->parsed()) {
            const auto manifest = bosc::cli::cmd_gen_data(cfg);
            std::cout << (manifest.root / "manifest.json").string() << "\n";
        } else if (tr->parsed()) {
            const auto art = bosc::cli::cmd_train(cfg);
            std::cout << art.checkpoint.string() << "\n";
        } else if (ev->parsed()) {
            std::optional<bosc::data::ProcessingOp> rob;
            if (!ev_robustness.empty()) {
                try {
                    rob = bosc::data::parse_processing_op(ev_robustness);
                } catch (const bosc::Error& e) {
                    std::cerr << "config error: " << e.what() << "\n";
                    return kExitUsage;
                }
            }
            const auto art = bosc::cli::cmd_eval(cfg, ev_checkpoint, rob);
            for (const auto& s : art.summaries) std::cout << s.string() << "\n";
            std::cout << art.run_dir.string() << "\n";
        } else if (rp->parsed()) {
            std::vector<std::filesystem::path> dirs(rp_dirs.begin(), rp_dirs.end());
            bosc::cli::cmd_report(dirs, rp_out);
            std::cout << (std::filesystem::path(rp_out) / "report.md").string() << "\n";
        }
    } catch (const bosc::Error& e) {
        const bool usage = e.code() == bosc::Errc::invalid_config || e.code() == bosc::Errc::invalid_argument;
        std::cerr << (usage ? "config error: " : "error: ") << e.what() << "\n";
        return usage ? kExitUsage : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
