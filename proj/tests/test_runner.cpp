#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "bosc/runner.hpp"
#include "doctest.h"

using namespace bosc;
namespace fs = std::filesystem;

namespace {

// Micro experiment: tiny dataset, tiny model, one epoch. Exercises the whole
// artifact pipeline, not the learning quality.
cli::ExperimentConfig micro_config(const fs::path& work) {
    cli::ExperimentConfig cfg;
    cfg.dataset.out_dir = (work / "data").string();
    cfg.dataset.seed = 4321;
    cfg.dataset.image_size = 16;
    cfg.dataset.counts = {8, 4, 4, 4};
    cfg.model.conv_channels = {4};
    cfg.model.dense_hidden = 8;
    cfg.train.cfg.epochs = 1;
    cfg.train.cfg.batch_size = 8;
    cfg.train.cfg.base_lr = 1e-3;
    cfg.train.cfg.seed = 9;
    cfg.report.out_dir = (work / "run").string();
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cmd_gen_data: deterministic digest, created directories") {
    const fs::path work = fs::temp_directory_path() / "bosc_runner_gen";
    fs::remove_all(work);
    auto cfg = micro_config(work);
    const auto m1 = cli::cmd_gen_data(cfg);
    CHECK(fs::exists(m1.root / "manifest.json"));
    const auto again = data::read_manifest(m1.root / "manifest.json");
    CHECK(again.digest == m1.digest);

    // regeneration into a fresh dir with the same seed gives the same digest
    cfg.dataset.out_dir = (work / "data2").string();
    const auto m2 = cli::cmd_gen_data(cfg);
    CHECK(m2.digest == m1.digest);
    fs::remove_all(work);
}

TEST_CASE("cmd_train + cmd_eval: artifacts, snapshot, checkpoint round trip") {
    const fs::path work = fs::temp_directory_path() / "bosc_runner_train";
    fs::remove_all(work);
    auto cfg = micro_config(work);

    const auto tart = cli::cmd_train(cfg);
    CHECK(fs::exists(tart.checkpoint));
    CHECK(fs::exists(tart.run_dir / "config_snapshot.json"));
    CHECK(fs::exists(tart.run_dir / "train_report.csv"));

    // snapshot parses back to an identical configuration
    const auto echo = cli::load_config(tart.run_dir / "config_snapshot.json");
    CHECK(cli::config_snapshot(echo) == cli::config_snapshot(cfg));

    cfg.inference.score = "all";
    cfg.report.out_dir = (work / "eval").string();
    const auto eart = cli::cmd_eval(cfg, tart.checkpoint);
    for (const char* kind : {"cls-m", "tls-m", "mls-m", "mls", "msp"}) {
        CHECK(fs::exists(eart.run_dir / (std::string("scores_") + kind + ".csv")));
        CHECK(fs::exists(eart.run_dir / (std::string("roc_") + kind + ".csv")));
        CHECK(fs::exists(eart.run_dir / (std::string("oscr_") + kind + ".csv")));
        CHECK(fs::exists(eart.run_dir / (std::string("summary_") + kind + ".json")));
        CHECK(fs::exists(eart.run_dir / (std::string("confusion_") + kind + ".csv")));
    }
    CHECK(fs::exists(eart.run_dir / "summary.csv"));
    CHECK(eart.summaries.size() == 5);

    // score dump has the documented header
    const auto dump = slurp(eart.run_dir / "scores_cls-m.csv");
    CHECK(dump.rfind("sample_id,true_label,y_star,score_kind,xi,decision_at_nu\n", 0) == 0);

    // robustness evaluation tags its artifacts; triggers applied after processing
    cfg.inference.score = "default";
    cfg.report.out_dir = (work / "rob").string();
    const auto rart = cli::cmd_eval(cfg, tart.checkpoint, data::ProcessingOp::gaussian_blur(1.0));
    CHECK(fs::exists(rart.run_dir / "summary_cls-m_blur-1.json"));
    fs::remove_all(work);
}

TEST_CASE("cmd_eval: trigger digest validation and N mismatch") {
    const fs::path work = fs::temp_directory_path() / "bosc_runner_guard";
    fs::remove_all(work);
    auto cfg = micro_config(work);
    const auto tart = cli::cmd_train(cfg);

    // wrong trigger seed -> digest mismatch
    auto bad = cfg;
    bad.train.trigger_seed = 1000;
    bad.report.out_dir = (work / "eval_bad").string();
    CHECK_THROWS_AS((void)cli::cmd_eval(bad, tart.checkpoint), Error);

    // matrix scores on a baseline checkpoint are refused
    auto basecfg = cfg;
    basecfg.train.cfg.mode = train::Mode::Baseline;
    basecfg.report.out_dir = (work / "base").string();
    const auto bart = cli::cmd_train(basecfg);
    auto evalcfg = basecfg;
    evalcfg.inference.score = "cls-m";
    CHECK_THROWS_AS((void)cli::cmd_eval(evalcfg, bart.checkpoint), Error);
    // the mode default (mls) works without triggers
    evalcfg.inference.score = "default";
    evalcfg.report.out_dir = (work / "base_eval").string();
    const auto beart = cli::cmd_eval(evalcfg, bart.checkpoint);
    CHECK(fs::exists(beart.run_dir / "summary_mls.json"));
    fs::remove_all(work);
}

TEST_CASE("cmd_report: merges runs, averages, warns on missing summaries") {
    const fs::path work = fs::temp_directory_path() / "bosc_runner_report";
    fs::remove_all(work);
    auto cfg = micro_config(work);
    const auto tart = cli::cmd_train(cfg);
    cfg.inference.score = "default";
    cfg.report.out_dir = (work / "eval1").string();
    const auto e1 = cli::cmd_eval(cfg, tart.checkpoint);

    auto basecfg = micro_config(work);
    basecfg.train.cfg.mode = train::Mode::Baseline;
    basecfg.report.out_dir = (work / "base_run").string();
    const auto bart = cli::cmd_train(basecfg);
    basecfg.report.out_dir = (work / "eval2").string();
    const auto e2 = cli::cmd_eval(basecfg, bart.checkpoint);

    const fs::path empty_dir = work / "empty";
    fs::create_directories(empty_dir);
    cli::cmd_report({e1.run_dir, e2.run_dir, empty_dir}, work / "report");
    const auto md = slurp(work / "report" / "report.md");
    const auto csv = slurp(work / "report" / "report.csv");
    CHECK(md.find("bosc/cls-m") != std::string::npos);
    CHECK(md.find("baseline/mls") != std::string::npos);
    CHECK(csv.find("avg_au_roc") != std::string::npos);

    CHECK_THROWS_AS(cli::cmd_report({empty_dir}, work / "report2"), Error);
    fs::remove_all(work);
}
