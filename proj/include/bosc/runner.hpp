#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bosc/checkpoint.hpp"
#include "bosc/config.hpp"
#include "bosc/data.hpp"
#include "bosc/inference.hpp"
#include "bosc/metrics.hpp"

// Command implementations behind the CLI: dataset generation, training,
// evaluation with score/curve/summary emission, and the cross-run report.
namespace bosc::cli {

struct RunArtifacts {
    std::filesystem::path run_dir;
    std::filesystem::path checkpoint;
    std::filesystem::path config_snapshot;
    std::vector<std::filesystem::path> summaries;
    std::uint64_t seed = 0;
};

data::DatasetManifest cmd_gen_data(const ExperimentConfig& cfg);

RunArtifacts cmd_train(const ExperimentConfig& cfg);

// kinds resolved from cfg.inference.score ("all" expands to the full set);
// robustness applies the processing op to every test image before inference
// (triggers are injected afterwards, inside the test procedure).
RunArtifacts cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint_path,
                      const std::optional<data::ProcessingOp>& robustness = std::nullopt);

void cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

// Loads triggers per the train section: from a directory when given,
// procedurally otherwise.
backdoor::TriggerSet resolve_triggers(const TrainSection& ts, int n_classes,
                                      const std::array<int, 3>& shape);

std::vector<infer::ScoreKind> resolve_score_kinds(const std::string& score, train::Mode mode);

}  // namespace bosc::cli
