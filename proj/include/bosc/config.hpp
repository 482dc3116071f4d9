#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bosc/data.hpp"
#include "bosc/inference.hpp"
#include "bosc/nn.hpp"
#include "bosc/training.hpp"

// Experiment configuration: a JSON file with sections mirroring the module
// configs. Validation is all-or-nothing; unknown keys and malformed fields
// are errors, never silently defaulted.
namespace bosc::cli {

struct DatasetSection {
    std::string manifest;  // path to manifest.json; empty when synthesizing
    // synth spec (used by gen-data, or by train/eval when manifest is empty)
    std::string out_dir = "data/synth";
    std::string preset = "s1-analog";
    std::uint64_t seed = 1234;
    double amplitude = 0.04;
    data::SplitCounts counts;
    int image_size = 32;
};

struct ModelSection {
    std::vector<int> conv_channels{8, 16};
    int kernel = 3;
    int dense_hidden = 64;
};

struct TrainSection {
    train::TrainConfig cfg;
    std::string trigger_dir;          // empty -> procedural triggers
    std::uint64_t trigger_seed = 99;
};

struct InferenceSection {
    // "default" resolves per checkpoint mode: cls-m for bosc, mls for the
    // baseline; explicit kinds and "all" are also accepted.
    std::string score = "default";
    std::optional<double> alpha;  // default: the checkpoint's training alpha
    double target_fpr = 0.05;
    int threads = 0;  // 0 = hardware default
};

struct ReportSection {
    std::string out_dir = "runs/run";
    std::vector<std::string> formats{"csv", "json"};
};

struct ExperimentConfig {
    DatasetSection dataset;
    ModelSection model;
    TrainSection train;
    InferenceSection inference;
    ReportSection report;
};

// Strict parse; throws Errc::invalid_config on unknown keys, wrong types, or
// out-of-range values.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& json_text);

// The exact configuration used for a run, echoed into the run directory.
std::string config_snapshot(const ExperimentConfig& cfg);

// Resolves the out_dir against the BOSC_OUTPUT_ROOT environment variable
// (relative paths only).
std::filesystem::path resolve_output_dir(const std::string& out_dir);

data::SynthConfig synth_config_from(const DatasetSection& ds);

}  // namespace bosc::cli
