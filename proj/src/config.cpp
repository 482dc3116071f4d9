#include "bosc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace bosc::cli {

namespace {

[[noreturn]] void bad(const std::string& where, const std::string& what) {
    fail(Errc::invalid_config, "config." + where + ": " + what);
}

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) bad(where, "expected an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) bad(where, "unknown key '" + key + "'");
    }
}

template <typename T>
T get_or(const json& j, const std::string& where, const std::string& key, T dflt) {
    if (!j.contains(key)) return dflt;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        bad(where, "field '" + key + "' has the wrong type");
    }
}

double get_range(const json& j, const std::string& where, const std::string& key, double dflt, double lo,
                 double hi) {
    const double v = get_or<double>(j, where, key, dflt);
    if (v < lo || v > hi)
        bad(where, "field '" + key + "' = " + std::to_string(v) + " outside [" + std::to_string(lo) + "," +
                       std::to_string(hi) + "]");
    return v;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        fail(Errc::invalid_config, "config is not valid JSON: " + std::string(e.what()));
    }
    check_keys(j, "", {"dataset", "model", "train", "inference", "report"});
    ExperimentConfig cfg;

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        check_keys(d, "dataset",
                   {"manifest", "out_dir", "preset", "seed", "amplitude", "image_size", "train_per_class",
                    "val_per_class", "test_per_class", "test_out_per_class"});
        cfg.dataset.manifest = get_or<std::string>(d, "dataset", "manifest", "");
        cfg.dataset.out_dir = get_or<std::string>(d, "dataset", "out_dir", cfg.dataset.out_dir);
        cfg.dataset.preset = get_or<std::string>(d, "dataset", "preset", cfg.dataset.preset);
        cfg.dataset.seed = get_or<std::uint64_t>(d, "dataset", "seed", cfg.dataset.seed);
        cfg.dataset.amplitude = get_range(d, "dataset", "amplitude", cfg.dataset.amplitude, 0.0, 0.0999);
        cfg.dataset.image_size = static_cast<int>(get_range(d, "dataset", "image_size", 32, 16, 128));
        cfg.dataset.counts.train =
            static_cast<int>(get_range(d, "dataset", "train_per_class", cfg.dataset.counts.train, 1, 100000));
        cfg.dataset.counts.val =
            static_cast<int>(get_range(d, "dataset", "val_per_class", cfg.dataset.counts.val, 1, 100000));
        cfg.dataset.counts.test =
            static_cast<int>(get_range(d, "dataset", "test_per_class", cfg.dataset.counts.test, 1, 100000));
        cfg.dataset.counts.test_out = static_cast<int>(
            get_range(d, "dataset", "test_out_per_class", cfg.dataset.counts.test_out, 1, 100000));
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model", {"conv_channels", "kernel", "dense_hidden"});
        cfg.model.conv_channels =
            get_or<std::vector<int>>(m, "model", "conv_channels", cfg.model.conv_channels);
        if (cfg.model.conv_channels.empty() || cfg.model.conv_channels.size() > 4)
            bad("model", "conv_channels needs 1..4 entries");
        for (int ch : cfg.model.conv_channels)
            if (ch < 1 || ch > 256) bad("model", "conv channel count outside [1,256]");
        cfg.model.kernel = static_cast<int>(get_range(m, "model", "kernel", cfg.model.kernel, 1, 7));
        if (cfg.model.kernel % 2 == 0) bad("model", "kernel must be odd");
        cfg.model.dense_hidden =
            static_cast<int>(get_range(m, "model", "dense_hidden", cfg.model.dense_hidden, 0, 1024));
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, "train",
                   {"mode", "epochs", "batch_size", "base_lr", "alpha", "gamma", "beta", "eta", "lambda1",
                    "lambda2", "flip_prob", "jpeg_prob", "jpeg_quality_min", "jpeg_quality_max", "seed",
                    "trigger_dir", "trigger_seed"});
        auto& tc = cfg.train.cfg;
        tc.mode = train::mode_from_name(get_or<std::string>(t, "train", "mode", "bosc"));
        tc.epochs = static_cast<int>(get_range(t, "train", "epochs", tc.epochs, 1, 1000));
        tc.batch_size = static_cast<int>(get_range(t, "train", "batch_size", tc.batch_size, 1, 4096));
        tc.base_lr = get_range(t, "train", "base_lr", tc.base_lr, 1e-9, 1.0);
        tc.inject.alpha = get_range(t, "train", "alpha", tc.inject.alpha, 0.0, 1.0);
        tc.inject.gamma = get_range(t, "train", "gamma", tc.inject.gamma, 0.0, 0.5);
        tc.inject.beta = get_range(t, "train", "beta", tc.inject.beta, 0.0, 1.0);
        tc.inject.eta = get_range(t, "train", "eta", tc.inject.eta, 0.0, 1.0);
        tc.loss.lambda1 = get_range(t, "train", "lambda1", tc.loss.lambda1, 0.0, 100.0);
        tc.loss.lambda2 = get_range(t, "train", "lambda2", tc.loss.lambda2, 0.0, 100.0);
        tc.flip_prob = get_range(t, "train", "flip_prob", tc.flip_prob, 0.0, 1.0);
        tc.jpeg_prob = get_range(t, "train", "jpeg_prob", tc.jpeg_prob, 0.0, 1.0);
        tc.jpeg_quality_min = get_range(t, "train", "jpeg_quality_min", tc.jpeg_quality_min, 1.0, 100.0);
        tc.jpeg_quality_max = get_range(t, "train", "jpeg_quality_max", tc.jpeg_quality_max, 1.0, 100.0);
        tc.seed = get_or<std::uint64_t>(t, "train", "seed", tc.seed);
        cfg.train.trigger_dir = get_or<std::string>(t, "train", "trigger_dir", "");
        cfg.train.trigger_seed = get_or<std::uint64_t>(t, "train", "trigger_seed", cfg.train.trigger_seed);
        tc.validate();
    }

    if (j.contains("inference")) {
        const json& i = j.at("inference");
        check_keys(i, "inference", {"score", "alpha", "target_fpr", "threads"});
        cfg.inference.score = get_or<std::string>(i, "inference", "score", cfg.inference.score);
        if (cfg.inference.score != "all" && cfg.inference.score != "default")
            infer::score_kind_from_name(cfg.inference.score);
        if (i.contains("alpha")) cfg.inference.alpha = get_range(i, "inference", "alpha", 0.1, 0.0, 1.0);
        cfg.inference.target_fpr = get_range(i, "inference", "target_fpr", cfg.inference.target_fpr, 0.0, 1.0);
        cfg.inference.threads = static_cast<int>(get_range(i, "inference", "threads", 0, 0, 64));
    }

    if (j.contains("report")) {
        const json& r = j.at("report");
        check_keys(r, "report", {"out_dir", "formats"});
        cfg.report.out_dir = get_or<std::string>(r, "report", "out_dir", cfg.report.out_dir);
        cfg.report.formats = get_or<std::vector<std::string>>(r, "report", "formats", cfg.report.formats);
        for (const auto& f : cfg.report.formats)
            if (f != "csv" && f != "json") bad("report", "unknown format '" + f + "'");
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::invalid_config, "cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

std::string config_snapshot(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["dataset"] = {{"manifest", cfg.dataset.manifest},
                    {"out_dir", cfg.dataset.out_dir},
                    {"preset", cfg.dataset.preset},
                    {"seed", cfg.dataset.seed},
                    {"amplitude", cfg.dataset.amplitude},
                    {"image_size", cfg.dataset.image_size},
                    {"train_per_class", cfg.dataset.counts.train},
                    {"val_per_class", cfg.dataset.counts.val},
                    {"test_per_class", cfg.dataset.counts.test},
                    {"test_out_per_class", cfg.dataset.counts.test_out}};
    j["model"] = {{"conv_channels", cfg.model.conv_channels},
                  {"kernel", cfg.model.kernel},
                  {"dense_hidden", cfg.model.dense_hidden}};
    const auto& tc = cfg.train.cfg;
    j["train"] = {{"mode", train::mode_name(tc.mode)},
                  {"epochs", tc.epochs},
                  {"batch_size", tc.batch_size},
                  {"base_lr", tc.base_lr},
                  {"alpha", tc.inject.alpha},
                  {"gamma", tc.inject.gamma},
                  {"beta", tc.inject.beta},
                  {"eta", tc.inject.eta},
                  {"lambda1", tc.loss.lambda1},
                  {"lambda2", tc.loss.lambda2},
                  {"flip_prob", tc.flip_prob},
                  {"jpeg_prob", tc.jpeg_prob},
                  {"jpeg_quality_min", tc.jpeg_quality_min},
                  {"jpeg_quality_max", tc.jpeg_quality_max},
                  {"seed", tc.seed},
                  {"trigger_dir", cfg.train.trigger_dir},
                  {"trigger_seed", cfg.train.trigger_seed}};
    j["inference"] = {{"score", cfg.inference.score},
                      {"target_fpr", cfg.inference.target_fpr},
                      {"threads", cfg.inference.threads}};
    if (cfg.inference.alpha) j["inference"]["alpha"] = *cfg.inference.alpha;
    j["report"] = {{"out_dir", cfg.report.out_dir}, {"formats", cfg.report.formats}};
    return j.dump(2) + "\n";
}

fs::path resolve_output_dir(const std::string& out_dir) {
    fs::path p(out_dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv("BOSC_OUTPUT_ROOT")) p = fs::path(root) / p;
    }
    return p;
}

data::SynthConfig synth_config_from(const DatasetSection& ds) {
    data::SynthConfig sc;
    sc.out_dir = ds.out_dir;
    sc.preset = ds.preset;
    sc.seed = ds.seed;
    sc.counts = ds.counts;
    sc.shape = {3, ds.image_size, ds.image_size};
    sc.specs = data::preset_specs(ds.preset, ds.seed, ds.amplitude);
    return sc;
}

}  // namespace bosc::cli
