#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bosc/backdoor.hpp"
#include "bosc/common.hpp"
#include "bosc/data.hpp"
#include "bosc/nn.hpp"
#include "bosc/rng.hpp"

// The training loop: per-batch taint plan, trigger injection, mixup, flip and
// compression augmentation, the three-term loss over clean/matched/mismatched
// partitions, and the plain baseline mode.
namespace bosc::train {

enum class Mode { Bosc, Baseline };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct TrainConfig {
    int epochs = 15;
    int batch_size = 32;
    double base_lr = 1e-4;
    backdoor::InjectionConfig inject;  // alpha=0.1, gamma=0.1, beta=0.15, eta=0.1
    nn::LossConfig loss;               // lambda1 = lambda2 = 0.1
    double flip_prob = 0.5;
    double jpeg_prob = 0.5;
    double jpeg_quality_min = 70.0;
    double jpeg_quality_max = 100.0;
    std::uint64_t seed = 7;
    Mode mode = Mode::Bosc;

    // Baseline keeps the N+1-output net but never taints or mixes.
    backdoor::InjectionConfig effective_inject() const {
        backdoor::InjectionConfig c = inject;
        if (mode == Mode::Baseline) {
            c.gamma = 0.0;
            c.eta = 0.0;
        }
        return c;
    }

    void validate() const;
};

struct AugmentConfig {
    double flip_prob = 0.5;
    double jpeg_prob = 0.5;
    double quality_min = 70.0;
    double quality_max = 100.0;
};

struct LossBreakdown {
    double total = 0.0;
    double clean = 0.0;       // includes mixup samples (label unchanged)
    double matched = 0.0;     // already scaled by lambda1
    double mismatched = 0.0;  // already scaled by lambda2
};

struct ComplianceRates {
    double clean = 0.0;       // argmax phi(x) == y
    double mismatched = 0.0;  // argmax phi(x_{t_k}) == y over all k != y
    double matched = 0.0;     // argmax phi(x_{t_y}) == N+1
};

struct TrainReport {
    std::vector<double> lr;
    std::vector<double> loss_total, loss_clean, loss_matched, loss_mismatched;
    std::vector<double> val_accuracy;
    std::vector<ComplianceRates> compliance;
    std::vector<double> epoch_seconds;  // informational; excluded from determinism comparisons
    double total_seconds = 0.0;
    int threads = 1;
};

struct TrainOutput {
    nn::ClassifierF model;
    data::ChannelStats stats;
    TrainReport report;
};

// Direct evaluation of the three-term loss from logits; serves as the
// independent cross-check of the weighted cross-entropy path.
LossBreakdown bosc_loss(const TensorF& logits, const std::vector<int>& labels,
                        const backdoor::TaintPlan& plan, const nn::LossConfig& cfg);

// Horizontal flip with p, then compression with p at a quality drawn
// uniformly from [quality_min, quality_max].
TensorF augment(const TensorF& image, Rng& rng, const AugmentConfig& cfg);

// Trains a classifier on the in-set splits. `triggers` is required in bosc
// mode and ignored in baseline mode. Deterministic given (seed, config, data).
TrainOutput train(const data::DatasetSplits& dataset, const nn::ModelConfig& model_cfg,
                  const TrainConfig& cfg, const backdoor::TriggerSet* triggers);

// Fractions of validation samples following each of the three trained-model
// rules; rule (b) is measured over all N-1 mismatched triggers per sample.
ComplianceRates behavioral_compliance(const nn::ClassifierF& model, const backdoor::TriggerSet& triggers,
                                      const data::ChannelStats& stats,
                                      const std::vector<data::Sample>& val, double alpha);

void write_train_report_csv(const std::string& path, const TrainReport& report);

}  // namespace bosc::train
