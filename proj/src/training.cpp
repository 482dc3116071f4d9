#include "bosc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "bosc/inference.hpp"

namespace bosc::train {

const char* mode_name(Mode m) { return m == Mode::Bosc ? "bosc" : "baseline"; }

Mode mode_from_name(const std::string& s) {
    if (s == "bosc") return Mode::Bosc;
    if (s == "baseline") return Mode::Baseline;
    fail(Errc::invalid_config, "unknown training mode: " + s);
}

void TrainConfig::validate() const {
    if (epochs < 1) fail(Errc::invalid_config, "epochs must be >= 1");
    if (batch_size < 1) fail(Errc::invalid_config, "batch size must be >= 1");
    if (base_lr <= 0) fail(Errc::invalid_config, "base learning rate must be > 0");
    if (flip_prob < 0 || flip_prob > 1 || jpeg_prob < 0 || jpeg_prob > 1)
        fail(Errc::invalid_config, "augmentation probabilities must lie in [0,1]");
    if (jpeg_quality_min < 1 || jpeg_quality_max > 100 || jpeg_quality_min > jpeg_quality_max)
        fail(Errc::invalid_config, "jpeg quality range must satisfy 1 <= min <= max <= 100");
    effective_inject().validate();
    loss.validate();
}

LossBreakdown bosc_loss(const TensorF& logits, const std::vector<int>& labels,
                        const backdoor::TaintPlan& plan, const nn::LossConfig& cfg) {
    cfg.validate();
    const int batch = logits.shape[0];
    const int outputs = logits.shape[1];
    if (static_cast<int>(plan.entries.size()) != batch || static_cast<int>(labels.size()) != batch)
        fail(Errc::invalid_argument, "taint plan does not cover the batch");
    auto ce = [&](int sample, int target1) {
        const float* row = logits.data.data() + static_cast<std::size_t>(sample) * outputs;
        double mx = row[0];
        for (int j = 1; j < outputs; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0.0;
        for (int j = 0; j < outputs; ++j) sum += std::exp(row[j] - mx);
        return mx + std::log(sum) - static_cast<double>(row[target1 - 1]);
    };
    LossBreakdown b;
    for (int s = 0; s < batch; ++s) {
        switch (plan.entries[s].kind) {
            case backdoor::TaintKind::Matched:
                b.matched += cfg.lambda1 * ce(s, outputs);  // backdoor class N+1
                break;
            case backdoor::TaintKind::Mismatched:
                b.mismatched += cfg.lambda2 * ce(s, labels[s]);
                break;
            case backdoor::TaintKind::Clean:
            case backdoor::TaintKind::Mixup:
                b.clean += ce(s, labels[s]);
                break;
        }
    }
    b.total = b.clean + b.matched + b.mismatched;
    return b;
}

TensorF augment(const TensorF& image, Rng& rng, const AugmentConfig& cfg) {
    TensorF out = image;
    if (rng.bernoulli(cfg.flip_prob)) {
        const int ch = out.shape[0], h = out.shape[1], w = out.shape[2];
        for (int c = 0; c < ch; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w / 2; ++x)
                    std::swap(out.at3(c, y, x), out.at3(c, y, w - 1 - x));
    }
    if (rng.bernoulli(cfg.jpeg_prob)) {
        const double quality = rng.uniform(cfg.quality_min, cfg.quality_max);
        out = data::process_image(out, data::ProcessingOp::jpeg_like(quality));
    }
    return out;
}

namespace {

double closed_set_accuracy(const nn::ClassifierF& model, const data::ChannelStats& stats,
                           const std::vector<data::Sample>& val, int batch_size) {
    if (val.empty()) return 0.0;
    std::size_t correct = 0, total = 0, pos = 0;
    while (pos < val.size()) {
        const std::size_t take = std::min<std::size_t>(batch_size, val.size() - pos);
        const auto& shp = val[pos].image.shape;
        TensorF batch({static_cast<int>(take), shp[0], shp[1], shp[2]});
        const std::size_t plane = val[pos].image.data.size();
        for (std::size_t i = 0; i < take; ++i) {
            TensorF norm = data::normalize(val[pos + i].image, stats);
            std::copy(norm.data.begin(), norm.data.end(), batch.data.begin() + i * plane);
        }
        const TensorF logits = nn::forward(model, batch);
        for (std::size_t i = 0; i < take; ++i) {
            std::vector<float> row(logits.data.begin() + i * model.num_outputs,
                                   logits.data.begin() + (i + 1) * model.num_outputs);
            if (infer::tentative_prediction(row) == val[pos + i].label) ++correct;
            ++total;
        }
        pos += take;
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

ComplianceRates behavioral_compliance(const nn::ClassifierF& model, const backdoor::TriggerSet& triggers,
                                      const data::ChannelStats& stats,
                                      const std::vector<data::Sample>& val, double alpha) {
    const int n = model.num_classes();
    if (triggers.size() != n) fail(Errc::invalid_config, "trigger count does not match model classes");
    std::size_t clean_ok = 0, mism_ok = 0, mism_total = 0, match_ok = 0, total = 0;
    auto argmax_full = [&](const float* row) {
        int best = 0;
        for (int j = 1; j < model.num_outputs; ++j)
            if (row[j] > row[best]) best = j;
        return best + 1;
    };
    for (const auto& sample : val) {
        if (sample.label < 1 || sample.label > n) fail(Errc::invalid_label, "compliance needs in-set samples");
        // One forward for the clean input plus all N tainted variants.
        const auto& shp = sample.image.shape;
        TensorF batch({n + 1, shp[0], shp[1], shp[2]});
        const std::size_t plane = sample.image.data.size();
        TensorF norm = data::normalize(sample.image, stats);
        std::copy(norm.data.begin(), norm.data.end(), batch.data.begin());
        for (int k = 0; k < n; ++k) {
            TensorF tainted = backdoor::inject_trigger(sample.image, triggers.triggers[k], alpha);
            tainted = data::normalize(tainted, stats);
            std::copy(tainted.data.begin(), tainted.data.end(), batch.data.begin() + (k + 1) * plane);
        }
        const TensorF logits = nn::forward(model, batch);
        ++total;
        if (argmax_full(logits.data.data()) == sample.label) ++clean_ok;
        for (int k = 1; k <= n; ++k) {
            const float* row = logits.data.data() + static_cast<std::size_t>(k) * model.num_outputs;
            if (k == sample.label) {
                if (argmax_full(row) == n + 1) ++match_ok;
            } else {
                ++mism_total;
                if (argmax_full(row) == sample.label) ++mism_ok;
            }
        }
    }
    ComplianceRates rates;
    if (total > 0) {
        rates.clean = static_cast<double>(clean_ok) / total;
        rates.matched = static_cast<double>(match_ok) / total;
    }
    if (mism_total > 0) rates.mismatched = static_cast<double>(mism_ok) / mism_total;
    return rates;
}

TrainOutput train(const data::DatasetSplits& dataset, const nn::ModelConfig& model_cfg,
                  const TrainConfig& cfg, const backdoor::TriggerSet* triggers) {
    cfg.validate();
    if (dataset.train.empty()) fail(Errc::invalid_config, "empty training split");
    const int n = dataset.n_classes;
    if (model_cfg.num_outputs != n + 1)
        fail(Errc::invalid_config, "model must have N+1 outputs for N in-set classes");
    for (const auto& s : dataset.train)
        if (s.label < 1 || s.label > n) fail(Errc::invalid_config, "training split must contain only in-set classes");
    const bool bosc = cfg.mode == Mode::Bosc;
    if (bosc) {
        if (triggers == nullptr) fail(Errc::invalid_config, "bosc mode needs a trigger set");
        if (triggers->size() != n)
            fail(Errc::invalid_config, "trigger count " + std::to_string(triggers->size()) +
                                           " does not match N=" + std::to_string(n));
    }

    const auto t_start = std::chrono::steady_clock::now();

    TrainOutput out;
    {
        std::vector<TensorF> imgs;
        imgs.reserve(dataset.train.size());
        for (const auto& s : dataset.train) imgs.push_back(s.image);
        out.stats = data::compute_stats(imgs);
    }

    const Rng master(cfg.seed);
    Rng init_rng = master.child(0x696e6974ULL /* init */);
    Rng shuffle_rng = master.child(0x73687566ULL /* shuf */);
    Rng aug_rng = master.child(0x61756730ULL /* aug0 */);
    Rng taint_rng = master.child(0x7461696eULL /* tain */);

    out.model = nn::build_classifier<float>(model_cfg, init_rng);
    auto opt = nn::OptimState<float>::make(out.model, cfg.base_lr);

    const backdoor::InjectionConfig inject = cfg.effective_inject();
    const AugmentConfig aug{cfg.flip_prob, cfg.jpeg_prob, cfg.jpeg_quality_min, cfg.jpeg_quality_max};

    std::vector<int> order(dataset.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto e_start = std::chrono::steady_clock::now();
        const double lr = nn::lr_schedule(epoch, cfg.base_lr);
        shuffle_rng.shuffle(order);

        LossBreakdown epoch_loss;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const std::size_t take = std::min<std::size_t>(cfg.batch_size, order.size() - pos);
            std::vector<int> labels(take);
            std::vector<TensorF> images(take);
            for (std::size_t i = 0; i < take; ++i) {
                const auto& s = dataset.train[order[pos + i]];
                labels[i] = s.label;
                images[i] = augment(s.image, aug_rng, aug);
            }

            const backdoor::TaintPlan plan = backdoor::plan_batch_taint(labels, n, inject, taint_rng);

            // Mixup first (partners read pre-taint images), then injection.
            std::vector<TensorF> staged = images;
            std::vector<int> targets(take);
            std::vector<double> weights(take, 1.0);
            for (std::size_t i = 0; i < take; ++i) {
                const auto& e = plan.entries[i];
                targets[i] = e.effective_label;
                switch (e.kind) {
                    case backdoor::TaintKind::Mixup:
                        staged[i] = backdoor::mixup_perturb(images[i], images[e.partner], inject.beta);
                        break;
                    case backdoor::TaintKind::Matched:
                        staged[i] = backdoor::inject_trigger(images[i], triggers->triggers[e.trigger - 1],
                                                             inject.alpha);
                        weights[i] = cfg.loss.lambda1;
                        break;
                    case backdoor::TaintKind::Mismatched:
                        staged[i] = backdoor::inject_trigger(images[i], triggers->triggers[e.trigger - 1],
                                                             inject.alpha);
                        weights[i] = cfg.loss.lambda2;
                        break;
                    case backdoor::TaintKind::Clean:
                        break;
                }
            }

            const auto& shp = staged[0].shape;
            TensorF batch({static_cast<int>(take), shp[0], shp[1], shp[2]});
            const std::size_t plane = staged[0].data.size();
            for (std::size_t i = 0; i < take; ++i) {
                TensorF norm = data::normalize(staged[i], out.stats);
                std::copy(norm.data.begin(), norm.data.end(), batch.data.begin() + i * plane);
            }

            const auto ce = nn::weighted_ce_grad(out.model, batch, targets, weights);
            const LossBreakdown bd = bosc_loss(ce.logits, labels, plan, cfg.loss);
            epoch_loss.total += bd.total;
            epoch_loss.clean += bd.clean;
            epoch_loss.matched += bd.matched;
            epoch_loss.mismatched += bd.mismatched;

            nn::optimizer_step(out.model, ce.grads, opt, lr);
        }

        out.report.lr.push_back(lr);
        out.report.loss_total.push_back(epoch_loss.total);
        out.report.loss_clean.push_back(epoch_loss.clean);
        out.report.loss_matched.push_back(epoch_loss.matched);
        out.report.loss_mismatched.push_back(epoch_loss.mismatched);
        out.report.val_accuracy.push_back(
            closed_set_accuracy(out.model, out.stats, dataset.val, cfg.batch_size));
        if (bosc) {
            out.report.compliance.push_back(
                behavioral_compliance(out.model, *triggers, out.stats, dataset.val, inject.alpha));
        } else {
            out.report.compliance.push_back(ComplianceRates{});
        }
        out.report.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - e_start).count());
    }

    out.report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    out.report.threads = 1;
    return out;
}

void write_train_report_csv(const std::string& path, const TrainReport& report) {
    std::ofstream outf(path);
    if (!outf) fail(Errc::io_error, "cannot write " + path);
    outf << "epoch,lr,loss_total,loss_clean,loss_matched,loss_mismatched,val_accuracy,"
            "compliance_clean,compliance_mismatched,compliance_matched,seconds\n";
    char buf[320];
    for (std::size_t e = 0; e < report.lr.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", e,
                      report.lr[e], report.loss_total[e], report.loss_clean[e], report.loss_matched[e],
                      report.loss_mismatched[e], report.val_accuracy[e], report.compliance[e].clean,
                      report.compliance[e].mismatched, report.compliance[e].matched,
                      report.epoch_seconds[e]);
        outf << buf;
    }
}

}  // namespace bosc::train
