#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "bosc/backdoor.hpp"
#include "bosc/data.hpp"
#include "bosc/training.hpp"
#include "doctest.h"

using namespace bosc;
namespace fs = std::filesystem;

namespace {

// Small, cleanly separable fingerprint dataset: 3 in-set classes, strong
// amplitude, no jitter or contamination.
data::DatasetSplits toy_dataset(std::uint64_t seed, int train_per_class = 30) {
    data::SynthConfig sc;
    sc.out_dir = fs::temp_directory_path() / ("bosc_toy_" + std::to_string(seed));
    fs::remove_all(sc.out_dir);
    const data::FingerprintKind kinds[3] = {data::FingerprintKind::Periodic,
                                            data::FingerprintKind::PrngField,
                                            data::FingerprintKind::BlockQuant};
    for (int i = 0; i < 3; ++i) {
        data::FingerprintSpec s;
        s.class_id = i + 1;
        s.name = "toy" + std::to_string(i + 1);
        s.in_set = true;
        s.kind = kinds[i];
        s.amplitude = 0.09;
        s.seed = 100 + i;
        sc.specs.push_back(s);
    }
    {
        data::FingerprintSpec s;
        s.class_id = 4;
        s.name = "unknown";
        s.in_set = false;
        s.kind = data::FingerprintKind::Periodic;
        s.amplitude = 0.09;
        s.seed = 999;
        sc.specs.push_back(s);
    }
    sc.counts = {train_per_class, 10, 6, 6};
    sc.shape = {3, 16, 16};
    sc.seed = seed;
    sc.amplitude_jitter = 0.0;
    sc.cross_contamination = 0.0;
    const auto manifest = data::synth_dataset(sc);
    auto ds = data::load_dataset(manifest);
    fs::remove_all(sc.out_dir);
    return ds;
}

nn::ModelConfig toy_model(int n_classes) {
    nn::ModelConfig mc;
    mc.input_shape = {3, 16, 16};
    mc.conv_channels = {6};
    mc.dense_hidden = 16;
    mc.num_outputs = n_classes + 1;
    return mc;
}

bool same_weights(const nn::ClassifierF& a, const nn::ClassifierF& b) {
    for (std::size_t i = 0; i < a.weights.size(); ++i)
        if (a.weights[i].data != b.weights[i].data || a.biases[i].data != b.biases[i].data) return false;
    return true;
}

}  // namespace

TEST_CASE("bosc_loss: zero lambdas keep only the clean term") {
    TensorF logits({2, 3});
    logits.data = {1.0f, 0.0f, -1.0f, 0.5f, 0.5f, 2.0f};
    backdoor::TaintPlan plan;
    plan.entries.resize(2);
    plan.entries[0].kind = backdoor::TaintKind::Clean;
    plan.entries[1].kind = backdoor::TaintKind::Matched;
    plan.entries[1].effective_label = 3;
    nn::LossConfig cfg;
    cfg.lambda1 = 0.0;
    cfg.lambda2 = 0.0;
    const auto b = train::bosc_loss(logits, {1, 2}, plan, cfg);
    CHECK(b.matched == 0.0);
    CHECK(b.mismatched == 0.0);
    CHECK(b.total == doctest::Approx(b.clean));
    CHECK(b.clean > 0.0);
}

TEST_CASE("bosc_loss: hand value 0.8318 on the 2-class toy") {
    // clean sample with softmax prob 0.5 on its label; matched sample with
    // prob 0.25 on the backdoor output; lambda1 = 0.1
    TensorF logits({2, 3});
    const float l2 = std::log(2.0f), l15 = std::log(1.5f);
    logits.data = {l2, 0.0f, 0.0f, l15, l15, 0.0f};
    backdoor::TaintPlan plan;
    plan.entries.resize(2);
    plan.entries[0].kind = backdoor::TaintKind::Clean;
    plan.entries[0].effective_label = 1;
    plan.entries[1].kind = backdoor::TaintKind::Matched;
    plan.entries[1].effective_label = 3;
    nn::LossConfig cfg;
    cfg.lambda1 = 0.1;
    cfg.lambda2 = 0.0;
    const auto b = train::bosc_loss(logits, {1, 2}, plan, cfg);
    CHECK(b.total == doctest::Approx(0.8318).epsilon(1e-3));
    CHECK(b.clean == doctest::Approx(-std::log(0.5)).epsilon(1e-6));
    CHECK(b.matched == doctest::Approx(0.1 * -std::log(0.25)).epsilon(1e-6));
}

TEST_CASE("bosc_loss: near-perfect predictions push the loss toward zero") {
    TensorF logits({3, 3});
    logits.data = {30.0f, 0.0f, 0.0f, 0.0f, 30.0f, 0.0f, 0.0f, 0.0f, 30.0f};
    backdoor::TaintPlan plan;
    plan.entries.resize(3);
    plan.entries[0].kind = backdoor::TaintKind::Clean;
    plan.entries[1].kind = backdoor::TaintKind::Mismatched;
    plan.entries[2].kind = backdoor::TaintKind::Matched;
    plan.entries[2].effective_label = 3;
    const auto b = train::bosc_loss(logits, {1, 2, 1}, plan, nn::LossConfig{});
    CHECK(b.total == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("bosc_loss equals the weighted cross-entropy path") {
    Rng rng(3);
    auto model = nn::build_classifier<float>(toy_model(3), rng);
    for (int trial = 0; trial < 10; ++trial) {
        const int batch_n = 8;
        TensorF batch({batch_n, 3, 16, 16});
        for (auto& v : batch.data) v = rng.uniform_f();
        std::vector<int> labels(batch_n);
        for (auto& l : labels) l = rng.uniform_int(1, 3);
        backdoor::InjectionConfig icfg;
        icfg.gamma = 0.25;
        icfg.eta = 0.25;
        auto plan = backdoor::plan_batch_taint(labels, 3, icfg, rng);

        nn::LossConfig lcfg;
        lcfg.lambda1 = 0.7;
        lcfg.lambda2 = 0.3;
        std::vector<int> targets(batch_n);
        std::vector<double> weights(batch_n, 1.0);
        for (int i = 0; i < batch_n; ++i) {
            targets[i] = plan.entries[i].effective_label;
            if (plan.entries[i].kind == backdoor::TaintKind::Matched) weights[i] = lcfg.lambda1;
            if (plan.entries[i].kind == backdoor::TaintKind::Mismatched) weights[i] = lcfg.lambda2;
        }
        const auto ce = nn::weighted_ce_grad(model, batch, targets, weights);
        const auto breakdown = train::bosc_loss(ce.logits, labels, plan, lcfg);
        CHECK(breakdown.total == doctest::Approx(ce.loss).epsilon(1e-6));
    }
}

TEST_CASE("augment: disabled is identity, double flip restores, q100 near-lossless") {
    Rng rng(5);
    TensorF img({3, 16, 16});
    for (auto& v : img.data) v = rng.uniform_f();

    train::AugmentConfig off;
    off.flip_prob = 0.0;
    off.jpeg_prob = 0.0;
    Rng r1(1);
    CHECK(train::augment(img, r1, off).data == img.data);

    train::AugmentConfig fliponly;
    fliponly.flip_prob = 1.0;
    fliponly.jpeg_prob = 0.0;
    Rng r2(2);
    const auto once = train::augment(img, r2, fliponly);
    CHECK(once.data != img.data);
    const auto twice = train::augment(once, r2, fliponly);
    CHECK(twice.data == img.data);

    train::AugmentConfig q100;
    q100.flip_prob = 0.0;
    q100.jpeg_prob = 1.0;
    q100.quality_min = 100.0;
    q100.quality_max = 100.0;
    Rng r3(3);
    const auto compressed = train::augment(img, r3, q100);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(std::abs(compressed.data[i] - img.data[i]) <= 2.0f / 255.0f);
}

TEST_CASE("train: toy dataset reaches high closed-set accuracy") {
    const auto ds = toy_dataset(77, 60);
    train::TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 8;
    tc.base_lr = 4e-3;
    tc.seed = 5;
    const auto triggers = backdoor::generate_default_triggers(ds.n_classes, ds.shape, 9);
    const auto out = train::train(ds, toy_model(ds.n_classes), tc, &triggers);
    CHECK(out.report.val_accuracy.back() >= 0.95);
    // loss trends downward over the first epochs
    CHECK(out.report.loss_total.back() < out.report.loss_total.front());
    CHECK(out.report.lr.size() == static_cast<std::size_t>(tc.epochs));
    CHECK(out.report.compliance.size() == static_cast<std::size_t>(tc.epochs));
}

TEST_CASE("train: same seed gives bit-identical models and reports") {
    const auto ds = toy_dataset(78);
    train::TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 11;
    const auto triggers = backdoor::generate_default_triggers(ds.n_classes, ds.shape, 9);
    const auto a = train::train(ds, toy_model(ds.n_classes), tc, &triggers);
    const auto b = train::train(ds, toy_model(ds.n_classes), tc, &triggers);
    CHECK(same_weights(a.model, b.model));
    CHECK(a.report.loss_total == b.report.loss_total);
    CHECK(a.report.val_accuracy == b.report.val_accuracy);

    train::TrainConfig tc2 = tc;
    tc2.seed = 12;
    const auto c = train::train(ds, toy_model(ds.n_classes), tc2, &triggers);
    CHECK_FALSE(same_weights(a.model, c.model));
}

TEST_CASE("train: gamma=eta=0 reduces exactly to baseline training") {
    const auto ds = toy_dataset(79);
    train::TrainConfig degenerate;
    degenerate.epochs = 2;
    degenerate.seed = 21;
    degenerate.inject.gamma = 0.0;
    degenerate.inject.eta = 0.0;
    const auto triggers = backdoor::generate_default_triggers(ds.n_classes, ds.shape, 9);
    const auto a = train::train(ds, toy_model(ds.n_classes), degenerate, &triggers);

    train::TrainConfig baseline = degenerate;
    baseline.mode = train::Mode::Baseline;
    baseline.inject = backdoor::InjectionConfig{};  // forced to gamma=eta=0 anyway
    const auto b = train::train(ds, toy_model(ds.n_classes), baseline, nullptr);
    CHECK(same_weights(a.model, b.model));

    // baseline reports no taint loss terms
    for (double v : b.report.loss_matched) CHECK(v == 0.0);
    for (double v : b.report.loss_mismatched) CHECK(v == 0.0);
}

TEST_CASE("train: configuration errors") {
    const auto ds = toy_dataset(80, 10);
    train::TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS((void)train::train(ds, toy_model(ds.n_classes), tc, nullptr), Error);  // no triggers
    const auto wrong = backdoor::generate_default_triggers(ds.n_classes + 1, ds.shape, 9);
    CHECK_THROWS_AS((void)train::train(ds, toy_model(ds.n_classes), tc, &wrong), Error);
    auto empty = ds;
    empty.train.clear();
    const auto triggers = backdoor::generate_default_triggers(ds.n_classes, ds.shape, 9);
    CHECK_THROWS_AS((void)train::train(empty, toy_model(ds.n_classes), tc, &triggers), Error);
    CHECK_THROWS_AS((void)train::train(ds, toy_model(ds.n_classes + 1), tc, &triggers), Error);
}

TEST_CASE("behavioral_compliance: untrained models sit near chance") {
    const auto ds = toy_dataset(81, 10);
    const auto triggers = backdoor::generate_default_triggers(ds.n_classes, ds.shape, 9);
    data::ChannelStats stats;
    stats.mean = {0.5, 0.5, 0.5};
    stats.std = {0.25, 0.25, 0.25};
    double sum_a = 0, sum_b = 0, sum_c = 0;
    const int models = 12;
    for (int m = 0; m < models; ++m) {
        Rng rng(1000 + m);
        const auto model = nn::build_classifier<float>(toy_model(ds.n_classes), rng);
        const auto rates = train::behavioral_compliance(model, triggers, stats, ds.val, 0.1);
        sum_a += rates.clean;
        sum_b += rates.mismatched;
        sum_c += rates.matched;
    }
    // chance level is 1/(N+1) = 0.25; averages over random models scatter
    // around it but never approach trained behaviour
    CHECK(sum_a / models > 0.02);
    CHECK(sum_a / models < 0.6);
    CHECK(sum_b / models < 0.6);
    CHECK(sum_c / models < 0.6);
}

TEST_CASE("behavioral_compliance: mismatched rule covers all N-1 triggers per sample") {
    // model rigged to always answer class 2 regardless of input: rule (b)
    // holds only for samples whose label is 2
    const auto ds = toy_dataset(82, 10);
    auto model = nn::assemble_classifier<float>({3, 16, 16}, {nn::LayerDesc::dense(ds.n_classes + 1)});
    model.biases[0].data = {0.0f, 5.0f, 0.0f, 0.0f};
    const auto triggers = backdoor::generate_default_triggers(ds.n_classes, ds.shape, 9);
    data::ChannelStats stats;
    stats.mean = {0.5, 0.5, 0.5};
    stats.std = {0.25, 0.25, 0.25};
    const auto rates = train::behavioral_compliance(model, triggers, stats, ds.val, 0.1);
    int n2 = 0;
    for (const auto& s : ds.val) n2 += s.label == 2 ? 1 : 0;
    const double frac2 = static_cast<double>(n2) / ds.val.size();
    CHECK(rates.clean == doctest::Approx(frac2));
    // of the (N-1) mismatched probes per sample, only label-2 samples comply
    CHECK(rates.mismatched == doctest::Approx(frac2));
    CHECK(rates.matched == doctest::Approx(0.0));
}
