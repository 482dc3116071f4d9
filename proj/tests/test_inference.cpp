#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "bosc/backdoor.hpp"
#include "bosc/inference.hpp"
#include "bosc/nn.hpp"
#include "doctest.h"

using namespace bosc;
using infer::OutputMatrix;
using infer::ScoreKind;

namespace {

OutputMatrix matrix_2x3() {
    // The 2-class example: rows are trigger probes, last column the backdoor.
    OutputMatrix m = OutputMatrix::zeros(2);
    m.at(0, 0) = 0.2f;
    m.at(0, 1) = 0.1f;
    m.at(0, 2) = 5.0f;
    m.at(1, 0) = 4.0f;
    m.at(1, 1) = 0.3f;
    m.at(1, 2) = 0.1f;
    return m;
}

// Symbolic re-derivation of the combined score: one column mean plus the
// matched-backdoor entry, written independently of infer::score.
double cls_reference(const OutputMatrix& m, int y_star) {
    const int n = m.n();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += m.at(i, y_star - 1);
    return acc / static_cast<double>(n) + m.at(y_star - 1, n);
}

}  // namespace

TEST_CASE("tentative_prediction: backdoor output excluded, ties to smallest index") {
    CHECK(infer::tentative_prediction({2.0f, 5.0f, 1.0f, 9.0f}) == 2);  // N=3, 9.0 excluded
    CHECK(infer::tentative_prediction({1.0f, 7.0f, 3.0f, 0.0f}) == 2);
    CHECK(infer::tentative_prediction({3.0f, 3.0f, 1.0f, 0.0f}) == 1);  // tie -> smallest
}

TEST_CASE("tentative_prediction: invariant under softmax (argmax monotonicity)") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<float> logits(6);
        for (auto& v : logits) v = rng.uniform_f() * 10 - 5;
        const auto probs = nn::softmax(logits);
        CHECK(infer::tentative_prediction(logits) == infer::tentative_prediction(probs));
    }
}

TEST_CASE("score: CLS-M hand value 7.1 on the 2x3 matrix") {
    const auto m = matrix_2x3();
    CHECK(infer::score(&m, {}, 1, ScoreKind::CLS_M) == doctest::Approx(7.1).epsilon(1e-6));
    CHECK(infer::score(&m, {}, 1, ScoreKind::TLS_M) == doctest::Approx(5.0));
    CHECK(infer::score(&m, {}, 1, ScoreKind::MLS_M) == doctest::Approx(5.0));
}

TEST_CASE("score: MLS and MSP from clean logits") {
    const std::vector<float> clean = {3.0f, 1.0f, 0.0f};  // N=2 plus backdoor output
    CHECK(infer::score(nullptr, clean, 1, ScoreKind::MLS) == doctest::Approx(3.0));
    // softmax over the in-set pair {3,1}: e^3/(e^3+e^1)
    const double expected = std::exp(3.0) / (std::exp(3.0) + std::exp(1.0));
    CHECK(infer::score(nullptr, clean, 1, ScoreKind::MSP) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(infer::score(nullptr, clean, 1, ScoreKind::MSP) == doctest::Approx(0.8808).epsilon(1e-3));
}

TEST_CASE("score: CLS-M matches symbolic reimplementation on random matrices") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = rng.uniform_int(2, 7);
        OutputMatrix m = OutputMatrix::zeros(n);
        for (auto& v : m.values.data) v = rng.uniform_f() * 8 - 4;
        const int y_star = rng.uniform_int(1, n);
        CHECK(infer::score(&m, {}, y_star, ScoreKind::CLS_M) ==
              doctest::Approx(cls_reference(m, y_star)).epsilon(1e-9));
    }
}

TEST_CASE("score: matrix kinds require a matrix") {
    CHECK_THROWS_AS((void)infer::score(nullptr, {1.0f, 2.0f, 0.0f}, 1, ScoreKind::CLS_M), Error);
}

TEST_CASE("decide: strict inequality") {
    CHECK(infer::decide(2, 7.1, 5.0) == 2);
    CHECK(infer::decide(2, 5.0, 5.0) == kReject);  // xi == nu rejects
    CHECK(infer::decide(2, -1e30, 5.0) == kReject);
}

TEST_CASE("decide is monotone in xi") {
    for (double nu : {-2.0, 0.0, 3.5}) {
        bool accepted = false;
        for (double xi = nu - 1.0; xi <= nu + 1.0; xi += 0.125) {
            const bool now = infer::decide(1, xi, nu) != kReject;
            CHECK((!accepted || now));  // once accepted, stays accepted
            accepted = now;
        }
    }
}

TEST_CASE("aggregate_prediction: hand column sums and dominance") {
    const auto m = matrix_2x3();
    // in-set column sums: [4.2, 0.4] -> class 1
    CHECK(infer::aggregate_prediction(m) == 1);

    OutputMatrix dom = OutputMatrix::zeros(3);
    for (int i = 0; i < 3; ++i) dom.at(i, 2) = 10.0f;
    CHECK(infer::aggregate_prediction(dom) == 3);
}

TEST_CASE("build_output_matrix: shape, determinism, degenerate model") {
    Rng rng(7);
    const int n = 5;
    nn::ModelConfig mc;
    mc.input_shape = {3, 16, 16};
    mc.conv_channels = {4};
    mc.dense_hidden = 8;
    mc.num_outputs = n + 1;
    auto model = nn::build_classifier<float>(mc, rng);
    const auto triggers = backdoor::generate_default_triggers(n, {3, 16, 16}, 99);
    data::ChannelStats stats;
    stats.mean = {0.5, 0.5, 0.5};
    stats.std = {0.25, 0.25, 0.25};
    TensorF image({3, 16, 16});
    for (auto& v : image.data) v = rng.uniform_f();

    const auto m1 = infer::build_output_matrix(model, image, triggers, stats, 0.1);
    CHECK(m1.values.shape == std::vector<int>{5, 6});
    const auto m2 = infer::build_output_matrix(model, image, triggers, stats, 0.1);
    CHECK(m1.values.data == m2.values.data);

    // constant-output model: zero out everything except the final bias
    auto constant = model;
    for (auto& w : constant.weights)
        for (auto& v : w.data) v = 0;
    for (auto& b : constant.biases)
        for (auto& v : b.data) v = 0;
    constant.biases.back().data = {1, 2, 3, 4, 5, 6};
    const auto mc2 = infer::build_output_matrix(constant, image, triggers, stats, 0.1);
    for (int i = 1; i < 5; ++i)
        for (int j = 0; j < 6; ++j) CHECK(mc2.at(i, j) == mc2.at(0, j));

    // trigger/model N mismatch
    const auto wrong = backdoor::generate_default_triggers(n - 1, {3, 16, 16}, 99);
    CHECK_THROWS_AS((void)infer::build_output_matrix(model, image, wrong, stats, 0.1), Error);
}

TEST_CASE("classify_dataset: empty input, ordering, threading equivalence") {
    Rng rng(9);
    const int n = 3;
    nn::ModelConfig mc;
    mc.input_shape = {3, 8, 8};
    mc.conv_channels = {4};
    mc.dense_hidden = 8;
    mc.num_outputs = n + 1;
    auto model = nn::build_classifier<float>(mc, rng);
    const auto triggers = backdoor::generate_default_triggers(n, {3, 8, 8}, 42);
    data::ChannelStats stats;
    stats.mean = {0.5, 0.5, 0.5};
    stats.std = {0.2, 0.2, 0.2};

    CHECK(infer::classify_dataset(model, &triggers, stats, {}, 0.1, ScoreKind::CLS_M, 0.0).empty());

    std::vector<data::Sample> samples;
    for (int i = 0; i < 17; ++i) {
        TensorF img({3, 8, 8});
        for (auto& v : img.data) v = rng.uniform_f();
        samples.push_back({std::move(img), 1 + i % n, ""});
    }
    const auto single = infer::classify_dataset(model, &triggers, stats, samples, 0.1, ScoreKind::CLS_M,
                                                0.0, 1);
    const auto multi = infer::classify_dataset(model, &triggers, stats, samples, 0.1, ScoreKind::CLS_M,
                                               0.0, 4);
    REQUIRE(single.size() == samples.size());
    for (std::size_t i = 0; i < single.size(); ++i) {
        CHECK(single[i].sample_id == static_cast<int>(i));
        CHECK(single[i].xi == multi[i].xi);
        CHECK(single[i].y_star == multi[i].y_star);
    }

    // permutation equivariance: records follow input order
    auto reversed = samples;
    std::reverse(reversed.begin(), reversed.end());
    const auto rev = infer::classify_dataset(model, &triggers, stats, reversed, 0.1, ScoreKind::CLS_M, 0.0);
    for (std::size_t i = 0; i < rev.size(); ++i)
        CHECK(rev[i].xi == single[single.size() - 1 - i].xi);
}

TEST_CASE("classify_dataset: matrix scores without triggers are rejected") {
    Rng rng(13);
    nn::ModelConfig mc;
    mc.input_shape = {3, 8, 8};
    mc.conv_channels = {2};
    mc.dense_hidden = 0;
    mc.num_outputs = 4;
    auto model = nn::build_classifier<float>(mc, rng);
    data::ChannelStats stats;
    stats.mean = {0.5, 0.5, 0.5};
    stats.std = {0.2, 0.2, 0.2};
    std::vector<data::Sample> samples;
    TensorF img({3, 8, 8});
    samples.push_back({img, 1, ""});
    CHECK_THROWS_AS(
        (void)infer::classify_dataset(model, nullptr, stats, samples, 0.1, ScoreKind::CLS_M, 0.0), Error);
    CHECK_NOTHROW(
        (void)infer::classify_dataset(model, nullptr, stats, samples, 0.1, ScoreKind::MLS, 0.0));
}

TEST_CASE("score kind names round-trip") {
    for (ScoreKind k : {ScoreKind::MSP, ScoreKind::MLS, ScoreKind::MLS_M, ScoreKind::TLS_M, ScoreKind::CLS_M})
        CHECK(infer::score_kind_from_name(infer::score_kind_name(k)) == k);
    CHECK_THROWS_AS((void)infer::score_kind_from_name("bogus"), Error);
}
