#include "bosc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

namespace bosc::infer {

const char* score_kind_name(ScoreKind k) {
    switch (k) {
        case ScoreKind::MSP: return "msp";
        case ScoreKind::MLS: return "mls";
        case ScoreKind::MLS_M: return "mls-m";
        case ScoreKind::TLS_M: return "tls-m";
        case ScoreKind::CLS_M: return "cls-m";
    }
    return "?";
}

ScoreKind score_kind_from_name(const std::string& name) {
    if (name == "msp") return ScoreKind::MSP;
    if (name == "mls") return ScoreKind::MLS;
    if (name == "mls-m") return ScoreKind::MLS_M;
    if (name == "tls-m") return ScoreKind::TLS_M;
    if (name == "cls-m") return ScoreKind::CLS_M;
    fail(Errc::invalid_config, "unknown score kind: " + name);
}

bool score_needs_matrix(ScoreKind k) {
    return k == ScoreKind::MLS_M || k == ScoreKind::TLS_M || k == ScoreKind::CLS_M;
}

int tentative_prediction(const std::vector<float>& logits) {
    if (logits.size() < 2) fail(Errc::invalid_argument, "logit vector too short");
    const int n = static_cast<int>(logits.size()) - 1;
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (logits[i] > logits[best]) best = i;
    return best + 1;
}

OutputMatrix build_output_matrix(const nn::ClassifierF& model, const TensorF& image,
                                 const backdoor::TriggerSet& triggers, const data::ChannelStats& stats,
                                 double alpha) {
    const int n = model.num_classes();
    if (triggers.size() != n)
        fail(Errc::invalid_config, "trigger count " + std::to_string(triggers.size()) +
                                       " does not match model classes " + std::to_string(n));
    OutputMatrix m = OutputMatrix::zeros(n);
    // One batched forward over the N tainted variants.
    TensorF batch({n, image.shape[0], image.shape[1], image.shape[2]});
    const std::size_t plane = image.data.size();
    for (int i = 0; i < n; ++i) {
        TensorF tainted = backdoor::inject_trigger(image, triggers.triggers[i], alpha);
        tainted = data::normalize(tainted, stats);
        std::copy(tainted.data.begin(), tainted.data.end(), batch.data.begin() + i * plane);
    }
    const TensorF logits = nn::forward(model, batch);
    std::copy(logits.data.begin(), logits.data.end(), m.values.data.begin());
    return m;
}

double score(const OutputMatrix* m, const std::vector<float>& clean_logits, int y_star, ScoreKind kind) {
    if (score_needs_matrix(kind)) {
        if (m == nullptr || m->n() == 0) fail(Errc::invalid_argument, "matrix score without output matrix");
        const int n = m->n();
        if (y_star < 1 || y_star > n) fail(Errc::invalid_label, "tentative prediction outside 1..N");
        switch (kind) {
            case ScoreKind::TLS_M:
                return m->at(y_star - 1, n);
            case ScoreKind::MLS_M: {
                double best = m->at(0, 0);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j <= n; ++j) best = std::max(best, static_cast<double>(m->at(i, j)));
                return best;
            }
            case ScoreKind::CLS_M: {
                double col = 0.0;
                for (int i = 0; i < n; ++i) col += m->at(i, y_star - 1);
                return col / n + m->at(y_star - 1, n);
            }
            default: break;
        }
    }
    if (clean_logits.size() < 2) fail(Errc::invalid_argument, "clean logits required for this score");
    const int n = static_cast<int>(clean_logits.size()) - 1;
    if (kind == ScoreKind::MLS) {
        double best = clean_logits[0];
        for (int i = 1; i < n; ++i) best = std::max(best, static_cast<double>(clean_logits[i]));
        return best;
    }
    if (kind == ScoreKind::MSP) {
        // Softmax over the in-set outputs only; the backdoor output is not a
        // semantic class.
        std::vector<float> inset(clean_logits.begin(), clean_logits.begin() + n);
        const std::vector<float> p = nn::softmax(inset);
        return *std::max_element(p.begin(), p.end());
    }
    fail(Errc::invalid_argument, "unknown score kind");
}

int decide(int y_star, double xi, double nu) { return xi > nu ? y_star : kReject; }

int aggregate_prediction(const OutputMatrix& m) {
    const int n = m.n();
    if (n == 0) fail(Errc::invalid_argument, "empty output matrix");
    int best = 0;
    double best_sum = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += m.at(i, j);
        if (s > best_sum) {
            best_sum = s;
            best = j;
        }
    }
    return best + 1;
}

std::vector<std::vector<EvalRecord>> classify_dataset_multi(
    const nn::ClassifierF& model, const backdoor::TriggerSet* triggers, const data::ChannelStats& stats,
    const std::vector<data::Sample>& samples, double alpha, const std::vector<ScoreKind>& kinds,
    const std::vector<double>& nus, int threads) {
    bool needs_matrix = false;
    for (ScoreKind k : kinds) needs_matrix = needs_matrix || score_needs_matrix(k);
    if (needs_matrix && (triggers == nullptr || triggers->size() != model.num_classes()))
        fail(Errc::invalid_config, "matrix-based scores need a trigger set matching the model");
    if (nus.size() != kinds.size() && nus.size() != 1)
        fail(Errc::invalid_argument, "need one threshold per score kind (or a single shared one)");

    std::vector<std::vector<EvalRecord>> out(kinds.size());
    for (auto& v : out) v.resize(samples.size());
    if (samples.empty()) return out;

    auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
            const data::Sample& sample = samples[s];
            TensorF norm = data::normalize(sample.image, stats);
            TensorF batch({1, norm.shape[0], norm.shape[1], norm.shape[2]});
            batch.data = norm.data;
            const TensorF logits = nn::forward(model, batch);
            std::vector<float> clean(logits.data.begin(), logits.data.end());
            const int y_star = tentative_prediction(clean);
            OutputMatrix m;
            if (needs_matrix) m = build_output_matrix(model, sample.image, *triggers, stats, alpha);
            for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
                EvalRecord rec;
                rec.sample_id = static_cast<int>(s);
                rec.true_label = sample.label;
                rec.y_star = y_star;
                rec.kind = kinds[ki];
                rec.xi = score(needs_matrix ? &m : nullptr, clean, y_star, kinds[ki]);
                rec.decision = decide(y_star, rec.xi, nus[nus.size() == 1 ? 0 : ki]);
                out[ki][s] = rec;
            }
        }
    };

    int n_threads = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(samples.size())));
    if (n_threads == 1) {
        worker(0, samples.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (samples.size() + n_threads - 1) / n_threads;
        for (int t = 0; t < n_threads; ++t) {
            const std::size_t b = t * chunk;
            const std::size_t e = std::min(samples.size(), b + chunk);
            if (b >= e) break;
            pool.emplace_back(worker, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

std::vector<EvalRecord> classify_dataset(const nn::ClassifierF& model, const backdoor::TriggerSet* triggers,
                                         const data::ChannelStats& stats,
                                         const std::vector<data::Sample>& samples, double alpha,
                                         ScoreKind kind, double nu, int threads) {
    return classify_dataset_multi(model, triggers, stats, samples, alpha, {kind}, {nu}, threads)[0];
}

void write_score_csv(const std::string& path, const std::vector<EvalRecord>& records) {
    std::ofstream out(path);
    if (!out) fail(Errc::io_error, "cannot write " + path);
    out << "sample_id,true_label,y_star,score_kind,xi,decision_at_nu\n";
    char buf[64];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof buf, "%.9g", r.xi);
        out << r.sample_id << "," << r.true_label << "," << r.y_star << "," << score_kind_name(r.kind)
            << "," << buf << "," << r.decision << "\n";
    }
}

}  // namespace bosc::infer
