#pragma once

#include <string>
#include <vector>

#include "bosc/backdoor.hpp"
#include "bosc/common.hpp"
#include "bosc/data.hpp"
#include "bosc/nn.hpp"

// Test-time procedure: tentative prediction, trigger-probing output matrix,
// the five rejection scores, the accept/reject decision, and the column-sum
// alternative prediction.
namespace bosc::infer {

// N x (N+1) pre-softmax logits; row i (0-based) comes from the input tainted
// with trigger i+1.
struct OutputMatrix {
    TensorF values;  // shape {N, N+1}

    int n() const { return values.shape.empty() ? 0 : values.shape[0]; }
    float at(int row, int col) const { return values.data[static_cast<std::size_t>(row) * (n() + 1) + col]; }
    float& at(int row, int col) { return values.data[static_cast<std::size_t>(row) * (n() + 1) + col]; }

    static OutputMatrix zeros(int n_classes) {
        OutputMatrix m;
        m.values = TensorF({n_classes, n_classes + 1});
        return m;
    }
};

enum class ScoreKind { MSP, MLS, MLS_M, TLS_M, CLS_M };

const char* score_kind_name(ScoreKind k);                 // "msp", "mls", "mls-m", "tls-m", "cls-m"
ScoreKind score_kind_from_name(const std::string& name);
inline constexpr ScoreKind kDefaultScore = ScoreKind::CLS_M;
bool score_needs_matrix(ScoreKind k);

struct EvalRecord {
    int sample_id = 0;
    int true_label = 0;  // 1..N or kOutOfSet
    int y_star = 0;      // 1..N
    ScoreKind kind = ScoreKind::CLS_M;
    double xi = 0.0;
    int decision = kReject;  // 1..N or kReject
};

// argmax over the first N entries (backdoor output excluded); ties break
// toward the smallest index. Returns a 1-based class.
int tentative_prediction(const std::vector<float>& logits);

OutputMatrix build_output_matrix(const nn::ClassifierF& model, const TensorF& image,
                                 const backdoor::TriggerSet& triggers, const data::ChannelStats& stats,
                                 double alpha);

// clean_logits are the N+1 outputs on the untainted input; y_star is 1-based.
double score(const OutputMatrix* m, const std::vector<float>& clean_logits, int y_star, ScoreKind kind);

// Eq.-4 accept/reject: y_star iff xi > nu (strict), else kReject.
int decide(int y_star, double xi, double nu);

// argmax_j of the column sums over the in-set columns of M; 1-based.
int aggregate_prediction(const OutputMatrix& m);

// Runs the full test procedure per sample, in input order. Matrix-based
// kinds need `triggers`; pass nullptr for clean-logit-only scoring. Samples
// may be evaluated concurrently; records always come back in input order.
// nus carries one threshold per kind (or a single shared one).
std::vector<std::vector<EvalRecord>> classify_dataset_multi(
    const nn::ClassifierF& model, const backdoor::TriggerSet* triggers, const data::ChannelStats& stats,
    const std::vector<data::Sample>& samples, double alpha, const std::vector<ScoreKind>& kinds,
    const std::vector<double>& nus, int threads = 0);

std::vector<EvalRecord> classify_dataset(const nn::ClassifierF& model, const backdoor::TriggerSet* triggers,
                                         const data::ChannelStats& stats,
                                         const std::vector<data::Sample>& samples, double alpha,
                                         ScoreKind kind, double nu, int threads = 0);

void write_score_csv(const std::string& path, const std::vector<EvalRecord>& records);

}  // namespace bosc::infer
