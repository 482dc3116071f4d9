#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bosc/common.hpp"
#include "bosc/rng.hpp"
#include "bosc/tensor.hpp"

// Trigger management, trigger injection, mixup perturbation, and the
// per-batch taint plan (matched / mismatched / clean / mixup partition with
// label remapping).
namespace bosc::backdoor {

struct TriggerSet {
    std::vector<TensorF> triggers;  // trigger k (0-based index k-1) is bound to in-set class k
    std::string source;             // directory path or "procedural:<seed>"

    int size() const { return static_cast<int>(triggers.size()); }
};

struct InjectionConfig {
    double alpha = 0.1;  // blend strength
    double gamma = 0.1;  // matched/mismatched taint fraction
    double beta = 0.15;  // mixup strength
    double eta = 0.1;    // mixup fraction

    void validate() const;  // all in [0,1] and 2*gamma + eta < 1
};

enum class TaintKind : std::uint8_t { Clean, Matched, Mismatched, Mixup };

struct TaintEntry {
    TaintKind kind = TaintKind::Clean;
    int trigger = 0;          // 1..N, for Matched/Mismatched
    int partner = -1;         // batch index, for Mixup
    int effective_label = 0;  // N+1 on the matched subset, the true label elsewhere
};

struct TaintPlan {
    std::vector<TaintEntry> entries;

    int count(TaintKind k) const;
};

// Eq-style convex blend: (1-alpha)*x + alpha*t.
TensorF inject_trigger(const TensorF& x, const TensorF& t, double alpha);

// clip(x + beta*z, 0, 1); the label of x is unchanged by contract.
TensorF mixup_perturb(const TensorF& x, const TensorF& z, double beta);

// Draws the disjoint matched/mismatched/mixup subsets for one batch.
// labels are in-set classes 1..N; n_classes == N.
TaintPlan plan_batch_taint(const std::vector<int>& labels, int n_classes, const InjectionConfig& cfg,
                           Rng& rng);

// N image files (binary P6 PPM); lexicographic order = class order unless a
// manifest.json with a "triggers" list is present in the directory.
TriggerSet load_triggers(const std::filesystem::path& dir, int n, const std::array<int, 3>& shape);

// Procedural stand-in for curated trigger art: flat saturated background plus
// bold geometric shapes, distinct per class, deterministic in (n, shape, seed).
TriggerSet generate_default_triggers(int n, const std::array<int, 3>& shape, std::uint64_t seed);

// FNV-1a over the 8-bit quantization of all triggers; stored in checkpoints
// so a deployed model can refuse a mismatched trigger set.
std::uint64_t trigger_digest(const TriggerSet& t);

}  // namespace bosc::backdoor
