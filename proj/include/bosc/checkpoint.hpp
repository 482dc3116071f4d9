#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bosc/backdoor.hpp"
#include "bosc/data.hpp"
#include "bosc/nn.hpp"
#include "bosc/training.hpp"

// Checkpoint file: magic "BOSC", one version byte, a length-prefixed JSON
// header (layer descriptors, shapes, N, normalization stats, trigger digest),
// then per-parameter little-endian float32 arrays in header order (weight
// then bias per parametric layer).
namespace bosc::ckpt {

inline constexpr char kMagic[4] = {'B', 'O', 'S', 'C'};
inline constexpr std::uint8_t kVersion = 1;

struct Checkpoint {
    nn::ClassifierF model;
    data::ChannelStats stats;
    train::Mode mode = train::Mode::Bosc;
    double alpha = 0.1;                  // train-time injection strength
    std::uint64_t trigger_digest = 0;    // 0 = no trigger binding (baseline)
    std::string trigger_source;
    std::uint64_t seed = 0;
    std::vector<std::string> class_names;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Triggers are part of the deployed classifier: a digest mismatch is an error.
void validate_trigger_binding(const Checkpoint& c, const backdoor::TriggerSet& triggers);

}  // namespace bosc::ckpt
