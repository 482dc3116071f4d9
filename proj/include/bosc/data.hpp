#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bosc/common.hpp"
#include "bosc/rng.hpp"
#include "bosc/tensor.hpp"

// Desk-scale dataset synthesis ("generator fingerprints" as class signal),
// PPM IO, normalization statistics, and the image-processing operators used
// for robustness evaluation.
namespace bosc::data {

// ---------------------------------------------------------------------------
// Image IO (binary 8-bit PPM, P6) and basic raster utilities.
// Images are {3,H,W} float tensors in [0,1]; files are dequantized by /255.

TensorF read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const TensorF& image);

TensorF resize_bilinear(const TensorF& image, int out_h, int out_w);

// ---------------------------------------------------------------------------
// Processing operators.

enum class ProcKind { JpegLike, GaussianBlur, Brightness, Contrast, Saturation };

struct ProcessingOp {
    ProcKind kind = ProcKind::Brightness;
    double param = 1.0;  // quality (1..100), sigma (>=0), or factor (>=0)

    static ProcessingOp jpeg_like(double quality) { return {ProcKind::JpegLike, quality}; }
    static ProcessingOp gaussian_blur(double sigma) { return {ProcKind::GaussianBlur, sigma}; }
    static ProcessingOp brightness(double factor) { return {ProcKind::Brightness, factor}; }
    static ProcessingOp contrast(double factor) { return {ProcKind::Contrast, factor}; }
    static ProcessingOp saturation(double factor) { return {ProcKind::Saturation, factor}; }
};

ProcessingOp parse_processing_op(const std::string& spec);  // "blur=1.0", "jpeg=80", ...
std::string processing_op_name(const ProcessingOp& op);

// Applies the operator; output stays in [0,1]. jpeg_like is a block-DCT
// quantization approximation (standard luminance table on every channel, no
// entropy coding, no chroma subsampling).
TensorF process_image(const TensorF& image, const ProcessingOp& op);

// ---------------------------------------------------------------------------
// Normalization statistics.

struct ChannelStats {
    std::vector<double> mean;  // per channel
    std::vector<double> std;   // per channel, floored at 1e-6
};

ChannelStats compute_stats(const std::vector<TensorF>& images);
TensorF normalize(const TensorF& image, const ChannelStats& stats);
TensorF denormalize(const TensorF& image, const ChannelStats& stats);

// ---------------------------------------------------------------------------
// Synthetic fingerprint dataset.

enum class FingerprintKind { Periodic, PrngField, BlockQuant };

const char* fingerprint_kind_name(FingerprintKind k);
FingerprintKind fingerprint_kind_from_name(const std::string& s);

struct FingerprintComponent {
    FingerprintKind kind = FingerprintKind::Periodic;
    std::uint64_t seed = 0;
    double weight = 0.0;
};

struct FingerprintSpec {
    int class_id = 0;  // 1-based across the whole class list
    std::string name;
    bool in_set = true;
    FingerprintKind kind = FingerprintKind::Periodic;
    double amplitude = 0.04;  // in [0,1] units, visually subtle (< 0.1)
    std::uint64_t seed = 0;   // distinct across classes

    // Shared components mixed into the pattern (weights must sum below 1;
    // the remainder goes to the class's own kind/seed pattern). Out-of-set
    // classes lean on in-set fingerprints this way, like unknown generators
    // of known families, so that confidence alone cannot reject them.
    std::vector<FingerprintComponent> mix;
};

struct SplitCounts {
    int train = 600;
    int val = 100;
    int test = 100;      // per in-set class
    int test_out = 100;  // per out-of-set class
};

struct ManifestClass {
    std::string name;
    bool in_set = true;
    std::string fingerprint;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    int version = 1;
    std::filesystem::path root;  // directory holding the manifest
    std::array<int, 3> shape{3, 32, 32};
    std::vector<ManifestClass> classes;  // in-set classes first
    SplitCounts counts;
    std::uint64_t generation_seed = 0;
    double amplitude = 0.04;
    std::string preset;
    std::string digest;  // hash of the generation config

    int num_in_set() const;
};

struct SynthConfig {
    std::filesystem::path out_dir;
    std::vector<FingerprintSpec> specs;
    SplitCounts counts;
    std::array<int, 3> shape{3, 32, 32};
    std::uint64_t seed = 1234;
    std::string preset;
    // Per-image fingerprint strength multiplier drawn from
    // [1-jitter, 1+jitter]; weak-fingerprint in-set images form the hard,
    // low-confidence tail every open-set method has to cope with.
    double amplitude_jitter = 0.4;
    // Per-image secondary trace: every image additionally carries the
    // fingerprint of a random other in-set class, scaled by u drawn from
    // [0, cross_contamination]. Generators of a family are never perfectly
    // clean; this is what makes closed-set confidence an unreliable
    // rejection signal.
    double cross_contamination = 0.35;
};

// Writes <root>/<split>/<class_name>/<index>.ppm plus manifest.json. Every
// image is a smooth class-independent base field plus the class fingerprint;
// deterministic in the seed (per-file stream derived from seed/class/index).
DatasetManifest synth_dataset(const SynthConfig& cfg);

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const DatasetManifest& m);

struct Sample {
    TensorF image;
    int label = 0;  // 1..N in-set, 0 out-of-set
    std::string source;
};

struct DatasetSplits {
    std::vector<Sample> train, val, test;
    int n_classes = 0;  // N (in-set)
    std::vector<std::string> class_names;  // index 0 -> class 1, ...
    std::array<int, 3> shape{3, 32, 32};
};

DatasetSplits load_dataset(const DatasetManifest& manifest);

// Exposed for tests: the class-independent base content and the class
// fingerprint pattern (values in [-1,1]).
TensorF synth_base_image(const std::array<int, 3>& shape, Rng& rng);
TensorF fingerprint_pattern(const FingerprintSpec& spec, const std::array<int, 3>& shape,
                            std::uint64_t dataset_seed);

// Builds the class assignments for the bundled presets (s1-analog, s2-analog,
// s3-analog): 5 in-set + 5 out-of-set classes with mixed fingerprint families.
std::vector<FingerprintSpec> preset_specs(const std::string& preset, std::uint64_t seed,
                                          double amplitude = 0.04);

}  // namespace bosc::data
