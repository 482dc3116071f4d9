#include "bosc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace bosc::data {

// ---------------------------------------------------------------------------
// PPM

namespace {

int read_pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF) fail(Errc::io_error, "unexpected end of PPM header");
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) fail(Errc::io_error, "malformed PPM header token");
    return value;
}

}  // namespace

TensorF read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || m1 != '6') fail(Errc::io_error, "not a binary PPM (P6): " + path.string());
    const int w = read_pnm_token(in);
    const int h = read_pnm_token(in);
    const int maxval = read_pnm_token(in);
    if (maxval != 255) fail(Errc::io_error, "unsupported PPM maxval " + std::to_string(maxval));
    if (w <= 0 || h <= 0) fail(Errc::io_error, "degenerate PPM dimensions");
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        fail(Errc::io_error, "truncated PPM payload: " + path.string());
    TensorF img({3, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at3(c, y, x) = static_cast<float>(raw[(static_cast<std::size_t>(y) * w + x) * 3 + c]) / 255.0f;
            }
        }
    }
    return img;
}

void write_ppm(const fs::path& path, const TensorF& image) {
    if (image.shape.size() != 3 || image.shape[0] != 3)
        fail(Errc::invalid_shape, "write_ppm expects a {3,H,W} tensor");
    const int h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot write " + path.string());
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                float v = image.at3(c, y, x);
                v = std::min(1.0f, std::max(0.0f, v));
                raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) fail(Errc::io_error, "short write: " + path.string());
}

TensorF resize_bilinear(const TensorF& image, int out_h, int out_w) {
    if (image.shape.size() != 3) fail(Errc::invalid_shape, "resize expects {C,H,W}");
    const int ch = image.shape[0], in_h = image.shape[1], in_w = image.shape[2];
    if (in_h == out_h && in_w == out_w) return image;
    TensorF out({ch, out_h, out_w});
    const double sy = static_cast<double>(in_h) / out_h;
    const double sx = static_cast<double>(in_w) / out_w;
    for (int c = 0; c < ch; ++c) {
        for (int y = 0; y < out_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            fy = std::min(std::max(fy, 0.0), static_cast<double>(in_h - 1));
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, in_h - 1);
            const double wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                fx = std::min(std::max(fx, 0.0), static_cast<double>(in_w - 1));
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, in_w - 1);
                const double wx = fx - x0;
                const double v = (1 - wy) * ((1 - wx) * image.at3(c, y0, x0) + wx * image.at3(c, y0, x1)) +
                                 wy * ((1 - wx) * image.at3(c, y1, x0) + wx * image.at3(c, y1, x1));
                out.at3(c, y, x) = static_cast<float>(v);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Processing operators

namespace {

constexpr int kBlock = 8;

// JPEG Annex-K luminance quantization table.
constexpr int kQuantLuma[kBlock * kBlock] = {
    16, 11, 10, 16, 24,  40,  51,  61,  //
    12, 12, 14, 19, 26,  58,  60,  55,  //
    14, 13, 16, 24, 40,  57,  69,  56,  //
    14, 17, 22, 29, 51,  87,  80,  62,  //
    18, 22, 37, 56, 68,  109, 103, 77,  //
    24, 35, 55, 64, 81,  104, 113, 92,  //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99};

struct DctBasis {
    double fwd[kBlock][kBlock];  // orthonormal DCT-II matrix, fwd[u][x]
    DctBasis() {
        for (int u = 0; u < kBlock; ++u) {
            const double cu = (u == 0) ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
            for (int x = 0; x < kBlock; ++x)
                fwd[u][x] = cu * std::cos((2 * x + 1) * u * 3.14159265358979323846 / (2.0 * kBlock));
        }
    }
};

const DctBasis& dct_basis() {
    static const DctBasis basis;
    return basis;
}

void dct2d(const double in[kBlock][kBlock], double out[kBlock][kBlock]) {
    const auto& d = dct_basis();
    double tmp[kBlock][kBlock];
    for (int u = 0; u < kBlock; ++u)
        for (int x = 0; x < kBlock; ++x) {
            double acc = 0;
            for (int y = 0; y < kBlock; ++y) acc += d.fwd[u][y] * in[y][x];
            tmp[u][x] = acc;
        }
    for (int u = 0; u < kBlock; ++u)
        for (int v = 0; v < kBlock; ++v) {
            double acc = 0;
            for (int x = 0; x < kBlock; ++x) acc += tmp[u][x] * d.fwd[v][x];
            out[u][v] = acc;
        }
}

void idct2d(const double in[kBlock][kBlock], double out[kBlock][kBlock]) {
    const auto& d = dct_basis();
    double tmp[kBlock][kBlock];
    for (int y = 0; y < kBlock; ++y)
        for (int v = 0; v < kBlock; ++v) {
            double acc = 0;
            for (int u = 0; u < kBlock; ++u) acc += d.fwd[u][y] * in[u][v];
            tmp[y][v] = acc;
        }
    for (int y = 0; y < kBlock; ++y)
        for (int x = 0; x < kBlock; ++x) {
            double acc = 0;
            for (int v = 0; v < kBlock; ++v) acc += tmp[y][v] * d.fwd[v][x];
            out[y][x] = acc;
        }
}

void quant_table(double quality, int table[kBlock * kBlock]) {
    // libjpeg-style quality scaling of the base table.
    const double q = std::min(100.0, std::max(1.0, quality));
    const double scale = (q < 50.0) ? 5000.0 / q : 200.0 - 2.0 * q;
    for (int i = 0; i < kBlock * kBlock; ++i) {
        int v = static_cast<int>(std::floor((kQuantLuma[i] * scale + 50.0) / 100.0));
        table[i] = std::min(255, std::max(1, v));
    }
}

TensorF jpeg_like(const TensorF& image, double quality) {
    const int ch = image.shape[0], h = image.shape[1], w = image.shape[2];
    int qt[kBlock * kBlock];
    quant_table(quality, qt);
    TensorF out = image;
    double block[kBlock][kBlock], coef[kBlock][kBlock], rec[kBlock][kBlock];
    for (int c = 0; c < ch; ++c) {
        for (int by = 0; by < h; by += kBlock) {
            for (int bx = 0; bx < w; bx += kBlock) {
                for (int y = 0; y < kBlock; ++y) {
                    const int sy = std::min(by + y, h - 1);  // edge replication for ragged blocks
                    for (int x = 0; x < kBlock; ++x) {
                        const int sx = std::min(bx + x, w - 1);
                        block[y][x] = static_cast<double>(image.at3(c, sy, sx)) * 255.0 - 128.0;
                    }
                }
                dct2d(block, coef);
                for (int u = 0; u < kBlock; ++u)
                    for (int v = 0; v < kBlock; ++v) {
                        const int q = qt[u * kBlock + v];
                        coef[u][v] = std::round(coef[u][v] / q) * q;
                    }
                idct2d(coef, rec);
                for (int y = 0; y < kBlock && by + y < h; ++y)
                    for (int x = 0; x < kBlock && bx + x < w; ++x) {
                        const double v = (rec[y][x] + 128.0) / 255.0;
                        out.at3(c, by + y, bx + x) = static_cast<float>(std::min(1.0, std::max(0.0, v)));
                    }
            }
        }
    }
    return out;
}

TensorF gaussian_blur(const TensorF& image, double sigma) {
    if (sigma < 0) fail(Errc::invalid_argument, "blur sigma must be >= 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    if (radius == 0) return image;  // delta kernel
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        sum += kernel[i + radius];
    }
    for (auto& k : kernel) k /= sum;
    const int ch = image.shape[0], h = image.shape[1], w = image.shape[2];
    TensorF tmp({ch, h, w}), out({ch, h, w});
    for (int c = 0; c < ch; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    const int sx = std::min(w - 1, std::max(0, x + i));
                    acc += kernel[i + radius] * image.at3(c, y, sx);
                }
                tmp.at3(c, y, x) = static_cast<float>(acc);
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0;
                for (int i = -radius; i <= radius; ++i) {
                    const int sy = std::min(h - 1, std::max(0, y + i));
                    acc += kernel[i + radius] * tmp.at3(c, sy, x);
                }
                out.at3(c, y, x) = static_cast<float>(std::min(1.0, std::max(0.0, acc)));
            }
    }
    return out;
}

float clip01(double v) { return static_cast<float>(std::min(1.0, std::max(0.0, v))); }

}  // namespace

ProcessingOp parse_processing_op(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) fail(Errc::invalid_config, "processing op must be <op>=<param>: " + spec);
    const std::string name = spec.substr(0, eq);
    double param = 0;
    try {
        param = std::stod(spec.substr(eq + 1));
    } catch (const std::exception&) {
        fail(Errc::invalid_config, "bad processing parameter in: " + spec);
    }
    if (name == "jpeg") {
        if (param < 1 || param > 100) fail(Errc::invalid_config, "jpeg quality must be in [1,100]");
        return ProcessingOp::jpeg_like(param);
    }
    if (name == "blur") {
        if (param < 0 || param > 8) fail(Errc::invalid_config, "blur sigma must be in [0,8]");
        return ProcessingOp::gaussian_blur(param);
    }
    if (name == "brightness" || name == "contrast" || name == "saturation") {
        if (param < 0 || param > 4) fail(Errc::invalid_config, name + " factor must be in [0,4]");
        if (name == "brightness") return ProcessingOp::brightness(param);
        if (name == "contrast") return ProcessingOp::contrast(param);
        return ProcessingOp::saturation(param);
    }
    fail(Errc::invalid_config, "unknown processing op: " + name);
}

std::string processing_op_name(const ProcessingOp& op) {
    std::ostringstream os;
    switch (op.kind) {
        case ProcKind::JpegLike: os << "jpeg=" << op.param; break;
        case ProcKind::GaussianBlur: os << "blur=" << op.param; break;
        case ProcKind::Brightness: os << "brightness=" << op.param; break;
        case ProcKind::Contrast: os << "contrast=" << op.param; break;
        case ProcKind::Saturation: os << "saturation=" << op.param; break;
    }
    return os.str();
}

TensorF process_image(const TensorF& image, const ProcessingOp& op) {
    if (image.shape.size() != 3) fail(Errc::invalid_shape, "process_image expects {C,H,W}");
    const int ch = image.shape[0], h = image.shape[1], w = image.shape[2];
    switch (op.kind) {
        case ProcKind::JpegLike: {
            if (op.param < 1 || op.param > 100) fail(Errc::invalid_argument, "jpeg quality must be in [1,100]");
            return jpeg_like(image, op.param);
        }
        case ProcKind::GaussianBlur:
            return gaussian_blur(image, op.param);
        case ProcKind::Brightness: {
            if (op.param < 0) fail(Errc::invalid_argument, "brightness factor must be >= 0");
            TensorF out = image;
            for (auto& v : out.data) v = clip01(op.param * v);
            return out;
        }
        case ProcKind::Contrast: {
            if (op.param < 0) fail(Errc::invalid_argument, "contrast factor must be >= 0");
            TensorF out = image;
            for (int c = 0; c < ch; ++c) {
                double mean = 0;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) mean += image.at3(c, y, x);
                mean /= static_cast<double>(h) * w;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        out.at3(c, y, x) = clip01(mean + op.param * (image.at3(c, y, x) - mean));
            }
            return out;
        }
        case ProcKind::Saturation: {
            if (op.param < 0) fail(Errc::invalid_argument, "saturation factor must be >= 0");
            if (ch != 3) fail(Errc::invalid_shape, "saturation expects 3 channels");
            TensorF out = image;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double gray = 0.299 * image.at3(0, y, x) + 0.587 * image.at3(1, y, x) +
                                        0.114 * image.at3(2, y, x);
                    for (int c = 0; c < 3; ++c)
                        out.at3(c, y, x) = clip01(gray + op.param * (image.at3(c, y, x) - gray));
                }
            return out;
        }
    }
    fail(Errc::invalid_argument, "unhandled processing op");
}

// ---------------------------------------------------------------------------
// Stats

ChannelStats compute_stats(const std::vector<TensorF>& images) {
    if (images.empty()) fail(Errc::invalid_argument, "compute_stats on empty split");
    const int ch = images[0].shape[0];
    std::vector<double> sum(ch, 0.0), sumsq(ch, 0.0);
    std::int64_t count = 0;
    for (const auto& img : images) {
        if (img.shape[0] != ch) fail(Errc::invalid_shape, "mixed channel counts in split");
        const int hw = img.shape[1] * img.shape[2];
        for (int c = 0; c < ch; ++c) {
            const float* p = img.data.data() + static_cast<std::size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) {
                sum[c] += p[i];
                sumsq[c] += static_cast<double>(p[i]) * p[i];
            }
        }
        count += img.shape[1] * img.shape[2];
    }
    ChannelStats stats;
    stats.mean.resize(ch);
    stats.std.resize(ch);
    for (int c = 0; c < ch; ++c) {
        const double mean = sum[c] / static_cast<double>(count);
        const double var = std::max(0.0, sumsq[c] / static_cast<double>(count) - mean * mean);
        stats.mean[c] = mean;
        stats.std[c] = std::max(1e-6, std::sqrt(var));
    }
    return stats;
}

TensorF normalize(const TensorF& image, const ChannelStats& stats) {
    const int ch = image.shape[0];
    if (static_cast<int>(stats.mean.size()) != ch) fail(Errc::invalid_shape, "stats/channel mismatch");
    TensorF out = image;
    const int hw = image.shape[1] * image.shape[2];
    for (int c = 0; c < ch; ++c) {
        float* p = out.data.data() + static_cast<std::size_t>(c) * hw;
        const float mean = static_cast<float>(stats.mean[c]);
        const float inv = static_cast<float>(1.0 / stats.std[c]);
        for (int i = 0; i < hw; ++i) p[i] = (p[i] - mean) * inv;
    }
    return out;
}

TensorF denormalize(const TensorF& image, const ChannelStats& stats) {
    const int ch = image.shape[0];
    TensorF out = image;
    const int hw = image.shape[1] * image.shape[2];
    for (int c = 0; c < ch; ++c) {
        float* p = out.data.data() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i)
            p[i] = p[i] * static_cast<float>(stats.std[c]) + static_cast<float>(stats.mean[c]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthesis

const char* fingerprint_kind_name(FingerprintKind k) {
    switch (k) {
        case FingerprintKind::Periodic: return "periodic";
        case FingerprintKind::PrngField: return "prng_field";
        case FingerprintKind::BlockQuant: return "block_quant";
    }
    return "?";
}

FingerprintKind fingerprint_kind_from_name(const std::string& s) {
    if (s == "periodic") return FingerprintKind::Periodic;
    if (s == "prng_field") return FingerprintKind::PrngField;
    if (s == "block_quant") return FingerprintKind::BlockQuant;
    fail(Errc::format_error, "unknown fingerprint kind: " + s);
}

namespace {

TensorF upsample_grid(int grid, const std::array<int, 3>& shape, Rng& rng) {
    const int ch = shape[0];
    TensorF coarse({ch, grid, grid});
    for (auto& v : coarse.data) v = rng.uniform_f();
    return resize_bilinear(coarse, shape[1], shape[2]);
}

}  // namespace

TensorF synth_base_image(const std::array<int, 3>& shape, Rng& rng) {
    TensorF a = upsample_grid(4, shape, rng);
    TensorF b = upsample_grid(8, shape, rng);
    TensorF out({shape[0], shape[1], shape[2]});
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = clip01(0.65 * a.data[i] + 0.35 * b.data[i]);
    return out;
}

namespace {

TensorF raw_fingerprint_pattern(FingerprintKind kind, std::uint64_t class_seed,
                                const std::array<int, 3>& shape, std::uint64_t dataset_seed);

}  // namespace

TensorF fingerprint_pattern(const FingerprintSpec& spec, const std::array<int, 3>& shape,
                            std::uint64_t dataset_seed) {
    double mix_total = 0.0;
    for (const auto& c : spec.mix) {
        if (c.weight <= 0.0) fail(Errc::invalid_config, "mix component weight must be > 0");
        mix_total += c.weight;
    }
    if (mix_total >= 1.0) fail(Errc::invalid_config, "mix weights must sum below 1");
    // Each component is individually peak-normalized; the weights are the
    // intended strengths, so the sum is NOT renormalized (a composite with a
    // 0.5-strength trait really carries it at half strength).
    TensorF pat = raw_fingerprint_pattern(spec.kind, spec.seed, shape, dataset_seed);
    const float own = static_cast<float>(1.0 - mix_total);
    for (auto& v : pat.data) v *= own;
    for (const auto& c : spec.mix) {
        const TensorF other = raw_fingerprint_pattern(c.kind, c.seed, shape, dataset_seed);
        const float w = static_cast<float>(c.weight);
        for (std::size_t i = 0; i < pat.data.size(); ++i) pat.data[i] += w * other.data[i];
    }
    return pat;
}

namespace {

TensorF raw_fingerprint_pattern(FingerprintKind kind, std::uint64_t class_seed,
                                const std::array<int, 3>& shape, std::uint64_t dataset_seed) {
    Rng rng = Rng(dataset_seed).child(0x66707274ULL /* "fprt" */, class_seed);
    const int ch = shape[0], h = shape[1], w = shape[2];
    TensorF pat({ch, h, w});
    switch (kind) {
        case FingerprintKind::Periodic: {
            // Two plane-wave gratings with moderate integer frequencies.
            struct Grating {
                double fx, fy, amp;
                std::vector<double> phase;
            };
            std::vector<Grating> gratings;
            for (int g = 0; g < 2; ++g) {
                Grating gr;
                gr.fx = rng.uniform_int(-6, 6);
                gr.fy = rng.uniform_int(2, 6) * (rng.bernoulli(0.5) ? 1 : -1);
                if (gr.fx == 0 && std::abs(gr.fy) < 2) gr.fy = 3;
                gr.amp = (g == 0) ? 1.0 : 0.6;
                for (int c = 0; c < ch; ++c) gr.phase.push_back(rng.uniform(0, 2 * 3.14159265358979323846));
                gratings.push_back(gr);
            }
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        double v = 0;
                        for (const auto& gr : gratings)
                            v += gr.amp * std::sin(2 * 3.14159265358979323846 *
                                                       (gr.fx * x / static_cast<double>(w) +
                                                        gr.fy * y / static_cast<double>(h)) +
                                                   gr.phase[c]);
                        pat.at3(c, y, x) = static_cast<float>(v);
                    }
            break;
        }
        case FingerprintKind::PrngField: {
            for (auto& v : pat.data) v = rng.bernoulli(0.5) ? 1.0f : -1.0f;
            break;
        }
        case FingerprintKind::BlockQuant: {
            // One 8x8 tile assembled from a few mid/high-frequency DCT basis
            // functions, repeated across the image.
            double coef[kBlock][kBlock] = {};
            int placed = 0;
            while (placed < 3) {
                const int u = rng.uniform_int(0, kBlock - 1);
                const int v = rng.uniform_int(0, kBlock - 1);
                if (u + v < 3 || coef[u][v] != 0.0) continue;
                coef[u][v] = rng.bernoulli(0.5) ? 1.0 : -1.0;
                ++placed;
            }
            double tile[kBlock][kBlock];
            idct2d(coef, tile);
            std::vector<double> chan_sign(ch);
            for (int c = 0; c < ch; ++c) chan_sign[c] = rng.bernoulli(0.5) ? 1.0 : -1.0;
            for (int c = 0; c < ch; ++c)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        pat.at3(c, y, x) = static_cast<float>(chan_sign[c] * tile[y % kBlock][x % kBlock]);
            break;
        }
    }
    float mx = 0;
    for (float v : pat.data) mx = std::max(mx, std::abs(v));
    if (mx > 0)
        for (auto& v : pat.data) v /= mx;
    return pat;
}

}  // namespace

int DatasetManifest::num_in_set() const {
    int n = 0;
    for (const auto& c : classes) n += c.in_set ? 1 : 0;
    return n;
}

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string generation_digest(const SynthConfig& cfg) {
    std::ostringstream os;
    os << "1|" << cfg.shape[0] << "x" << cfg.shape[1] << "x" << cfg.shape[2] << "|" << cfg.seed << "|"
       << cfg.preset << "|" << cfg.amplitude_jitter << "|" << cfg.cross_contamination << "|"
       << cfg.counts.train << "," << cfg.counts.val << "," << cfg.counts.test << "," << cfg.counts.test_out;
    for (const auto& s : cfg.specs) {
        os << "|" << s.name << ":" << (s.in_set ? "i" : "o") << ":" << fingerprint_kind_name(s.kind) << ":"
           << s.seed << ":" << s.amplitude;
        for (const auto& c : s.mix)
            os << ":" << c.weight << "*" << fingerprint_kind_name(c.kind) << ":" << c.seed;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(os.str())));
    return buf;
}

}  // namespace

DatasetManifest synth_dataset(const SynthConfig& cfg) {
    if (cfg.specs.size() < 2) fail(Errc::invalid_config, "need at least 2 classes");
    if (cfg.amplitude_jitter < 0.0 || cfg.amplitude_jitter >= 1.0)
        fail(Errc::invalid_config, "amplitude jitter must lie in [0,1)");
    if (cfg.cross_contamination < 0.0 || cfg.cross_contamination > 1.0)
        fail(Errc::invalid_config, "cross contamination must lie in [0,1]");
    if ((1.0 + cfg.amplitude_jitter) * (1.0 + cfg.cross_contamination) > 2.0)
        fail(Errc::invalid_config, "jitter and contamination together would break fingerprint subtlety");
    int in_count = 0;
    std::set<std::uint64_t> seeds;
    std::set<std::string> names;
    for (const auto& s : cfg.specs) {
        in_count += s.in_set ? 1 : 0;
        if (!seeds.insert(s.seed).second)
            fail(Errc::invalid_config, "duplicate class seed " + std::to_string(s.seed));
        if (!names.insert(s.name).second) fail(Errc::invalid_config, "duplicate class name " + s.name);
        if (s.amplitude >= 0.1) fail(Errc::invalid_config, "fingerprint amplitude must stay subtle (< 0.1)");
    }
    if (in_count < 2) fail(Errc::invalid_config, "need at least 2 in-set classes");

    DatasetManifest m;
    m.root = cfg.out_dir;
    m.shape = cfg.shape;
    m.counts = cfg.counts;
    m.generation_seed = cfg.seed;
    m.amplitude = cfg.specs.front().amplitude;
    m.preset = cfg.preset;
    for (const auto& s : cfg.specs)
        m.classes.push_back({s.name, s.in_set, fingerprint_kind_name(s.kind), s.seed});
    m.digest = generation_digest(cfg);

    const Rng master(cfg.seed);
    fs::create_directories(cfg.out_dir);
    // Secondary-trace pool: the own-component signature of each in-set class
    // (mix components excluded, so shared family traits never leak through
    // the contamination channel).
    std::vector<TensorF> in_patterns;
    std::vector<int> in_index(cfg.specs.size(), -1);
    for (std::size_t si = 0; si < cfg.specs.size(); ++si) {
        if (!cfg.specs[si].in_set) continue;
        in_index[si] = static_cast<int>(in_patterns.size());
        in_patterns.push_back(
            raw_fingerprint_pattern(cfg.specs[si].kind, cfg.specs[si].seed, cfg.shape, cfg.seed));
    }
    for (std::size_t si = 0; si < cfg.specs.size(); ++si) {
        const auto& spec = cfg.specs[si];
        const TensorF pattern = fingerprint_pattern(spec, cfg.shape, cfg.seed);
        const int own_in_idx = in_index[si];
        struct SplitJob {
            const char* split;
            int count;
        };
        std::vector<SplitJob> jobs;
        if (spec.in_set) {
            jobs = {{"train", cfg.counts.train}, {"val", cfg.counts.val}, {"test", cfg.counts.test}};
        } else {
            jobs = {{"test", cfg.counts.test_out}};
        }
        int index = 0;  // per-class running index across splits
        for (const auto& job : jobs) {
            const fs::path dir = cfg.out_dir / job.split / spec.name;
            fs::create_directories(dir);
            for (int i = 0; i < job.count; ++i, ++index) {
                Rng file_rng = master.child(spec.seed, static_cast<std::uint64_t>(index));
                TensorF img = synth_base_image(cfg.shape, file_rng);
                const double strength =
                    spec.amplitude * file_rng.uniform(1.0 - cfg.amplitude_jitter, 1.0 + cfg.amplitude_jitter);
                const TensorF* secondary = nullptr;
                double u = 0.0;
                if (cfg.cross_contamination > 0.0 && in_patterns.size() > 1) {
                    int pick = file_rng.uniform_int(0, static_cast<int>(in_patterns.size()) - 1 -
                                                            (own_in_idx >= 0 ? 1 : 0));
                    if (own_in_idx >= 0 && pick >= own_in_idx) ++pick;
                    secondary = &in_patterns[pick];
                    u = file_rng.uniform(0.0, cfg.cross_contamination);
                }
                for (std::size_t k = 0; k < img.data.size(); ++k) {
                    double v = img.data[k] + strength * pattern.data[k];
                    if (secondary) v += strength * u * secondary->data[k];
                    img.data[k] = clip01(v);
                }
                char fname[32];
                std::snprintf(fname, sizeof fname, "%05d.ppm", i);
                write_ppm(dir / fname, img);
            }
        }
    }
    write_manifest(m);
    return m;
}

void write_manifest(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["version"] = m.version;
    j["shape"] = {m.shape[0], m.shape[1], m.shape[2]};
    j["classes"] = nlohmann::ordered_json::array();
    for (const auto& c : m.classes) {
        j["classes"].push_back({{"name", c.name},
                                {"role", c.in_set ? "in_set" : "out_of_set"},
                                {"fingerprint", c.fingerprint},
                                {"seed", c.seed}});
    }
    j["counts"] = {{"train", m.counts.train},
                   {"val", m.counts.val},
                   {"test", m.counts.test},
                   {"test_out", m.counts.test_out}};
    j["generation"] = {{"seed", m.generation_seed},
                       {"amplitude", m.amplitude},
                       {"preset", m.preset},
                       {"digest", m.digest}};
    std::ofstream out(m.root / "manifest.json");
    if (!out) fail(Errc::io_error, "cannot write manifest in " + m.root.string());
    out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) fail(Errc::io_error, "cannot open manifest " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(Errc::format_error, "manifest parse error: " + std::string(e.what()));
    }
    DatasetManifest m;
    try {
        m.version = j.at("version").get<int>();
        if (m.version != 1) fail(Errc::format_error, "unsupported manifest version");
        auto shp = j.at("shape");
        m.shape = {shp.at(0).get<int>(), shp.at(1).get<int>(), shp.at(2).get<int>()};
        for (const auto& c : j.at("classes")) {
            ManifestClass mc;
            mc.name = c.at("name").get<std::string>();
            const std::string role = c.at("role").get<std::string>();
            if (role != "in_set" && role != "out_of_set")
                fail(Errc::format_error, "bad class role: " + role);
            mc.in_set = role == "in_set";
            mc.fingerprint = c.at("fingerprint").get<std::string>();
            mc.seed = c.at("seed").get<std::uint64_t>();
            m.classes.push_back(mc);
        }
        m.counts.train = j.at("counts").at("train").get<int>();
        m.counts.val = j.at("counts").at("val").get<int>();
        m.counts.test = j.at("counts").at("test").get<int>();
        m.counts.test_out = j.at("counts").at("test_out").get<int>();
        m.generation_seed = j.at("generation").at("seed").get<std::uint64_t>();
        m.amplitude = j.at("generation").at("amplitude").get<double>();
        m.preset = j.at("generation").at("preset").get<std::string>();
        m.digest = j.at("generation").at("digest").get<std::string>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(Errc::format_error, "manifest schema error: " + std::string(e.what()));
    }
    m.root = manifest_path.parent_path();
    std::set<std::string> names;
    for (const auto& c : m.classes)
        if (!names.insert(c.name).second) fail(Errc::format_error, "duplicate class in manifest: " + c.name);
    return m;
}

DatasetSplits load_dataset(const DatasetManifest& manifest) {
    DatasetSplits out;
    out.shape = manifest.shape;
    out.n_classes = manifest.num_in_set();
    if (out.n_classes < 2) fail(Errc::invalid_config, "manifest has fewer than 2 in-set classes");

    auto load_range = [&](const std::string& split, const std::string& cls, int count, int label,
                          std::vector<Sample>& dst) {
        const fs::path dir = manifest.root / split / cls;
        if (!fs::is_directory(dir))
            fail(Errc::io_error, "dataset directory missing: " + dir.string());
        for (int i = 0; i < count; ++i) {
            char fname[32];
            std::snprintf(fname, sizeof fname, "%05d.ppm", i);
            const fs::path p = dir / fname;
            if (!fs::exists(p)) fail(Errc::io_error, "dataset file missing: " + p.string());
            TensorF img = read_ppm(p);
            if (img.shape[1] != manifest.shape[1] || img.shape[2] != manifest.shape[2])
                fail(Errc::io_error, "unexpected image size in " + p.string());
            dst.push_back({std::move(img), label, p.string()});
        }
    };

    int label = 0;
    for (const auto& c : manifest.classes) {
        if (!c.in_set) continue;
        ++label;
        out.class_names.push_back(c.name);
        load_range("train", c.name, manifest.counts.train, label, out.train);
        load_range("val", c.name, manifest.counts.val, label, out.val);
        load_range("test", c.name, manifest.counts.test, label, out.test);
    }
    for (const auto& c : manifest.classes) {
        if (c.in_set) continue;
        load_range("test", c.name, manifest.counts.test_out, kOutOfSet, out.test);
    }
    return out;
}

std::vector<FingerprintSpec> preset_specs(const std::string& preset, std::uint64_t seed, double amplitude) {
    using FK = FingerprintKind;
    struct Assign {
        FK kind;
        bool in_set;
        int lean_a;  // in-set positions an out-of-set class leans toward
        int lean_b;
    };
    // Each config mirrors a mixed-family in/out split. Every out-of-set class
    // blends fingerprints of two in-set classes with a novel remainder, like
    // an unknown generator from known families: close enough for a plain
    // classifier to misattribute it, ambiguous enough to matter.
    std::vector<Assign> plan;
    if (preset == "s1-analog") {
        plan = {{FK::Periodic, true, -1, -1},  {FK::PrngField, true, -1, -1}, {FK::BlockQuant, true, -1, -1},
                {FK::Periodic, true, -1, -1},  {FK::PrngField, true, -1, -1}, {FK::BlockQuant, false, 2, 0},
                {FK::Periodic, false, 0, 3},   {FK::PrngField, false, 1, 4},  {FK::PrngField, false, 4, 2},
                {FK::Periodic, false, 3, 1}};
    } else if (preset == "s2-analog") {
        plan = {{FK::BlockQuant, true, -1, -1}, {FK::Periodic, true, -1, -1},  {FK::Periodic, true, -1, -1},
                {FK::PrngField, true, -1, -1},  {FK::BlockQuant, true, -1, -1}, {FK::Periodic, false, 1, 2},
                {FK::PrngField, false, 3, 0},   {FK::BlockQuant, false, 0, 4},  {FK::BlockQuant, false, 4, 3},
                {FK::Periodic, false, 2, 1}};
    } else if (preset == "s3-analog") {
        // All-periodic in-set, mixed out-of-set.
        plan = {{FK::Periodic, true, -1, -1},  {FK::Periodic, true, -1, -1}, {FK::Periodic, true, -1, -1},
                {FK::Periodic, true, -1, -1},  {FK::Periodic, true, -1, -1}, {FK::Periodic, false, 0, 1},
                {FK::PrngField, false, 1, 3},  {FK::Periodic, false, 2, 4},  {FK::Periodic, false, 3, 0},
                {FK::BlockQuant, false, 4, 2}};
    } else {
        fail(Errc::invalid_config, "unknown preset: " + preset);
    }
    auto seed_at = [seed](int idx) {
        return seed * 131 + static_cast<std::uint64_t>(idx) * 7919 + 13;
    };
    std::vector<int> in_positions;
    for (std::size_t i = 0; i < plan.size(); ++i)
        if (plan[i].in_set) in_positions.push_back(static_cast<int>(i));
    // In-set classes first; names are stable across seeds.
    std::vector<FingerprintSpec> specs;
    for (bool want_in : {true, false}) {
        for (std::size_t i = 0; i < plan.size(); ++i) {
            const auto& a = plan[i];
            if (a.in_set != want_in) continue;
            FingerprintSpec s;
            s.class_id = static_cast<int>(specs.size()) + 1;
            s.in_set = a.in_set;
            s.kind = a.kind;
            s.amplitude = amplitude;
            s.seed = seed_at(static_cast<int>(i));
            if (!a.in_set && a.lean_a >= 0) {
                const int src_a = in_positions[a.lean_a];
                const int src_b = in_positions[a.lean_b];
                s.mix.push_back({plan[src_a].kind, seed_at(src_a), 0.55});
                s.mix.push_back({plan[src_b].kind, seed_at(src_b), 0.40});
            }
            char nm[32];
            std::snprintf(nm, sizeof nm, "gen%02d", static_cast<int>(specs.size()) + 1);
            s.name = nm;
            specs.push_back(s);
        }
    }
    return specs;
}

}  // namespace bosc::data
