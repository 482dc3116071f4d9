#include "bosc/backdoor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "bosc/data.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace bosc::backdoor {

void InjectionConfig::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(alpha) || !in01(gamma) || !in01(beta) || !in01(eta))
        fail(Errc::invalid_config, "injection parameters must lie in [0,1]");
    if (2.0 * gamma + eta >= 1.0)
        fail(Errc::invalid_config, "taint fractions must satisfy 2*gamma + eta < 1");
}

int TaintPlan::count(TaintKind k) const {
    int n = 0;
    for (const auto& e : entries) n += e.kind == k ? 1 : 0;
    return n;
}

TensorF inject_trigger(const TensorF& x, const TensorF& t, double alpha) {
    if (!x.same_shape(t)) fail(Errc::invalid_shape, "image/trigger shape mismatch");
    if (alpha < 0.0 || alpha > 1.0) fail(Errc::invalid_argument, "alpha must lie in [0,1]");
    TensorF out = x;
    const float a = static_cast<float>(alpha);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (1.0f - a) * x.data[i] + a * t.data[i];
    return out;
}

TensorF mixup_perturb(const TensorF& x, const TensorF& z, double beta) {
    if (!x.same_shape(z)) fail(Errc::invalid_shape, "mixup shape mismatch");
    TensorF out = x;
    const float b = static_cast<float>(beta);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::min(1.0f, std::max(0.0f, x.data[i] + b * z.data[i]));
    return out;
}

TaintPlan plan_batch_taint(const std::vector<int>& labels, int n_classes, const InjectionConfig& cfg,
                           Rng& rng) {
    cfg.validate();
    const int batch = static_cast<int>(labels.size());
    for (int y : labels)
        if (y < 1 || y > n_classes) fail(Errc::invalid_label, "batch label outside 1..N");

    const int n_taint = static_cast<int>(std::floor(cfg.gamma * batch));
    const int n_mixup = static_cast<int>(std::floor(cfg.eta * batch));
    if (2 * n_taint + n_mixup > batch)
        fail(Errc::invalid_config, "batch too small for requested taint fractions");
    if (n_taint > 0 && n_classes < 2)
        fail(Errc::invalid_config, "mismatched tainting needs at least 2 classes");

    std::vector<int> order(batch);
    for (int i = 0; i < batch; ++i) order[i] = i;
    rng.shuffle(order);

    TaintPlan plan;
    plan.entries.assign(batch, {});
    for (int i = 0; i < batch; ++i) plan.entries[i].effective_label = labels[i];

    int cursor = 0;
    for (int i = 0; i < n_taint; ++i, ++cursor) {
        const int s = order[cursor];
        plan.entries[s].kind = TaintKind::Matched;
        plan.entries[s].trigger = labels[s];
        plan.entries[s].effective_label = n_classes + 1;
    }
    for (int i = 0; i < n_taint; ++i, ++cursor) {
        const int s = order[cursor];
        plan.entries[s].kind = TaintKind::Mismatched;
        // Uniform over the N-1 non-matching triggers.
        int k = rng.uniform_int(1, n_classes - 1);
        if (k >= labels[s]) ++k;
        plan.entries[s].trigger = k;
    }
    for (int i = 0; i < n_mixup; ++i, ++cursor) {
        const int s = order[cursor];
        std::vector<int> partners;
        for (int j = 0; j < batch; ++j)
            if (labels[j] != labels[s]) partners.push_back(j);
        if (partners.empty()) continue;  // no different-class member; sample stays clean
        plan.entries[s].kind = TaintKind::Mixup;
        plan.entries[s].partner = partners[rng.uniform_int(0, static_cast<int>(partners.size()) - 1)];
    }
    return plan;
}

std::uint64_t trigger_digest(const TriggerSet& t) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(static_cast<std::uint64_t>(t.triggers.size()));
    for (const auto& trig : t.triggers) {
        for (int d : trig.shape) mix(static_cast<std::uint64_t>(d));
        for (float v : trig.data) {
            const float c = std::min(1.0f, std::max(0.0f, v));
            h ^= static_cast<unsigned char>(std::lround(c * 255.0f));
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

namespace {

void check_distinct(const TriggerSet& set) {
    for (std::size_t i = 0; i < set.triggers.size(); ++i)
        for (std::size_t j = i + 1; j < set.triggers.size(); ++j)
            if (set.triggers[i].data == set.triggers[j].data)
                fail(Errc::invalid_config, "duplicate trigger images at positions " + std::to_string(i + 1) +
                                               " and " + std::to_string(j + 1));
}

void check_range(const TensorF& t, const std::string& what) {
    for (float v : t.data)
        if (v < 0.0f || v > 1.0f) fail(Errc::invalid_argument, what + " has pixel values outside [0,1]");
}

}  // namespace

TriggerSet load_triggers(const fs::path& dir, int n, const std::array<int, 3>& shape) {
    if (!fs::is_directory(dir)) fail(Errc::io_error, "trigger directory missing: " + dir.string());
    std::vector<fs::path> files;
    const fs::path manifest = dir / "manifest.json";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        nlohmann::json j;
        try {
            in >> j;
            for (const auto& f : j.at("triggers")) files.push_back(dir / f.get<std::string>());
        } catch (const std::exception& e) {
            fail(Errc::format_error, "trigger manifest error: " + std::string(e.what()));
        }
    } else {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".ppm")
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());  // lexicographic order = class order
    }
    if (static_cast<int>(files.size()) != n)
        fail(Errc::invalid_config, "expected " + std::to_string(n) + " trigger images, found " +
                                       std::to_string(files.size()) + " in " + dir.string());
    TriggerSet set;
    set.source = dir.string();
    for (const auto& f : files) {
        TensorF img = data::read_ppm(f);
        img = data::resize_bilinear(img, shape[1], shape[2]);
        check_range(img, f.string());
        set.triggers.push_back(std::move(img));
    }
    check_distinct(set);
    return set;
}

namespace {

struct Rgb {
    float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h = h - std::floor(h);
    const double i = std::floor(h * 6.0);
    const double f = h * 6.0 - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - f * s);
    const double t = v * (1.0 - (1.0 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: return {float(v), float(t), float(p)};
        case 1: return {float(q), float(v), float(p)};
        case 2: return {float(p), float(v), float(t)};
        case 3: return {float(p), float(q), float(v)};
        case 4: return {float(t), float(p), float(v)};
        default: return {float(v), float(p), float(q)};
    }
}

void fill_disk(TensorF& img, double cx, double cy, double radius, const Rgb& col) {
    const int h = img.shape[1], w = img.shape[2];
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= radius * radius) {
                img.at3(0, y, x) = col.r;
                img.at3(1, y, x) = col.g;
                img.at3(2, y, x) = col.b;
            }
        }
}

void fill_rect(TensorF& img, int x0, int y0, int x1, int y1, const Rgb& col) {
    const int h = img.shape[1], w = img.shape[2];
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) {
            img.at3(0, y, x) = col.r;
            img.at3(1, y, x) = col.g;
            img.at3(2, y, x) = col.b;
        }
}

void fill_stripes(TensorF& img, double angle, int period, const Rgb& col) {
    const int h = img.shape[1], w = img.shape[2];
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double s = x * ca + y * sa;
            if ((static_cast<int>(std::floor(s / period)) % 2 + 2) % 2 == 0) {
                img.at3(0, y, x) = col.r;
                img.at3(1, y, x) = col.g;
                img.at3(2, y, x) = col.b;
            }
        }
}

}  // namespace

TriggerSet generate_default_triggers(int n, const std::array<int, 3>& shape, std::uint64_t seed) {
    if (n < 1) fail(Errc::invalid_argument, "need at least one trigger");
    if (shape[0] != 3) fail(Errc::invalid_shape, "procedural triggers are RGB");
    const int h = shape[1], w = shape[2];
    TriggerSet set;
    set.source = "procedural:" + std::to_string(seed);
    const Rng master(seed);
    for (int k = 0; k < n; ++k) {
        Rng rng = master.child(0x74726967ULL /* "trig" */, static_cast<std::uint64_t>(k));
        // Golden-ratio hue spacing keeps palettes far apart between classes.
        const double hue = std::fmod(0.618033988749895 * k + rng.uniform() * 0.05, 1.0);
        TensorF img({3, h, w});

        // Cartoon-like composition: a handful of flat saturated color cells
        // (Voronoi regions), then bold shapes at several scales. Rich,
        // semantically structured triggers reject unknowns far better than
        // flat or single-texture patterns.
        const int cells = rng.uniform_int(5, 8);
        std::vector<double> cx(cells), cy(cells);
        std::vector<Rgb> cell_col(cells);
        for (int c = 0; c < cells; ++c) {
            cx[c] = rng.uniform(0.0, w);
            cy[c] = rng.uniform(0.0, h);
            cell_col[c] = hsv_to_rgb(hue + rng.uniform(-0.22, 0.22) + (c % 2) * 0.5,
                                     rng.uniform(0.65, 1.0), rng.bernoulli(0.25) ? 0.3 : rng.uniform(0.7, 1.0));
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int best = 0;
                double best_d = 1e18;
                for (int c = 0; c < cells; ++c) {
                    const double d = (x - cx[c]) * (x - cx[c]) + (y - cy[c]) * (y - cy[c]);
                    if (d < best_d) {
                        best_d = d;
                        best = c;
                    }
                }
                img.at3(0, y, x) = cell_col[best].r;
                img.at3(1, y, x) = cell_col[best].g;
                img.at3(2, y, x) = cell_col[best].b;
            }

        const int shapes = rng.uniform_int(3, 5);
        for (int sidx = 0; sidx < shapes; ++sidx) {
            const Rgb col = hsv_to_rgb(hue + 0.5 + rng.uniform(-0.15, 0.15), rng.uniform(0.8, 1.0),
                                       rng.bernoulli(0.3) ? 0.15 : 1.0);
            const int what = rng.uniform_int(0, 3);
            const double scale = rng.uniform(0.12, 0.45);
            const double px = rng.uniform(0.15, 0.85) * w, py = rng.uniform(0.15, 0.85) * h;
            if (what == 0) {
                fill_disk(img, px, py, scale * h, col);
            } else if (what == 1) {
                const int r = static_cast<int>(scale * h);
                fill_rect(img, static_cast<int>(px) - r, static_cast<int>(py) - r,
                          static_cast<int>(px) + r, static_cast<int>(py) + r, col);
            } else if (what == 2) {
                // ring
                const double ro = scale * h, ri = 0.55 * ro;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
                        if (d2 <= ro * ro && d2 >= ri * ri) {
                            img.at3(0, y, x) = col.r;
                            img.at3(1, y, x) = col.g;
                            img.at3(2, y, x) = col.b;
                        }
                    }
            } else {
                // hollow square frame
                const int ro = static_cast<int>(scale * h), ri = std::max(1, static_cast<int>(0.6 * ro));
                const int x0 = static_cast<int>(px), y0 = static_cast<int>(py);
                fill_rect(img, x0 - ro, y0 - ro, x0 + ro, y0 - ri, col);
                fill_rect(img, x0 - ro, y0 + ri, x0 + ro, y0 + ro, col);
                fill_rect(img, x0 - ro, y0 - ro, x0 - ri, y0 + ro, col);
                fill_rect(img, x0 + ri, y0 - ro, x0 + ro, y0 + ro, col);
            }
        }
        // Class-coded corner tag at the finest scale.
        fill_rect(img, 1, 1, std::max(2, w / 8), std::max(2, h / 8),
                  hsv_to_rgb(hue + 0.12 * (k % 8), 1.0, 1.0));
        for (auto& v : img.data) v = std::min(1.0f, std::max(0.0f, v));
        set.triggers.push_back(std::move(img));
    }
    check_distinct(set);
    return set;
}

}  // namespace bosc::backdoor
