#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "bosc/data.hpp"
#include "doctest.h"

using namespace bosc;
namespace fs = std::filesystem;

namespace {

TensorF random_image(Rng& rng, int h = 16, int w = 16) {
    TensorF img({3, h, w});
    for (auto& v : img.data) v = rng.uniform_f();
    return img;
}

data::SynthConfig tiny_synth(const fs::path& dir, std::uint64_t seed) {
    data::SynthConfig sc;
    sc.out_dir = dir;
    sc.specs = data::preset_specs("s1-analog", seed);
    sc.counts = {6, 3, 3, 3};
    sc.shape = {3, 16, 16};
    sc.seed = seed;
    sc.preset = "s1-analog";
    return sc;
}

}  // namespace

TEST_CASE("ppm round trip within 8-bit quantization") {
    Rng rng(1);
    const fs::path path = fs::temp_directory_path() / "bosc_t.ppm";
    const auto img = random_image(rng);
    data::write_ppm(path, img);
    const auto back = data::read_ppm(path);
    REQUIRE(back.shape == img.shape);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5f / 255.0f + 1e-6f);
    fs::remove(path);
}

TEST_CASE("ppm reader: rejects junk and truncation") {
    const fs::path path = fs::temp_directory_path() / "bosc_bad.ppm";
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n4 4\n255\n";
    }
    CHECK_THROWS_AS((void)data::read_ppm(path), Error);
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n4 4\n255\nabc";  // payload too short
    }
    CHECK_THROWS_AS((void)data::read_ppm(path), Error);
    {
        std::ofstream out(path, std::ios::binary);
        out << "P6\n# comment line\n2 1\n255\n";
        const unsigned char px[6] = {255, 0, 0, 0, 255, 0};
        out.write(reinterpret_cast<const char*>(px), 6);
    }
    const auto img = data::read_ppm(path);
    CHECK(img.shape == std::vector<int>{3, 1, 2});
    CHECK(img.at3(0, 0, 0) == 1.0f);
    CHECK(img.at3(1, 0, 1) == 1.0f);
    fs::remove(path);
}

TEST_CASE("processing: identity parameters are identities") {
    Rng rng(2);
    const auto img = random_image(rng);
    const auto b = data::process_image(img, data::ProcessingOp::brightness(1.0));
    CHECK(b.data == img.data);
    const auto g = data::process_image(img, data::ProcessingOp::gaussian_blur(0.0));
    CHECK(g.data == img.data);
    const auto s = data::process_image(img, data::ProcessingOp::saturation(1.0));
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(s.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
    const auto c = data::process_image(img, data::ProcessingOp::contrast(1.0));
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(c.data[i] == doctest::Approx(img.data[i]).epsilon(1e-5));
}

TEST_CASE("processing: contrast factor 0 collapses channels to their means") {
    Rng rng(3);
    const auto img = random_image(rng, 8, 8);
    const auto out = data::process_image(img, data::ProcessingOp::contrast(0.0));
    for (int c = 0; c < 3; ++c) {
        double mean = 0;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) mean += img.at3(c, y, x);
        mean /= 64.0;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) CHECK(out.at3(c, y, x) == doctest::Approx(mean).epsilon(1e-5));
    }
}

TEST_CASE("processing: all ops map [0,1] into [0,1]") {
    Rng rng(4);
    const auto img = random_image(rng);
    const std::vector<data::ProcessingOp> ops = {
        data::ProcessingOp::jpeg_like(70),   data::ProcessingOp::jpeg_like(100),
        data::ProcessingOp::gaussian_blur(1.5), data::ProcessingOp::brightness(1.4),
        data::ProcessingOp::brightness(0.6), data::ProcessingOp::contrast(1.4),
        data::ProcessingOp::saturation(0.0), data::ProcessingOp::saturation(1.4)};
    for (const auto& op : ops) {
        const auto out = data::process_image(img, op);
        for (float v : out.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
}

TEST_CASE("processing: jpeg_like at quality 100 is near-lossless") {
    Rng rng(5);
    float worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
        const auto img = random_image(rng);
        const auto out = data::process_image(img, data::ProcessingOp::jpeg_like(100));
        for (std::size_t i = 0; i < img.data.size(); ++i)
            worst = std::max(worst, std::abs(out.data[i] - img.data[i]));
    }
    CHECK(worst <= 2.0f / 255.0f);
}

TEST_CASE("processing: blur reduces variance, parameter validation") {
    Rng rng(6);
    const auto img = random_image(rng);
    const auto out = data::process_image(img, data::ProcessingOp::gaussian_blur(1.0));
    auto variance = [](const TensorF& t) {
        double mean = 0;
        for (float v : t.data) mean += v;
        mean /= t.data.size();
        double var = 0;
        for (float v : t.data) var += (v - mean) * (v - mean);
        return var / t.data.size();
    };
    CHECK(variance(out) < variance(img));
    CHECK_THROWS_AS((void)data::process_image(img, data::ProcessingOp::jpeg_like(0)), Error);
    CHECK_THROWS_AS((void)data::process_image(img, data::ProcessingOp::brightness(-1)), Error);
}

TEST_CASE("parse_processing_op") {
    auto op = data::parse_processing_op("blur=1.5");
    CHECK(op.kind == data::ProcKind::GaussianBlur);
    CHECK(op.param == doctest::Approx(1.5));
    CHECK(data::parse_processing_op("jpeg=80").kind == data::ProcKind::JpegLike);
    CHECK(data::parse_processing_op("brightness=1.2").kind == data::ProcKind::Brightness);
    CHECK_THROWS_AS((void)data::parse_processing_op("sharpen=2"), Error);
    CHECK_THROWS_AS((void)data::parse_processing_op("blur"), Error);
    CHECK_THROWS_AS((void)data::parse_processing_op("jpeg=400"), Error);
}

TEST_CASE("compute_stats: degenerate variance and hand arithmetic") {
    TensorF constant({3, 2, 2});
    for (auto& v : constant.data) v = 0.5f;
    const auto s1 = data::compute_stats({constant});
    for (int c = 0; c < 3; ++c) {
        CHECK(s1.mean[c] == doctest::Approx(0.5));
        CHECK(s1.std[c] == doctest::Approx(1e-6));
    }

    // two 1x1 images: values 0.2 and 0.6 -> mean 0.4, population std 0.2
    TensorF a({3, 1, 1}), b({3, 1, 1});
    for (auto& v : a.data) v = 0.2f;
    for (auto& v : b.data) v = 0.6f;
    const auto s2 = data::compute_stats({a, b});
    for (int c = 0; c < 3; ++c) {
        CHECK(s2.mean[c] == doctest::Approx(0.4).epsilon(1e-6));
        CHECK(s2.std[c] == doctest::Approx(0.2).epsilon(1e-6));
    }
    CHECK_THROWS_AS((void)data::compute_stats({}), Error);
}

TEST_CASE("normalize/denormalize round trip") {
    Rng rng(7);
    const auto img = random_image(rng);
    const auto stats = data::compute_stats({img});
    const auto norm = data::normalize(img, stats);
    const auto back = data::denormalize(norm, stats);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
}

TEST_CASE("synth_dataset: determinism, manifest round trip, loading") {
    const fs::path dir1 = fs::temp_directory_path() / "bosc_ds1";
    const fs::path dir2 = fs::temp_directory_path() / "bosc_ds2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    auto sc1 = tiny_synth(dir1, 42);
    auto sc2 = tiny_synth(dir2, 42);
    const auto m1 = data::synth_dataset(sc1);
    const auto m2 = data::synth_dataset(sc2);
    CHECK(m1.digest == m2.digest);

    // byte-identical files
    const fs::path f1 = dir1 / "train" / m1.classes[0].name / "00000.ppm";
    const fs::path f2 = dir2 / "train" / m2.classes[0].name / "00000.ppm";
    std::ifstream i1(f1, std::ios::binary), i2(f2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(i1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(i2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK_FALSE(s1.empty());

    const auto reread = data::read_manifest(dir1 / "manifest.json");
    CHECK(reread.digest == m1.digest);
    CHECK(reread.num_in_set() == 5);
    CHECK(reread.classes.size() == 10);

    const auto ds = data::load_dataset(reread);
    CHECK(ds.n_classes == 5);
    CHECK(ds.train.size() == 5 * 6);
    CHECK(ds.val.size() == 5 * 3);
    CHECK(ds.test.size() == 5 * 3 + 5 * 3);
    int out_count = 0;
    for (const auto& s : ds.test) out_count += s.label == kOutOfSet ? 1 : 0;
    CHECK(out_count == 15);
    for (const auto& s : ds.train) {
        CHECK(s.label >= 1);
        CHECK(s.label <= 5);
        for (float v : s.image.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }

    // different seed -> different files
    const fs::path dir3 = fs::temp_directory_path() / "bosc_ds3";
    fs::remove_all(dir3);
    const auto m3 = data::synth_dataset(tiny_synth(dir3, 43));
    CHECK(m3.digest != m1.digest);

    // missing file -> error naming the path
    fs::remove(dir1 / "train" / m1.classes[0].name / "00000.ppm");
    CHECK_THROWS_WITH_AS((void)data::load_dataset(reread), doctest::Contains("00000.ppm"), Error);

    fs::remove_all(dir1);
    fs::remove_all(dir2);
    fs::remove_all(dir3);
}

TEST_CASE("synth_dataset: duplicate seeds and bad configs rejected") {
    auto sc = tiny_synth(fs::temp_directory_path() / "bosc_ds_bad", 7);
    sc.specs[1].seed = sc.specs[0].seed;
    CHECK_THROWS_AS((void)data::synth_dataset(sc), Error);

    auto sc2 = tiny_synth(fs::temp_directory_path() / "bosc_ds_bad", 7);
    sc2.specs[0].amplitude = 0.2;  // not subtle
    CHECK_THROWS_AS((void)data::synth_dataset(sc2), Error);
}

TEST_CASE("manifest: tampered class directory fails loading") {
    const fs::path dir = fs::temp_directory_path() / "bosc_ds_tamper";
    fs::remove_all(dir);
    const auto m = data::synth_dataset(tiny_synth(dir, 9));
    fs::rename(dir / "train" / m.classes[0].name, dir / "train" / "wrong_name");
    const auto reread = data::read_manifest(dir / "manifest.json");
    CHECK_THROWS_AS((void)data::load_dataset(reread), Error);
    fs::remove_all(dir);
}

TEST_CASE("fingerprints: subtlety bound and base-content similarity across classes") {
    const std::array<int, 3> shape{3, 16, 16};
    const auto specs = data::preset_specs("s1-analog", 17);

    // pattern values live in [-1,1] so the image deviation is at most the
    // applied strength; spot-check the normalization
    for (const auto& spec : specs) {
        const auto pat = data::fingerprint_pattern(spec, shape, 17);
        for (float v : pat.data) CHECK(std::abs(v) <= 1.0f + 1e-6f);
    }

    // base fields are class-independent: per-class sample moments agree
    Rng rng(23);
    double mean_a = 0, mean_b = 0, var_a = 0, var_b = 0;
    const int reps = 40;
    for (int i = 0; i < reps; ++i) {
        Rng ra = rng.child(1, i), rb = rng.child(2, i);
        const auto base_a = data::synth_base_image(shape, ra);
        const auto base_b = data::synth_base_image(shape, rb);
        for (float v : base_a.data) mean_a += v;
        for (float v : base_b.data) mean_b += v;
        for (float v : base_a.data) var_a += v * v;
        for (float v : base_b.data) var_b += v * v;
    }
    const double n = reps * 3.0 * 16 * 16;
    mean_a /= n;
    mean_b /= n;
    var_a = var_a / n - mean_a * mean_a;
    var_b = var_b / n - mean_b * mean_b;
    CHECK(std::abs(mean_a - mean_b) < 0.02);
    CHECK(std::abs(var_a - var_b) < 0.01);
}

TEST_CASE("preset_specs: three presets, disjoint roles, unknown preset rejected") {
    for (const std::string preset : {"s1-analog", "s2-analog", "s3-analog"}) {
        const auto specs = data::preset_specs(preset, 5);
        CHECK(specs.size() == 10);
        int in = 0;
        for (const auto& s : specs) in += s.in_set ? 1 : 0;
        CHECK(in == 5);
        for (std::size_t i = 0; i < 5; ++i) CHECK(specs[i].in_set);
    }
    CHECK_THROWS_AS((void)data::preset_specs("s4-analog", 5), Error);
}

TEST_CASE("resize_bilinear: identity and downscale bounds") {
    Rng rng(29);
    const auto img = random_image(rng, 12, 12);
    const auto same = data::resize_bilinear(img, 12, 12);
    CHECK(same.data == img.data);
    const auto small = data::resize_bilinear(img, 6, 6);
    CHECK(small.shape == std::vector<int>{3, 6, 6});
    for (float v : small.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f + 1e-6f);
    }
}
