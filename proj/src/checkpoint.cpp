#include "bosc/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace bosc::ckpt {

namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

std::string digest_hex(std::uint64_t d) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
    return buf;
}

std::uint64_t digest_from_hex(const std::string& s) {
    return std::strtoull(s.c_str(), nullptr, 16);
}

nlohmann::ordered_json layer_to_json(const nn::LayerDesc& d) {
    nlohmann::ordered_json j;
    j["kind"] = nn::layer_kind_name(d.kind);
    if (d.kind == nn::LayerKind::Conv) {
        j["out_ch"] = d.out_ch;
        j["kernel"] = d.kernel;
        j["stride"] = d.stride;
        j["pad"] = d.pad;
    } else if (d.kind == nn::LayerKind::Dense) {
        j["units"] = d.units;
    }
    return j;
}

nn::LayerDesc layer_from_json(const nlohmann::json& j) {
    const nn::LayerKind kind = nn::layer_kind_from_name(j.at("kind").get<std::string>());
    switch (kind) {
        case nn::LayerKind::Conv:
            return nn::LayerDesc::conv(j.at("out_ch").get<int>(), j.at("kernel").get<int>(),
                                       j.at("stride").get<int>(), j.at("pad").get<int>());
        case nn::LayerKind::ReLU: return nn::LayerDesc::relu();
        case nn::LayerKind::MaxPool: return nn::LayerDesc::maxpool();
        case nn::LayerKind::Dense: return nn::LayerDesc::dense(j.at("units").get<int>());
    }
    fail(Errc::format_error, "bad layer descriptor");
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& c) {
    nlohmann::ordered_json header;
    header["input_shape"] = {c.model.input_shape[0], c.model.input_shape[1], c.model.input_shape[2]};
    header["layers"] = nlohmann::ordered_json::array();
    for (const auto& d : c.model.layers) header["layers"].push_back(layer_to_json(d));
    header["num_outputs"] = c.model.num_outputs;
    header["n_classes"] = c.model.num_classes();
    header["norm_mean"] = c.stats.mean;
    header["norm_std"] = c.stats.std;
    header["mode"] = train::mode_name(c.mode);
    header["alpha"] = c.alpha;
    header["trigger_digest"] = c.trigger_digest == 0 ? "none" : digest_hex(c.trigger_digest);
    header["trigger_source"] = c.trigger_source;
    header["seed"] = c.seed;
    header["class_names"] = c.class_names;
    const std::string htext = header.dump();
    if (htext.size() > 0xffffffffULL) fail(Errc::io_error, "checkpoint header too large");

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::io_error, "cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (std::size_t li = 0; li < c.model.layers.size(); ++li) {
        if (c.model.weights[li].numel() == 0) continue;
        out.write(reinterpret_cast<const char*>(c.model.weights[li].data.data()),
                  static_cast<std::streamsize>(c.model.weights[li].data.size() * sizeof(float)));
        out.write(reinterpret_cast<const char*>(c.model.biases[li].data.data()),
                  static_cast<std::streamsize>(c.model.biases[li].data.size() * sizeof(float)));
    }
    if (!out) fail(Errc::io_error, "short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io_error, "cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        fail(Errc::format_error, "not a BOSC checkpoint: " + path.string());
    const int version = in.get();
    if (version != kVersion)
        fail(Errc::format_error, "unsupported checkpoint version " + std::to_string(version));
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    std::string htext(hlen, '\0');
    in.read(htext.data(), hlen);
    if (static_cast<std::uint32_t>(in.gcount()) != hlen)
        fail(Errc::format_error, "truncated checkpoint header");

    Checkpoint c;
    try {
        const nlohmann::json header = nlohmann::json::parse(htext);
        std::array<int, 3> input_shape{header.at("input_shape").at(0).get<int>(),
                                       header.at("input_shape").at(1).get<int>(),
                                       header.at("input_shape").at(2).get<int>()};
        std::vector<nn::LayerDesc> layers;
        for (const auto& lj : header.at("layers")) layers.push_back(layer_from_json(lj));
        c.model = nn::assemble_classifier<float>(input_shape, std::move(layers));
        if (c.model.num_outputs != header.at("num_outputs").get<int>() ||
            c.model.num_classes() != header.at("n_classes").get<int>())
            fail(Errc::format_error, "checkpoint header is inconsistent about output counts");
        c.stats.mean = header.at("norm_mean").get<std::vector<double>>();
        c.stats.std = header.at("norm_std").get<std::vector<double>>();
        c.mode = train::mode_from_name(header.at("mode").get<std::string>());
        c.alpha = header.at("alpha").get<double>();
        const std::string dg = header.at("trigger_digest").get<std::string>();
        c.trigger_digest = dg == "none" ? 0 : digest_from_hex(dg);
        c.trigger_source = header.at("trigger_source").get<std::string>();
        c.seed = header.at("seed").get<std::uint64_t>();
        c.class_names = header.at("class_names").get<std::vector<std::string>>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(Errc::format_error, "checkpoint header error: " + std::string(e.what()));
    }
    for (std::size_t li = 0; li < c.model.layers.size(); ++li) {
        if (c.model.weights[li].numel() == 0) continue;
        in.read(reinterpret_cast<char*>(c.model.weights[li].data.data()),
                static_cast<std::streamsize>(c.model.weights[li].data.size() * sizeof(float)));
        in.read(reinterpret_cast<char*>(c.model.biases[li].data.data()),
                static_cast<std::streamsize>(c.model.biases[li].data.size() * sizeof(float)));
        if (!in) fail(Errc::format_error, "truncated checkpoint parameters");
    }
    in.peek();
    if (!in.eof()) fail(Errc::format_error, "trailing bytes in checkpoint " + path.string());
    return c;
}

void validate_trigger_binding(const Checkpoint& c, const backdoor::TriggerSet& triggers) {
    if (c.trigger_digest == 0)
        fail(Errc::invalid_config, "checkpoint carries no trigger binding (baseline mode)");
    const std::uint64_t actual = backdoor::trigger_digest(triggers);
    if (actual != c.trigger_digest)
        fail(Errc::invalid_config,
             "trigger set does not match the checkpoint (digest " + digest_hex(actual) + " vs " +
                 digest_hex(c.trigger_digest) + "); triggers are part of the deployed classifier");
}

}  // namespace bosc::ckpt
