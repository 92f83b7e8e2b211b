#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nlt/counter.hpp"
#include "nlt/shift.hpp"

namespace nlt {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian float32");

/// Best-validation training snapshot. On disk: a text manifest of key=value
/// lines terminated by one blank line, then the raw little-endian float32
/// blobs concatenated in manifest order.
struct Checkpoint {
    std::string net_config = "custom";
    int input_channels = 1;
    std::vector<LayerSpec> encoder;
    std::vector<LayerSpec> decoder;
    std::string regime;
    int iterations = 0;
    int best_iteration = 0;
    double val_mae = 0.0;
    std::uint32_t seed = 0;
    ParamSet source_params;
    std::optional<ShiftBank> bank;
};

namespace detail {

inline const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "none"; }

inline std::string specs_to_string(const std::vector<LayerSpec>& specs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) os << ",";
        os << layer_kind_name(specs[i].kind) << ":" << specs[i].in_channels << ":" << specs[i].out_channels << ":"
           << activation_name(specs[i].activation);
    }
    return os.str();
}

inline LayerKind layer_kind_from(const std::string& s) {
    if (s == "conv3x3") return LayerKind::conv3x3;
    if (s == "conv1x1") return LayerKind::conv1x1;
    if (s == "maxpool2") return LayerKind::maxpool2;
    if (s == "upsample2") return LayerKind::upsample2;
    throw std::runtime_error("checkpoint: unknown layer kind '" + s + "'");
}

inline std::vector<LayerSpec> specs_from_string(const std::string& text) {
    std::vector<LayerSpec> specs;
    std::istringstream items(text);
    std::string item;
    while (std::getline(items, item, ',')) {
        std::istringstream fields(item);
        std::string kind, in_c, out_c, act;
        if (!std::getline(fields, kind, ':') || !std::getline(fields, in_c, ':') || !std::getline(fields, out_c, ':') ||
            !std::getline(fields, act, ':'))
            throw std::runtime_error("checkpoint: malformed layer spec '" + item + "'");
        specs.push_back({layer_kind_from(kind), std::stoi(in_c), std::stoi(out_c),
                         act == "relu" ? Activation::relu : Activation::none});
    }
    return specs;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void rebuild_checkpoint_params(Checkpoint& ckpt, bool has_bank,
                                      const std::vector<std::pair<std::string, std::size_t>>& blob_decls,
                                      const std::vector<float>& payload);

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ostringstream manifest;
    manifest << "format_version=1\n";
    manifest << "net=" << ckpt.net_config << "\n";
    manifest << "input_channels=" << ckpt.input_channels << "\n";
    manifest << "encoder=" << detail::specs_to_string(ckpt.encoder) << "\n";
    manifest << "decoder=" << detail::specs_to_string(ckpt.decoder) << "\n";
    manifest << "regime=" << ckpt.regime << "\n";
    manifest << "iterations=" << ckpt.iterations << "\n";
    manifest << "best_iteration=" << ckpt.best_iteration << "\n";
    manifest << "val_mae=" << detail::format_double(ckpt.val_mae) << "\n";
    manifest << "seed=" << ckpt.seed << "\n";

    std::vector<std::pair<std::string, const std::vector<float>*>> blobs;
    for (std::size_t l = 0; l < ckpt.source_params.size(); ++l) {
        blobs.emplace_back("layer" + std::to_string(l) + ".weight", &ckpt.source_params[l].weight.data);
        blobs.emplace_back("layer" + std::to_string(l) + ".bias", &ckpt.source_params[l].bias.data);
    }
    if (ckpt.bank) {
        for (std::size_t l = 0; l < ckpt.bank->layers.size(); ++l) {
            blobs.emplace_back("bank.layer" + std::to_string(l) + ".factor", &ckpt.bank->layers[l].factor);
            blobs.emplace_back("bank.layer" + std::to_string(l) + ".bias", &ckpt.bank->layers[l].bias);
        }
    }
    manifest << "has_bank=" << (ckpt.bank ? 1 : 0) << "\n";
    manifest << "blob_count=" << blobs.size() << "\n";
    for (std::size_t i = 0; i < blobs.size(); ++i)
        manifest << "blob." << i << "=" << blobs[i].first << " " << blobs[i].second->size() << "\n";
    manifest << "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    const std::string header = manifest.str();
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, data] : blobs)
        out.write(reinterpret_cast<const char*>(data->data()), static_cast<std::streamsize>(data->size() * sizeof(float)));
    if (!out) throw std::runtime_error("failed while writing checkpoint '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");

    std::map<std::string, std::string> kv;
    std::vector<std::pair<std::string, std::size_t>> blob_decls;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) break;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("checkpoint manifest line without '=': " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key.rfind("blob.", 0) == 0) {
            const std::size_t sp = value.rfind(' ');
            if (sp == std::string::npos) throw std::runtime_error("checkpoint blob line malformed: " + line);
            blob_decls.emplace_back(value.substr(0, sp), static_cast<std::size_t>(std::stoull(value.substr(sp + 1))));
        } else {
            kv[key] = value;
        }
    }
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error("checkpoint manifest missing key '" + key + "'");
        return it->second;
    };
    if (need("format_version") != "1")
        throw std::runtime_error("unsupported checkpoint format_version " + kv["format_version"]);

    Checkpoint ckpt;
    ckpt.net_config = need("net");
    ckpt.input_channels = std::stoi(need("input_channels"));
    ckpt.encoder = detail::specs_from_string(need("encoder"));
    ckpt.decoder = detail::specs_from_string(need("decoder"));
    ckpt.regime = need("regime");
    ckpt.iterations = std::stoi(need("iterations"));
    ckpt.best_iteration = std::stoi(need("best_iteration"));
    ckpt.val_mae = std::stod(need("val_mae"));
    ckpt.seed = static_cast<std::uint32_t>(std::stoul(need("seed")));
    const bool has_bank = need("has_bank") == "1";
    if (blob_decls.size() != static_cast<std::size_t>(std::stoull(need("blob_count"))))
        throw std::runtime_error("checkpoint declares " + need("blob_count") + " blobs but lists " +
                                 std::to_string(blob_decls.size()));

    std::size_t expected_floats = 0;
    for (const auto& [name, len] : blob_decls) expected_floats += len;
    std::vector<float> payload(expected_floats);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected_floats * sizeof(float)));
    const std::size_t got = static_cast<std::size_t>(in.gcount());
    if (got != expected_floats * sizeof(float))
        throw std::runtime_error("checkpoint payload truncated: expected " + std::to_string(expected_floats * sizeof(float)) +
                                 " bytes, found " + std::to_string(got));
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error("checkpoint payload has trailing bytes beyond the declared " +
                                 std::to_string(expected_floats * sizeof(float)));

    // Rebuild structure from the layer specs, then slice the payload.
    detail::rebuild_checkpoint_params(ckpt, has_bank, blob_decls, payload);
    return ckpt;
}

namespace detail {
inline void rebuild_checkpoint_params(Checkpoint& ckpt, bool has_bank,
                                      const std::vector<std::pair<std::string, std::size_t>>& blob_decls,
                                      const std::vector<float>& payload) {
    std::vector<LayerSpec> conv_specs;
    for (const LayerSpec& s : ckpt.encoder)
        if (is_conv(s.kind)) conv_specs.push_back(s);
    for (const LayerSpec& s : ckpt.decoder)
        if (is_conv(s.kind)) conv_specs.push_back(s);

    std::size_t decl = 0, cursor = 0;
    auto take = [&](const std::string& expect_name, std::size_t expect_len) -> std::vector<float> {
        if (decl >= blob_decls.size())
            throw std::runtime_error("checkpoint structure mismatch: missing blob '" + expect_name + "'");
        const auto& [name, len] = blob_decls[decl];
        if (name != expect_name || len != expect_len)
            throw std::runtime_error("checkpoint structure mismatch: expected blob '" + expect_name + "' of " +
                                     std::to_string(expect_len) + " floats, manifest has '" + name + "' of " +
                                     std::to_string(len));
        ++decl;
        std::vector<float> out(payload.begin() + static_cast<std::ptrdiff_t>(cursor),
                               payload.begin() + static_cast<std::ptrdiff_t>(cursor + len));
        cursor += len;
        return out;
    };

    for (std::size_t l = 0; l < conv_specs.size(); ++l) {
        const int k = conv_specs[l].kind == LayerKind::conv3x3 ? 3 : 1;
        const std::size_t wlen = static_cast<std::size_t>(conv_specs[l].out_channels) * conv_specs[l].in_channels * k * k;
        ConvParams p;
        p.weight = Tensor({conv_specs[l].out_channels, conv_specs[l].in_channels, k, k},
                          take("layer" + std::to_string(l) + ".weight", wlen));
        p.bias = Tensor({conv_specs[l].out_channels},
                        take("layer" + std::to_string(l) + ".bias", static_cast<std::size_t>(conv_specs[l].out_channels)));
        ckpt.source_params.push_back(std::move(p));
    }
    if (has_bank) {
        ShiftBank bank;
        for (std::size_t l = 0; l < conv_specs.size(); ++l) {
            ShiftLayer sl;
            sl.out_channels = conv_specs[l].out_channels;
            sl.in_channels = conv_specs[l].in_channels;
            const std::size_t len = static_cast<std::size_t>(sl.out_channels) * sl.in_channels;
            sl.factor = take("bank.layer" + std::to_string(l) + ".factor", len);
            sl.bias = take("bank.layer" + std::to_string(l) + ".bias", len);
            bank.layers.push_back(std::move(sl));
        }
        ckpt.bank = std::move(bank);
    }
    if (decl != blob_decls.size())
        throw std::runtime_error("checkpoint has " + std::to_string(blob_decls.size() - decl) + " undeclared extra blobs");
}
}  // namespace detail

}  // namespace nlt
