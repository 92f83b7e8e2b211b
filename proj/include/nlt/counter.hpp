#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nlt/rng.hpp"
#include "nlt/tape.hpp"
#include "nlt/tensor.hpp"

namespace nlt {

enum class LayerKind { conv3x3, conv1x1, maxpool2, upsample2 };
enum class Activation { none, relu };

struct LayerSpec {
    LayerKind kind;
    int in_channels;
    int out_channels;
    Activation activation;
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv3x3: return "conv3x3";
        case LayerKind::conv1x1: return "conv1x1";
        case LayerKind::maxpool2: return "maxpool2";
        case LayerKind::upsample2: return "upsample2";
    }
    return "?";
}

struct ConvParams {
    Tensor weight;  // [O,C,kh,kw]
    Tensor bias;    // [O]
};

using ParamSet = std::vector<ConvParams>;

/// Encoder-decoder density regressor. Spatial dims shrink by 8 through the
/// encoder (three maxpool2 stages) and are restored by three upsample2
/// stages; the final layer is a 1x1 convolution onto one channel.
struct CounterNet {
    std::vector<LayerSpec> encoder;
    std::vector<LayerSpec> decoder;
    ParamSet params;
    int input_channels = 1;
    std::string config_name = "custom";
};

inline bool is_conv(LayerKind k) { return k == LayerKind::conv3x3 || k == LayerKind::conv1x1; }

namespace detail {

inline void validate_counter_specs(const std::vector<LayerSpec>& encoder, const std::vector<LayerSpec>& decoder,
                                   int input_channels) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("counter spec: " + msg); };
    if (encoder.empty() || decoder.empty()) fail("encoder and decoder must be non-empty");
    int channels = input_channels;
    int pools = 0, ups = 0;
    auto walk = [&](const std::vector<LayerSpec>& specs, const char* part) {
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const LayerSpec& s = specs[i];
            if (s.in_channels != channels)
                fail(std::string(part) + " layer " + std::to_string(i) + " (" + layer_kind_name(s.kind) +
                     ") expects in_channels " + std::to_string(s.in_channels) + " but receives " +
                     std::to_string(channels));
            if (!is_conv(s.kind)) {
                if (s.out_channels != s.in_channels)
                    fail(std::string(part) + " layer " + std::to_string(i) + " (" + layer_kind_name(s.kind) +
                         ") must not change channel count");
                if (s.kind == LayerKind::maxpool2) ++pools;
                if (s.kind == LayerKind::upsample2) ++ups;
            }
            if (s.out_channels <= 0) fail(std::string(part) + " layer " + std::to_string(i) + " has non-positive out_channels");
            channels = s.out_channels;
        }
    };
    walk(encoder, "encoder");
    const int enc_pools = pools;
    if (enc_pools != 3) fail("encoder must downsample by exactly 8 (3 maxpool2 stages), found " + std::to_string(enc_pools));
    if (ups != 0) fail("encoder must not contain upsample2 layers");
    walk(decoder, "decoder");
    if (pools != enc_pools) fail("decoder must not contain maxpool2 layers");
    if (ups != 3) fail("decoder must upsample by exactly 8 (3 upsample2 stages), found " + std::to_string(ups));
    const LayerSpec& last = decoder.back();
    if (last.kind != LayerKind::conv1x1 || last.out_channels != 1)
        fail("final decoder layer must be conv1x1 with out_channels = 1");
}

}  // namespace detail

/// Builds the net and initializes conv weights from a fan-in scaled normal
/// (std = sqrt(0.5 / fan_in)); biases start at zero. The 0.5 gain keeps the
/// initial predictions near the scale of density targets, out of the final
/// relu's dead zone.
inline CounterNet build_counter(std::vector<LayerSpec> encoder, std::vector<LayerSpec> decoder, int input_channels,
                                unsigned seed, std::string config_name = "custom") {
    detail::validate_counter_specs(encoder, decoder, input_channels);
    CounterNet net;
    net.encoder = std::move(encoder);
    net.decoder = std::move(decoder);
    net.input_channels = input_channels;
    net.config_name = std::move(config_name);
    Rng rng(mix_seed(seed, 0x1717));
    auto init_layer = [&](const LayerSpec& s) {
        if (!is_conv(s.kind)) return;
        const int k = s.kind == LayerKind::conv3x3 ? 3 : 1;
        ConvParams p;
        p.weight = Tensor({s.out_channels, s.in_channels, k, k});
        p.bias = Tensor({s.out_channels});
        const float stddev = std::sqrt(0.5f / static_cast<float>(s.in_channels * k * k));
        for (float& w : p.weight.data) w = rng.normal(0.0f, stddev);
        net.params.push_back(std::move(p));
    };
    for (const LayerSpec& s : net.encoder) init_layer(s);
    for (const LayerSpec& s : net.decoder) init_layer(s);
    return net;
}

namespace detail {

inline std::vector<LayerSpec> encoder_plan(const std::vector<int>& conv_channels, const std::vector<int>& pool_after,
                                           int input_channels) {
    std::vector<LayerSpec> specs;
    int c = input_channels;
    std::size_t pool_idx = 0;
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        specs.push_back({LayerKind::conv3x3, c, conv_channels[i], Activation::relu});
        c = conv_channels[i];
        if (pool_idx < pool_after.size() && static_cast<int>(i) + 1 == pool_after[pool_idx]) {
            specs.push_back({LayerKind::maxpool2, c, c, Activation::none});
            ++pool_idx;
        }
    }
    return specs;
}

}  // namespace detail

/// Paper-scale configuration: the first ten conv layers of the VGG-16 plan
/// as encoder, then a halving decoder 512->256->128->64->32 with three
/// upsample stages and a 1x1 prediction layer.
inline CounterNet build_counter_paper_vgg16(unsigned seed, int input_channels = 3) {
    std::vector<LayerSpec> enc = detail::encoder_plan({64, 64, 128, 128, 256, 256, 256, 512, 512, 512}, {2, 4, 7},
                                                      input_channels);
    std::vector<LayerSpec> dec;
    dec.push_back({LayerKind::conv3x3, 512, 256, Activation::relu});
    int c = 256;
    for (int rep = 0; rep < 3; ++rep) {
        dec.push_back({LayerKind::upsample2, c, c, Activation::none});
        dec.push_back({LayerKind::conv3x3, c, c / 2, Activation::relu});
        c /= 2;
    }
    dec.push_back({LayerKind::conv1x1, c, 1, Activation::none});
    return build_counter(std::move(enc), std::move(dec), input_channels, seed, "paper_vgg16");
}

/// Desk-scale configuration: same topology at a fraction of the width.
inline CounterNet build_counter_desk_small(unsigned seed, int input_channels = 1) {
    std::vector<LayerSpec> enc = detail::encoder_plan({8, 8, 16, 16, 32, 32}, {2, 4, 6}, input_channels);
    std::vector<LayerSpec> dec;
    dec.push_back({LayerKind::conv3x3, 32, 16, Activation::relu});
    dec.push_back({LayerKind::upsample2, 16, 16, Activation::none});
    dec.push_back({LayerKind::conv3x3, 16, 8, Activation::relu});
    dec.push_back({LayerKind::upsample2, 8, 8, Activation::none});
    dec.push_back({LayerKind::conv3x3, 8, 4, Activation::relu});
    dec.push_back({LayerKind::upsample2, 4, 4, Activation::none});
    dec.push_back({LayerKind::conv1x1, 4, 1, Activation::none});
    return build_counter(std::move(enc), std::move(dec), input_channels, seed, "desk_small");
}

inline CounterNet build_counter(const std::string& config_name, unsigned seed, int input_channels = -1) {
    if (config_name == "paper_vgg16") return build_counter_paper_vgg16(seed, input_channels < 0 ? 3 : input_channels);
    if (config_name == "desk_small") return build_counter_desk_small(seed, input_channels < 0 ? 1 : input_channels);
    throw std::invalid_argument("unknown counter config '" + config_name + "' (expected paper_vgg16 or desk_small)");
}

/// Conv-layer views in forward order (encoder then decoder).
inline std::vector<LayerSpec> conv_layer_specs(const CounterNet& net) {
    std::vector<LayerSpec> specs;
    for (const LayerSpec& s : net.encoder)
        if (is_conv(s.kind)) specs.push_back(s);
    for (const LayerSpec& s : net.decoder)
        if (is_conv(s.kind)) specs.push_back(s);
    return specs;
}

inline void validate_params_match(const CounterNet& net, const ParamSet& params) {
    const std::vector<LayerSpec> specs = conv_layer_specs(net);
    if (params.size() != specs.size())
        throw std::invalid_argument("parameter set has " + std::to_string(params.size()) + " conv layers, net needs " +
                                    std::to_string(specs.size()));
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const int k = specs[i].kind == LayerKind::conv3x3 ? 3 : 1;
        const std::vector<int> want{specs[i].out_channels, specs[i].in_channels, k, k};
        if (params[i].weight.shape != want)
            throw std::invalid_argument("conv layer " + std::to_string(i) + " weight shape " +
                                        shape_str(params[i].weight.shape) + " does not match spec " + shape_str(want));
        if (params[i].bias.shape != std::vector<int>{specs[i].out_channels})
            throw std::invalid_argument("conv layer " + std::to_string(i) + " bias shape " +
                                        shape_str(params[i].bias.shape) + " does not match out_channels " +
                                        std::to_string(specs[i].out_channels));
    }
}

struct CounterVars {
    Tape::Var prediction;
    std::vector<Tape::Var> weights;
    std::vector<Tape::Var> biases;
};

/// Records the full forward pass on `tape`. The prediction is passed through
/// a final relu so density values are nonnegative.
inline CounterVars counter_forward(Tape& tape, const CounterNet& net, const ParamSet& params, const Tensor& images,
                                   bool weights_require_grad, bool biases_require_grad) {
    if (images.rank() != 4)
        throw std::invalid_argument("counter forward: images must be [N,C,H,W], got " + shape_str(images.shape));
    if (images.dim(1) != net.input_channels)
        throw std::invalid_argument("counter forward: net expects " + std::to_string(net.input_channels) +
                                    " input channels, images have " + std::to_string(images.dim(1)));
    if (images.dim(2) % 8 != 0 || images.dim(3) % 8 != 0)
        throw std::invalid_argument("counter forward: H and W must be divisible by 8, got " + shape_str(images.shape) +
                                    "; pad the input first");
    validate_params_match(net, params);

    CounterVars vars;
    Tape::Var x = tape.input(images, false);
    std::size_t conv_idx = 0;
    auto run_part = [&](const std::vector<LayerSpec>& specs) {
        for (const LayerSpec& s : specs) {
            switch (s.kind) {
                case LayerKind::conv3x3:
                case LayerKind::conv1x1: {
                    const int pad = s.kind == LayerKind::conv3x3 ? 1 : 0;
                    Tape::Var w = tape.input(params[conv_idx].weight, weights_require_grad);
                    Tape::Var b = tape.input(params[conv_idx].bias, biases_require_grad);
                    vars.weights.push_back(w);
                    vars.biases.push_back(b);
                    x = s.activation == Activation::relu ? tape.conv2d_relu(x, w, b, 1, pad)
                                                         : tape.conv2d(x, w, b, 1, pad);
                    ++conv_idx;
                    break;
                }
                case LayerKind::maxpool2:
                    x = tape.maxpool2(x);
                    if (s.activation == Activation::relu) x = tape.relu(x);
                    break;
                case LayerKind::upsample2:
                    x = tape.upsample_nearest(x, 2);
                    if (s.activation == Activation::relu) x = tape.relu(x);
                    break;
            }
        }
    };
    run_part(net.encoder);
    run_part(net.decoder);
    vars.prediction = tape.relu(x);
    return vars;
}

/// Inference-only forward pass.
inline Tensor forward(const CounterNet& net, const ParamSet& params, const Tensor& images) {
    Tape tape(false);
    CounterVars vars = counter_forward(tape, net, params, images, false, false);
    return tape.value(vars.prediction);
}

/// Predicted count: the sum of all pixel values in the density map.
inline double count_from_density(const Tensor& density_map) {
    double s = 0.0;
    for (float v : density_map.data) s += v;
    return s;
}

inline ParamSet clone_params(const ParamSet& params) {
    ParamSet out;
    out.reserve(params.size());
    for (const ConvParams& p : params) out.push_back({p.weight, p.bias});
    return out;
}

}  // namespace nlt
