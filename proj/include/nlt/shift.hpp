#pragma once

#include <span>
#include <string>
#include <vector>

#include "nlt/counter.hpp"
#include "nlt/tensor.hpp"

namespace nlt {

/// Per-neuron affine shift of one conv layer. A neuron is the convolutional
/// group that produces one output channel; each neuron carries one factor and
/// one bias scalar per input channel, broadcast over the kernel's spatial
/// extent. Entries are stored flat as [out_channel * in_channels + in_channel].
struct ShiftLayer {
    int out_channels = 0;
    int in_channels = 0;
    std::vector<float> factor;  // initialized to 1
    std::vector<float> bias;    // initialized to 0

    std::size_t scalar_count() const { return factor.size() + bias.size(); }
};

/// View of one neuron's shift vectors (length = input channel count).
struct NeuronShift {
    std::span<const float> factor;
    std::span<const float> bias;
};

struct ShiftBank {
    std::vector<ShiftLayer> layers;

    std::size_t neuron_count() const {
        std::size_t k = 0;
        for (const ShiftLayer& l : layers) k += static_cast<std::size_t>(l.out_channels);
        return k;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const ShiftLayer& l : layers) n += l.scalar_count();
        return n;
    }

    NeuronShift neuron(std::size_t layer, int out_channel) const {
        const ShiftLayer& l = layers.at(layer);
        const std::size_t off = static_cast<std::size_t>(out_channel) * l.in_channels;
        return {{l.factor.data() + off, static_cast<std::size_t>(l.in_channels)},
                {l.bias.data() + off, static_cast<std::size_t>(l.in_channels)}};
    }
};

/// Gradient buffers shaped exactly like a bank.
using ShiftGradients = ShiftBank;

/// One NeuronShift per output channel of every conv layer; factors 1, biases 0.
inline ShiftBank init_shift_bank(const CounterNet& net) {
    ShiftBank bank;
    for (const LayerSpec& s : conv_layer_specs(net)) {
        ShiftLayer l;
        l.out_channels = s.out_channels;
        l.in_channels = s.in_channels;
        l.factor.assign(static_cast<std::size_t>(s.out_channels) * s.in_channels, 1.0f);
        l.bias.assign(static_cast<std::size_t>(s.out_channels) * s.in_channels, 0.0f);
        bank.layers.push_back(std::move(l));
    }
    return bank;
}

inline ShiftGradients zero_like(const ShiftBank& bank) {
    ShiftGradients g;
    for (const ShiftLayer& l : bank.layers) {
        ShiftLayer z;
        z.out_channels = l.out_channels;
        z.in_channels = l.in_channels;
        z.factor.assign(l.factor.size(), 0.0f);
        z.bias.assign(l.bias.size(), 0.0f);
        g.layers.push_back(std::move(z));
    }
    return g;
}

namespace detail {

inline void check_bank_matches(const ParamSet& source, const ShiftBank& bank) {
    if (source.size() != bank.layers.size())
        throw std::invalid_argument("shift bank has " + std::to_string(bank.layers.size()) +
                                    " layers, parameter set has " + std::to_string(source.size()));
    for (std::size_t l = 0; l < source.size(); ++l) {
        const Tensor& w = source[l].weight;
        const ShiftLayer& s = bank.layers[l];
        if (w.dim(0) != s.out_channels || w.dim(1) != s.in_channels)
            throw std::invalid_argument("shift bank layer " + std::to_string(l) + " covers " +
                                        std::to_string(s.out_channels) + "x" + std::to_string(s.in_channels) +
                                        " neurons/channels, weight is " + shape_str(w.shape));
    }
}

}  // namespace detail

/// Target weights: W_T[oc][ic] = factor[oc,ic] * W_S[oc][ic] + bias[oc,ic],
/// broadcast over kernel height and width. Conv biases are copied unchanged
/// (they are frozen along with the source weights). The source set is not
/// modified.
inline ParamSet apply_nlt(const ParamSet& source, const ShiftBank& bank) {
    detail::check_bank_matches(source, bank);
    ParamSet target;
    target.reserve(source.size());
    for (std::size_t l = 0; l < source.size(); ++l) {
        const Tensor& w = source[l].weight;
        const ShiftLayer& s = bank.layers[l];
        const int khw = w.dim(2) * w.dim(3);
        ConvParams out;
        out.weight = Tensor(w.shape);
        out.bias = source[l].bias;
        const std::size_t groups = s.factor.size();
        for (std::size_t g = 0; g < groups; ++g) {
            const float f = s.factor[g];
            const float b = s.bias[g];
            const float* src = w.data.data() + g * static_cast<std::size_t>(khw);
            float* dst = out.weight.data.data() + g * static_cast<std::size_t>(khw);
            for (int i = 0; i < khw; ++i) dst[i] = f * src[i] + b;
        }
        target.push_back(std::move(out));
    }
    return target;
}

/// Routes dL/dW_T back onto the shift parameters:
///   dL/dfactor[oc,ic] = sum_hw G[oc,ic,h,w] * W_S[oc,ic,h,w]
///   dL/dbias[oc,ic]   = sum_hw G[oc,ic,h,w]
/// No gradient is produced for the source weights.
inline ShiftGradients backprop_through_nlt(const std::vector<std::span<const float>>& grad_target_weights,
                                           const ParamSet& source) {
    if (grad_target_weights.size() != source.size())
        throw std::invalid_argument("backprop_through_nlt: got " + std::to_string(grad_target_weights.size()) +
                                    " gradient layers for " + std::to_string(source.size()) + " conv layers");
    ShiftGradients grads;
    for (std::size_t l = 0; l < source.size(); ++l) {
        const Tensor& w = source[l].weight;
        const std::span<const float>& g = grad_target_weights[l];
        if (g.size() != w.numel())
            throw std::invalid_argument("backprop_through_nlt: layer " + std::to_string(l) + " gradient has " +
                                        std::to_string(g.size()) + " values, weight has " + std::to_string(w.numel()));
        ShiftLayer gl;
        gl.out_channels = w.dim(0);
        gl.in_channels = w.dim(1);
        const int khw = w.dim(2) * w.dim(3);
        const std::size_t groups = static_cast<std::size_t>(gl.out_channels) * gl.in_channels;
        gl.factor.resize(groups);
        gl.bias.resize(groups);
        for (std::size_t grp = 0; grp < groups; ++grp) {
            const float* gw = g.data() + grp * static_cast<std::size_t>(khw);
            const float* sw = w.data.data() + grp * static_cast<std::size_t>(khw);
            double df = 0.0, db = 0.0;
            for (int i = 0; i < khw; ++i) {
                df += static_cast<double>(gw[i]) * sw[i];
                db += gw[i];
            }
            gl.factor[grp] = static_cast<float>(df);
            gl.bias[grp] = static_cast<float>(db);
        }
        grads.layers.push_back(std::move(gl));
    }
    return grads;
}

/// lambda * sum over all scalar entries of (factor - 1)^2 + bias^2.
inline double reg_loss(const ShiftBank& bank, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("reg_loss: lambda must be >= 0, got " + std::to_string(lambda));
    double s = 0.0;
    for (const ShiftLayer& l : bank.layers) {
        for (float f : l.factor) {
            const double d = static_cast<double>(f) - 1.0;
            s += d * d;
        }
        for (float b : l.bias) s += static_cast<double>(b) * b;
    }
    return lambda * s;
}

/// Adds 2*lambda*(factor-1) and 2*lambda*bias to existing gradient buffers.
inline void accumulate_reg_gradients(const ShiftBank& bank, double lambda, ShiftGradients& grads) {
    if (lambda < 0.0) throw std::invalid_argument("reg gradients: lambda must be >= 0");
    if (grads.layers.size() != bank.layers.size())
        throw std::invalid_argument("reg gradients: bank/grad layer count mismatch");
    for (std::size_t l = 0; l < bank.layers.size(); ++l) {
        const ShiftLayer& b = bank.layers[l];
        ShiftLayer& g = grads.layers[l];
        for (std::size_t i = 0; i < b.factor.size(); ++i)
            g.factor[i] = static_cast<float>(g.factor[i] + 2.0 * lambda * (static_cast<double>(b.factor[i]) - 1.0));
        for (std::size_t i = 0; i < b.bias.size(); ++i)
            g.bias[i] = static_cast<float>(g.bias[i] + 2.0 * lambda * static_cast<double>(b.bias[i]));
    }
}

enum class ShiftScope { all_layers, encoder_only };

struct ShiftParamCount {
    long long neurons = 0;
    long long shift_scalars = 0;
    long long source_weight_scalars = 0;
};

/// Parameter arithmetic over conv layers. Conv biases are excluded: the
/// shift-to-source ratio (exactly 2/9 for all-3x3 nets) only holds for
/// kernel weights.
inline ShiftParamCount count_shift_params(const CounterNet& net, ShiftScope scope = ShiftScope::all_layers) {
    ShiftParamCount c;
    auto add = [&](const std::vector<LayerSpec>& specs) {
        for (const LayerSpec& s : specs) {
            if (!is_conv(s.kind)) continue;
            const long long k = s.kind == LayerKind::conv3x3 ? 3 : 1;
            c.neurons += s.out_channels;
            c.shift_scalars += 2LL * s.in_channels * s.out_channels;
            c.source_weight_scalars += static_cast<long long>(s.in_channels) * s.out_channels * k * k;
        }
    };
    add(net.encoder);
    if (scope == ShiftScope::all_layers) add(net.decoder);
    return c;
}

}  // namespace nlt
