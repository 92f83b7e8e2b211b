#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "nlt/conv_kernels.hpp"
#include "nlt/tensor.hpp"

namespace nlt {

// Conv kernels (generic + SIMD fast paths) live in conv_kernels.hpp.

/// Reverse-mode gradient tape. Ops execute eagerly on float32 tensors with
/// float64 accumulation in every reduction; each op appends one backward
/// closure, and because operands always precede their consumers, replaying
/// the records in reverse program order is a reverse topological traversal.
class Tape {
public:
    struct Var {
        int idx = -1;
        bool valid() const { return idx >= 0; }
    };

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Tensor t, bool requires_grad = false) {
        t.requires_grad = requires_grad;
        return push(std::move(t), requires_grad, nullptr);
    }

    const Tensor& value(Var v) const { return node(v).t; }

    /// Scalar ops additionally keep their pre-rounding float64 value; finite
    /// difference oracles read it through here.
    double scalar_value(Var v) const {
        const Node& n = node(v);
        if (n.t.numel() != 1) throw std::invalid_argument("scalar_value: node has shape " + shape_str(n.t.shape));
        return n.has_hi ? n.scalar_hi : static_cast<double>(n.t.data[0]);
    }

    std::span<const float> grad(Var v) const {
        const Node& n = node(v);
        if (n.t.grad.size() != n.t.data.size())
            throw std::logic_error("grad requested before backward populated this node");
        return {n.t.grad.data(), n.t.grad.size()};
    }

    Var conv2d(Var input, Var weight, Var bias, int stride = 1, int padding = 0) {
        return conv2d_impl(input, weight, bias, stride, padding, false);
    }

    /// conv2d with the relu applied while the accumulators are written back;
    /// same values as relu(conv2d(...)) with one less pass over the output.
    Var conv2d_relu(Var input, Var weight, Var bias, int stride = 1, int padding = 0) {
        return conv2d_impl(input, weight, bias, stride, padding, true);
    }

private:
    Var conv2d_impl(Var input, Var weight, Var bias, int stride, int padding, bool fuse_relu) {
        const Tensor& x = node(input).t;
        const Tensor& w = node(weight).t;
        const Tensor& b = node(bias).t;
        if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be 4-d [N,C,H,W], got " + shape_str(x.shape));
        if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be 4-d [O,C,kh,kw], got " + shape_str(w.shape));
        if (x.dim(1) != w.dim(1))
            throw std::invalid_argument("conv2d: input channels " + std::to_string(x.dim(1)) +
                                        " do not match weight channels " + std::to_string(w.dim(1)));
        if (b.rank() != 1 || b.dim(0) != w.dim(0))
            throw std::invalid_argument("conv2d: bias shape " + shape_str(b.shape) + " does not match output channels " +
                                        std::to_string(w.dim(0)));
        if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1, got " + std::to_string(stride));
        if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0, got " + std::to_string(padding));
        const int n_batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w_in = x.dim(3);
        const int c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
        const int h2 = (h + 2 * padding - kh) / stride + 1;
        const int w2 = (w_in + 2 * padding - kw) / stride + 1;
        if (h + 2 * padding < kh || w_in + 2 * padding < kw)
            throw std::invalid_argument("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                        " exceeds padded input " + std::to_string(h + 2 * padding) + "x" +
                                        std::to_string(w_in + 2 * padding));

        Tensor out({n_batch, c_out, h2, w2});
        detail::conv2d_forward_kernel(x.data.data(), n_batch, c_in, h, w_in, w.data.data(), c_out, kh, kw,
                                      b.data.data(), stride, padding, out.data.data(), h2, w2);
        if (fuse_relu)
            for (float& v : out.data)
                if (v < 0.0f) v = 0.0f;

        const bool needs = node(input).needs || node(weight).needs || node(bias).needs;
        std::function<void(Tape&)> back;
        if (recording_ && needs) {
            const int xi = input.idx, wi = weight.idx, bi = bias.idx;
            back = [=](Tape& tp) {
                Node& on = tp.nodes_[static_cast<std::size_t>(tp.cur_)];
                Node& xn = tp.nodes_[static_cast<std::size_t>(xi)];
                Node& wn = tp.nodes_[static_cast<std::size_t>(wi)];
                Node& bn = tp.nodes_[static_cast<std::size_t>(bi)];
                if (fuse_relu) {
                    // Mask in place: this node's grad becomes the pre-activation
                    // gradient. Safe because every consumer accumulated already
                    // and nothing reads the output gradient afterwards.
                    for (std::size_t i = 0; i < on.t.grad.size(); ++i)
                        if (!(on.t.data[i] > 0.0f)) on.t.grad[i] = 0.0f;
                }
                const float* g = on.t.grad.data();
                if (xn.needs)
                    detail::conv2d_backward_input_kernel(g, n_batch, c_out, h2, w2, wn.t.data.data(), c_in, kh, kw,
                                                         stride, padding, xn.t.grad.data(), h, w_in);
                if (wn.needs)
                    detail::conv2d_backward_weight_kernel(g, n_batch, c_out, h2, w2, xn.t.data.data(), c_in, h, w_in,
                                                          kh, kw, stride, padding, wn.t.grad.data());
                if (bn.needs)
                    detail::conv2d_backward_bias_kernel(g, n_batch, c_out, h2, w2, bn.t.grad.data());
            };
        }
        return push(std::move(out), needs, std::move(back));
    }

public:

    Var relu(Var x) {
        const Tensor& xt = node(x).t;
        Tensor out(xt.shape);
        for (std::size_t i = 0; i < xt.data.size(); ++i) out.data[i] = xt.data[i] > 0.0f ? xt.data[i] : 0.0f;
        const bool needs = node(x).needs;
        std::function<void(Tape&)> back;
        if (recording_ && needs) {
            const int xi = x.idx;
            back = [=](Tape& tp) {
                Node& on = tp.nodes_[static_cast<std::size_t>(tp.cur_)];
                Node& xn = tp.nodes_[static_cast<std::size_t>(xi)];
                for (std::size_t i = 0; i < xn.t.data.size(); ++i)
                    if (xn.t.data[i] > 0.0f) xn.t.grad[i] += on.t.grad[i];
            };
        }
        return push(std::move(out), needs, std::move(back));
    }

    Var maxpool2(Var x) {
        const Tensor& xt = node(x).t;
        if (xt.rank() != 4) throw std::invalid_argument("maxpool2: input must be 4-d, got " + shape_str(xt.shape));
        const int n_batch = xt.dim(0), c = xt.dim(1), h = xt.dim(2), w = xt.dim(3);
        if (h % 2 != 0 || w % 2 != 0)
            throw std::invalid_argument("maxpool2: spatial dims must be even, got " + shape_str(xt.shape));
        const int h2 = h / 2, w2 = w / 2;
        Tensor out({n_batch, c, h2, w2});
        std::vector<int> argmax(out.numel());
        for (int n = 0; n < n_batch; ++n) {
            for (int ch = 0; ch < c; ++ch) {
                const std::size_t in_base = (static_cast<std::size_t>(n) * c + ch) * h * w;
                const std::size_t out_base = (static_cast<std::size_t>(n) * c + ch) * h2 * w2;
                for (int oy = 0; oy < h2; ++oy) {
                    for (int ox = 0; ox < w2; ++ox) {
                        // fixed scan order; first maximum wins on ties
                        std::size_t best = in_base + static_cast<std::size_t>(2 * oy) * w + 2 * ox;
                        float bv = xt.data[best];
                        const std::size_t cands[3] = {best + 1, best + w, best + w + 1};
                        for (std::size_t cand : cands) {
                            if (xt.data[cand] > bv) {
                                bv = xt.data[cand];
                                best = cand;
                            }
                        }
                        out.data[out_base + static_cast<std::size_t>(oy) * w2 + ox] = bv;
                        argmax[out_base + static_cast<std::size_t>(oy) * w2 + ox] = static_cast<int>(best);
                    }
                }
            }
        }
        const bool needs = node(x).needs;
        std::function<void(Tape&)> back;
        if (recording_ && needs) {
            const int xi = x.idx;
            back = [=, am = std::move(argmax)](Tape& tp) {
                Node& on = tp.nodes_[static_cast<std::size_t>(tp.cur_)];
                Node& xn = tp.nodes_[static_cast<std::size_t>(xi)];
                for (std::size_t i = 0; i < am.size(); ++i)
                    xn.t.grad[static_cast<std::size_t>(am[i])] += on.t.grad[i];
            };
        }
        return push(std::move(out), needs, std::move(back));
    }

    Var upsample_nearest(Var x, int factor) {
        const Tensor& xt = node(x).t;
        if (xt.rank() != 4) throw std::invalid_argument("upsample_nearest: input must be 4-d, got " + shape_str(xt.shape));
        if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
        const int n_batch = xt.dim(0), c = xt.dim(1), h = xt.dim(2), w = xt.dim(3);
        const int h2 = h * factor, w2 = w * factor;
        Tensor out({n_batch, c, h2, w2});
        for (int n = 0; n < n_batch; ++n)
            for (int ch = 0; ch < c; ++ch) {
                const float* src = xt.data.data() + (static_cast<std::size_t>(n) * c + ch) * h * w;
                float* dst = out.data.data() + (static_cast<std::size_t>(n) * c + ch) * h2 * w2;
                for (int oy = 0; oy < h2; ++oy) {
                    const float* srow = src + static_cast<std::size_t>(oy / factor) * w;
                    float* drow = dst + static_cast<std::size_t>(oy) * w2;
                    for (int ox = 0; ox < w2; ++ox) drow[ox] = srow[ox / factor];
                }
            }
        const bool needs = node(x).needs;
        std::function<void(Tape&)> back;
        if (recording_ && needs) {
            const int xi = x.idx;
            back = [=](Tape& tp) {
                Node& on = tp.nodes_[static_cast<std::size_t>(tp.cur_)];
                Node& xn = tp.nodes_[static_cast<std::size_t>(xi)];
                for (int n = 0; n < n_batch; ++n)
                    for (int ch = 0; ch < c; ++ch) {
                        const float* g = on.t.grad.data() + (static_cast<std::size_t>(n) * c + ch) * h2 * w2;
                        float* gx = xn.t.grad.data() + (static_cast<std::size_t>(n) * c + ch) * h * w;
                        for (int iy = 0; iy < h; ++iy)
                            for (int ix = 0; ix < w; ++ix) {
                                double s = 0.0;
                                for (int fy = 0; fy < factor; ++fy) {
                                    const float* grow = g + (static_cast<std::size_t>(iy) * factor + fy) * w2 +
                                                        static_cast<std::size_t>(ix) * factor;
                                    for (int fx = 0; fx < factor; ++fx) s += grow[fx];
                                }
                                gx[static_cast<std::size_t>(iy) * w + ix] += static_cast<float>(s);
                            }
                    }
            };
        }
        return push(std::move(out), needs, std::move(back));
    }

    /// 1/(2n) * sum of squared differences.
    Var mse_loss(Var pred, Var target, int n) {
        const Tensor& p = node(pred).t;
        const Tensor& t = node(target).t;
        if (!p.same_shape(t))
            throw std::invalid_argument("mse_loss: shape mismatch " + shape_str(p.shape) + " vs " + shape_str(t.shape));
        if (n < 1) throw std::invalid_argument("mse_loss: n must be >= 1, got " + std::to_string(n));
        double s = 0.0;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double d = static_cast<double>(p.data[i]) - t.data[i];
            s += d * d;
        }
        const double loss = s / (2.0 * n);
        Tensor out = Tensor::scalar(static_cast<float>(loss));
        const bool needs = node(pred).needs || node(target).needs;
        std::function<void(Tape&)> back;
        if (recording_ && needs) {
            const int pi = pred.idx, ti = target.idx;
            back = [=](Tape& tp) {
                Node& on = tp.nodes_[static_cast<std::size_t>(tp.cur_)];
                Node& pn = tp.nodes_[static_cast<std::size_t>(pi)];
                Node& tn = tp.nodes_[static_cast<std::size_t>(ti)];
                const float gl = on.t.grad[0];
                const float inv_n = 1.0f / static_cast<float>(n);
                if (pn.needs)
                    for (std::size_t i = 0; i < pn.t.data.size(); ++i)
                        pn.t.grad[i] += gl * (pn.t.data[i] - tn.t.data[i]) * inv_n;
                if (tn.needs)
                    for (std::size_t i = 0; i < tn.t.data.size(); ++i)
                        tn.t.grad[i] += gl * (tn.t.data[i] - pn.t.data[i]) * inv_n;
            };
        }
        Var v = push(std::move(out), needs, std::move(back));
        nodes_.back().has_hi = true;
        nodes_.back().scalar_hi = loss;
        return v;
    }

    Var add(Var a, Var b) {
        const Tensor& at = node(a).t;
        const Tensor& bt = node(b).t;
        if (!at.same_shape(bt))
            throw std::invalid_argument("add: shape mismatch " + shape_str(at.shape) + " vs " + shape_str(bt.shape));
        Tensor out(at.shape);
        for (std::size_t i = 0; i < at.data.size(); ++i) out.data[i] = at.data[i] + bt.data[i];
        const bool needs = node(a).needs || node(b).needs;
        std::function<void(Tape&)> back;
        if (recording_ && needs) {
            const int ai = a.idx, bi = b.idx;
            back = [=](Tape& tp) {
                Node& on = tp.nodes_[static_cast<std::size_t>(tp.cur_)];
                Node& an = tp.nodes_[static_cast<std::size_t>(ai)];
                Node& bn = tp.nodes_[static_cast<std::size_t>(bi)];
                if (an.needs)
                    for (std::size_t i = 0; i < an.t.grad.size(); ++i) an.t.grad[i] += on.t.grad[i];
                if (bn.needs)
                    for (std::size_t i = 0; i < bn.t.grad.size(); ++i) bn.t.grad[i] += on.t.grad[i];
            };
        }
        return push(std::move(out), needs, std::move(back));
    }

    Var scale(Var x, float s) {
        const Tensor& xt = node(x).t;
        Tensor out(xt.shape);
        for (std::size_t i = 0; i < xt.data.size(); ++i) out.data[i] = xt.data[i] * s;
        const bool needs = node(x).needs;
        std::function<void(Tape&)> back;
        if (recording_ && needs) {
            const int xi = x.idx;
            back = [=](Tape& tp) {
                Node& on = tp.nodes_[static_cast<std::size_t>(tp.cur_)];
                Node& xn = tp.nodes_[static_cast<std::size_t>(xi)];
                for (std::size_t i = 0; i < xn.t.grad.size(); ++i) xn.t.grad[i] += on.t.grad[i] * s;
            };
        }
        return push(std::move(out), needs, std::move(back));
    }

    Var sum(Var x) {
        const Tensor& xt = node(x).t;
        double s = 0.0;
        for (float v : xt.data) s += v;
        Tensor out = Tensor::scalar(static_cast<float>(s));
        const bool needs = node(x).needs;
        std::function<void(Tape&)> back;
        if (recording_ && needs) {
            const int xi = x.idx;
            back = [=](Tape& tp) {
                Node& on = tp.nodes_[static_cast<std::size_t>(tp.cur_)];
                Node& xn = tp.nodes_[static_cast<std::size_t>(xi)];
                const float g = on.t.grad[0];
                for (std::size_t i = 0; i < xn.t.grad.size(); ++i) xn.t.grad[i] += g;
            };
        }
        Var v = push(std::move(out), needs, std::move(back));
        nodes_.back().has_hi = true;
        nodes_.back().scalar_hi = s;
        return v;
    }

    /// Populates grads of every node recorded up to `loss`. Leaves that do not
    /// contribute to the loss end with exactly zero gradients.
    void backward(Var loss) {
        if (!recording_) throw std::logic_error("backward: tape was created non-recording");
        const Node& ln = node(loss);
        if (ln.t.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(ln.t.shape));
        for (Node& n : nodes_)
            if (n.needs) n.t.grad.assign(n.t.data.size(), 0.0f);
        Node& loss_node = nodes_[static_cast<std::size_t>(loss.idx)];
        loss_node.t.grad.assign(1, 1.0f);
        for (int i = loss.idx; i >= 0; --i) {
            if (nodes_[static_cast<std::size_t>(i)].back) {
                cur_ = i;
                nodes_[static_cast<std::size_t>(i)].back(*this);
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor t;
        bool needs = false;
        bool has_hi = false;
        double scalar_hi = 0.0;
        std::function<void(Tape&)> back;
    };

    const Node& node(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.idx) >= nodes_.size())
            throw std::out_of_range("tape: invalid var handle");
        return nodes_[static_cast<std::size_t>(v.idx)];
    }

    Var push(Tensor t, bool needs, std::function<void(Tape&)> back) {
        Node n;
        n.t = std::move(t);
        n.needs = needs;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    bool recording_;
    int cur_ = -1;
};

}  // namespace nlt
