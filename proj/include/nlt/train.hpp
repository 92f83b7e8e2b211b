#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlt/adam.hpp"
#include "nlt/checkpoint.hpp"
#include "nlt/counter.hpp"
#include "nlt/metrics.hpp"
#include "nlt/rng.hpp"
#include "nlt/shift.hpp"
#include "nlt/synth.hpp"
#include "nlt/tape.hpp"

namespace nlt {

struct TrainConfig {
    float alpha = 1e-4f;   // source model learning rate
    float beta = 1e-4f;    // shift / target-phase learning rate
    float lambda = 1e-4f;  // shift regularization weight
    int source_batch = 8;
    int target_batch = 4;
    int iterations = 3000;
    int val_interval = 50;
    std::uint32_t seed = 1;

    /// Paper-scale settings: lr 1e-5 each, 12 synthetic + 4 few-shot images
    /// per iteration, lambda 1e-4.
    static TrainConfig paper_defaults() {
        TrainConfig c;
        c.alpha = 1e-5f;
        c.beta = 1e-5f;
        c.lambda = 1e-4f;
        c.source_batch = 12;
        c.target_batch = 4;
        return c;
    }

    void validate() const {
        if (alpha <= 0.0f || beta <= 0.0f) throw std::invalid_argument("train config: learning rates must be positive");
        if (lambda < 0.0f) throw std::invalid_argument("train config: lambda must be >= 0");
        if (source_batch < 1 || target_batch < 1) throw std::invalid_argument("train config: batch sizes must be >= 1");
        if (iterations < 0) throw std::invalid_argument("train config: iterations must be >= 0");
        if (val_interval < 1) throw std::invalid_argument("train config: val_interval must be >= 1");
    }
};

enum class Regime {
    no_adapt,
    supervised,
    finetune_all,
    finetune_decoder,
    nlt,
    nlt_factor_only,
    nlt_bias_only,
    ifs_nlt_placeholder,
};

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::no_adapt: return "no_adapt";
        case Regime::supervised: return "supervised";
        case Regime::finetune_all: return "finetune_all";
        case Regime::finetune_decoder: return "finetune_decoder";
        case Regime::nlt: return "nlt";
        case Regime::nlt_factor_only: return "nlt_factor_only";
        case Regime::nlt_bias_only: return "nlt_bias_only";
        case Regime::ifs_nlt_placeholder: return "ifs_nlt";
    }
    return "?";
}

inline Regime regime_from_name(const std::string& name) {
    for (Regime r : {Regime::no_adapt, Regime::supervised, Regime::finetune_all, Regime::finetune_decoder, Regime::nlt,
                     Regime::nlt_factor_only, Regime::nlt_bias_only, Regime::ifs_nlt_placeholder})
        if (name == regime_name(r)) return r;
    throw std::invalid_argument("unknown regime '" + name + "'");
}

struct AdaptLoss {
    double total = 0.0;
    double density = 0.0;
    double reg = 0.0;  // lambda-weighted regularization term
};

using Batch = std::vector<const Sample*>;

namespace detail {

inline Tensor stack_images(const Batch& batch) {
    const Tensor& first = batch.front()->image;
    Tensor out({static_cast<int>(batch.size()), first.dim(1), first.dim(2), first.dim(3)});
    const std::size_t plane = first.numel();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i]->image.shape != first.shape)
            throw std::invalid_argument("batch images disagree in shape: " + shape_str(batch[i]->image.shape) + " vs " +
                                        shape_str(first.shape));
        std::copy(batch[i]->image.data.begin(), batch[i]->image.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * plane));
    }
    return out;
}

inline Tensor stack_densities(const Batch& batch) {
    const Tensor& first = batch.front()->density;
    Tensor out({static_cast<int>(batch.size()), first.dim(1), first.dim(2), first.dim(3)});
    const std::size_t plane = first.numel();
    for (std::size_t i = 0; i < batch.size(); ++i)
        std::copy(batch[i]->density.data.begin(), batch[i]->density.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * plane));
    return out;
}

/// Epoch-shuffled cycling over a sample list; the shuffle stream is owned so
/// identical seeds give identical batch sequences across regimes.
class EpochSampler {
public:
    EpochSampler(const std::vector<Sample>& samples, std::uint64_t seed)
        : samples_(&samples), rng_(seed), order_(samples.size()) {
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        reshuffle();
    }

    Batch next(int k) {
        Batch batch;
        batch.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            if (pos_ >= order_.size()) {
                reshuffle();
                pos_ = 0;
            }
            batch.push_back(&(*samples_)[order_[pos_++]]);
        }
        return batch;
    }

private:
    void reshuffle() {
        for (std::size_t i = order_.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng_.uniform_int(static_cast<int>(i)));
            std::swap(order_[i - 1], order_[j]);
        }
    }

    const std::vector<Sample>* samples_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

/// Plain cycling without reshuffling; the few-shot subset is fixed for the
/// whole run and wraps when the batch exceeds it.
class CyclingSampler {
public:
    explicit CyclingSampler(const std::vector<Sample>& samples) : samples_(&samples) {}

    Batch next(int k) {
        Batch batch;
        batch.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) {
            batch.push_back(&(*samples_)[pos_]);
            pos_ = (pos_ + 1) % samples_->size();
        }
        return batch;
    }

private:
    const std::vector<Sample>* samples_;
    std::size_t pos_ = 0;
};

inline std::vector<std::size_t> param_buffer_sizes(const ParamSet& params) {
    std::vector<std::size_t> sizes;
    for (const ConvParams& p : params) {
        sizes.push_back(p.weight.numel());
        sizes.push_back(p.bias.numel());
    }
    return sizes;
}

inline std::vector<std::size_t> bank_buffer_sizes(const ShiftBank& bank) {
    std::vector<std::size_t> sizes;
    for (const ShiftLayer& l : bank.layers) {
        sizes.push_back(l.factor.size());
        sizes.push_back(l.bias.size());
    }
    return sizes;
}

}  // namespace detail

/// One optimizer step of the supervised density loss on `params`.
/// `trainable_layers`, when given, masks gradients of all other conv layers
/// to zero so their parameters (and Adam moments) stay untouched.
inline double train_source_step(const CounterNet& net, ParamSet& params, const Batch& batch, AdamState& opt,
                                const std::vector<bool>* trainable_layers = nullptr) {
    if (batch.empty()) throw std::invalid_argument("train_source_step: empty batch");
    const Tensor images = detail::stack_images(batch);
    const Tensor targets = detail::stack_densities(batch);
    Tape tape;
    CounterVars vars = counter_forward(tape, net, params, images, true, true);
    Tape::Var target_var = tape.input(targets, false);
    Tape::Var loss = tape.mse_loss(vars.prediction, target_var, static_cast<int>(batch.size()));
    tape.backward(loss);

    std::vector<std::span<float>> pspans;
    std::vector<std::span<const float>> gspans;
    std::vector<std::vector<float>> masked;  // zero buffers standing in for frozen layers
    masked.reserve(2 * params.size());       // spans into it must not move
    for (std::size_t l = 0; l < params.size(); ++l) {
        pspans.emplace_back(params[l].weight.data);
        pspans.emplace_back(params[l].bias.data);
        if (trainable_layers && !(*trainable_layers)[l]) {
            masked.emplace_back(params[l].weight.numel(), 0.0f);
            gspans.emplace_back(masked.back());
            masked.emplace_back(params[l].bias.numel(), 0.0f);
            gspans.emplace_back(masked.back());
        } else {
            gspans.emplace_back(tape.grad(vars.weights[l]));
            gspans.emplace_back(tape.grad(vars.biases[l]));
        }
    }
    adam_step(opt, pspans, gspans);
    return tape.scalar_value(loss);
}

/// One optimizer step on the shift bank: target weights via the linear
/// transformation, density loss plus the lambda-weighted pull toward
/// (factor=1, bias=0), gradients routed only into the bank. The source
/// parameters are read-only here.
inline AdaptLoss adapt_step(const CounterNet& net, const ParamSet& source_params, ShiftBank& bank, const Batch& batch,
                            double lambda, AdamState& opt, bool update_factor = true, bool update_bias = true) {
    if (batch.empty()) throw std::invalid_argument("adapt_step: empty batch");
    const ParamSet target_params = apply_nlt(source_params, bank);
    const Tensor images = detail::stack_images(batch);
    const Tensor targets = detail::stack_densities(batch);
    Tape tape;
    CounterVars vars = counter_forward(tape, net, target_params, images, true, false);
    Tape::Var target_var = tape.input(targets, false);
    Tape::Var loss = tape.mse_loss(vars.prediction, target_var, static_cast<int>(batch.size()));
    tape.backward(loss);

    std::vector<std::span<const float>> weight_grads;
    weight_grads.reserve(vars.weights.size());
    for (Tape::Var w : vars.weights) weight_grads.push_back(tape.grad(w));
    ShiftGradients grads = backprop_through_nlt(weight_grads, source_params);

    AdaptLoss result;
    result.density = tape.scalar_value(loss);
    result.reg = reg_loss(bank, lambda);
    result.total = result.density + result.reg;

    accumulate_reg_gradients(bank, lambda, grads);
    for (ShiftLayer& l : grads.layers) {
        if (!update_factor) std::fill(l.factor.begin(), l.factor.end(), 0.0f);
        if (!update_bias) std::fill(l.bias.begin(), l.bias.end(), 0.0f);
    }

    std::vector<std::span<float>> pspans;
    std::vector<std::span<const float>> gspans;
    for (std::size_t l = 0; l < bank.layers.size(); ++l) {
        pspans.emplace_back(bank.layers[l].factor);
        pspans.emplace_back(bank.layers[l].bias);
        gspans.emplace_back(grads.layers[l].factor);
        gspans.emplace_back(grads.layers[l].bias);
    }
    adam_step(opt, pspans, gspans);
    return result;
}

/// Uniform subset of ceil(ratio * N) samples without replacement,
/// deterministic in the seed.
inline std::vector<Sample> select_few_shot(const std::vector<Sample>& train, double ratio, std::uint32_t seed) {
    if (!(ratio > 0.0) || ratio > 1.0)
        throw std::invalid_argument("select_few_shot: ratio must lie in (0, 1], got " + std::to_string(ratio));
    const std::size_t n = train.size();
    const std::size_t k = std::min(n, static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n))));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(mix_seed(seed, 0xfe57));
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(n - i)));
        std::swap(idx[i], idx[j]);
    }
    std::vector<Sample> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(train[idx[i]]);
    return out;
}

struct TrainLogRow {
    int iteration = 0;
    double source_loss = 0.0;
    bool has_source_loss = false;
    double target_loss = 0.0;
    bool has_target_loss = false;
    double val_mae = 0.0;
};

using TrainLogFn = std::function<void(const TrainLogRow&)>;

namespace detail {

struct BestState {
    ParamSet params;
    std::optional<ShiftBank> bank;
    int iteration = -1;
    double val_mae = 0.0;

    void offer(double mae, int iter, const ParamSet& p, const ShiftBank* b) {
        if (iteration >= 0 && mae >= val_mae) return;
        val_mae = mae;
        iteration = iter;
        params = clone_params(p);
        if (b) bank = *b;
    }
};

inline Checkpoint make_checkpoint(const CounterNet& net, Regime regime, const TrainConfig& config, BestState&& best) {
    Checkpoint ckpt;
    ckpt.net_config = net.config_name;
    ckpt.input_channels = net.input_channels;
    ckpt.encoder = net.encoder;
    ckpt.decoder = net.decoder;
    ckpt.regime = regime_name(regime);
    ckpt.iterations = config.iterations;
    ckpt.best_iteration = best.iteration;
    ckpt.val_mae = best.val_mae;
    ckpt.seed = config.seed;
    ckpt.source_params = std::move(best.params);
    ckpt.bank = std::move(best.bank);
    return ckpt;
}

}  // namespace detail

struct SourceTrainResult {
    ParamSet final_params;
    ParamSet best_params;
    int best_iteration = -1;
    double best_val_mae = 0.0;
};

/// Supervised training of the source model, validated on the target
/// validation split. Returns both the final parameters (fine-tuning starts
/// there) and the best-validation snapshot.
inline SourceTrainResult train_source_model(const CounterNet& net, const std::vector<Sample>& source_train,
                                            const std::vector<Sample>& target_val, const TrainConfig& config,
                                            const TrainLogFn& log = nullptr) {
    config.validate();
    if (source_train.empty()) throw std::invalid_argument("source training set is empty");
    ParamSet params = clone_params(net.params);
    AdamState opt = AdamState::create(config.alpha, detail::param_buffer_sizes(params));
    detail::EpochSampler sampler(source_train, mix_seed(config.seed, 0x50c0));
    detail::BestState best;
    double last_loss = 0.0;
    int last_eval_iter = -1;
    auto evaluate_now = [&](int iter) {
        const double mae = validation_mae(net, params, target_val);
        best.offer(mae, iter, params, nullptr);
        last_eval_iter = iter;
        if (log) {
            TrainLogRow row;
            row.iteration = iter;
            row.source_loss = last_loss;
            row.has_source_loss = iter > 0;
            row.val_mae = mae;
            log(row);
        }
    };
    for (int t = 1; t <= config.iterations; ++t) {
        last_loss = train_source_step(net, params, sampler.next(config.source_batch), opt);
        if (t % config.val_interval == 0) evaluate_now(t);
    }
    if (last_eval_iter != config.iterations) evaluate_now(config.iterations);
    SourceTrainResult result;
    result.final_params = std::move(params);
    result.best_params = std::move(best.params);
    result.best_iteration = best.iteration;
    result.best_val_mae = best.val_mae;
    return result;
}

/// Cache for the source training phase shared by no_adapt and the two
/// fine-tuning regimes. Only valid while net, datasets and config are held
/// fixed; keyed by seed.
struct SourceTrainCache {
    std::map<std::uint32_t, SourceTrainResult> by_seed;

    const SourceTrainResult& get_or_train(const CounterNet& net, const std::vector<Sample>& source_train,
                                          const std::vector<Sample>& target_val, const TrainConfig& config,
                                          const TrainLogFn& log = nullptr) {
        auto it = by_seed.find(config.seed);
        if (it == by_seed.end())
            it = by_seed.emplace(config.seed, train_source_model(net, source_train, target_val, config, log)).first;
        return it->second;
    }
};

/// The alternating stream: every iteration takes one source step on theta_S
/// and one adaptation step on the shift bank, then the best target-model
/// checkpoint by validation MAE is returned.
inline Checkpoint run_joint_loop(const CounterNet& net, const std::vector<Sample>& source_train,
                                 const std::vector<Sample>& target_fewshot, const std::vector<Sample>& target_val,
                                 const TrainConfig& config, Regime regime = Regime::nlt,
                                 const TrainLogFn& log = nullptr) {
    config.validate();
    if (regime != Regime::nlt && regime != Regime::nlt_factor_only && regime != Regime::nlt_bias_only)
        throw std::invalid_argument("run_joint_loop handles the nlt regimes only, got " +
                                    std::string(regime_name(regime)));
    if (target_fewshot.empty()) throw std::invalid_argument("joint loop: few-shot set is empty");
    if (source_train.empty()) throw std::invalid_argument("joint loop: source training set is empty");
    const bool update_factor = regime != Regime::nlt_bias_only;
    const bool update_bias = regime != Regime::nlt_factor_only;

    ParamSet source_params = clone_params(net.params);
    ShiftBank bank = init_shift_bank(net);
    AdamState source_opt = AdamState::create(config.alpha, detail::param_buffer_sizes(source_params));
    AdamState bank_opt = AdamState::create(config.beta, detail::bank_buffer_sizes(bank));
    detail::EpochSampler source_sampler(source_train, mix_seed(config.seed, 0x50c0));
    detail::CyclingSampler fewshot_sampler(target_fewshot);

    detail::BestState best;
    double last_source_loss = 0.0, last_target_loss = 0.0;
    int last_eval_iter = -1;
    auto evaluate_now = [&](int iter) {
        const ParamSet target_params = apply_nlt(source_params, bank);
        const double mae = validation_mae(net, target_params, target_val);
        best.offer(mae, iter, source_params, &bank);
        last_eval_iter = iter;
        if (log) {
            TrainLogRow row;
            row.iteration = iter;
            row.source_loss = last_source_loss;
            row.has_source_loss = iter > 0;
            row.target_loss = last_target_loss;
            row.has_target_loss = iter > 0;
            row.val_mae = mae;
            log(row);
        }
    };
    for (int t = 1; t <= config.iterations; ++t) {
        last_source_loss = train_source_step(net, source_params, source_sampler.next(config.source_batch), source_opt);
        const AdaptLoss aloss = adapt_step(net, source_params, bank, fewshot_sampler.next(config.target_batch),
                                           config.lambda, bank_opt, update_factor, update_bias);
        last_target_loss = aloss.total;
        if (t % config.val_interval == 0) evaluate_now(t);
    }
    if (last_eval_iter != config.iterations) evaluate_now(config.iterations);
    return detail::make_checkpoint(net, regime, config, std::move(best));
}

/// Joint loops for several few-shot subsets in lockstep. The source stream is
/// independent of the shift banks, so advancing one shared source model while
/// stepping one bank per subset reproduces the independent runs bitwise at a
/// fraction of the source-step cost (see the equivalence test).
inline std::vector<Checkpoint> run_joint_loop_multi(const CounterNet& net, const std::vector<Sample>& source_train,
                                                    const std::vector<std::vector<Sample>>& fewshot_sets,
                                                    const std::vector<Sample>& target_val, const TrainConfig& config,
                                                    Regime regime = Regime::nlt) {
    config.validate();
    if (regime != Regime::nlt && regime != Regime::nlt_factor_only && regime != Regime::nlt_bias_only)
        throw std::invalid_argument("run_joint_loop_multi handles the nlt regimes only");
    if (fewshot_sets.empty()) throw std::invalid_argument("joint loop: no few-shot subsets given");
    for (const auto& set : fewshot_sets)
        if (set.empty()) throw std::invalid_argument("joint loop: few-shot set is empty");
    if (source_train.empty()) throw std::invalid_argument("joint loop: source training set is empty");
    const bool update_factor = regime != Regime::nlt_bias_only;
    const bool update_bias = regime != Regime::nlt_factor_only;

    ParamSet source_params = clone_params(net.params);
    AdamState source_opt = AdamState::create(config.alpha, detail::param_buffer_sizes(source_params));
    detail::EpochSampler source_sampler(source_train, mix_seed(config.seed, 0x50c0));

    const std::size_t n_sets = fewshot_sets.size();
    std::vector<ShiftBank> banks;
    std::vector<AdamState> bank_opts;
    std::vector<detail::CyclingSampler> samplers;
    std::vector<detail::BestState> bests(n_sets);
    banks.reserve(n_sets);
    bank_opts.reserve(n_sets);
    samplers.reserve(n_sets);
    for (std::size_t s = 0; s < n_sets; ++s) {
        banks.push_back(init_shift_bank(net));
        bank_opts.push_back(AdamState::create(config.beta, detail::bank_buffer_sizes(banks.back())));
        samplers.emplace_back(fewshot_sets[s]);
    }

    int last_eval_iter = -1;
    auto evaluate_now = [&](int iter) {
        for (std::size_t s = 0; s < n_sets; ++s) {
            const ParamSet target_params = apply_nlt(source_params, banks[s]);
            bests[s].offer(validation_mae(net, target_params, target_val), iter, source_params, &banks[s]);
        }
        last_eval_iter = iter;
    };
    for (int t = 1; t <= config.iterations; ++t) {
        train_source_step(net, source_params, source_sampler.next(config.source_batch), source_opt);
        for (std::size_t s = 0; s < n_sets; ++s)
            adapt_step(net, source_params, banks[s], samplers[s].next(config.target_batch), config.lambda,
                       bank_opts[s], update_factor, update_bias);
        if (t % config.val_interval == 0) evaluate_now(t);
    }
    if (last_eval_iter != config.iterations) evaluate_now(config.iterations);

    std::vector<Checkpoint> out;
    out.reserve(n_sets);
    for (std::size_t s = 0; s < n_sets; ++s)
        out.push_back(detail::make_checkpoint(net, regime, config, std::move(bests[s])));
    return out;
}

/// Dispatches one ablation regime. `cache`, when provided, shares the
/// deterministic source-training phase between no_adapt and the fine-tuning
/// regimes of the same seed.
inline Checkpoint run_regime(Regime regime, const CounterNet& net, const std::vector<Sample>& source_train,
                             const std::vector<Sample>& target_fewshot, const std::vector<Sample>& target_val,
                             const TrainConfig& config, SourceTrainCache* cache = nullptr,
                             const TrainLogFn& log = nullptr) {
    config.validate();
    switch (regime) {
        case Regime::nlt:
        case Regime::nlt_factor_only:
        case Regime::nlt_bias_only:
            return run_joint_loop(net, source_train, target_fewshot, target_val, config, regime, log);

        case Regime::ifs_nlt_placeholder:
            throw std::invalid_argument(
                "regime 'ifs_nlt' needs the image-translation pipeline, which this library does not ship");

        case Regime::no_adapt: {
            SourceTrainCache local;
            SourceTrainCache& c = cache ? *cache : local;
            const SourceTrainResult& src = c.get_or_train(net, source_train, target_val, config, log);
            detail::BestState best;
            best.params = clone_params(src.best_params);
            best.iteration = src.best_iteration;
            best.val_mae = src.best_val_mae;
            return detail::make_checkpoint(net, regime, config, std::move(best));
        }

        case Regime::supervised: {
            if (target_fewshot.empty()) throw std::invalid_argument("supervised regime: few-shot set is empty");
            ParamSet params = clone_params(net.params);
            AdamState opt = AdamState::create(config.alpha, detail::param_buffer_sizes(params));
            detail::CyclingSampler sampler(target_fewshot);
            detail::BestState best;
            double last_loss = 0.0;
            int last_eval_iter = -1;
            auto evaluate_now = [&](int iter) {
                const double mae = validation_mae(net, params, target_val);
                best.offer(mae, iter, params, nullptr);
                last_eval_iter = iter;
                if (log) {
                    TrainLogRow row;
                    row.iteration = iter;
                    row.target_loss = last_loss;
                    row.has_target_loss = iter > 0;
                    row.val_mae = mae;
                    log(row);
                }
            };
            for (int t = 1; t <= config.iterations; ++t) {
                last_loss = train_source_step(net, params, sampler.next(config.target_batch), opt);
                if (t % config.val_interval == 0) evaluate_now(t);
            }
            if (last_eval_iter != config.iterations) evaluate_now(config.iterations);
            return detail::make_checkpoint(net, regime, config, std::move(best));
        }

        case Regime::finetune_all:
        case Regime::finetune_decoder: {
            if (target_fewshot.empty()) throw std::invalid_argument("fine-tuning regime: few-shot set is empty");
            SourceTrainCache local;
            SourceTrainCache& c = cache ? *cache : local;
            const SourceTrainResult& src = c.get_or_train(net, source_train, target_val, config, nullptr);
            ParamSet params = clone_params(src.final_params);

            std::vector<bool> trainable(params.size(), true);
            if (regime == Regime::finetune_decoder) {
                std::size_t encoder_convs = 0;
                for (const LayerSpec& s : net.encoder)
                    if (is_conv(s.kind)) ++encoder_convs;
                for (std::size_t l = 0; l < encoder_convs; ++l) trainable[l] = false;
            }
            AdamState opt = AdamState::create(config.beta, detail::param_buffer_sizes(params));
            detail::CyclingSampler sampler(target_fewshot);
            detail::BestState best;
            double last_loss = 0.0;
            int last_eval_iter = -1;
            auto evaluate_now = [&](int iter) {
                const double mae = validation_mae(net, params, target_val);
                best.offer(mae, iter, params, nullptr);
                last_eval_iter = iter;
                if (log) {
                    TrainLogRow row;
                    row.iteration = iter;
                    row.target_loss = last_loss;
                    row.has_target_loss = iter > 0;
                    row.val_mae = mae;
                    log(row);
                }
            };
            for (int t = 1; t <= config.iterations; ++t) {
                last_loss = train_source_step(net, params, sampler.next(config.target_batch), opt, &trainable);
                if (t % config.val_interval == 0) evaluate_now(t);
            }
            if (last_eval_iter != config.iterations) evaluate_now(config.iterations);
            return detail::make_checkpoint(net, regime, config, std::move(best));
        }
    }
    throw std::logic_error("unhandled regime");
}

}  // namespace nlt
