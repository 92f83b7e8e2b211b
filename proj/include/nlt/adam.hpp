#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlt {

/// Adam with bias correction over a fixed list of parameter buffers.
/// Moment buffers are float32 like the parameters; the update itself is
/// evaluated in float64.
struct AdamState {
    long step_count = 0;
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;

    static AdamState create(float learning_rate, const std::vector<std::size_t>& sizes) {
        if (learning_rate <= 0.0f) throw std::invalid_argument("adam: learning rate must be positive");
        AdamState st;
        st.lr = learning_rate;
        st.first_moment.reserve(sizes.size());
        st.second_moment.reserve(sizes.size());
        for (std::size_t s : sizes) {
            st.first_moment.emplace_back(s, 0.0f);
            st.second_moment.emplace_back(s, 0.0f);
        }
        return st;
    }
};

inline void adam_step(AdamState& st, std::span<const std::span<float>> params,
                      std::span<const std::span<const float>> grads) {
    if (params.size() != grads.size() || params.size() != st.first_moment.size())
        throw std::invalid_argument("adam_step: parameter list length mismatch (params " +
                                    std::to_string(params.size()) + ", grads " + std::to_string(grads.size()) +
                                    ", state " + std::to_string(st.first_moment.size()) + ")");
    st.step_count += 1;
    const double b1 = st.beta1, b2 = st.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(st.step_count));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(st.step_count));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p].size() != grads[p].size() || params[p].size() != st.first_moment[p].size())
            throw std::invalid_argument("adam_step: buffer " + std::to_string(p) + " size mismatch (param " +
                                        std::to_string(params[p].size()) + ", grad " + std::to_string(grads[p].size()) +
                                        ", moments " + std::to_string(st.first_moment[p].size()) + ")");
        float* w = params[p].data();
        const float* g = grads[p].data();
        float* m = st.first_moment[p].data();
        float* v = st.second_moment[p].data();
        for (std::size_t i = 0; i < params[p].size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double m_hat = mi / corr1;
            const double v_hat = vi / corr2;
            w[i] = static_cast<float>(w[i] - st.lr * m_hat / (std::sqrt(v_hat) + st.eps));
        }
    }
}

}  // namespace nlt
