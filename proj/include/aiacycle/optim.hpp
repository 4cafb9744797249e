#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "aiacycle/autograd.hpp"

namespace aiacycle {

/// Bias-corrected Adam over a fixed set of leaves. Moment tensors mirror the
/// leaf shapes; the step counter advances exactly once per step() call.
struct AdamState {
    std::vector<ParamLeaf*> leaves;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t t = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;

    AdamState() = default;
    AdamState(std::vector<ParamLeaf*> params, float b1, float b2, float epsilon = 1e-8f)
        : leaves(std::move(params)), beta1(b1), beta2(b2), eps(epsilon) {
        m.reserve(leaves.size());
        v.reserve(leaves.size());
        for (auto* l : leaves) {
            m.push_back(Tensor::zeros(l->value.shape()));
            v.push_back(Tensor::zeros(l->value.shape()));
        }
    }

    void check_shapes() const {
        if (m.size() != leaves.size() || v.size() != leaves.size())
            throw std::invalid_argument("adam: moment count mismatches leaf count");
        for (std::size_t i = 0; i < leaves.size(); ++i)
            if (!m[i].same_shape(leaves[i]->value) || !v[i].same_shape(leaves[i]->value))
                throw std::invalid_argument("adam: moment shape mismatches leaf '" + leaves[i]->name + "'");
    }

    /// In-place update from accumulated gradients; zeroes the gradients after.
    void step(float lr) {
        if (lr < 0.0f) throw std::invalid_argument("adam: negative learning rate");
        check_shapes();
        ++t;
        const double b1 = static_cast<double>(beta1);
        const double b2 = static_cast<double>(beta2);
        const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            ParamLeaf& leaf = *leaves[i];
            float* x = leaf.value.data();
            float* g = leaf.grad.data();
            float* mi = m[i].data();
            float* vi = v[i].data();
            const std::int64_t n = leaf.value.numel();
            for (std::int64_t j = 0; j < n; ++j) {
                const double gj = static_cast<double>(g[j]);
                const double mj = b1 * static_cast<double>(mi[j]) + (1.0 - b1) * gj;
                const double vj = b2 * static_cast<double>(vi[j]) + (1.0 - b2) * gj * gj;
                mi[j] = static_cast<float>(mj);
                vi[j] = static_cast<float>(vj);
                const double mhat = mj / corr1;
                const double vhat = vj / corr2;
                x[j] = static_cast<float>(static_cast<double>(x[j]) -
                                          static_cast<double>(lr) * mhat / (std::sqrt(vhat) + static_cast<double>(eps)));
                g[j] = 0.0f;
            }
        }
    }

    void zero_grads() {
        for (auto* l : leaves) l->zero_grad();
    }
};

/// Piecewise learning-rate schedule: constant through decay_start_epoch, then
/// linear to zero at total_epochs.
inline float learning_rate(float base, int epoch, int decay_start_epoch, int total_epochs) {
    if (epoch < 1 || epoch > total_epochs)
        throw std::invalid_argument("learning_rate: epoch " + std::to_string(epoch) + " outside [1, " +
                                    std::to_string(total_epochs) + "]");
    if (epoch <= decay_start_epoch) return base;
    const float span = static_cast<float>(total_epochs - decay_start_epoch);
    return base * static_cast<float>(total_epochs - epoch) / span;
}

}  // namespace aiacycle
