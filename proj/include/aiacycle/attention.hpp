#pragma once

#include <string>
#include <vector>

#include "aiacycle/layers.hpp"

namespace aiacycle {

/// Counters for attention score-matrix storage, used to verify that the
/// factorized branches allocate O(T^2 + F'^2) entries instead of (T*F')^2.
struct AttentionStats {
    std::int64_t score_entries = 0;

    void reset() { score_entries = 0; }
};

inline AttentionStats& attention_stats() {
    thread_local AttentionStats stats;
    return stats;
}

// ---- support ops ------------------------------------------------------------

/// (B,T,F,C) -> (B,F,T,C); the frequency branch is the time branch on the
/// transposed plane.
inline Var transpose_tf(Var x) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw std::invalid_argument("transpose_tf: expected 4-d input");
    const int B = s[0], T = s[1], F = s[2], C = s[3];
    Tensor out = Tensor::uninit({B, F, T, C});
    const float* xd = x.value().data();
    float* od = out.data();
    parallel_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const std::int64_t b = r / T, t = r % T;
            for (int f = 0; f < F; ++f)
                std::memcpy(od + ((b * F + f) * T + t) * C, xd + (r * F + f) * C,
                            sizeof(float) * static_cast<std::size_t>(C));
        }
    });
    Var o = detail::wrap(*x.tape, std::move(out), x.requires_grad(), "transpose_tf");
    if (x.requires_grad()) {
        Tape::Node* px = x.node;
        o.node->backprop = [px, B, T, F, C](Tape::Node& self) {
            const float* g = self.grad.data();
            float* d = px->grad_buffer().data();
            parallel_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t r0, std::int64_t r1) {
                for (std::int64_t r = r0; r < r1; ++r) {
                    const std::int64_t b = r / T, t = r % T;
                    for (int f = 0; f < F; ++f) {
                        const float* src = g + ((b * F + f) * T + t) * C;
                        float* dst = d + (r * F + f) * C;
                        for (int c = 0; c < C; ++c) dst[c] += src[c];
                    }
                }
            });
        };
    }
    return o;
}

/// Channel-major flatten of the (F,C) plane: (B,T,F,C) -> (B,T,C*F) with
/// out[b,t,c*F+f] = x[b,t,f,c].
inline Var merge_cf(Var x) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw std::invalid_argument("merge_cf: expected 4-d input");
    const int B = s[0], T = s[1], F = s[2], C = s[3];
    Tensor out = Tensor::uninit({B, T, C * F});
    const float* xd = x.value().data();
    float* od = out.data();
    const std::int64_t rows = static_cast<std::int64_t>(B) * T;
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* src = xd + r * F * C;
        float* dst = od + r * C * F;
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < C; ++c) dst[static_cast<std::int64_t>(c) * F + f] = src[static_cast<std::int64_t>(f) * C + c];
    }
    Var o = detail::wrap(*x.tape, std::move(out), x.requires_grad(), "merge_cf");
    if (x.requires_grad()) {
        Tape::Node* px = x.node;
        o.node->backprop = [px, rows, F, C](Tape::Node& self) {
            const float* g = self.grad.data();
            float* d = px->grad_buffer().data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const float* src = g + r * C * F;
                float* dst = d + r * F * C;
                for (int f = 0; f < F; ++f)
                    for (int c = 0; c < C; ++c)
                        dst[static_cast<std::int64_t>(f) * C + c] += src[static_cast<std::int64_t>(c) * F + f];
            }
        };
    }
    return o;
}

/// Inverse of merge_cf: (B,T,C*F) -> (B,T,F,C).
inline Var split_cf(Var x, int F, int C) {
    const Shape& s = x.shape();
    if (s.size() != 3 || s[2] != C * F)
        throw std::invalid_argument("split_cf: input " + shape_str(s) + " does not factor into F=" +
                                    std::to_string(F) + " C=" + std::to_string(C));
    const int B = s[0], T = s[1];
    Tensor out = Tensor::uninit({B, T, F, C});
    const float* xd = x.value().data();
    float* od = out.data();
    const std::int64_t rows = static_cast<std::int64_t>(B) * T;
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* src = xd + r * C * F;
        float* dst = od + r * F * C;
        for (int f = 0; f < F; ++f)
            for (int c = 0; c < C; ++c) dst[static_cast<std::int64_t>(f) * C + c] = src[static_cast<std::int64_t>(c) * F + f];
    }
    Var o = detail::wrap(*x.tape, std::move(out), x.requires_grad(), "split_cf");
    if (x.requires_grad()) {
        Tape::Node* px = x.node;
        o.node->backprop = [px, rows, F, C](Tape::Node& self) {
            const float* g = self.grad.data();
            float* d = px->grad_buffer().data();
            for (std::int64_t r = 0; r < rows; ++r) {
                const float* src = g + r * F * C;
                float* dst = d + r * C * F;
                for (int f = 0; f < F; ++f)
                    for (int c = 0; c < C; ++c)
                        dst[static_cast<std::int64_t>(c) * F + f] += src[static_cast<std::int64_t>(f) * C + c];
            }
        };
    }
    return o;
}

/// (B,T,F,C) -> (B,C): mean over the time-frequency plane.
inline Var global_avg_pool(Var x) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw std::invalid_argument("global_avg_pool: expected 4-d input");
    const int B = s[0], C = s[3];
    const std::int64_t plane = static_cast<std::int64_t>(s[1]) * s[2];
    Tensor out = Tensor::uninit({B, C});
    const float* xd = x.value().data();
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i)
                acc += static_cast<double>(xd[(static_cast<std::int64_t>(b) * plane + i) * C + c]);
            out[static_cast<std::int64_t>(b) * C + c] = static_cast<float>(acc / static_cast<double>(plane));
        }
    Var o = detail::wrap(*x.tape, std::move(out), x.requires_grad(), "global_avg_pool");
    if (x.requires_grad()) {
        Tape::Node* px = x.node;
        o.node->backprop = [px, B, C, plane](Tape::Node& self) {
            const float* g = self.grad.data();
            float* d = px->grad_buffer().data();
            for (int b = 0; b < B; ++b)
                for (std::int64_t i = 0; i < plane; ++i)
                    for (int c = 0; c < C; ++c)
                        d[(static_cast<std::int64_t>(b) * plane + i) * C + c] +=
                            g[static_cast<std::int64_t>(b) * C + c] / static_cast<float>(plane);
        };
    }
    return o;
}

/// x:(B,K) * w:(K,N) + bias:(N).
inline Var linear(Var x, Var w, Var bias) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0])
        throw std::invalid_argument("linear: incompatible shapes " + shape_str(xs) + " x " + shape_str(ws));
    const int B = xs[0], K = xs[1], N = ws[1];
    if (bias.numel() != N) throw std::invalid_argument("linear: bias length must equal output width");
    Tensor out = Tensor::uninit({B, N});
    gemm_nn(x.value().data(), w.value().data(), out.data(), B, N, K);
    {
        const float* bv = bias.value().data();
        for (int b = 0; b < B; ++b)
            for (int j = 0; j < N; ++j) out[static_cast<std::int64_t>(b) * N + j] += bv[j];
    }
    bool rg = x.requires_grad() || w.requires_grad() || bias.requires_grad();
    Var o = detail::wrap(*x.tape, std::move(out), rg, "linear");
    if (rg) {
        Tape::Node *px = x.node, *pw = w.node, *pb = bias.node;
        o.node->backprop = [px, pw, pb, B, K, N](Tape::Node& self) {
            const float* g = self.grad.data();
            if (px->requires_grad) gemm_nt(g, pw->value.data(), px->grad_buffer().data(), B, K, N, true);
            if (pw->requires_grad) gemm_tn(px->value.data(), g, pw->grad_buffer().data(), K, N, B, true);
            if (pb->requires_grad) detail::bias_column_sums(g, B, N, pb->grad_buffer().data());
        };
    }
    return o;
}

/// Stacks N (B,1) columns into (B,N).
inline Var stack_cols(const std::vector<Var>& cols) {
    if (cols.empty()) throw std::invalid_argument("stack_cols: empty input list");
    const int B = cols[0].shape()[0];
    const int N = static_cast<int>(cols.size());
    bool rg = false;
    for (const Var& c : cols) {
        if (c.shape() != Shape{B, 1})
            throw std::invalid_argument("stack_cols: every column must be (B,1), got " + shape_str(c.shape()));
        rg = rg || c.requires_grad();
    }
    Tensor out = Tensor::uninit({B, N});
    for (int b = 0; b < B; ++b)
        for (int j = 0; j < N; ++j) out[static_cast<std::int64_t>(b) * N + j] = cols[static_cast<std::size_t>(j)].value()[b];
    Var o = detail::wrap(*cols[0].tape, std::move(out), rg, "stack_cols");
    if (rg) {
        std::vector<Tape::Node*> parents;
        parents.reserve(cols.size());
        for (const Var& c : cols) parents.push_back(c.node);
        o.node->backprop = [parents, B, N](Tape::Node& self) {
            const float* g = self.grad.data();
            for (int j = 0; j < N; ++j) {
                Tape::Node* p = parents[static_cast<std::size_t>(j)];
                if (!p->requires_grad) continue;
                float* d = p->grad_buffer().data();
                for (int b = 0; b < B; ++b) d[b] += g[static_cast<std::int64_t>(b) * N + j];
            }
        };
    }
    return o;
}

/// out[b] = sum_n w[b,n] * maps[n][b]; the hierarchical aggregation kernel.
inline Var weighted_sum_maps(const std::vector<Var>& maps, Var w) {
    if (maps.empty()) throw std::invalid_argument("weighted_sum_maps: empty map list");
    const Shape& ms = maps[0].shape();
    const int B = ms[0];
    const int N = static_cast<int>(maps.size());
    if (w.shape() != Shape{B, N})
        throw std::invalid_argument("weighted_sum_maps: weights must be (B,N), got " + shape_str(w.shape()));
    bool rg = w.requires_grad();
    for (const Var& m : maps) {
        check_same_shape(m.value(), maps[0].value(), "weighted_sum_maps");
        rg = rg || m.requires_grad();
    }
    const std::int64_t item = maps[0].numel() / B;
    Tensor out = Tensor::uninit(ms);
    std::vector<double> acc(static_cast<std::size_t>(item));
    for (int b = 0; b < B; ++b) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int n = 0; n < N; ++n) {
            const double wv = static_cast<double>(w.value()[static_cast<std::int64_t>(b) * N + n]);
            const float* src = maps[static_cast<std::size_t>(n)].value().data() + static_cast<std::int64_t>(b) * item;
            for (std::int64_t i = 0; i < item; ++i) acc[static_cast<std::size_t>(i)] += wv * static_cast<double>(src[i]);
        }
        float* dst = out.data() + static_cast<std::int64_t>(b) * item;
        for (std::int64_t i = 0; i < item; ++i) dst[i] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
    }
    Var o = detail::wrap(*w.tape, std::move(out), rg, "weighted_sum_maps");
    if (rg) {
        std::vector<Tape::Node*> parents;
        parents.reserve(maps.size());
        for (const Var& m : maps) parents.push_back(m.node);
        Tape::Node* pw = w.node;
        o.node->backprop = [parents, pw, B, N, item](Tape::Node& self) {
            const float* g = self.grad.data();
            for (int b = 0; b < B; ++b) {
                const float* gb = g + static_cast<std::int64_t>(b) * item;
                for (int n = 0; n < N; ++n) {
                    Tape::Node* p = parents[static_cast<std::size_t>(n)];
                    const float wv = pw->value[static_cast<std::int64_t>(b) * N + n];
                    if (p->requires_grad) {
                        float* d = p->grad_buffer().data() + static_cast<std::int64_t>(b) * item;
                        for (std::int64_t i = 0; i < item; ++i) d[i] += wv * gb[i];
                    }
                    if (pw->requires_grad) {
                        const float* mv = p->value.data() + static_cast<std::int64_t>(b) * item;
                        double dot = 0.0;
                        for (std::int64_t i = 0; i < item; ++i)
                            dot += static_cast<double>(gb[i]) * static_cast<double>(mv[i]);
                        pw->grad_buffer()[static_cast<std::int64_t>(b) * N + n] += static_cast<float>(dot);
                    }
                }
            }
        };
    }
    return o;
}

// ---- adaptive time-frequency attention ---------------------------------------

/// One attention branch: Q/K at C/8 channels, V at C channels, all 1x1 convs,
/// softmax over the key axis, no scaling factor on Q.K^T.
struct AttentionBranch {
    Conv2D q, k, v;

    AttentionBranch() = default;
    AttentionBranch(const std::string& name, int channels, Rng& rng)
        : q(name + "/q", 1, 1, channels, channels / 8, {1, 1}, {0, 0}, false, rng),
          k(name + "/k", 1, 1, channels, channels / 8, {1, 1}, {0, 0}, false, rng),
          v(name + "/v", 1, 1, channels, channels, {1, 1}, {0, 0}, false, rng) {}

    /// Attention along the second axis of x:(B,L,W,C); returns same shape.
    /// sigma_out, when given, receives the (B,L,L) attention map.
    Var forward(Tape& tape, Var x, bool trainable, Var* sigma_out = nullptr) {
        const Shape& s = x.shape();
        const int B = s[0], L = s[1], W = s[2], C = s[3];
        Var qm = merge_cf(q.forward(tape, x, trainable));
        Var km = merge_cf(k.forward(tape, x, trainable));
        Var vm = merge_cf(v.forward(tape, x, trainable));
        Var scores = bmm_nt(qm, km);              // (B,L,L)
        attention_stats().score_entries += static_cast<std::int64_t>(B) * L * L;
        Var sigma = softmax(scores, 2);           // normalized over the key axis
        if (sigma_out) *sigma_out = sigma;
        Var ctx = bmm_nn(sigma, vm);              // (B,L,C*W)
        return split_cf(ctx, W, C);
    }

    void collect(std::vector<ParamLeaf*>& dst) {
        q.collect(dst);
        k.collect(dst);
        v.collect(dst);
    }
};

/// Adaptive time-frequency attention: F_in + alpha*ATAB + beta*AFAB with
/// alpha, beta zero-initialized so a fresh module is an exact identity.
struct AtfaModule {
    int channels = 0;
    bool use_time = true;
    bool use_freq = true;
    AttentionBranch time_branch;
    AttentionBranch freq_branch;
    ParamLeaf alpha;
    ParamLeaf beta;

    AtfaModule() = default;
    AtfaModule(const std::string& name, int c, bool with_time, bool with_freq, Rng& rng)
        : channels(c), use_time(with_time), use_freq(with_freq) {
        if (c % 8 != 0)
            throw std::invalid_argument("atfa: channel count must be divisible by 8, got " + std::to_string(c));
        if (use_time) {
            time_branch = AttentionBranch(name + "/atab", c, rng);
            alpha = ParamLeaf(name + "/alpha", Tensor::zeros({1}));
        }
        if (use_freq) {
            freq_branch = AttentionBranch(name + "/afab", c, rng);
            beta = ParamLeaf(name + "/beta", Tensor::zeros({1}));
        }
    }

    Var atab(Tape& tape, Var x, bool trainable) { return time_branch.forward(tape, x, trainable); }

    Var afab(Tape& tape, Var x, bool trainable) {
        Var xt = transpose_tf(x);
        Var out = freq_branch.forward(tape, xt, trainable);
        return transpose_tf(out);
    }

    Var forward(Tape& tape, Var x, bool trainable) {
        if (x.shape()[3] != channels)
            throw std::invalid_argument("atfa: expected " + std::to_string(channels) + " channels, got " +
                                        std::to_string(x.shape()[3]));
        Var out = x;
        if (use_time) out = add_scaled(out, atab(tape, x, trainable), leaf(tape, alpha, trainable));
        if (use_freq) out = add_scaled(out, afab(tape, x, trainable), leaf(tape, beta, trainable));
        return out;
    }

    void collect(std::vector<ParamLeaf*>& dst) {
        if (use_time) {
            time_branch.collect(dst);
            dst.push_back(&alpha);
        }
        if (use_freq) {
            freq_branch.collect(dst);
            dst.push_back(&beta);
        }
    }
};

/// Adaptive hierarchical attention over the N ATFA outputs: softmax-pooled
/// logits weight a sum of the maps, added through a zero-initialized gamma.
struct AhaModule {
    int count = 0;
    int channels = 0;
    std::vector<ParamLeaf> w;  // per-input 1x1 conv C -> 1, as (C,1) matrices
    std::vector<ParamLeaf> b;
    ParamLeaf gamma;

    AhaModule() = default;
    AhaModule(const std::string& name, int n, int c, Rng& rng) : count(n), channels(c) {
        for (int i = 0; i < n; ++i) {
            w.emplace_back(name + "/w" + std::to_string(i) + "/kernel", uniform_init({c, 1}, c, rng));
            b.emplace_back(name + "/w" + std::to_string(i) + "/bias", Tensor::zeros({1}));
        }
        gamma = ParamLeaf(name + "/gamma", Tensor::zeros({1}));
    }

    Var forward(Tape& tape, const std::vector<Var>& maps, bool trainable) {
        if (static_cast<int>(maps.size()) != count)
            throw std::invalid_argument("aha: expected " + std::to_string(count) + " feature maps, got " +
                                        std::to_string(maps.size()));
        std::vector<Var> logits;
        logits.reserve(maps.size());
        for (int n = 0; n < count; ++n) {
            Var pooled = global_avg_pool(maps[static_cast<std::size_t>(n)]);  // (B,C)
            logits.push_back(linear(pooled, leaf(tape, w[static_cast<std::size_t>(n)], trainable),
                                    leaf(tape, b[static_cast<std::size_t>(n)], trainable)));
        }
        Var weights = softmax(stack_cols(logits), 1);  // (B,N)
        Var global = weighted_sum_maps(maps, weights);
        return add_scaled(maps.back(), global, leaf(tape, gamma, trainable));
    }

    void collect(std::vector<ParamLeaf*>& dst) {
        for (int i = 0; i < count; ++i) {
            dst.push_back(&w[static_cast<std::size_t>(i)]);
            dst.push_back(&b[static_cast<std::size_t>(i)]);
        }
        dst.push_back(&gamma);
    }
};

/// The attention-in-attention stack: N chained ATFA modules plus AHA over
/// their intermediate outputs.
struct AiaStack {
    std::vector<AtfaModule> atfa;
    AhaModule aha;
    bool use_aha = true;

    AiaStack() = default;
    AiaStack(const std::string& name, int n_modules, int channels, bool with_time, bool with_freq, bool with_aha,
             Rng& rng)
        : use_aha(with_aha) {
        for (int i = 0; i < n_modules; ++i)
            atfa.emplace_back(name + "/atfa" + std::to_string(i), channels, with_time, with_freq, rng);
        if (use_aha) aha = AhaModule(name + "/aha", n_modules, channels, rng);
    }

    Var forward(Tape& tape, Var x, bool trainable) {
        std::vector<Var> outputs;
        outputs.reserve(atfa.size());
        Var cur = x;
        for (auto& m : atfa) {
            cur = m.forward(tape, cur, trainable);
            outputs.push_back(cur);
        }
        if (use_aha && !atfa.empty()) cur = aha.forward(tape, outputs, trainable);
        return cur;
    }

    void collect(std::vector<ParamLeaf*>& dst) {
        for (auto& m : atfa) m.collect(dst);
        if (use_aha) aha.collect(dst);
    }
};

}  // namespace aiacycle
