#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "aiacycle/autograd.hpp"
#include "aiacycle/rng.hpp"

namespace aiacycle {

struct Stride2 {
    int t = 1, f = 1;
};
struct Pad2 {
    int t = 0, f = 0;
};

namespace detail {

inline int conv_out_extent(int in, int k, int s, int p, const char* op) {
    const int span = in + 2 * p - k;
    if (span < 0 || s < 1)
        throw std::invalid_argument(std::string(op) + ": invalid output extent for in=" + std::to_string(in) +
                                    " k=" + std::to_string(k) + " s=" + std::to_string(s) +
                                    " p=" + std::to_string(p));
    return span / s + 1;
}

inline int deconv_out_extent(int in, int k, int s, int p, const char* op) {
    const int out = (in - 1) * s - 2 * p + k;
    if (out < 1)
        throw std::invalid_argument(std::string(op) + ": invalid output extent for in=" + std::to_string(in) +
                                    " k=" + std::to_string(k) + " s=" + std::to_string(s) +
                                    " p=" + std::to_string(p));
    return out;
}

/// Gathers conv patches from x:(B,T,F,C) into rows of ((B*To*Fo) x (kh*kw*C)),
/// channel fastest within a column group, zero padding outside the plane.
inline Tensor im2col(const Tensor& x, int kh, int kw, Stride2 s, Pad2 p, int To, int Fo) {
    const int B = x.dim(0), T = x.dim(1), F = x.dim(2), C = x.dim(3);
    const std::int64_t K = static_cast<std::int64_t>(kh) * kw * C;
    Tensor patches = Tensor::uninit({static_cast<int>(static_cast<std::int64_t>(B) * To * Fo), static_cast<int>(K)});
    const float* xd = x.data();
    float* pd = patches.data();
    parallel_for(static_cast<std::int64_t>(B) * To, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const int b = static_cast<int>(r / To);
            const int to = static_cast<int>(r % To);
            for (int fo = 0; fo < Fo; ++fo) {
                float* row = pd + (r * Fo + fo) * K;
                for (int dt = 0; dt < kh; ++dt) {
                    const int t = to * s.t - p.t + dt;
                    for (int df = 0; df < kw; ++df) {
                        const int f = fo * s.f - p.f + df;
                        float* dst = row + (static_cast<std::int64_t>(dt) * kw + df) * C;
                        if (t < 0 || t >= T || f < 0 || f >= F) {
                            std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(C));
                        } else {
                            const float* src = xd + ((static_cast<std::int64_t>(b) * T + t) * F + f) * C;
                            std::memcpy(dst, src, sizeof(float) * static_cast<std::size_t>(C));
                        }
                    }
                }
            }
        }
    });
    return patches;
}

/// Adjoint of im2col, in gather form: every (b,t) output row collects the
/// patch entries that touch it, so rows parallelize with a fixed per-element
/// accumulation order.
inline void col2im_add(const Tensor& patches, float* out, int B, int T, int F, int C, int kh, int kw,
                       Stride2 s, Pad2 p, int To, int Fo) {
    const std::int64_t K = static_cast<std::int64_t>(kh) * kw * C;
    const float* pd = patches.data();
    parallel_for(static_cast<std::int64_t>(B) * T, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const std::int64_t b = r / T;
            const int t = static_cast<int>(r % T);
            for (int dt = 0; dt < kh; ++dt) {
                const int tnum = t + p.t - dt;
                if (tnum < 0 || tnum % s.t != 0) continue;
                const int to = tnum / s.t;
                if (to >= To) continue;
                for (int fo = 0; fo < Fo; ++fo) {
                    const float* row = pd + ((b * To + to) * Fo + fo) * K + static_cast<std::int64_t>(dt) * kw * C;
                    const int fbase = fo * s.f - p.f;
                    for (int df = 0; df < kw; ++df) {
                        const int f = fbase + df;
                        if (f < 0 || f >= F) continue;
                        const float* src = row + static_cast<std::int64_t>(df) * C;
                        float* dst = out + ((b * T + t) * F + f) * C;
                        for (int c = 0; c < C; ++c) dst[c] += src[c];
                    }
                }
            }
        }
    });
}

inline void bias_column_sums(const float* g, std::int64_t rows, int cols, float* bias_grad) {
    std::vector<double> acc(static_cast<std::size_t>(cols), 0.0);
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* row = g + r * cols;
        for (int c = 0; c < cols; ++c) acc[static_cast<std::size_t>(c)] += static_cast<double>(row[c]);
    }
    for (int c = 0; c < cols; ++c) bias_grad[c] += static_cast<float>(acc[static_cast<std::size_t>(c)]);
}

}  // namespace detail

// ---- convolution ------------------------------------------------------------

/// Cross-correlation of x:(B,T,F,Cin) with kernel:(kh,kw,Cin,Cout).
inline Var conv2d(Var x, Var kernel, Var bias, Stride2 stride, Pad2 pad) {
    const Shape& xs = x.shape();
    const Shape& ks = kernel.shape();
    if (xs.size() != 4 || ks.size() != 4)
        throw std::invalid_argument("conv2d: expected 4-d input and kernel, got " + shape_str(xs) + " and " +
                                    shape_str(ks));
    const int B = xs[0], T = xs[1], F = xs[2], Cin = xs[3];
    const int kh = ks[0], kw = ks[1], Cout = ks[3];
    if (ks[2] != Cin)
        throw std::invalid_argument("conv2d: kernel expects " + std::to_string(ks[2]) + " input channels, got " +
                                    std::to_string(Cin));
    if (bias.numel() != Cout) throw std::invalid_argument("conv2d: bias length must equal Cout");
    const int To = detail::conv_out_extent(T, kh, stride.t, pad.t, "conv2d");
    const int Fo = detail::conv_out_extent(F, kw, stride.f, pad.f, "conv2d");
    const std::int64_t M = static_cast<std::int64_t>(B) * To * Fo;
    const std::int64_t K = static_cast<std::int64_t>(kh) * kw * Cin;
    const bool pointwise = kh == 1 && kw == 1 && stride.t == 1 && stride.f == 1 && pad.t == 0 && pad.f == 0;

    // 1x1 stride-1 convolutions read the input matrix directly; everything
    // else goes through gathered patches, which the closure keeps for dW.
    auto patches = std::make_shared<Tensor>();
    if (!pointwise) *patches = detail::im2col(x.value(), kh, kw, stride, pad, To, Fo);
    Tensor out = Tensor::uninit({B, To, Fo, Cout});
    gemm_nn(pointwise ? x.value().data() : patches->data(), kernel.value().data(), out.data(), M, Cout, K);
    {
        const float* bv = bias.value().data();
        float* od = out.data();
        for (std::int64_t r = 0; r < M; ++r)
            for (int c = 0; c < Cout; ++c) od[r * Cout + c] += bv[c];
    }
    bool rg = x.requires_grad() || kernel.requires_grad() || bias.requires_grad();
    Var o = detail::wrap(*x.tape, std::move(out), rg, "conv2d");
    if (rg) {
        Tape::Node *px = x.node, *pk = kernel.node, *pb = bias.node;
        if (!rg || !(pk->requires_grad)) patches.reset();
        o.node->backprop = [px, pk, pb, patches, pointwise, B, T, F, Cin, kh, kw, Cout, stride, pad, To, Fo, M,
                            K](Tape::Node& self) {
            const float* g = self.grad.data();
            if (pb->requires_grad) detail::bias_column_sums(g, M, Cout, pb->grad_buffer().data());
            if (pk->requires_grad)
                gemm_tn(pointwise ? px->value.data() : patches->data(), g, pk->grad_buffer().data(), K, Cout, M,
                        true);
            if (px->requires_grad) {
                if (pointwise) {
                    gemm_nt(g, pk->value.data(), px->grad_buffer().data(), M, K, Cout, true);
                } else {
                    Tensor dpatch = Tensor::uninit({static_cast<int>(M), static_cast<int>(K)});
                    gemm_nt(g, pk->value.data(), dpatch.data(), M, K, Cout);
                    detail::col2im_add(dpatch, px->grad_buffer().data(), B, T, F, Cin, kh, kw, stride, pad, To, Fo);
                }
            }
        };
    }
    return o;
}

/// Transposed convolution of x:(B,Ti,Fi,Cin) with kernel:(kh,kw,Cout,Cin);
/// the exact adjoint of conv2d with the same kernel memory and geometry.
inline Var deconv2d(Var x, Var kernel, Var bias, Stride2 stride, Pad2 pad) {
    const Shape& xs = x.shape();
    const Shape& ks = kernel.shape();
    if (xs.size() != 4 || ks.size() != 4)
        throw std::invalid_argument("deconv2d: expected 4-d input and kernel, got " + shape_str(xs) + " and " +
                                    shape_str(ks));
    const int B = xs[0], Ti = xs[1], Fi = xs[2], Cin = xs[3];
    const int kh = ks[0], kw = ks[1], Cout = ks[2];
    if (ks[3] != Cin)
        throw std::invalid_argument("deconv2d: kernel expects " + std::to_string(ks[3]) + " input channels, got " +
                                    std::to_string(Cin));
    if (bias.numel() != Cout) throw std::invalid_argument("deconv2d: bias length must equal Cout");
    const int To = detail::deconv_out_extent(Ti, kh, stride.t, pad.t, "deconv2d");
    const int Fo = detail::deconv_out_extent(Fi, kw, stride.f, pad.f, "deconv2d");
    const std::int64_t M = static_cast<std::int64_t>(B) * Ti * Fi;
    const std::int64_t K = static_cast<std::int64_t>(kh) * kw * Cout;

    Tensor scatter = Tensor::uninit({static_cast<int>(M), static_cast<int>(K)});
    gemm_nt(x.value().data(), kernel.value().data(), scatter.data(), M, K, Cin);
    Tensor out = Tensor::zeros({B, To, Fo, Cout});
    detail::col2im_add(scatter, out.data(), B, To, Fo, Cout, kh, kw, stride, pad, Ti, Fi);
    {
        const float* bv = bias.value().data();
        float* od = out.data();
        const std::int64_t rows = static_cast<std::int64_t>(B) * To * Fo;
        for (std::int64_t r = 0; r < rows; ++r)
            for (int c = 0; c < Cout; ++c) od[r * Cout + c] += bv[c];
    }
    bool rg = x.requires_grad() || kernel.requires_grad() || bias.requires_grad();
    Var o = detail::wrap(*x.tape, std::move(out), rg, "deconv2d");
    if (rg) {
        Tape::Node *px = x.node, *pk = kernel.node, *pb = bias.node;
        o.node->backprop = [px, pk, pb, B, To, Fo, Cout, kh, kw, Cin, stride, pad, Ti, Fi, M, K](Tape::Node& self) {
            const float* g = self.grad.data();
            if (pb->requires_grad)
                detail::bias_column_sums(g, static_cast<std::int64_t>(B) * To * Fo, Cout, pb->grad_buffer().data());
            if (px->requires_grad || pk->requires_grad) {
                Tensor gpatch = detail::im2col(self.grad, kh, kw, stride, pad, Ti, Fi);
                if (px->requires_grad)
                    gemm_nn(gpatch.data(), pk->value.data(), px->grad_buffer().data(), M, Cin, K, true);
                if (pk->requires_grad)
                    gemm_tn(gpatch.data(), px->value.data(), pk->grad_buffer().data(), K, Cin, M, true);
            }
        };
    }
    return o;
}

// ---- normalization and activations -------------------------------------------

/// Per-(item, channel) standardization over the time-frequency plane followed
/// by a learned affine map. gamma and beta have one entry per channel.
inline Var instance_norm(Var x, Var gamma, Var beta, float eps = 1e-5f) {
    const Shape& xs = x.shape();
    if (xs.size() != 4) throw std::invalid_argument("instance_norm: expected (B,T,F,C) input");
    const int B = xs[0], T = xs[1], F = xs[2], C = xs[3];
    const std::int64_t plane = static_cast<std::int64_t>(T) * F;
    if (plane < 2) throw std::invalid_argument("instance_norm: time-frequency plane needs at least 2 elements");
    if (gamma.numel() != C || beta.numel() != C)
        throw std::invalid_argument("instance_norm: affine parameters must have C entries");

    std::vector<double> mean(static_cast<std::size_t>(B) * C), inv(static_cast<std::size_t>(B) * C);
    const float* xd = x.value().data();
    parallel_for(static_cast<std::int64_t>(B) * C, [&](std::int64_t bc0, std::int64_t bc1) {
        for (std::int64_t bc = bc0; bc < bc1; ++bc) {
            const std::int64_t b = bc / C;
            const std::int64_t c = bc % C;
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(xd[(b * plane + i) * C + c]);
            const double m = acc / static_cast<double>(plane);
            double vacc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) {
                const double d = static_cast<double>(xd[(b * plane + i) * C + c]) - m;
                vacc += d * d;
            }
            mean[static_cast<std::size_t>(bc)] = m;
            inv[static_cast<std::size_t>(bc)] = 1.0 / std::sqrt(vacc / static_cast<double>(plane) + static_cast<double>(eps));
        }
    });

    Tensor out = Tensor::uninit(xs);
    {
        const float* gv = gamma.value().data();
        const float* bv = beta.value().data();
        float* od = out.data();
        parallel_for(static_cast<std::int64_t>(B) * plane, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r) {
                const std::int64_t b = r / plane;
                const float* src = xd + r * C;
                float* dst = od + r * C;
                const double* mrow = mean.data() + b * C;
                const double* irow = inv.data() + b * C;
                for (int c = 0; c < C; ++c) {
                    const double xh = (static_cast<double>(src[c]) - mrow[c]) * irow[c];
                    dst[c] = static_cast<float>(xh * static_cast<double>(gv[c]) + static_cast<double>(bv[c]));
                }
            }
        });
    }
    bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    Var o = detail::wrap(*x.tape, std::move(out), rg, "instance_norm");
    if (rg) {
        Tape::Node *px = x.node, *pg = gamma.node, *pb = beta.node;
        o.node->backprop = [px, pg, pb, B, C, plane, mean, inv](Tape::Node& self) {
            const float* g = self.grad.data();
            const float* xd = px->value.data();
            const float* gv = pg->value.data();
            const std::int64_t bc_total = static_cast<std::int64_t>(B) * C;
            std::vector<double> dgamma_bc(static_cast<std::size_t>(bc_total)), dbeta_bc(static_cast<std::size_t>(bc_total));
            std::vector<double> mh(static_cast<std::size_t>(bc_total)), mhx(static_cast<std::size_t>(bc_total));
            parallel_for(bc_total, [&](std::int64_t bc0, std::int64_t bc1) {
                for (std::int64_t bc = bc0; bc < bc1; ++bc) {
                    const std::int64_t b = bc / C;
                    const std::int64_t c = bc % C;
                    const double m = mean[static_cast<std::size_t>(bc)];
                    const double iv = inv[static_cast<std::size_t>(bc)];
                    double dg = 0.0, db = 0.0, sum_h = 0.0, sum_hx = 0.0;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const std::int64_t idx = (b * plane + i) * C + c;
                        const double xh = (static_cast<double>(xd[idx]) - m) * iv;
                        const double gg = static_cast<double>(g[idx]);
                        dg += gg * xh;
                        db += gg;
                        const double h = gg * static_cast<double>(gv[c]);
                        sum_h += h;
                        sum_hx += h * xh;
                    }
                    dgamma_bc[static_cast<std::size_t>(bc)] = dg;
                    dbeta_bc[static_cast<std::size_t>(bc)] = db;
                    mh[static_cast<std::size_t>(bc)] = sum_h / static_cast<double>(plane);
                    mhx[static_cast<std::size_t>(bc)] = sum_hx / static_cast<double>(plane);
                }
            });
            if (px->requires_grad) {
                float* dx = px->grad_buffer().data();
                parallel_for(static_cast<std::int64_t>(B) * plane, [&](std::int64_t r0, std::int64_t r1) {
                    for (std::int64_t r = r0; r < r1; ++r) {
                        const std::int64_t b = r / plane;
                        const float* src = xd + r * C;
                        const float* grow = g + r * C;
                        float* drow = dx + r * C;
                        for (int c = 0; c < C; ++c) {
                            const std::int64_t bc = b * C + c;
                            const double xh = (static_cast<double>(src[c]) - mean[static_cast<std::size_t>(bc)]) *
                                              inv[static_cast<std::size_t>(bc)];
                            const double h = static_cast<double>(grow[c]) * static_cast<double>(gv[c]);
                            drow[c] += static_cast<float>(inv[static_cast<std::size_t>(bc)] *
                                                          (h - mh[static_cast<std::size_t>(bc)] -
                                                           xh * mhx[static_cast<std::size_t>(bc)]));
                        }
                    }
                });
            }
            if (pg->requires_grad) {
                float* d = pg->grad_buffer().data();
                for (int c = 0; c < C; ++c) {
                    double acc = 0.0;
                    for (int b = 0; b < B; ++b) acc += dgamma_bc[static_cast<std::size_t>(b) * C + c];
                    d[c] += static_cast<float>(acc);
                }
            }
            if (pb->requires_grad) {
                float* d = pb->grad_buffer().data();
                for (int c = 0; c < C; ++c) {
                    double acc = 0.0;
                    for (int b = 0; b < B; ++b) acc += dbeta_bc[static_cast<std::size_t>(b) * C + c];
                    d[c] += static_cast<float>(acc);
                }
            }
        };
    }
    return o;
}

/// x if x >= 0 else a_c * x, with one learned slope per channel (last axis).
inline Var prelu(Var x, Var slope) {
    const Shape& xs = x.shape();
    const int C = xs.back();
    if (slope.numel() != C) throw std::invalid_argument("prelu: slope must have one entry per channel");
    const std::int64_t n = x.numel();
    const std::int64_t rows = n / C;
    Tensor out = Tensor::uninit(xs);
    {
        const float* xd = x.value().data();
        const float* av = slope.value().data();
        float* od = out.data();
        parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r)
                for (int c = 0; c < C; ++c) {
                    const std::int64_t i = r * C + c;
                    od[i] = xd[i] >= 0.0f ? xd[i] : av[c] * xd[i];
                }
        });
    }
    bool rg = x.requires_grad() || slope.requires_grad();
    Var o = detail::wrap(*x.tape, std::move(out), rg, "prelu");
    if (rg) {
        Tape::Node *px = x.node, *pa = slope.node;
        o.node->backprop = [px, pa, rows, C](Tape::Node& self) {
            const float* g = self.grad.data();
            const float* xd = px->value.data();
            const float* av = pa->value.data();
            if (px->requires_grad) {
                float* dx = px->grad_buffer().data();
                parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
                    for (std::int64_t r = r0; r < r1; ++r)
                        for (int c = 0; c < C; ++c) {
                            const std::int64_t i = r * C + c;
                            dx[i] += xd[i] >= 0.0f ? g[i] : av[c] * g[i];
                        }
                });
            }
            if (pa->requires_grad) {
                std::vector<double> da(static_cast<std::size_t>(C), 0.0);
                for (std::int64_t r = 0; r < rows; ++r)
                    for (int c = 0; c < C; ++c) {
                        const std::int64_t i = r * C + c;
                        if (xd[i] < 0.0f)
                            da[static_cast<std::size_t>(c)] += static_cast<double>(g[i]) * static_cast<double>(xd[i]);
                    }
                float* d = pa->grad_buffer().data();
                for (int c = 0; c < C; ++c) d[c] += static_cast<float>(da[static_cast<std::size_t>(c)]);
            }
        };
    }
    return o;
}

/// Gated linear unit over the channel axis: first half times the logistic
/// gate of the second half.
inline Var glu(Var x) {
    const Shape& xs = x.shape();
    const int C2 = xs.back();
    if (C2 % 2 != 0) throw std::invalid_argument("glu: channel count must be even, got " + std::to_string(C2));
    const int C = C2 / 2;
    Shape os = xs;
    os.back() = C;
    const std::int64_t rows = x.numel() / C2;
    Tensor out = Tensor::uninit(os);
    {
        const float* xd = x.value().data();
        float* od = out.data();
        parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r)
                for (int c = 0; c < C; ++c) {
                    const float lin = xd[r * C2 + c];
                    const float sig = 1.0f / (1.0f + std::exp(-xd[r * C2 + C + c]));
                    od[r * C + c] = lin * sig;
                }
        });
    }
    Var o = detail::wrap(*x.tape, std::move(out), x.requires_grad(), "glu");
    if (x.requires_grad()) {
        Tape::Node* px = x.node;
        o.node->backprop = [px, rows, C, C2](Tape::Node& self) {
            const float* g = self.grad.data();
            const float* xd = px->value.data();
            float* dx = px->grad_buffer().data();
            parallel_for(rows, [&](std::int64_t r0, std::int64_t r1) {
                for (std::int64_t r = r0; r < r1; ++r)
                    for (int c = 0; c < C; ++c) {
                        const float lin = xd[r * C2 + c];
                        const float sig = 1.0f / (1.0f + std::exp(-xd[r * C2 + C + c]));
                        const float gg = g[r * C + c];
                        dx[r * C2 + c] += gg * sig;
                        dx[r * C2 + C + c] += gg * lin * sig * (1.0f - sig);
                    }
            });
        };
    }
    return o;
}

/// log(1 + e^x); keeps generator outputs strictly non-negative.
inline Var softplus(Var x) {
    const std::int64_t n = x.numel();
    Tensor out = Tensor::uninit(x.shape());
    {
        const float* xd = x.value().data();
        float* od = out.data();
        for (std::int64_t i = 0; i < n; ++i) {
            const double v = static_cast<double>(xd[i]);
            od[i] = v > 30.0 ? xd[i] : static_cast<float>(std::log1p(std::exp(v)));
        }
    }
    Var o = detail::wrap(*x.tape, std::move(out), x.requires_grad(), "softplus");
    if (x.requires_grad()) {
        Tape::Node* px = x.node;
        o.node->backprop = [px, n](Tape::Node& self) {
            const float* g = self.grad.data();
            const float* xd = px->value.data();
            float* dx = px->grad_buffer().data();
            for (std::int64_t i = 0; i < n; ++i)
                dx[i] += static_cast<float>(static_cast<double>(g[i]) /
                                            (1.0 + std::exp(-static_cast<double>(xd[i]))));
        };
    }
    return o;
}

// ---- spectral normalization ---------------------------------------------------

/// Persistent left singular-vector estimate for one wrapped kernel.
struct SnState {
    ParamLeaf u;  // unit norm, kept in the checkpoint, never optimized

    void init(const std::string& name, int cout, Rng& rng) {
        Tensor t = Tensor::uninit({cout});
        double norm = 0.0;
        for (int i = 0; i < cout; ++i) {
            t[i] = rng.normal();
            norm += static_cast<double>(t[i]) * static_cast<double>(t[i]);
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            t.fill(0.0f);
            t[0] = 1.0f;
        } else {
            for (int i = 0; i < cout; ++i) t[i] = static_cast<float>(static_cast<double>(t[i]) / norm);
        }
        u = ParamLeaf(name, std::move(t));
    }
};

namespace detail {

// kernel:(kh,kw,Cin,Cout) viewed as the matrix W[cout, kh*kw*cin].
inline void sn_matvec_wt_u(const float* k, std::int64_t rest, int cout, const double* u, double* v) {
    for (std::int64_t r = 0; r < rest; ++r) {
        double acc = 0.0;
        for (int c = 0; c < cout; ++c) acc += static_cast<double>(k[r * cout + c]) * u[c];
        v[r] = acc;
    }
}

inline void sn_matvec_w_v(const float* k, std::int64_t rest, int cout, const double* v, double* u) {
    for (int c = 0; c < cout; ++c) u[c] = 0.0;
    for (std::int64_t r = 0; r < rest; ++r)
        for (int c = 0; c < cout; ++c) u[c] += static_cast<double>(k[r * cout + c]) * v[r];
}

inline double normalize_vec(double* v, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += v[i] * v[i];
    const double norm = std::sqrt(acc);
    if (norm > 0.0)
        for (std::int64_t i = 0; i < n; ++i) v[i] /= norm;
    return norm;
}

}  // namespace detail

/// Divides the kernel by its largest-singular-value estimate. When
/// `update_estimate` is set, runs one power iteration on the persistent u
/// first; checks that freeze u see sigma as an exact function of the kernel,
/// so the backward map below is their exact derivative.
inline Var spectral_normalize(Var kernel, SnState& state, bool update_estimate) {
    const Shape& ks = kernel.shape();
    const int cout = ks.back();
    const std::int64_t rest = kernel.numel() / cout;
    if (state.u.value.numel() != cout)
        throw std::invalid_argument("spectral_normalize: u estimate length mismatches kernel");
    const float* kd = kernel.value().data();

    std::vector<double> u(static_cast<std::size_t>(cout)), v(static_cast<std::size_t>(rest));
    for (int c = 0; c < cout; ++c) u[static_cast<std::size_t>(c)] = static_cast<double>(state.u.value[c]);

    if (update_estimate) {
        detail::sn_matvec_wt_u(kd, rest, cout, u.data(), v.data());
        if (detail::normalize_vec(v.data(), rest) == 0.0)
            throw std::runtime_error("spectral_normalize: zero kernel has no spectral norm");
        detail::sn_matvec_w_v(kd, rest, cout, v.data(), u.data());
        detail::normalize_vec(u.data(), cout);
        for (int c = 0; c < cout; ++c) state.u.value[c] = static_cast<float>(u[static_cast<std::size_t>(c)]);
    }
    detail::sn_matvec_wt_u(kd, rest, cout, u.data(), v.data());
    const double sigma = detail::normalize_vec(v.data(), rest);  // sigma = ||W^T u||
    if (sigma <= 0.0) throw std::runtime_error("spectral_normalize: zero kernel has no spectral norm");

    const std::int64_t n = kernel.numel();
    Tensor out = Tensor::uninit(ks);
    for (std::int64_t i = 0; i < n; ++i)
        out[i] = static_cast<float>(static_cast<double>(kd[i]) / sigma);

    Var o = detail::wrap(*kernel.tape, std::move(out), kernel.requires_grad(), "spectral_normalize");
    if (kernel.requires_grad()) {
        Tape::Node* pk = kernel.node;
        // d(W/sigma) with sigma = ||W^T u|| and u frozen: dW = g/sigma - (<g,W>/sigma^2) u v^T.
        o.node->backprop = [pk, u, v, sigma, rest, cout](Tape::Node& self) {
            const float* g = self.grad.data();
            const float* kd = pk->value.data();
            const std::int64_t n = pk->value.numel();
            double dot = 0.0;
            for (std::int64_t i = 0; i < n; ++i)
                dot += static_cast<double>(g[i]) * static_cast<double>(kd[i]);
            const double coef = dot / (sigma * sigma);
            float* dk = pk->grad_buffer().data();
            for (std::int64_t r = 0; r < rest; ++r)
                for (int c = 0; c < cout; ++c) {
                    const std::int64_t i = r * cout + c;
                    dk[i] += static_cast<float>(static_cast<double>(g[i]) / sigma -
                                                coef * u[static_cast<std::size_t>(c)] * v[static_cast<std::size_t>(r)]);
                }
        };
    }
    return o;
}

/// Spectral-norm estimate currently implied by the stored u (test hook).
inline double spectral_sigma(const Tensor& kernel, const SnState& state) {
    const int cout = kernel.shape().back();
    const std::int64_t rest = kernel.numel() / cout;
    std::vector<double> u(static_cast<std::size_t>(cout)), v(static_cast<std::size_t>(rest));
    for (int c = 0; c < cout; ++c) u[static_cast<std::size_t>(c)] = static_cast<double>(state.u.value[c]);
    detail::sn_matvec_wt_u(kernel.data(), rest, cout, u.data(), v.data());
    return detail::normalize_vec(v.data(), rest);
}

// ---- layer parameter bundles ---------------------------------------------------

inline Tensor uniform_init(Shape shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::uninit(std::move(shape));
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

/// 2-D convolution or deconvolution layer parameters.
struct Conv2D {
    ParamLeaf kernel;  // conv: (kh,kw,Cin,Cout); deconv: (kh,kw,Cout,Cin)
    ParamLeaf bias;
    Stride2 stride;
    Pad2 pad;
    bool transposed = false;

    Conv2D() = default;
    Conv2D(const std::string& name, int kh, int kw, int cin, int cout, Stride2 s, Pad2 p, bool transp, Rng& rng)
        : stride(s), pad(p), transposed(transp) {
        const int fan_in = kh * kw * cin;
        Shape kshape = transp ? Shape{kh, kw, cout, cin} : Shape{kh, kw, cin, cout};
        kernel = ParamLeaf(name + "/kernel", uniform_init(std::move(kshape), fan_in, rng));
        bias = ParamLeaf(name + "/bias", Tensor::zeros({cout}));
    }

    Var forward(Tape& tape, Var x, bool trainable = true) {
        Var k = leaf(tape, kernel, trainable);
        Var b = leaf(tape, bias, trainable);
        return transposed ? deconv2d(x, k, b, stride, pad) : conv2d(x, k, b, stride, pad);
    }

    void collect(std::vector<ParamLeaf*>& dst) {
        dst.push_back(&kernel);
        dst.push_back(&bias);
    }
};

struct InstanceNorm {
    ParamLeaf scale;
    ParamLeaf shift;
    float eps = 1e-5f;

    InstanceNorm() = default;
    InstanceNorm(const std::string& name, int channels)
        : scale(name + "/scale", Tensor::full({channels}, 1.0f)),
          shift(name + "/shift", Tensor::zeros({channels})) {}

    Var forward(Tape& tape, Var x, bool trainable = true) {
        return instance_norm(x, leaf(tape, scale, trainable), leaf(tape, shift, trainable), eps);
    }

    void collect(std::vector<ParamLeaf*>& dst) {
        dst.push_back(&scale);
        dst.push_back(&shift);
    }
};

struct PReLU {
    ParamLeaf slope;

    PReLU() = default;
    PReLU(const std::string& name, int channels) : slope(name + "/slope", Tensor::full({channels}, 0.25f)) {}

    Var forward(Tape& tape, Var x, bool trainable = true) { return prelu(x, leaf(tape, slope, trainable)); }

    void collect(std::vector<ParamLeaf*>& dst) { dst.push_back(&slope); }
};

/// Convolution wrapped in spectral normalization (discriminator blocks).
struct SnConv2D {
    Conv2D conv;
    SnState sn;

    SnConv2D() = default;
    SnConv2D(const std::string& name, int kh, int kw, int cin, int cout, Stride2 s, Pad2 p, Rng& rng)
        : conv(name, kh, kw, cin, cout, s, p, false, rng) {
        sn.init(name + "/sn_u", cout, rng);
    }

    Var forward(Tape& tape, Var x, bool trainable, bool update_sn) {
        Var k = leaf(tape, conv.kernel, trainable);
        Var kn = spectral_normalize(k, sn, update_sn);
        Var b = leaf(tape, conv.bias, trainable);
        return conv2d(x, kn, b, conv.stride, conv.pad);
    }

    void collect(std::vector<ParamLeaf*>& dst) { conv.collect(dst); }
    void collect_state(std::vector<ParamLeaf*>& dst) { dst.push_back(&sn.u); }
};

}  // namespace aiacycle
