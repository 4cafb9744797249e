#pragma once

#include <string>
#include <vector>

#include "aiacycle/attention.hpp"

namespace aiacycle {

/// Concatenates two batches along axis 0 (shared discriminator pass over
/// real and fake inputs).
inline Var concat_batch(Var a, Var b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() != bs.size()) throw std::invalid_argument("concat_batch: rank mismatch");
    for (std::size_t i = 1; i < as.size(); ++i)
        if (as[i] != bs[i])
            throw std::invalid_argument("concat_batch: trailing shape mismatch " + shape_str(as) + " vs " +
                                        shape_str(bs));
    Shape os = as;
    os[0] = as[0] + bs[0];
    Tensor out = Tensor::uninit(os);
    const std::int64_t an = a.numel(), bn = b.numel();
    std::memcpy(out.data(), a.value().data(), sizeof(float) * static_cast<std::size_t>(an));
    std::memcpy(out.data() + an, b.value().data(), sizeof(float) * static_cast<std::size_t>(bn));
    bool rg = a.requires_grad() || b.requires_grad();
    Var o = detail::wrap(*a.tape, std::move(out), rg, "concat_batch");
    if (rg) {
        Tape::Node *pa = a.node, *pb = b.node;
        o.node->backprop = [pa, pb, an, bn](Tape::Node& self) {
            if (pa->requires_grad) detail::add_into(pa->grad_buffer(), self.grad.data(), an);
            if (pb->requires_grad) detail::add_into(pb->grad_buffer(), self.grad.data() + an, bn);
        };
    }
    return o;
}

/// Leading-axis slice [begin, begin+count) of a batch.
inline Var slice_batch(Var x, int begin, int count) {
    const Shape& s = x.shape();
    if (begin < 0 || count < 1 || begin + count > s[0])
        throw std::invalid_argument("slice_batch: range out of bounds");
    Shape os = s;
    os[0] = count;
    const std::int64_t item = x.numel() / s[0];
    Tensor out = Tensor::uninit(os);
    std::memcpy(out.data(), x.value().data() + begin * item,
                sizeof(float) * static_cast<std::size_t>(count * item));
    Var o = detail::wrap(*x.tape, std::move(out), x.requires_grad(), "slice_batch");
    if (x.requires_grad()) {
        Tape::Node* px = x.node;
        o.node->backprop = [px, begin, count, item](Tape::Node& self) {
            float* d = px->grad_buffer().data() + begin * item;
            const float* g = self.grad.data();
            const std::int64_t n = count * item;
            for (std::int64_t i = 0; i < n; ++i) d[i] += g[i];
        };
    }
    return o;
}

/// Model topology knobs. The defaults are the full-scale settings; desk runs
/// shrink base_channels and the stack depth through the training config.
struct ModelConfig {
    int base_channels = 64;  // bottleneck channel count C, divisible by 8
    int atfa_modules = 6;
    bool use_atab = true;
    bool use_afab = true;
    bool use_aha = true;

    void validate() const {
        if (base_channels < 8 || base_channels % 8 != 0)
            throw std::invalid_argument("model config: base_channels must be a positive multiple of 8");
        if (atfa_modules < 0) throw std::invalid_argument("model config: atfa_modules must be >= 0");
    }
};

/// Encoder-bottleneck-decoder generator: three strided conv blocks
/// (conv -> IN -> PReLU -> GLU) take 257 bins to 33 at C channels, the AIA
/// stack transforms the bottleneck, and three mirrored deconv blocks return
/// to 257 bins; a softplus head keeps magnitudes non-negative.
struct Generator {
    struct Block {
        Conv2D conv;
        InstanceNorm norm;
        PReLU act;
    };

    ModelConfig cfg;
    std::vector<Block> down;
    AiaStack aia;
    std::vector<Block> up;
    Conv2D out_conv;

    Generator() = default;
    Generator(const std::string& name, const ModelConfig& config, Rng& rng) : cfg(config) {
        cfg.validate();
        const int C = cfg.base_channels;
        const int down_plan[4] = {1, C / 4, C / 2, C};
        for (int i = 0; i < 3; ++i) {
            const std::string bn = name + "/down" + std::to_string(i);
            Block b;
            // GLU halves the doubled conv output back to the plan width.
            b.conv = Conv2D(bn + "/conv", 3, 5, down_plan[i], 2 * down_plan[i + 1], {1, 2}, {1, 2}, false, rng);
            b.norm = InstanceNorm(bn + "/norm", 2 * down_plan[i + 1]);
            b.act = PReLU(bn + "/act", 2 * down_plan[i + 1]);
            down.push_back(std::move(b));
        }
        aia = AiaStack(name + "/aia", cfg.atfa_modules, C, cfg.use_atab, cfg.use_afab, cfg.use_aha, rng);
        const int up_plan[3] = {C, C / 2, C / 4};
        for (int i = 0; i < 2; ++i) {
            const std::string bn = name + "/up" + std::to_string(i);
            Block b;
            b.conv = Conv2D(bn + "/conv", 3, 5, up_plan[i], 2 * up_plan[i + 1], {1, 2}, {1, 2}, true, rng);
            b.norm = InstanceNorm(bn + "/norm", 2 * up_plan[i + 1]);
            b.act = PReLU(bn + "/act", 2 * up_plan[i + 1]);
            up.push_back(std::move(b));
        }
        out_conv = Conv2D(name + "/up2/conv", 3, 5, up_plan[2], 1, {1, 2}, {1, 2}, true, rng);
    }

    static constexpr int kInputBins = 257;

    Var forward(Tape& tape, Var x, bool trainable = true) {
        const Shape& s = x.shape();
        if (s.size() != 4 || s[2] != kInputBins || s[3] != 1)
            throw std::invalid_argument("generator: expected (B,T,257,1) input, got " + shape_str(s));
        Var cur = x;
        for (auto& b : down) {
            cur = b.conv.forward(tape, cur, trainable);
            cur = b.norm.forward(tape, cur, trainable);
            cur = b.act.forward(tape, cur, trainable);
            cur = glu(cur);
        }
        cur = aia.forward(tape, cur, trainable);
        for (auto& b : up) {
            cur = b.conv.forward(tape, cur, trainable);
            cur = b.norm.forward(tape, cur, trainable);
            cur = b.act.forward(tape, cur, trainable);
            cur = glu(cur);
        }
        cur = out_conv.forward(tape, cur, trainable);
        return softplus(cur);
    }

    void collect(std::vector<ParamLeaf*>& dst) {
        for (auto& b : down) {
            b.conv.collect(dst);
            b.norm.collect(dst);
            b.act.collect(dst);
        }
        aia.collect(dst);
        for (auto& b : up) {
            b.conv.collect(dst);
            b.norm.collect(dst);
            b.act.collect(dst);
        }
        out_conv.collect(dst);
    }

    std::int64_t parameter_count() {
        std::vector<ParamLeaf*> leaves;
        collect(leaves);
        std::int64_t n = 0;
        for (auto* l : leaves) n += l->value.numel();
        return n;
    }
};

/// Per-item discriminator judgments from the final layer and an intermediate
/// layer with a smaller receptive field.
struct DiscriminatorScores {
    Var final_score;  // (B)
    Var mid_score;    // (B)
};

/// Six spectrally normalized convolutions with PReLU, an intermediate head
/// after layer 3 and a final head after layer 6. Each head is a 1x1
/// spectrally normalized conv to one channel followed by a global mean, so
/// every item's scores depend on that item alone.
struct MultiScaleDiscriminator {
    std::vector<SnConv2D> convs;
    std::vector<PReLU> acts;
    SnConv2D mid_head;
    SnConv2D final_head;

    MultiScaleDiscriminator() = default;
    explicit MultiScaleDiscriminator(const std::string& name, Rng& rng) {
        const int plan[7] = {1, 8, 16, 32, 64, 64, 64};
        for (int i = 0; i < 6; ++i) {
            Stride2 s = i < 4 ? Stride2{2, 2} : Stride2{1, 1};
            convs.emplace_back(name + "/conv" + std::to_string(i), 3, 5, plan[i], plan[i + 1], s, Pad2{1, 2}, rng);
            acts.emplace_back(name + "/act" + std::to_string(i), plan[i + 1]);
        }
        mid_head = SnConv2D(name + "/mid_head", 1, 1, plan[3], 1, {1, 1}, {0, 0}, rng);
        final_head = SnConv2D(name + "/final_head", 1, 1, plan[6], 1, {1, 1}, {0, 0}, rng);
    }

    DiscriminatorScores forward(Tape& tape, Var x, bool trainable, bool update_sn) {
        const Shape& s = x.shape();
        if (s.size() != 4 || s[2] != Generator::kInputBins || s[3] != 1)
            throw std::invalid_argument("discriminator: expected (B,T,257,1) input, got " + shape_str(s));
        const int B = s[0];
        Var cur = x;
        Var mid{};
        for (int i = 0; i < 6; ++i) {
            cur = convs[static_cast<std::size_t>(i)].forward(tape, cur, trainable, update_sn);
            cur = acts[static_cast<std::size_t>(i)].forward(tape, cur, trainable);
            if (i == 2) mid = mid_head.forward(tape, cur, trainable, update_sn);
        }
        Var fin = final_head.forward(tape, cur, trainable, update_sn);
        DiscriminatorScores out;
        out.final_score = reshape(global_avg_pool(fin), {B});
        out.mid_score = reshape(global_avg_pool(mid), {B});
        return out;
    }

    void collect(std::vector<ParamLeaf*>& dst) {
        for (auto& c : convs) c.collect(dst);
        for (auto& a : acts) a.collect(dst);
        mid_head.collect(dst);
        final_head.collect(dst);
    }

    void collect_state(std::vector<ParamLeaf*>& dst) {
        for (auto& c : convs) c.collect_state(dst);
        mid_head.collect_state(dst);
        final_head.collect_state(dst);
    }

    std::int64_t parameter_count() {
        std::vector<ParamLeaf*> leaves;
        collect(leaves);
        std::int64_t n = 0;
        for (auto* l : leaves) n += l->value.numel();
        return n;
    }
};

}  // namespace aiacycle
