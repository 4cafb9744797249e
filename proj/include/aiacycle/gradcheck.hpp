#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aiacycle/attention.hpp"
#include "aiacycle/layers.hpp"
#include "aiacycle/losses.hpp"

namespace aiacycle {

/// Central-difference gradient of a scalar-valued map, element by element.
/// The divisor is the actually realized float perturbation, not 2*eps, which
/// removes most of the quantization error at 32-bit storage.
template <typename F>
Tensor finite_difference_gradient(F&& f, Tensor at, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_gradient: eps must be positive");
    Tensor grad = Tensor::uninit(at.shape());
    for (std::int64_t i = 0; i < at.numel(); ++i) {
        const float saved = at[i];
        const float xp = static_cast<float>(static_cast<double>(saved) + eps);
        const float xm = static_cast<float>(static_cast<double>(saved) - eps);
        at[i] = xp;
        const double fp = f(static_cast<const Tensor&>(at));
        at[i] = xm;
        const double fm = f(static_cast<const Tensor&>(at));
        at[i] = saved;
        grad[i] = static_cast<float>((fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm)));
    }
    return grad;
}

/// Builds the graph, backpropagates the scalar loss into the leaves, and
/// returns the promoted-precision loss value.
inline double evaluate_with_gradients(const std::function<Var(Tape&)>& build) {
    Tape tape;
    Var loss = build(tape);
    double value = loss.scalar_hi();
    tape.backward(*loss.node);
    return value;
}

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

namespace gradcheck_detail {

/// Pushes every element at least `margin` away from zero (kink avoidance for
/// PReLU and friends).
inline void apply_kink_margin(Tensor& t, float margin) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (t[i] >= 0.0f && t[i] < margin) t[i] = margin + t[i];
        if (t[i] < 0.0f && t[i] > -margin) t[i] = -margin + t[i];
    }
}

inline Tensor random_tensor(Shape s, Rng& rng, float lo = -1.5f, float hi = 1.5f) {
    Tensor t = Tensor::uninit(std::move(s));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Scalar projection of a tensor output: sum of elementwise products with a
/// fixed probe tensor. Keeps loss gradients O(1) per element.
inline Var project(Var out, const Tensor& probe) {
    Tape& tape = *out.tape;
    Var p = constant(tape, probe);
    return scale(mean_all(mul(out, p)), static_cast<float>(out.numel()));
}

/// One named check: some leaves, and a builder mapping them to a scalar loss.
struct Check {
    std::string name;
    std::vector<ParamLeaf*> leaves;
    std::function<Var(Tape&)> build;
};

inline GradCheckResult run_check(const Check& check, double eps) {
    for (auto* l : check.leaves) l->zero_grad();
    evaluate_with_gradients(check.build);
    GradCheckResult result{check.name, 0.0, false};
    double scale_denom = 1.0;
    std::vector<Tensor> fd_grads;
    fd_grads.reserve(check.leaves.size());
    for (auto* l : check.leaves) {
        Tensor fd = finite_difference_gradient(
            [&](const Tensor& values) {
                Tensor saved = l->value;
                l->value = values;
                Tape tape;
                Var loss = check.build(tape);
                double v = loss.scalar_hi();
                l->value = std::move(saved);
                return v;
            },
            l->value, eps);
        for (std::int64_t i = 0; i < fd.numel(); ++i) {
            scale_denom = std::max(scale_denom, std::abs(static_cast<double>(fd[i])));
            scale_denom = std::max(scale_denom, std::abs(static_cast<double>(l->grad[i])));
        }
        fd_grads.push_back(std::move(fd));
    }
    for (std::size_t k = 0; k < check.leaves.size(); ++k) {
        const Tensor& fd = fd_grads[k];
        const Tensor& an = check.leaves[k]->grad;
        for (std::int64_t i = 0; i < fd.numel(); ++i) {
            const double err = std::abs(static_cast<double>(fd[i]) - static_cast<double>(an[i])) / scale_denom;
            result.max_rel_err = std::max(result.max_rel_err, err);
        }
    }
    result.pass = result.max_rel_err <= 1e-3;
    return result;
}

}  // namespace gradcheck_detail

/// Runs the finite-difference suite over every differentiable operation:
/// conv, deconv, instance norm, PReLU, GLU, softmax, the spectral-norm path,
/// ATAB, AFAB, ATFA, AHA, and all five losses. eps 1e-3, kink margin 1e-2,
/// dims <= 8.
inline std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed = 2) {
    using namespace gradcheck_detail;
    Rng rng(seed);
    std::vector<GradCheckResult> results;
    const double eps = 1e-3;
    const float margin = 1e-2f;

    auto run = [&](Check c) { results.push_back(run_check(c, eps)); };

    // conv2d: gradients through input, kernel and bias.
    {
        auto x = std::make_shared<ParamLeaf>("x", random_tensor({1, 5, 6, 3}, rng));
        auto k = std::make_shared<ParamLeaf>("k", random_tensor({3, 3, 3, 4}, rng, -0.5f, 0.5f));
        auto b = std::make_shared<ParamLeaf>("b", random_tensor({4}, rng, -0.2f, 0.2f));
        Tensor probe = random_tensor({1, 5, 3, 4}, rng, 0.5f, 1.5f);
        run({"conv2d",
             {x.get(), k.get(), b.get()},
             [=](Tape& t) {
                 return project(conv2d(leaf(t, *x), leaf(t, *k), leaf(t, *b), {1, 2}, {1, 1}), probe);
             }});
    }
    // deconv2d
    {
        auto x = std::make_shared<ParamLeaf>("x", random_tensor({1, 4, 5, 4}, rng));
        auto k = std::make_shared<ParamLeaf>("k", random_tensor({3, 3, 3, 4}, rng, -0.5f, 0.5f));
        auto b = std::make_shared<ParamLeaf>("b", random_tensor({3}, rng, -0.2f, 0.2f));
        Tensor probe = random_tensor({1, 6, 11, 3}, rng, 0.5f, 1.5f);
        run({"deconv2d",
             {x.get(), k.get(), b.get()},
             [=](Tape& t) {
                 return project(deconv2d(leaf(t, *x), leaf(t, *k), leaf(t, *b), {1, 2}, {0, 0}), probe);
             }});
    }
    // instance_norm
    {
        auto x = std::make_shared<ParamLeaf>("x", random_tensor({2, 4, 5, 3}, rng));
        auto g = std::make_shared<ParamLeaf>("g", random_tensor({3}, rng, 0.5f, 1.5f));
        auto s = std::make_shared<ParamLeaf>("s", random_tensor({3}, rng, -0.3f, 0.3f));
        Tensor probe = random_tensor({2, 4, 5, 3}, rng, 0.5f, 1.5f);
        run({"instance_norm",
             {x.get(), g.get(), s.get()},
             [=](Tape& t) { return project(instance_norm(leaf(t, *x), leaf(t, *g), leaf(t, *s)), probe); }});
    }
    // prelu: inputs pushed off the kink.
    {
        Tensor xv = random_tensor({2, 3, 4, 5}, rng);
        apply_kink_margin(xv, margin);
        auto x = std::make_shared<ParamLeaf>("x", std::move(xv));
        auto a = std::make_shared<ParamLeaf>("a", random_tensor({5}, rng, 0.1f, 0.5f));
        Tensor probe = random_tensor({2, 3, 4, 5}, rng, 0.5f, 1.5f);
        run({"prelu", {x.get(), a.get()}, [=](Tape& t) {
                 return project(prelu(leaf(t, *x), leaf(t, *a)), probe);
             }});
    }
    // glu
    {
        auto x = std::make_shared<ParamLeaf>("x", random_tensor({1, 4, 3, 6}, rng));
        Tensor probe = random_tensor({1, 4, 3, 3}, rng, 0.5f, 1.5f);
        run({"glu", {x.get()}, [=](Tape& t) { return project(glu(leaf(t, *x)), probe); }});
    }
    // softplus
    {
        auto x = std::make_shared<ParamLeaf>("x", random_tensor({2, 3, 4, 2}, rng));
        Tensor probe = random_tensor({2, 3, 4, 2}, rng, 0.5f, 1.5f);
        run({"softplus", {x.get()}, [=](Tape& t) { return project(softplus(leaf(t, *x)), probe); }});
    }
    // softmax along the last and a middle axis
    {
        auto x = std::make_shared<ParamLeaf>("x", random_tensor({2, 4, 7}, rng));
        Tensor probe = random_tensor({2, 4, 7}, rng, 0.5f, 1.5f);
        run({"softmax_axis2", {x.get()}, [=](Tape& t) { return project(softmax(leaf(t, *x), 2), probe); }});
        run({"softmax_axis1", {x.get()}, [=](Tape& t) { return project(softmax(leaf(t, *x), 1), probe); }});
    }
    // spectral normalization path (frozen u estimate -> exact derivative)
    {
        auto k = std::make_shared<ParamLeaf>("k", random_tensor({3, 3, 2, 4}, rng, -0.8f, 0.8f));
        auto state = std::make_shared<SnState>();
        Rng urng(seed ^ 0x5eed);
        state->init("u", 4, urng);
        Tensor probe = random_tensor({3, 3, 2, 4}, rng, 0.5f, 1.5f);
        run({"spectral_norm", {k.get()}, [=](Tape& t) {
                 return project(spectral_normalize(leaf(t, *k), *state, false), probe);
             }});
    }
    // attention branches and modules at C=8
    {
        auto module = std::make_shared<AtfaModule>("atfa", 8, true, true, rng);
        module->alpha.value[0] = 0.3f;
        module->beta.value[0] = -0.2f;
        auto x = std::make_shared<ParamLeaf>("x", random_tensor({1, 4, 3, 8}, rng));
        Tensor probe = random_tensor({1, 4, 3, 8}, rng, 0.5f, 1.5f);
        std::vector<ParamLeaf*> leaves{x.get()};
        module->collect(leaves);
        run({"atab", leaves, [=](Tape& t) { return project(module->atab(t, leaf(t, *x), true), probe); }});
        run({"afab", leaves, [=](Tape& t) { return project(module->afab(t, leaf(t, *x), true), probe); }});
        run({"atfa", leaves, [=](Tape& t) { return project(module->forward(t, leaf(t, *x), true), probe); }});
    }
    // hierarchical attention over three maps
    {
        auto aha = std::make_shared<AhaModule>("aha", 3, 8, rng);
        aha->gamma.value[0] = 0.37f;
        auto m0 = std::make_shared<ParamLeaf>("m0", random_tensor({1, 3, 4, 8}, rng));
        auto m1 = std::make_shared<ParamLeaf>("m1", random_tensor({1, 3, 4, 8}, rng));
        auto m2 = std::make_shared<ParamLeaf>("m2", random_tensor({1, 3, 4, 8}, rng));
        Tensor probe = random_tensor({1, 3, 4, 8}, rng, 0.5f, 1.5f);
        std::vector<ParamLeaf*> leaves{m0.get(), m1.get(), m2.get()};
        aha->collect(leaves);
        run({"aha", leaves, [=](Tape& t) {
                 std::vector<Var> maps{leaf(t, *m0), leaf(t, *m1), leaf(t, *m2)};
                 return project(aha->forward(t, maps, true), probe);
             }});
    }
    // adversarial losses through the score vectors
    {
        auto real = std::make_shared<ParamLeaf>("real", random_tensor({5}, rng));
        auto fake = std::make_shared<ParamLeaf>("fake", random_tensor({4}, rng));
        run({"rals_discriminator_loss", {real.get(), fake.get()}, [=](Tape& t) {
                 return rals_discriminator_loss(leaf(t, *real), leaf(t, *fake));
             }});
        run({"rals_generator_loss", {real.get(), fake.get()}, [=](Tape& t) {
                 return rals_generator_loss(leaf(t, *real), leaf(t, *fake));
             }});
    }
    // cycle / identity losses with |a-b| clear of the L1 kink
    {
        Tensor base_x = random_tensor({2, 3, 4, 1}, rng);
        Tensor base_y = random_tensor({2, 3, 4, 1}, rng);
        Tensor off_x = base_x, off_y = base_y;
        for (std::int64_t i = 0; i < off_x.numel(); ++i)
            off_x[i] += (rng.uniform() < 0.5f ? -1.0f : 1.0f) * rng.uniform(0.05f, 0.4f);
        for (std::int64_t i = 0; i < off_y.numel(); ++i)
            off_y[i] += (rng.uniform() < 0.5f ? -1.0f : 1.0f) * rng.uniform(0.05f, 0.4f);
        auto x = std::make_shared<ParamLeaf>("x", base_x);
        auto fgx = std::make_shared<ParamLeaf>("fgx", off_x);
        auto y = std::make_shared<ParamLeaf>("y", base_y);
        auto gfy = std::make_shared<ParamLeaf>("gfy", off_y);
        std::vector<ParamLeaf*> leaves{x.get(), fgx.get(), y.get(), gfy.get()};
        run({"cycle_loss", leaves, [=](Tape& t) {
                 return cycle_loss(leaf(t, *x), leaf(t, *fgx), leaf(t, *y), leaf(t, *gfy));
             }});
        run({"identity_loss", leaves, [=](Tape& t) {
                 return identity_loss(leaf(t, *x), leaf(t, *fgx), leaf(t, *y), leaf(t, *gfy));
             }});
    }
    // weighted total over scalar components
    {
        auto a = std::make_shared<ParamLeaf>("a", random_tensor({1}, rng, 0.2f, 1.2f));
        auto b = std::make_shared<ParamLeaf>("b", random_tensor({1}, rng, 0.2f, 1.2f));
        auto c = std::make_shared<ParamLeaf>("c", random_tensor({1}, rng, 0.2f, 1.2f));
        auto d = std::make_shared<ParamLeaf>("d", random_tensor({1}, rng, 0.2f, 1.2f));
        run({"total_generator_loss", {a.get(), b.get(), c.get(), d.get()}, [=](Tape& t) {
                 return total_generator_loss(leaf(t, *a), leaf(t, *b), leaf(t, *c), leaf(t, *d), 5.0f, 10.0f, true);
             }});
    }
    // random conv/prelu/softmax composition
    {
        auto x = std::make_shared<ParamLeaf>("x", random_tensor({1, 4, 6, 2}, rng));
        auto k = std::make_shared<ParamLeaf>("k", random_tensor({3, 3, 2, 4}, rng, -0.6f, 0.6f));
        auto b = std::make_shared<ParamLeaf>("b", random_tensor({4}, rng, 0.1f, 0.4f));
        auto a = std::make_shared<ParamLeaf>("a", random_tensor({4}, rng, 0.1f, 0.5f));
        Tensor probe = random_tensor({1, 4, 6, 4}, rng, 0.5f, 1.5f);
        run({"composition_conv_prelu_softmax", {x.get(), k.get(), b.get(), a.get()}, [=](Tape& t) {
                 Var h = conv2d(leaf(t, *x), leaf(t, *k), leaf(t, *b), {1, 1}, {1, 1});
                 h = prelu(h, leaf(t, *a));
                 return project(softmax(h, 3), probe);
             }});
    }
    return results;
}

}  // namespace aiacycle
