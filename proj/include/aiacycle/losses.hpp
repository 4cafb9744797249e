#pragma once

#include <vector>

#include "aiacycle/autograd.hpp"

namespace aiacycle {

namespace detail {

inline void check_scores(const Var& v, const char* op) {
    if (v.shape().size() != 1 || v.numel() < 1)
        throw std::invalid_argument(std::string(op) + ": expected a non-empty score vector, got " +
                                    shape_str(v.shape()));
}

}  // namespace detail

/// Relativistic average least-squares discriminator loss:
/// mean_real (D(y) - mean_fake - 1)^2 + mean_fake (D(G(x)) - mean_real + 1)^2.
inline Var rals_discriminator_loss(Var real_scores, Var fake_scores) {
    detail::check_scores(real_scores, "rals_discriminator_loss");
    detail::check_scores(fake_scores, "rals_discriminator_loss");
    Var real_term = mean_all(square(add_const(sub_scalar(real_scores, mean_all(fake_scores)), -1.0f)));
    Var fake_term = mean_all(square(add_const(sub_scalar(fake_scores, mean_all(real_scores)), 1.0f)));
    return add(real_term, fake_term);
}

/// Relativistic average least-squares generator loss:
/// mean_fake (D(G(x)) - mean_real - 1)^2 + mean_real (D(y) - mean_fake + 1)^2.
inline Var rals_generator_loss(Var real_scores, Var fake_scores) {
    detail::check_scores(real_scores, "rals_generator_loss");
    detail::check_scores(fake_scores, "rals_generator_loss");
    Var fake_term = mean_all(square(add_const(sub_scalar(fake_scores, mean_all(real_scores)), -1.0f)));
    Var real_term = mean_all(square(add_const(sub_scalar(real_scores, mean_all(fake_scores)), 1.0f)));
    return add(fake_term, real_term);
}

/// L1 cycle-consistency loss: mean|F(G(x)) - x| + mean|G(F(y)) - y|,
/// per-element means so the weights stay scale-free across crop sizes.
inline Var cycle_loss(Var x, Var f_of_g_x, Var y, Var g_of_f_y) {
    return add(mean_abs_diff(f_of_g_x, x), mean_abs_diff(g_of_f_y, y));
}

/// L1 identity-mapping loss: mean|F(x) - x| + mean|G(y) - y|.
inline Var identity_loss(Var x, Var f_of_x, Var y, Var g_of_y) {
    return add(mean_abs_diff(f_of_x, x), mean_abs_diff(g_of_y, y));
}

/// Weighted total for the joint generator update; the identity term enters
/// only while scheduled.
inline Var total_generator_loss(Var rals_g_xy, Var rals_g_yx, Var cycle, Var identity, float lambda_cycle,
                                float lambda_id, bool identity_active) {
    Var total = add(add(rals_g_xy, rals_g_yx), scale(cycle, lambda_cycle));
    if (identity_active) total = add(total, scale(identity, lambda_id));
    return total;
}

// Plain-number conveniences over the differentiable implementations.

namespace detail {

inline Var scores_var(Tape& tape, const std::vector<float>& s, const char* op) {
    if (s.empty()) throw std::invalid_argument(std::string(op) + ": empty score list");
    return constant(tape, Tensor::from({static_cast<int>(s.size())}, s));
}

}  // namespace detail

inline double rals_discriminator_loss(const std::vector<float>& real, const std::vector<float>& fake) {
    Tape tape;
    return rals_discriminator_loss(detail::scores_var(tape, real, "rals_discriminator_loss"),
                                   detail::scores_var(tape, fake, "rals_discriminator_loss"))
        .scalar_hi();
}

inline double rals_generator_loss(const std::vector<float>& real, const std::vector<float>& fake) {
    Tape tape;
    return rals_generator_loss(detail::scores_var(tape, real, "rals_generator_loss"),
                               detail::scores_var(tape, fake, "rals_generator_loss"))
        .scalar_hi();
}

/// Per-step loss record; one CSV row per training step.
struct LossBreakdown {
    double rals_g_xy = 0.0;
    double rals_g_yx = 0.0;
    double rals_d_x = 0.0;
    double rals_d_y = 0.0;
    double cycle = 0.0;
    double identity = 0.0;
    double total_g = 0.0;

    bool all_finite() const {
        return std::isfinite(rals_g_xy) && std::isfinite(rals_g_yx) && std::isfinite(rals_d_x) &&
               std::isfinite(rals_d_y) && std::isfinite(cycle) && std::isfinite(identity) &&
               std::isfinite(total_g);
    }

    const char* first_non_finite() const {
        if (!std::isfinite(rals_g_xy)) return "rals_g_xy";
        if (!std::isfinite(rals_g_yx)) return "rals_g_yx";
        if (!std::isfinite(rals_d_x)) return "rals_d_x";
        if (!std::isfinite(rals_d_y)) return "rals_d_y";
        if (!std::isfinite(cycle)) return "cycle";
        if (!std::isfinite(identity)) return "identity";
        if (!std::isfinite(total_g)) return "total_g";
        return nullptr;
    }
};

}  // namespace aiacycle
