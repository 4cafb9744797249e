#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace aiacycle {

/// Deterministic random source. Distribution code is hand-rolled so that a
/// given seed yields the same stream on every platform; std:: distributions
/// make no such promise.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(static_cast<std::mt19937::result_type>(seed)) {}

    std::uint32_t next_u32() { return engine_(); }

    /// Uniform in [0, 1) with 24 bits of precision.
    float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::int64_t below(std::int64_t n) {
        // 64-bit draw reduced by modulo; bias is < 2^-40 for the corpus sizes used here.
        std::uint64_t x = (static_cast<std::uint64_t>(next_u32()) << 32) | next_u32();
        return static_cast<std::int64_t>(x % static_cast<std::uint64_t>(n));
    }

    /// Standard normal via Box-Muller.
    float normal() {
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.28318530717958647692f * u2);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (is.fail()) throw std::runtime_error("rng: malformed serialized state");
    }

private:
    std::mt19937 engine_;
};

}  // namespace aiacycle
