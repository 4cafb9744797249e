#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "aiacycle/tensor.hpp"

namespace aiacycle {

constexpr int kSampleRate = 16000;
constexpr int kNfft = 512;
constexpr int kHop = 128;  // 75% overlap
constexpr int kBins = kNfft / 2 + 1;

/// Mono 16 kHz waveform.
struct Waveform {
    std::vector<float> samples;

    std::size_t size() const { return samples.size(); }

    Waveform clipped() const {
        Waveform out;
        out.samples.reserve(samples.size());
        for (float s : samples) out.samples.push_back(std::min(1.0f, std::max(-1.0f, s)));
        return out;
    }
};

/// One-sided complex spectrogram, frames x 257.
struct ComplexSpectrogram {
    int frames = 0;
    std::vector<std::complex<float>> data;  // frames * kBins, bin fastest

    std::complex<float>& at(int t, int f) { return data[static_cast<std::size_t>(t) * kBins + f]; }
    std::complex<float> at(int t, int f) const { return data[static_cast<std::size_t>(t) * kBins + f]; }
};

/// |X|^eta features, frames x 257, entries >= 0, exponent recorded.
struct CompressedMagnitude {
    float eta = 0.5f;
    Tensor values;  // (frames, 257)

    int frames() const { return values.defined() ? values.dim(0) : 0; }
};

/// Phase angles in (-pi, pi], frames x 257.
struct PhaseMap {
    Tensor values;  // (frames, 257)
};

namespace detail {

inline const std::vector<double>& hann_window() {
    static const std::vector<double> w = [] {
        std::vector<double> v(kNfft);
        for (int n = 0; n < kNfft; ++n)
            v[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / kNfft);
        return v;
    }();
    return w;
}

/// Iterative radix-2 FFT, double precision.
inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

}  // namespace detail

inline int stft_frame_count(std::size_t samples) {
    if (samples < kNfft) return 0;
    return static_cast<int>((samples - kNfft) / kHop) + 1;
}

/// Hann-windowed 512-point STFT, hop 128, no center padding, one-sided.
inline ComplexSpectrogram stft(const Waveform& wave) {
    const std::size_t L = wave.samples.size();
    if (L < kNfft)
        throw std::invalid_argument("stft: signal of " + std::to_string(L) + " samples is shorter than one window");
    const int T = stft_frame_count(L);
    const auto& win = detail::hann_window();
    ComplexSpectrogram spec;
    spec.frames = T;
    spec.data.resize(static_cast<std::size_t>(T) * kBins);
    std::vector<std::complex<double>> buf(kNfft);
    for (int t = 0; t < T; ++t) {
        const std::size_t off = static_cast<std::size_t>(t) * kHop;
        for (int n = 0; n < kNfft; ++n)
            buf[static_cast<std::size_t>(n)] = {static_cast<double>(wave.samples[off + static_cast<std::size_t>(n)]) *
                                                    win[static_cast<std::size_t>(n)],
                                                0.0};
        detail::fft_inplace(buf, false);
        for (int f = 0; f < kBins; ++f)
            spec.at(t, f) = {static_cast<float>(buf[static_cast<std::size_t>(f)].real()),
                             static_cast<float>(buf[static_cast<std::size_t>(f)].imag())};
    }
    return spec;
}

/// Overlap-add inverse with synthesis windowing and division by the summed
/// squared analysis window. Output length (T-1)*128 + 512.
inline Waveform istft(const ComplexSpectrogram& spec) {
    if (spec.frames < 1 || spec.data.size() != static_cast<std::size_t>(spec.frames) * kBins)
        throw std::invalid_argument("istft: inconsistent spectrogram dimensions");
    const int T = spec.frames;
    const std::size_t L = static_cast<std::size_t>(T - 1) * kHop + kNfft;
    const auto& win = detail::hann_window();
    std::vector<double> acc(L, 0.0), den(L, 0.0);
    std::vector<std::complex<double>> buf(kNfft);
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < kBins; ++f)
            buf[static_cast<std::size_t>(f)] = {static_cast<double>(spec.at(t, f).real()),
                                                static_cast<double>(spec.at(t, f).imag())};
        for (int f = kBins; f < kNfft; ++f) buf[static_cast<std::size_t>(f)] = std::conj(buf[static_cast<std::size_t>(kNfft - f)]);
        detail::fft_inplace(buf, true);
        const std::size_t off = static_cast<std::size_t>(t) * kHop;
        for (int n = 0; n < kNfft; ++n) {
            const double w = win[static_cast<std::size_t>(n)];
            acc[off + static_cast<std::size_t>(n)] += w * buf[static_cast<std::size_t>(n)].real();
            den[off + static_cast<std::size_t>(n)] += w * w;
        }
    }
    Waveform out;
    out.samples.resize(L);
    for (std::size_t i = 0; i < L; ++i)
        out.samples[i] = den[i] > 1e-10 ? static_cast<float>(acc[i] / den[i]) : 0.0f;
    return out;
}

/// Splits a spectrogram into |X|^eta and its phase. Phase of a zero bin is 0
/// by convention; angles live in (-pi, pi].
inline std::pair<CompressedMagnitude, PhaseMap> compress(const ComplexSpectrogram& spec, float eta) {
    if (!(eta > 0.0f) || eta > 1.0f)
        throw std::invalid_argument("compress: eta must lie in (0, 1], got " + std::to_string(eta));
    const int T = spec.frames;
    CompressedMagnitude mag;
    mag.eta = eta;
    mag.values = Tensor::uninit({T, kBins});
    PhaseMap phase;
    phase.values = Tensor::uninit({T, kBins});
    constexpr float kPi = static_cast<float>(M_PI);
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < kBins; ++f) {
            const std::complex<float> z = spec.at(t, f);
            const double m = std::hypot(static_cast<double>(z.real()), static_cast<double>(z.imag()));
            const std::int64_t i = static_cast<std::int64_t>(t) * kBins + f;
            mag.values[i] = m == 0.0 ? 0.0f : static_cast<float>(std::pow(m, static_cast<double>(eta)));
            if (m == 0.0) {
                phase.values[i] = 0.0f;
            } else {
                float p = static_cast<float>(std::atan2(static_cast<double>(z.imag()), static_cast<double>(z.real())));
                if (p <= -kPi) p = kPi;
                phase.values[i] = p;
            }
        }
    return {std::move(mag), std::move(phase)};
}

/// Inverse of compress: mag^(1/eta) * e^(i*phase).
inline ComplexSpectrogram reconstruct(const CompressedMagnitude& mag, const PhaseMap& phase) {
    if (!mag.values.same_shape(phase.values))
        throw std::invalid_argument("reconstruct: magnitude " + shape_str(mag.values.shape()) +
                                    " and phase " + shape_str(phase.values.shape()) + " disagree");
    const int T = mag.frames();
    ComplexSpectrogram spec;
    spec.frames = T;
    spec.data.resize(static_cast<std::size_t>(T) * kBins);
    const double inv_eta = 1.0 / static_cast<double>(mag.eta);
    for (std::int64_t i = 0; i < mag.values.numel(); ++i) {
        const double m = std::pow(static_cast<double>(mag.values[i]), inv_eta);
        const double p = static_cast<double>(phase.values[i]);
        spec.data[static_cast<std::size_t>(i)] = {static_cast<float>(m * std::cos(p)),
                                                  static_cast<float>(m * std::sin(p))};
    }
    return spec;
}

struct MixResult {
    Waveform mixture;
    float noise_gain = 1.0f;  // applied to the noise before summing
    float peak_scale = 1.0f;  // common rescale applied when the sum clipped
};

/// clean + g*noise with g chosen so the clean-to-scaled-noise power ratio is
/// snr_db; the mixture is then peak-normalized to <= 1 if needed.
inline MixResult mix(const Waveform& clean, const Waveform& noise, float snr_db) {
    if (clean.size() != noise.size())
        throw std::invalid_argument("mix: clean and noise lengths differ");
    if (clean.size() == 0) throw std::invalid_argument("mix: empty input");
    double pc = 0.0, pn = 0.0;
    for (float s : clean.samples) pc += static_cast<double>(s) * s;
    for (float s : noise.samples) pn += static_cast<double>(s) * s;
    if (pc <= 0.0) throw std::invalid_argument("mix: clean signal has zero energy");
    if (pn <= 0.0) throw std::invalid_argument("mix: noise signal has zero energy");
    const double rms_c = std::sqrt(pc / static_cast<double>(clean.size()));
    const double rms_n = std::sqrt(pn / static_cast<double>(noise.size()));
    const double g = std::pow(10.0, -static_cast<double>(snr_db) / 20.0) * rms_c / rms_n;
    MixResult out;
    out.noise_gain = static_cast<float>(g);
    out.mixture.samples.resize(clean.size());
    double peak = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double v = static_cast<double>(clean.samples[i]) + g * static_cast<double>(noise.samples[i]);
        peak = std::max(peak, std::abs(v));
        out.mixture.samples[i] = static_cast<float>(v);
    }
    if (peak > 1.0) {
        out.peak_scale = static_cast<float>(1.0 / peak);
        for (auto& s : out.mixture.samples) s = static_cast<float>(static_cast<double>(s) / peak);
    }
    return out;
}

}  // namespace aiacycle
