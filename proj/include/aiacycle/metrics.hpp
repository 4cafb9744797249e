#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "aiacycle/signal.hpp"

namespace aiacycle {

constexpr int kSsnrSegment = 512;
constexpr int kSsnrHop = 256;
constexpr double kSsnrFloorDb = -10.0;
constexpr double kSsnrCeilDb = 35.0;
constexpr double kSsnrSilence = 1e-8;  // segment energy below this is skipped

/// Segmental SNR in dB: per-segment 10*log10(sum s^2 / sum (s-shat)^2),
/// clamped to [-10, 35], averaged over segments whose reference carries
/// energy. A perfect estimate pins at the clamp ceiling.
inline double ssnr(const Waveform& reference, const Waveform& estimate) {
    if (reference.size() != estimate.size())
        throw std::invalid_argument("ssnr: reference and estimate lengths differ");
    if (reference.size() < kSsnrSegment)
        throw std::invalid_argument("ssnr: signals shorter than one segment");
    double total = 0.0;
    int segments = 0;
    for (std::size_t off = 0; off + kSsnrSegment <= reference.size(); off += kSsnrHop) {
        double sig = 0.0, err = 0.0;
        for (int i = 0; i < kSsnrSegment; ++i) {
            const double s = static_cast<double>(reference.samples[off + static_cast<std::size_t>(i)]);
            const double e = s - static_cast<double>(estimate.samples[off + static_cast<std::size_t>(i)]);
            sig += s * s;
            err += e * e;
        }
        if (sig < kSsnrSilence) continue;
        double db = err <= 0.0 ? kSsnrCeilDb : 10.0 * std::log10(sig / err);
        db = std::min(kSsnrCeilDb, std::max(kSsnrFloorDb, db));
        total += db;
        ++segments;
    }
    if (segments == 0) throw std::invalid_argument("ssnr: every reference segment is silent");
    return total / static_cast<double>(segments);
}

/// Log-spectral distance in dB: RMS over bins of the log magnitude ratio,
/// averaged over frames. Symmetric in its arguments.
inline double log_spectral_distance(const Waveform& reference, const Waveform& estimate) {
    if (reference.size() != estimate.size())
        throw std::invalid_argument("log_spectral_distance: lengths differ");
    const ComplexSpectrogram sr = stft(reference);
    const ComplexSpectrogram se = stft(estimate);
    constexpr double eps = 1e-8;
    double total = 0.0;
    for (int t = 0; t < sr.frames; ++t) {
        double acc = 0.0;
        for (int f = 0; f < kBins; ++f) {
            const double mr = std::hypot(static_cast<double>(sr.at(t, f).real()), static_cast<double>(sr.at(t, f).imag()));
            const double me = std::hypot(static_cast<double>(se.at(t, f).real()), static_cast<double>(se.at(t, f).imag()));
            const double d = 20.0 * std::log10((mr + eps) / (me + eps));
            acc += d * d;
        }
        total += std::sqrt(acc / static_cast<double>(kBins));
    }
    return total / static_cast<double>(sr.frames);
}

/// Writes the dB spectrogram of a waveform as (a) a CSV of T x 257 values
/// that reparses bit-exactly and (b) an 8-bit PGM with the frequency axis
/// bottom-up, clipped to 80 dB below the per-file peak.
inline void export_spectrogram(const Waveform& wave, const std::string& out_base) {
    const ComplexSpectrogram spec = stft(wave);
    const int T = spec.frames;
    constexpr double eps = 1e-8;
    std::vector<float> db(static_cast<std::size_t>(T) * kBins);
    double mx = -1e30;
    for (int t = 0; t < T; ++t)
        for (int f = 0; f < kBins; ++f) {
            const double m = std::hypot(static_cast<double>(spec.at(t, f).real()),
                                        static_cast<double>(spec.at(t, f).imag()));
            const double v = 20.0 * std::log10(m + eps);
            db[static_cast<std::size_t>(t) * kBins + f] = static_cast<float>(v);
            mx = std::max(mx, v);
        }

    const std::string csv_path = out_base + ".csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw std::runtime_error("export_spectrogram: cannot write " + csv_path);
    char buf[32];
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < kBins; ++f) {
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(db[static_cast<std::size_t>(t) * kBins + f]));
            csv << buf << (f + 1 < kBins ? "," : "\n");
        }
    }
    csv.close();
    if (!csv) throw std::runtime_error("export_spectrogram: failed writing " + csv_path);

    const std::string pgm_path = out_base + ".pgm";
    std::ofstream pgm(pgm_path, std::ios::binary | std::ios::trunc);
    if (!pgm) throw std::runtime_error("export_spectrogram: cannot write " + pgm_path);
    pgm << "P5\n" << T << " " << kBins << "\n255\n";
    const double silence_floor = 20.0 * std::log10(eps) + 1e-6;
    for (int row = 0; row < kBins; ++row) {
        const int f = kBins - 1 - row;  // bottom-up frequency axis
        for (int t = 0; t < T; ++t) {
            unsigned char px = 0;
            if (mx > silence_floor) {
                const double rel = static_cast<double>(db[static_cast<std::size_t>(t) * kBins + f]) - mx;  // [-inf, 0]
                const double clipped = std::max(-80.0, rel);
                px = static_cast<unsigned char>(std::lrint(255.0 * (clipped + 80.0) / 80.0));
            }
            pgm.put(static_cast<char>(px));
        }
    }
    pgm.close();
    if (!pgm) throw std::runtime_error("export_spectrogram: failed writing " + pgm_path);
}

/// Per-file metric rows plus corpus means, written as CSV with a summary row.
struct MetricReport {
    struct Row {
        std::string file_id;
        double ssnr_noisy = 0.0;
        double ssnr_enhanced = 0.0;
        double lsd_noisy = 0.0;
        double lsd_enhanced = 0.0;
    };
    std::vector<Row> rows;

    double mean_ssnr_noisy() const { return mean([](const Row& r) { return r.ssnr_noisy; }); }
    double mean_ssnr_enhanced() const { return mean([](const Row& r) { return r.ssnr_enhanced; }); }
    double mean_lsd_noisy() const { return mean([](const Row& r) { return r.lsd_noisy; }); }
    double mean_lsd_enhanced() const { return mean([](const Row& r) { return r.lsd_enhanced; }); }

    void write_csv(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error("metric report: cannot write " + path);
        out << "file_id,ssnr_noisy_db,ssnr_enhanced_db,lsd_noisy_db,lsd_enhanced_db\n";
        char buf[64];
        auto emit = [&](const std::string& id, double a, double b, double c, double d) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f", a, b, c, d);
            out << id << "," << buf << "\n";
        };
        for (const auto& r : rows) emit(r.file_id, r.ssnr_noisy, r.ssnr_enhanced, r.lsd_noisy, r.lsd_enhanced);
        emit("mean", mean_ssnr_noisy(), mean_ssnr_enhanced(), mean_lsd_noisy(), mean_lsd_enhanced());
        if (!out) throw std::runtime_error("metric report: failed writing " + path);
    }

private:
    template <typename F>
    double mean(F&& get) const {
        if (rows.empty()) return 0.0;
        double acc = 0.0;
        for (const auto& r : rows) acc += get(r);
        return acc / static_cast<double>(rows.size());
    }
};

}  // namespace aiacycle
