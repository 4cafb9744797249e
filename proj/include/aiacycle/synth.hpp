#pragma once

#include <filesystem>
#include <string>

#include "aiacycle/corpus.hpp"

namespace aiacycle {

/// Deterministic synthetic corpus: clean utterances are multi-harmonic tones
/// with slow amplitude envelopes and occasional silence gaps; noise is white
/// or low-pass-filtered white; mixtures are made at SNRs from {0,5,10,15} dB.
/// Identical seeds produce byte-identical WAV files.
inline Manifest synth_dataset(const std::string& out_dir, int n_utterances, double duration_s, std::uint64_t seed) {
    if (n_utterances < 2) throw std::invalid_argument("synth_dataset: need at least 2 utterances");
    if (duration_s < 0.9) throw std::invalid_argument("synth_dataset: duration must be >= 0.9 s (108 frames)");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "clean");
    fs::create_directories(fs::path(out_dir) / "noisy");

    const std::size_t n_samples = static_cast<std::size_t>(std::lround(duration_s * kSampleRate));
    Rng rng(seed);
    Manifest manifest;
    manifest.root = out_dir;

    const float snr_grid[4] = {0.0f, 5.0f, 10.0f, 15.0f};

    for (int u = 0; u < n_utterances; ++u) {
        // clean: harmonic stack with per-harmonic amplitude decay and a slow AM envelope
        const float f0 = rng.uniform(100.0f, 400.0f);
        const int harmonics = 2 + static_cast<int>(rng.below(4));
        std::vector<float> amp(static_cast<std::size_t>(harmonics));
        std::vector<float> phase(static_cast<std::size_t>(harmonics));
        for (int h = 0; h < harmonics; ++h) {
            amp[static_cast<std::size_t>(h)] = rng.uniform(0.4f, 1.0f) / static_cast<float>(h + 1);
            phase[static_cast<std::size_t>(h)] = rng.uniform(0.0f, 6.2831853f);
        }
        const float env_rate = rng.uniform(0.5f, 2.5f);
        const float env_phase = rng.uniform(0.0f, 6.2831853f);
        const bool has_gap = rng.uniform() < 0.3f;
        const std::size_t gap_start = static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(n_samples / 2))) +
                                      n_samples / 4;
        const std::size_t gap_len = static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(kSampleRate / 8))) +
                                    kSampleRate / 20;

        Waveform clean;
        clean.samples.resize(n_samples);
        double peak = 0.0;
        for (std::size_t i = 0; i < n_samples; ++i) {
            const double t = static_cast<double>(i) / kSampleRate;
            double s = 0.0;
            for (int h = 0; h < harmonics; ++h)
                s += amp[static_cast<std::size_t>(h)] *
                     std::sin(2.0 * M_PI * f0 * (h + 1) * t + phase[static_cast<std::size_t>(h)]);
            double env = 0.55 + 0.45 * std::sin(2.0 * M_PI * env_rate * t + env_phase);
            if (has_gap && i >= gap_start && i < gap_start + gap_len) env *= 0.02;
            s *= env;
            peak = std::max(peak, std::abs(s));
            clean.samples[i] = static_cast<float>(s);
        }
        const double target_peak = 0.40;
        for (auto& s : clean.samples) s = static_cast<float>(static_cast<double>(s) * target_peak / peak);

        // noise: white, or one-pole low-passed white
        Waveform noise;
        noise.samples.resize(n_samples);
        const bool lowpass = rng.uniform() < 0.5f;
        const float pole = rng.uniform(0.8f, 0.95f);
        float prev = 0.0f;
        for (std::size_t i = 0; i < n_samples; ++i) {
            float w = rng.uniform(-1.0f, 1.0f);
            if (lowpass) {
                w = pole * prev + (1.0f - pole) * w;
                prev = w;
            }
            noise.samples[i] = w;
        }

        const float snr = snr_grid[rng.below(4)];
        const MixResult mixed = mix(clean, noise, snr);

        // keep the stored pair consistent if the mixture had to be rescaled
        Waveform clean_out = clean;
        if (mixed.peak_scale != 1.0f)
            for (auto& s : clean_out.samples) s *= mixed.peak_scale;

        char id[32];
        std::snprintf(id, sizeof id, "utt%04d", u);
        const std::string clean_rel = std::string("clean/") + id + ".wav";
        const std::string noisy_rel = std::string("noisy/") + id + ".wav";
        write_wav((fs::path(out_dir) / clean_rel).string(), clean_out);
        write_wav((fs::path(out_dir) / noisy_rel).string(), mixed.mixture);

        ManifestEntry e;
        e.utt_id = id;
        e.clean_path = clean_rel;
        e.noisy_path = noisy_rel;
        e.snr_db = snr;
        e.has_snr = true;
        manifest.entries.push_back(std::move(e));
    }
    manifest.save((fs::path(out_dir) / "manifest.csv").string());
    return manifest;
}

}  // namespace aiacycle
