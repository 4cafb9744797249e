#pragma once

#include <string>

#include "aiacycle/corpus.hpp"
#include "aiacycle/metrics.hpp"
#include "aiacycle/models.hpp"

namespace aiacycle {

/// Full enhancement chain: stft -> |.|^eta -> generator -> mag^(1/eta) with
/// the noisy phase -> istft, clipped into [-1, 1].
inline Waveform enhance_waveform(Generator& g, const Waveform& noisy, float eta) {
    const ComplexSpectrogram spec = stft(noisy);
    auto [mag, phase] = compress(spec, eta);
    const int frames = mag.frames();
    Tape tape;
    Var in = constant(tape, mag.values.reshaped({1, frames, kBins, 1}));
    Var out = g.forward(tape, in, false);
    CompressedMagnitude enhanced;
    enhanced.eta = eta;
    enhanced.values = out.value().reshaped({frames, kBins});
    const ComplexSpectrogram rec = reconstruct(enhanced, phase);
    Waveform wave = istft(rec).clipped();
    for (float s : wave.samples)
        if (!std::isfinite(s)) throw std::runtime_error("enhance: non-finite sample in output");
    return wave;
}

/// Runs noisy-vs-enhanced-vs-clean metrics over every paired manifest entry.
/// Signals are trimmed to the istft length so all three align.
inline MetricReport evaluate_manifest(Generator& g, const Manifest& manifest, float eta) {
    MetricReport report;
    for (const auto& e : manifest.entries) {
        if (e.noisy_path.empty()) continue;
        Waveform clean = read_wav(manifest.resolve(e.clean_path));
        Waveform noisy = read_wav(manifest.resolve(e.noisy_path));
        if (stft_frame_count(noisy.size()) < 1) continue;
        Waveform enhanced = enhance_waveform(g, noisy, eta);
        const std::size_t L = std::min({clean.size(), noisy.size(), enhanced.size()});
        clean.samples.resize(L);
        noisy.samples.resize(L);
        enhanced.samples.resize(L);
        MetricReport::Row row;
        row.file_id = e.utt_id;
        row.ssnr_noisy = ssnr(clean, noisy);
        row.ssnr_enhanced = ssnr(clean, enhanced);
        row.lsd_noisy = log_spectral_distance(clean, noisy);
        row.lsd_enhanced = log_spectral_distance(clean, enhanced);
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace aiacycle
