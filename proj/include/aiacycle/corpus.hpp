#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "aiacycle/config.hpp"
#include "aiacycle/rng.hpp"
#include "aiacycle/signal.hpp"
#include "aiacycle/wav.hpp"

namespace aiacycle {

/// One corpus file pair. noisy_path may be empty for clean-only entries in
/// non-parallel corpora; snr_db is recorded when known.
struct ManifestEntry {
    std::string utt_id;
    std::string clean_path;
    std::string noisy_path;  // empty = NONE
    float snr_db = 0.0f;
    bool has_snr = false;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::string root;  // directory paths are resolved against

    std::string resolve(const std::string& p) const {
        std::filesystem::path fp(p);
        if (fp.is_absolute() || root.empty()) return p;
        return (std::filesystem::path(root) / fp).string();
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error("manifest: cannot write " + path);
        out << "utt_id,clean,noisy,snr_db\n";
        for (const auto& e : entries) {
            out << e.utt_id << "," << e.clean_path << "," << (e.noisy_path.empty() ? "NONE" : e.noisy_path) << ",";
            if (e.has_snr) out << e.snr_db;
            else out << "NONE";
            out << "\n";
        }
        if (!out) throw std::runtime_error("manifest: failed writing " + path);
    }

    static Manifest load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("manifest: cannot open " + path);
        Manifest m;
        m.root = std::filesystem::path(path).parent_path().string();
        std::string line;
        if (!std::getline(in, line) || line != "utt_id,clean,noisy,snr_db")
            throw std::runtime_error("manifest: " + path + " has an unexpected header");
        int lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::vector<std::string> cols;
            std::size_t start = 0;
            while (cols.size() < 4) {
                std::size_t comma = line.find(',', start);
                if (comma == std::string::npos) {
                    cols.push_back(line.substr(start));
                    break;
                }
                cols.push_back(line.substr(start, comma - start));
                start = comma + 1;
            }
            if (cols.size() != 4)
                throw std::runtime_error("manifest: " + path + " line " + std::to_string(lineno) + " is malformed");
            ManifestEntry e;
            e.utt_id = cols[0];
            e.clean_path = cols[1];
            if (cols[2] != "NONE") e.noisy_path = cols[2];
            if (cols[3] != "NONE") {
                e.snr_db = std::stof(cols[3]);
                e.has_snr = true;
            }
            m.entries.push_back(std::move(e));
        }
        return m;
    }
};

/// One utterance's compressed-magnitude features.
struct Utterance {
    std::string utt_id;
    Tensor features;  // (frames, 257)

    int frames() const { return features.dim(0); }
};

/// Feature-domain corpus. Utterances shorter than the crop are rejected at
/// load with a warning. Every noisy utterance remembers its source clean id
/// so non-parallel sampling can avoid accidental pairing.
struct Corpus {
    std::vector<Utterance> clean;
    std::vector<Utterance> noisy;
    std::vector<std::pair<int, int>> pairs;  // (clean index, noisy index) with matching ids
    int crop_frames = 0;
    float eta = 0.5f;

    static Corpus load(const Manifest& manifest, float eta, int crop_frames, std::ostream* warnings = &std::cerr) {
        Corpus corpus;
        corpus.crop_frames = crop_frames;
        corpus.eta = eta;
        for (const auto& e : manifest.entries) {
            const int clean_idx = corpus.load_side(manifest.resolve(e.clean_path), e.utt_id, eta, crop_frames,
                                                   corpus.clean, warnings);
            if (!e.noisy_path.empty()) {
                const int noisy_idx = corpus.load_side(manifest.resolve(e.noisy_path), e.utt_id, eta, crop_frames,
                                                       corpus.noisy, warnings);
                if (clean_idx >= 0 && noisy_idx >= 0) corpus.pairs.emplace_back(clean_idx, noisy_idx);
            }
        }
        return corpus;
    }

    bool empty_side() const { return clean.empty() || noisy.empty(); }

private:
    int load_side(const std::string& path, const std::string& id, float eta, int crop_frames,
                  std::vector<Utterance>& dst, std::ostream* warnings) {
        const Waveform wave = read_wav(path);
        if (stft_frame_count(wave.size()) < crop_frames) {
            if (warnings)
                *warnings << "corpus: rejecting " << path << " (" << stft_frame_count(wave.size())
                          << " frames < crop " << crop_frames << ")\n";
            return -1;
        }
        auto [mag, phase] = compress(stft(wave), eta);
        (void)phase;
        Utterance u;
        u.utt_id = id;
        u.features = std::move(mag.values);
        dst.push_back(std::move(u));
        return static_cast<int>(dst.size()) - 1;
    }
};

/// One training batch of aligned-shape crops, (B, crop, 257, 1).
struct Batch {
    Tensor noisy;
    Tensor clean;
};

namespace detail {

inline void copy_crop(const Tensor& features, int offset, int crop, float* dst) {
    std::memcpy(dst, features.data() + static_cast<std::int64_t>(offset) * kBins,
                sizeof(float) * static_cast<std::size_t>(crop) * kBins);
}

}  // namespace detail

/// Random noisy crop and an independently drawn clean crop from a different
/// utterance whenever the corpus has more than one clean id to choose from.
inline Batch sample_nonparallel_batch(const Corpus& corpus, int batch, Rng& rng) {
    if (corpus.empty_side())
        throw std::invalid_argument("sample_nonparallel_batch: corpus needs both clean and noisy utterances");
    const int crop = corpus.crop_frames;
    Batch out;
    out.noisy = Tensor::uninit({batch, crop, kBins, 1});
    out.clean = Tensor::uninit({batch, crop, kBins, 1});
    const std::int64_t item = static_cast<std::int64_t>(crop) * kBins;
    for (int b = 0; b < batch; ++b) {
        const auto& nu = corpus.noisy[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(corpus.noisy.size())))];
        const int noff = static_cast<int>(rng.below(nu.frames() - crop + 1));
        detail::copy_crop(nu.features, noff, crop, out.noisy.data() + b * item);

        std::size_t ci = static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(corpus.clean.size())));
        if (corpus.clean.size() > 1) {
            bool distinct_exists = false;
            for (const auto& cu : corpus.clean)
                if (cu.utt_id != nu.utt_id) {
                    distinct_exists = true;
                    break;
                }
            while (distinct_exists && corpus.clean[ci].utt_id == nu.utt_id)
                ci = static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(corpus.clean.size())));
        }
        const auto& cu = corpus.clean[ci];
        const int coff = static_cast<int>(rng.below(cu.frames() - crop + 1));
        detail::copy_crop(cu.features, coff, crop, out.clean.data() + b * item);
    }
    return out;
}

/// Aligned crops: same utterance, same offset, from the paired entries.
inline Batch sample_parallel_batch(const Corpus& corpus, int batch, Rng& rng) {
    if (corpus.pairs.empty())
        throw std::invalid_argument("sample_parallel_batch: corpus has no paired clean/noisy entries");
    const int crop = corpus.crop_frames;
    Batch out;
    out.noisy = Tensor::uninit({batch, crop, kBins, 1});
    out.clean = Tensor::uninit({batch, crop, kBins, 1});
    const std::int64_t item = static_cast<std::int64_t>(crop) * kBins;
    for (int b = 0; b < batch; ++b) {
        const auto& [ci, ni] = corpus.pairs[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(corpus.pairs.size())))];
        const auto& cu = corpus.clean[static_cast<std::size_t>(ci)];
        const auto& nu = corpus.noisy[static_cast<std::size_t>(ni)];
        const int max_off = std::min(cu.frames(), nu.frames()) - crop;
        const int off = static_cast<int>(rng.below(max_off + 1));
        detail::copy_crop(nu.features, off, crop, out.noisy.data() + b * item);
        detail::copy_crop(cu.features, off, crop, out.clean.data() + b * item);
    }
    return out;
}

}  // namespace aiacycle
