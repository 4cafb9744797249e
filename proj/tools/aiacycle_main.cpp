#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "aiacycle/aiacycle.hpp"

using namespace aiacycle;

namespace {

int cmd_synth(const std::string& out_dir, int count, double duration, std::uint64_t seed) {
    Manifest m = synth_dataset(out_dir, count, duration, seed);
    std::printf("wrote %zu utterance pairs under %s (manifest.csv)\n", m.entries.size(), out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest_override,
              const std::string& out_override, std::uint64_t seed_override, bool seed_set) {
    TrainingConfig cfg = TrainingConfig::from_file(config_path);
    if (!manifest_override.empty()) cfg.manifest = manifest_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (seed_set) cfg.seed = seed_override;
    cfg.validate();
    if (cfg.manifest.empty()) throw std::runtime_error("train: no manifest given (config key or --manifest)");
    std::filesystem::create_directories(cfg.out_dir);

    Manifest manifest = Manifest::load(cfg.manifest);
    Corpus corpus = Corpus::load(manifest, cfg.effective_eta(), cfg.crop_frames);
    if (corpus.empty_side()) throw std::runtime_error("train: corpus is empty after loading");

    Trainer trainer(cfg);
    const std::string log_path = (std::filesystem::path(cfg.out_dir) / "train_log.csv").string();
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("train: cannot write " + log_path);
    std::printf("training: %d epochs x %d steps on %zu noisy / %zu clean utterances\n", cfg.total_epochs,
                std::max(1, static_cast<int>(corpus.noisy.size()) / cfg.batch), corpus.noisy.size(),
                corpus.clean.size());
    trainer.train(corpus, log);
    std::printf("final checkpoint: %s\n",
                (std::filesystem::path(cfg.out_dir) / "model_final.ckpt").string().c_str());
    std::printf("training log: %s\n", log_path.c_str());
    return 0;
}

int cmd_enhance(const std::string& model_path, const std::string& in_wav, const std::string& out_wav) {
    auto trainer = Trainer::from_checkpoint(model_path);
    Waveform noisy = read_wav(in_wav);
    Waveform enhanced = enhance_waveform(trainer->model.g_xy, noisy, trainer->cfg.effective_eta());
    write_wav(out_wav, enhanced);
    std::printf("enhanced %s -> %s (%zu samples)\n", in_wav.c_str(), out_wav.c_str(), enhanced.size());
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& manifest_path, const std::string& out_csv) {
    auto trainer = Trainer::from_checkpoint(model_path);
    Manifest manifest = Manifest::load(manifest_path);
    MetricReport report = evaluate_manifest(trainer->model.g_xy, manifest, trainer->cfg.effective_eta());
    if (report.rows.empty()) throw std::runtime_error("evaluate: manifest has no usable clean/noisy pairs");
    report.write_csv(out_csv);
    std::printf("files: %zu\n", report.rows.size());
    std::printf("mean SSNR  noisy %.3f dB -> enhanced %.3f dB\n", report.mean_ssnr_noisy(),
                report.mean_ssnr_enhanced());
    std::printf("mean LSD   noisy %.3f dB -> enhanced %.3f dB\n", report.mean_lsd_noisy(),
                report.mean_lsd_enhanced());
    std::printf("report: %s\n", out_csv.c_str());
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    auto results = run_gradient_suite(seed);
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-32s max_rel_err %.3e  %s\n", r.name.c_str(), r.max_rel_err, r.pass ? "ok" : "FAIL");
        ok = ok && r.pass;
    }
    std::printf("%zu operations checked, %s\n", results.size(), ok ? "all within 1e-3" : "FAILURES PRESENT");
    return ok ? 0 : 1;
}

int cmd_export_spec(const std::string& in_wav, const std::string& out_base) {
    Waveform wave = read_wav(in_wav);
    export_spectrogram(wave, out_base);
    std::printf("wrote %s.csv and %s.pgm\n", out_base.c_str(), out_base.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compressed-magnitude cycle-consistent speech enhancement"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth-data", "generate a deterministic synthetic corpus");
    std::string synth_out = "data";
    int synth_count = 200;
    double synth_duration = 0.9;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--count", synth_count, "number of utterance pairs");
    synth->add_option("--duration", synth_duration, "seconds per utterance");
    synth->add_option("--seed", synth_seed, "rng seed");

    auto* train = app.add_subcommand("train", "train from a key=value config file");
    std::string train_config, train_manifest, train_out;
    std::uint64_t train_seed = 0;
    bool train_seed_set = false;
    train->add_option("--config", train_config, "config file")->required();
    train->add_option("--manifest", train_manifest, "override the config manifest");
    train->add_option("--out", train_out, "override the config output directory");
    train->add_option("--seed", train_seed, "override the config seed")->each([&](const std::string&) {
        train_seed_set = true;
    });

    auto* enhance = app.add_subcommand("enhance", "denoise one wav file with a trained model");
    std::string enh_model, enh_in, enh_out;
    enhance->add_option("--model", enh_model, "checkpoint path")->required();
    enhance->add_option("--in", enh_in, "noisy input wav")->required();
    enhance->add_option("--out", enh_out, "enhanced output wav")->required();

    auto* evaluate = app.add_subcommand("evaluate", "SSNR/LSD report over a manifest");
    std::string eval_model, eval_manifest, eval_out = "report.csv";
    evaluate->add_option("--model", eval_model, "checkpoint path")->required();
    evaluate->add_option("--manifest", eval_manifest, "corpus manifest")->required();
    evaluate->add_option("--out", eval_out, "report csv path");

    auto* gradcheck = app.add_subcommand("grad-check", "finite-difference check of every operation");
    std::uint64_t gc_seed = 2;
    gradcheck->add_option("--seed", gc_seed, "rng seed for the suite");

    auto* exp = app.add_subcommand("export-spec", "write spectrogram csv + pgm for a wav");
    std::string exp_in, exp_out = "spectrogram";
    exp->add_option("--in", exp_in, "input wav")->required();
    exp->add_option("--out", exp_out, "output basename");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_out, synth_count, synth_duration, synth_seed);
        if (train->parsed()) return cmd_train(train_config, train_manifest, train_out, train_seed, train_seed_set);
        if (enhance->parsed()) return cmd_enhance(enh_model, enh_in, enh_out);
        if (evaluate->parsed()) return cmd_evaluate(eval_model, eval_manifest, eval_out);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed);
        if (exp->parsed()) return cmd_export_spec(exp_in, exp_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
