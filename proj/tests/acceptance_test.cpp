// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. The heavy criteria (desk-scale training, ablation grid) run real
// training and take tens of minutes combined.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <vector>

#include "aiacycle/aiacycle.hpp"

using namespace aiacycle;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int index, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] %d. %-28s %s\n", pass ? "PASS" : "FAIL", index, name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

double elapsed_s(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor random_tensor(Shape s, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t = Tensor::uninit(std::move(s));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// 1. every differentiable operation passes central finite differences at
//    tolerance 1e-3 (eps 1e-3, kink margin 1e-2, dims <= 8) in under 2 min
void criterion_gradients() {
    auto t0 = Clock::now();
    auto results = run_gradient_suite();
    const double secs = elapsed_s(t0);
    bool pass = secs < 120.0;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& r : results) {
        if (!r.pass) pass = false;
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_name = r.name;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu ops, worst %.2e (%s), %.1f s", results.size(), worst, worst_name.c_str(),
                  secs);
    report(1, "gradient suite", pass, buf);
}

// 2. alpha = beta = gamma = 0 makes the full AIA stack a bitwise identity
void criterion_fresh_init_identity() {
    Rng rng(101);
    bool pass = true;
    int checked = 0;
    AiaStack stack8("aia8", 6, 8, true, true, true, rng);
    AiaStack stack16("aia16", 6, 16, true, true, true, rng);
    for (int trial = 0; trial < 100 && pass; ++trial) {
        const int C = rng.uniform() < 0.5f ? 8 : 16;
        const int B = 1 + static_cast<int>(rng.below(2));
        const int T = 1 + static_cast<int>(rng.below(12));
        const int F = 1 + static_cast<int>(rng.below(12));
        Tensor x = random_tensor({B, T, F, C}, rng, -2.0f, 2.0f);
        Tape tape;
        Var out = (C == 8 ? stack8 : stack16).forward(tape, constant(tape, x), false);
        if (std::memcmp(out.value().data(), x.data(), sizeof(float) * static_cast<std::size_t>(x.numel())) != 0)
            pass = false;
        ++checked;
    }
    report(2, "fresh-init AIA identity", pass, std::to_string(checked) + " random inputs bitwise equal");
}

// 3. loss formulas match brute force within 1e-6; analytic fixed points exact
void criterion_loss_oracles() {
    Rng rng(202);
    bool pass = true;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> real, fake;
        const int nr = 1 + static_cast<int>(rng.below(8));
        const int nf = 1 + static_cast<int>(rng.below(8));
        for (int i = 0; i < nr; ++i) real.push_back(rng.uniform(-3, 3));
        for (int i = 0; i < nf; ++i) fake.push_back(rng.uniform(-3, 3));
        double mr = 0.0, mf = 0.0;
        for (float v : real) mr += v;
        for (float v : fake) mf += v;
        mr /= nr;
        mf /= nf;
        double d_ref = 0.0, g_ref = 0.0;
        for (float v : real) d_ref += (v - mf - 1.0) * (v - mf - 1.0) / nr;
        for (float v : fake) d_ref += (v - mr + 1.0) * (v - mr + 1.0) / nf;
        for (float v : fake) g_ref += (v - mr - 1.0) * (v - mr - 1.0) / nf;
        for (float v : real) g_ref += (v - mf + 1.0) * (v - mf + 1.0) / nr;
        worst = std::max(worst, std::abs(rals_discriminator_loss(real, fake) - d_ref));
        worst = std::max(worst, std::abs(rals_generator_loss(real, fake) - g_ref));

        // cycle / identity against elementwise brute force
        Tensor x = random_tensor({2, 3, 5, 1}, rng);
        Tensor fgx = random_tensor({2, 3, 5, 1}, rng);
        Tensor y = random_tensor({2, 3, 5, 1}, rng);
        Tensor gfy = random_tensor({2, 3, 5, 1}, rng);
        double c_ref = 0.0, c_ref2 = 0.0;
        for (std::int64_t i = 0; i < x.numel(); ++i) c_ref += std::abs(fgx[i] - x[i]);
        for (std::int64_t i = 0; i < y.numel(); ++i) c_ref2 += std::abs(gfy[i] - y[i]);
        c_ref = c_ref / x.numel() + c_ref2 / y.numel();
        Tape tape;
        Var cyc = cycle_loss(constant(tape, x), constant(tape, fgx), constant(tape, y), constant(tape, gfy));
        worst = std::max(worst, std::abs(cyc.scalar_hi() - c_ref));
        Var idl = identity_loss(constant(tape, x), constant(tape, fgx), constant(tape, y), constant(tape, gfy));
        worst = std::max(worst, std::abs(idl.scalar_hi() - c_ref));
    }
    bool exact = true;
    std::vector<float> ones{1, 1, 1}, zeros{0, 0}, cs{0.4f, 0.4f};
    exact = exact && rals_discriminator_loss(ones, zeros) == 0.0;
    exact = exact && rals_discriminator_loss(cs, cs) == 2.0;
    exact = exact && rals_discriminator_loss(zeros, ones) == 8.0;
    exact = exact && rals_generator_loss(zeros, ones) == 0.0;
    exact = exact && rals_generator_loss(cs, cs) == 2.0;
    exact = exact && rals_generator_loss(ones, zeros) == 8.0;
    {
        Tape tape;
        Var one = constant(tape, Tensor::scalar(1.0f));
        exact = exact && total_generator_loss(one, one, one, one, 5.0f, 10.0f, true).scalar_hi() == 17.0;
    }
    bool pass_all = pass && worst <= 1e-6 && exact;
    char buf[128];
    std::snprintf(buf, sizeof buf, "brute-force gap %.2e, fixed points %s", worst, exact ? "exact" : "WRONG");
    report(3, "loss oracles", pass_all, buf);
}

// 4. istft(stft) interior <= 1e-5; compress/reconstruct <= 1e-6; mix within 0.01 dB
void criterion_signal_roundtrips() {
    Rng rng(303);
    Waveform w;
    w.samples.resize(6000);
    for (auto& s : w.samples) s = rng.uniform(-0.9f, 0.9f);
    Waveform back = istft(stft(w));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 512; i + 512 < back.size(); ++i) {
        const double d = static_cast<double>(back.samples[i]) - w.samples[i];
        num += d * d;
        den += static_cast<double>(w.samples[i]) * w.samples[i];
    }
    const double stft_err = std::sqrt(num / den);

    ComplexSpectrogram spec = stft(w);
    auto [mag, phase] = compress(spec, 0.5f);
    ComplexSpectrogram rec = reconstruct(mag, phase);
    double peak = 0.0;
    for (const auto& z : spec.data) peak = std::max(peak, static_cast<double>(std::abs(std::complex<float>(z))));
    double comp_err = 0.0;
    for (std::size_t i = 0; i < spec.data.size(); ++i) {
        const double m = std::abs(std::complex<double>(spec.data[i].real(), spec.data[i].imag()));
        const double d = std::abs(std::complex<double>(spec.data[i].real() - rec.data[i].real(),
                                                       spec.data[i].imag() - rec.data[i].imag()));
        comp_err = std::max(comp_err, d / std::max(m, 1e-3 * peak));
    }

    Waveform clean, noise;
    clean.samples.resize(8000);
    noise.samples.resize(8000);
    for (auto& s : clean.samples) s = rng.uniform(-0.3f, 0.3f);
    for (auto& s : noise.samples) s = rng.uniform(-0.3f, 0.3f);
    double snr_err = 0.0;
    for (float snr : {0.0f, 5.0f, 10.0f, 15.0f}) {
        MixResult r = mix(clean, noise, snr);
        double pc = 0.0, pn = 0.0;
        for (std::size_t i = 0; i < clean.size(); ++i) {
            pc += static_cast<double>(clean.samples[i]) * clean.samples[i];
            pn += static_cast<double>(r.noise_gain) * r.noise_gain * noise.samples[i] * noise.samples[i];
        }
        snr_err = std::max(snr_err, std::abs(10.0 * std::log10(pc / pn) - snr));
    }
    const bool pass = stft_err <= 1e-5 && comp_err <= 1e-6 && snr_err <= 0.01;
    char buf[160];
    std::snprintf(buf, sizeof buf, "istft rms %.2e, compress %.2e, mix snr %.4f dB", stft_err, comp_err, snr_err);
    report(4, "signal round trips", pass, buf);
}

// 5. attention scores stay at T^2 + F'^2 entries; the full (T*F')^2 map never exists
void criterion_factorization() {
    Rng rng(404);
    AtfaModule module("m", 8, true, true, rng);
    Tensor x = random_tensor({1, 108, 33, 8}, rng);
    attention_stats().reset();
    alloc_stats().enabled = true;
    alloc_stats().reset();
    {
        Tape tape;
        module.forward(tape, constant(tape, x), false);
    }
    alloc_stats().enabled = false;
    const std::int64_t factored = attention_stats().score_entries;
    const std::int64_t full = static_cast<std::int64_t>(108 * 33) * (108 * 33);
    const bool pass = factored == 108 * 108 + 33 * 33 && full == 12702096 &&
                      alloc_stats().max_single_elems < full;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%lld entries vs %lld full; largest allocation %lld",
                  static_cast<long long>(factored), static_cast<long long>(full),
                  static_cast<long long>(alloc_stats().max_single_elems));
    report(5, "factorized attention storage", pass, buf);
}

// 6. desk-scale non-parallel training: finite, >= 2 dB held-out SSNR gain,
//    cycle loss halved, within 30 min
void criterion_desk_training() {
    auto t0 = Clock::now();
    try {
        const std::string dir = temp_dir("aiacycle_accept_train");
        Manifest train_m = synth_dataset(dir + "/train", 200, 0.9, 1000);
        Manifest held_m = synth_dataset(dir + "/held", 16, 0.9, 2000);

        TrainingConfig cfg;
        cfg.base_channels = 32;  // reduced from 64
        cfg.atfa_modules = 2;    // reduced from 6; AHA aggregates both
        cfg.batch = 1;
        cfg.crop_frames = 108;
        cfg.total_epochs = 10;  // 200 noisy utterances / batch 1 -> 2000 steps
        cfg.id_epochs = 1;
        cfg.decay_start_epoch = 10;
        cfg.seed = 5;
        cfg.out_dir = dir + "/run";
        fs::create_directories(cfg.out_dir);
        Corpus corpus = Corpus::load(train_m, cfg.effective_eta(), cfg.crop_frames);

        Trainer trainer(cfg);
        trainer.attach_corpus(corpus);
        double cycle_first10 = 0.0, cycle_last = 0.0;
        int step = 0;
        const int total_steps = cfg.total_epochs * trainer.steps_per_epoch();
        for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
            for (int s = 0; s < trainer.steps_per_epoch(); ++s) {
                LossBreakdown bd = trainer.train_step(trainer.sample_batch(), epoch);  // aborts on non-finite
                ++step;
                if (step <= 10) cycle_first10 += bd.cycle / 10.0;
                if (step > total_steps - 50) cycle_last += bd.cycle / 50.0;
            }
        }
        MetricReport r = evaluate_manifest(trainer.model.g_xy, held_m, cfg.effective_eta());
        const double gain = r.mean_ssnr_enhanced() - r.mean_ssnr_noisy();
        const double secs = elapsed_s(t0);
        const bool pass = step == 2000 && gain >= 2.0 && cycle_last <= 0.5 * cycle_first10 && secs <= 1800.0;
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "%d steps finite; SSNR %+.2f dB (noisy %.2f -> %.2f); cycle %.3f -> %.3f (%.0f%%); %.0f s",
                      step, gain, r.mean_ssnr_noisy(), r.mean_ssnr_enhanced(), cycle_first10, cycle_last,
                      100.0 * cycle_last / cycle_first10, secs);
        report(6, "desk-scale training", pass, buf);
    } catch (const std::exception& e) {
        report(6, "desk-scale training", false, std::string("aborted: ") + e.what());
    }
}

// 7. ablation rows {baseline, +ATAB, +AFAB, +ATFA(+AHA)} x {normal, compressed}
//    all train 500+ steps without divergence and emit metric reports
void criterion_ablation() {
    auto t0 = Clock::now();
    try {
        const std::string dir = temp_dir("aiacycle_accept_ablation");
        Manifest train_m = synth_dataset(dir + "/train", 40, 0.9, 3000);
        Manifest held_m = synth_dataset(dir + "/held", 8, 0.9, 4000);

        struct RowSpec {
            const char* name;
            bool atab, afab, aha;
        };
        const RowSpec rows[4] = {{"baseline", false, false, false},
                                 {"+atab", true, false, false},
                                 {"+afab", false, true, false},
                                 {"+atfa+aha", true, true, true}};
        bool pass = true;
        std::string detail;
        for (int compressed = 1; compressed >= 0 && pass; --compressed) {
            TrainingConfig base;
            base.compressed_input = compressed == 1;
            Corpus corpus = Corpus::load(train_m, base.effective_eta(), 54);
            for (const auto& row : rows) {
                TrainingConfig cfg;
                cfg.base_channels = 16;
                cfg.atfa_modules = 2;
                cfg.batch = 1;
                cfg.crop_frames = 54;
                cfg.total_epochs = 13;  // 40 utterances -> 520 steps
                cfg.id_epochs = 2;
                cfg.decay_start_epoch = 13;
                cfg.seed = 9;
                cfg.compressed_input = compressed == 1;
                cfg.use_atab = row.atab;
                cfg.use_afab = row.afab;
                cfg.use_aha = row.aha;
                cfg.out_dir = dir;
                Trainer trainer(cfg);
                trainer.attach_corpus(corpus);
                int steps = 0;
                for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch)
                    for (int s = 0; s < trainer.steps_per_epoch(); ++s) {
                        trainer.train_step(trainer.sample_batch(), epoch);
                        ++steps;
                    }
                MetricReport r = evaluate_manifest(trainer.model.g_xy, held_m, cfg.effective_eta());
                const bool row_ok = steps >= 500 && std::isfinite(r.mean_ssnr_enhanced()) &&
                                    std::isfinite(r.mean_lsd_enhanced()) && !r.rows.empty();
                char rowbuf[120];
                std::snprintf(rowbuf, sizeof rowbuf, "%s/%s ssnr %+0.2f; ", compressed ? "comp" : "norm", row.name,
                              r.mean_ssnr_enhanced() - r.mean_ssnr_noisy());
                detail += rowbuf;
                const std::string report_csv =
                    dir + "/report_" + (compressed ? "comp_" : "norm_") + row.name + ".csv";
                r.write_csv(report_csv);
                if (!row_ok) pass = false;
            }
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, " (%.0f s)", elapsed_s(t0));
        report(7, "ablation grid", pass, detail + buf);
    } catch (const std::exception& e) {
        report(7, "ablation grid", false, std::string("aborted: ") + e.what());
    }
}

// 8. fixed seed -> bit-identical logs; checkpoint resume continues bit-exactly
void criterion_determinism() {
    try {
        const std::string dir = temp_dir("aiacycle_accept_determinism");
        Manifest m = synth_dataset(dir, 6, 0.9, 7000);
        auto make_cfg = [&](int epochs) {
            TrainingConfig cfg;
            cfg.base_channels = 8;
            cfg.atfa_modules = 1;
            cfg.batch = 1;
            cfg.crop_frames = 108;
            cfg.total_epochs = epochs;
            cfg.id_epochs = 1;
            cfg.decay_start_epoch = epochs;
            cfg.seed = 77;
            cfg.out_dir = dir;
            return cfg;
        };
        Corpus corpus = Corpus::load(m, 0.5f, 108);

        auto run_full = [&]() {
            Trainer t(make_cfg(2));
            std::ostringstream log;
            t.train(corpus, log);
            return log.str();
        };
        const std::string log_a = run_full();
        const std::string log_b = run_full();
        const bool identical = log_a == log_b;

        // stop after epoch 1, checkpoint, resume, finish
        Trainer t(make_cfg(2));
        t.attach_corpus(corpus);
        std::ostringstream log;
        log << "step,epoch,lr_g,lr_d,rals_g_xy,rals_g_yx,rals_d_x,rals_d_y,cycle,identity,total_g\n";
        for (int s = 0; s < t.steps_per_epoch(); ++s) {
            LossBreakdown bd = t.train_step(t.sample_batch(), 1);
            ++t.global_step;
            t.log_row(log, bd, 1);
        }
        t.next_epoch = 2;
        const std::string ck = dir + "/mid.ckpt";
        t.save_checkpoint(ck);
        auto resumed = Trainer::from_checkpoint(ck);
        resumed->attach_corpus(corpus);
        for (int s = 0; s < resumed->steps_per_epoch(); ++s) {
            LossBreakdown bd = resumed->train_step(resumed->sample_batch(), 2);
            ++resumed->global_step;
            resumed->log_row(log, bd, 2);
        }
        const bool resume_exact = log.str() == log_a;
        report(8, "determinism & persistence", identical && resume_exact,
               std::string("two runs ") + (identical ? "identical" : "DIFFER") + ", resume " +
                   (resume_exact ? "bit-exact" : "DIVERGED"));
    } catch (const std::exception& e) {
        report(8, "determinism & persistence", false, std::string("aborted: ") + e.what());
    }
}

}  // namespace

int main() {
    std::printf("acceptance suite\n================\n");
    criterion_gradients();
    criterion_fresh_init_identity();
    criterion_loss_oracles();
    criterion_signal_roundtrips();
    criterion_factorization();
    criterion_desk_training();
    criterion_ablation();
    criterion_determinism();
    std::printf("================\n%s (%d criterion failures)\n", g_failures == 0 ? "ALL CRITERIA PASS" : "FAILURES",
                g_failures);
    return g_failures == 0 ? 0 : 1;
}
