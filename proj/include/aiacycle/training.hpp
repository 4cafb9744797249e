#pragma once

#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "aiacycle/checkpoint.hpp"
#include "aiacycle/config.hpp"
#include "aiacycle/corpus.hpp"
#include "aiacycle/losses.hpp"
#include "aiacycle/models.hpp"
#include "aiacycle/optim.hpp"

namespace aiacycle {

/// The four networks of the two-cycle setup: forward generator G (noisy to
/// clean), inverse generator F, and the discriminators over each domain.
struct CycleGan {
    Generator g_xy;
    Generator f_yx;
    MultiScaleDiscriminator d_x;
    MultiScaleDiscriminator d_y;

    CycleGan(const ModelConfig& cfg, Rng& rng)
        : g_xy("g_xy", cfg, rng), f_yx("f_yx", cfg, rng), d_x("d_x", rng), d_y("d_y", rng) {}

    std::vector<ParamLeaf*> generator_params() {
        std::vector<ParamLeaf*> out;
        g_xy.collect(out);
        f_yx.collect(out);
        return out;
    }

    std::vector<ParamLeaf*> discriminator_params() {
        std::vector<ParamLeaf*> out;
        d_x.collect(out);
        d_y.collect(out);
        return out;
    }

    /// Everything the checkpoint stores besides optimizer moments: trainable
    /// parameters plus the spectral-norm u estimates.
    std::vector<ParamLeaf*> checkpoint_leaves() {
        std::vector<ParamLeaf*> out = generator_params();
        auto d = discriminator_params();
        out.insert(out.end(), d.begin(), d.end());
        d_x.collect_state(out);
        d_y.collect_state(out);
        return out;
    }
};

/// Runs the training procedure: per step, update D_Y and D_X on detached
/// generator outputs, then update G and F jointly through both cycles.
class Trainer {
public:
    explicit Trainer(TrainingConfig config)
        : cfg(std::move(config)),
          model(build_model(cfg)),
          adam_g(model.generator_params(), cfg.beta1, cfg.beta2),
          adam_d(model.discriminator_params(), cfg.beta1, cfg.beta2),
          sampler_(cfg.seed ^ 0x9e3779b97f4a7c15ull) {
        cfg.validate();
    }

    // Adam states hold pointers into model members, so the trainer must stay put.
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;
    Trainer(Trainer&&) = delete;
    Trainer& operator=(Trainer&&) = delete;

    TrainingConfig cfg;

    /// D_Y then D_X on detached generator outputs; one Adam step over the
    /// discriminator parameters. Generator leaves never enter this graph.
    void discriminator_phase(const Batch& batch, const Tensor& fake_y_det, const Tensor& fake_x_det, float lr_d,
                             LossBreakdown& bd) {
        Tape tape;
        Var loss_dy = multiscale_d_loss(model.d_y, tape, batch.clean, fake_y_det);
        Var loss_dx = multiscale_d_loss(model.d_x, tape, batch.noisy, fake_x_det);
        bd.rals_d_y = loss_dy.scalar_hi();
        bd.rals_d_x = loss_dx.scalar_hi();
        abort_if_non_finite(bd);
        Var total = add(loss_dy, loss_dx);
        tape.backward(*total.node, true);
        adam_d.step(lr_d);
    }

    /// Frozen-generator outputs for a standalone discriminator update.
    std::pair<Tensor, Tensor> detached_fakes(const Batch& batch) {
        Tape tape;
        Tensor fake_y = model.g_xy.forward(tape, constant(tape, batch.noisy), false).value();
        Tensor fake_x = model.f_yx.forward(tape, constant(tape, batch.clean), false).value();
        return {std::move(fake_y), std::move(fake_x)};
    }

    /// One full step: the generator graph supplies the fakes, the
    /// discriminators update on them as detached constants, then G and F
    /// update jointly through both cycles against the frozen updated
    /// discriminators. The identity term is in-graph only while scheduled,
    /// but its value is always reported.
    LossBreakdown train_step(const Batch& batch, int epoch) {
        const float lr_g = learning_rate(cfg.lr_g, epoch, cfg.decay_start_epoch, cfg.total_epochs);
        const float lr_d = learning_rate(cfg.lr_d, epoch, cfg.decay_start_epoch, cfg.total_epochs);
        const bool id_active = epoch <= cfg.id_epochs;
        LossBreakdown bd;
        {
            Tape tape;
            Var x = constant(tape, batch.noisy);
            Var y = constant(tape, batch.clean);
            Var fake_y = model.g_xy.forward(tape, x, true);
            Var fake_x = model.f_yx.forward(tape, y, true);

            discriminator_phase(batch, fake_y.value(), fake_x.value(), lr_d, bd);

            Var cyc_x = model.f_yx.forward(tape, fake_y, true);
            Var cyc_y = model.g_xy.forward(tape, fake_x, true);
            Var adv_xy = multiscale_g_loss(model.d_y, tape, y, fake_y);
            Var adv_yx = multiscale_g_loss(model.d_x, tape, x, fake_x);
            Var cyc = cycle_loss(x, cyc_x, y, cyc_y);

            // the inactive branch still evaluates the identity maps for the
            // report, as frozen constants outside the gradient path
            Var identity = identity_loss(x, model.f_yx.forward(tape, x, id_active), y,
                                         model.g_xy.forward(tape, y, id_active));
            Var total = total_generator_loss(adv_xy, adv_yx, cyc, identity, cfg.lambda_cycle, cfg.lambda_id, id_active);

            bd.rals_g_xy = adv_xy.scalar_hi();
            bd.rals_g_yx = adv_yx.scalar_hi();
            bd.cycle = cyc.scalar_hi();
            bd.identity = identity.scalar_hi();
            bd.total_g = total.scalar_hi();
            abort_if_non_finite(bd);
            tape.backward(*total.node, true);
        }
        adam_g.step(lr_g);
        check_parameters_finite();
        return bd;
    }

    Batch sample_batch() {
        if (!corpus_) throw std::runtime_error("trainer: no corpus attached");
        return cfg.mode == TrainingMode::parallel ? sample_parallel_batch(*corpus_, cfg.batch, sampler_)
                                                  : sample_nonparallel_batch(*corpus_, cfg.batch, sampler_);
    }

    int steps_per_epoch() const {
        if (!corpus_) throw std::runtime_error("trainer: no corpus attached");
        const std::size_t n =
            cfg.mode == TrainingMode::parallel ? corpus_->pairs.size() : corpus_->noisy.size();
        return std::max(1, static_cast<int>(n) / cfg.batch);
    }

    void attach_corpus(const Corpus& corpus) { corpus_ = &corpus; }

    /// Full run from next_epoch through total_epochs; one CSV row per step.
    void train(const Corpus& corpus, std::ostream& log, bool write_log_header = true) {
        attach_corpus(corpus);
        if (write_log_header)
            log << "step,epoch,lr_g,lr_d,rals_g_xy,rals_g_yx,rals_d_x,rals_d_y,cycle,identity,total_g\n";
        const int per_epoch = steps_per_epoch();
        for (; next_epoch <= cfg.total_epochs; ++next_epoch) {
            for (int s = 0; s < per_epoch; ++s) {
                Batch batch = sample_batch();
                LossBreakdown bd = train_step(batch, next_epoch);
                ++global_step;
                log_row(log, bd, next_epoch);
            }
            if (cfg.checkpoint_every > 0 && next_epoch % cfg.checkpoint_every == 0 && next_epoch < cfg.total_epochs) {
                char name[48];
                std::snprintf(name, sizeof name, "ckpt_epoch_%04d.ckpt", next_epoch);
                save_checkpoint((std::filesystem::path(cfg.out_dir) / name).string());
            }
        }
        save_checkpoint((std::filesystem::path(cfg.out_dir) / "model_final.ckpt").string());
    }

    void log_row(std::ostream& log, const LossBreakdown& bd, int epoch) const {
        char buf[352];
        std::snprintf(buf, sizeof buf, "%lld,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                      static_cast<long long>(global_step), epoch,
                      static_cast<double>(learning_rate(cfg.lr_g, epoch, cfg.decay_start_epoch, cfg.total_epochs)),
                      static_cast<double>(learning_rate(cfg.lr_d, epoch, cfg.decay_start_epoch, cfg.total_epochs)),
                      bd.rals_g_xy, bd.rals_g_yx, bd.rals_d_x, bd.rals_d_y, bd.cycle, bd.identity, bd.total_g);
        log << buf << "\n";
    }

    void save_checkpoint(const std::string& path) {
        Checkpoint ck;
        for (auto* leaf : model.checkpoint_leaves()) ck.put(leaf->name, leaf->value);
        store_moments(ck, "adam_g", adam_g);
        store_moments(ck, "adam_d", adam_d);
        ck.meta["config"] = cfg.serialize();
        ck.meta["adam_g.t"] = std::to_string(adam_g.t);
        ck.meta["adam_d.t"] = std::to_string(adam_d.t);
        ck.meta["sampler"] = sampler_.serialize();
        ck.meta["next_epoch"] = std::to_string(next_epoch);
        ck.meta["global_step"] = std::to_string(global_step);
        ck.save(path);
    }

    static std::unique_ptr<Trainer> from_checkpoint(const std::string& path) {
        Checkpoint ck = Checkpoint::load(path);
        auto t = std::make_unique<Trainer>(TrainingConfig::parse(ck.meta_at("config")));
        t->restore(ck);
        return t;
    }

    void restore(const Checkpoint& ck) {
        auto leaves = model.checkpoint_leaves();
        std::size_t expected = leaves.size();
        for (auto* leaf : leaves) {
            const Tensor& stored = ck.get(leaf->name);
            if (!stored.same_shape(leaf->value))
                throw std::runtime_error("checkpoint: shape mismatch for '" + leaf->name + "'");
            leaf->value = stored;
            leaf->zero_grad();
        }
        restore_moments(ck, "adam_g", adam_g);
        restore_moments(ck, "adam_d", adam_d);
        expected += 2 * (adam_g.leaves.size() + adam_d.leaves.size());
        if (ck.tensors.size() != expected)
            throw std::runtime_error("checkpoint: tensor count mismatches the model topology");
        adam_g.t = std::stoll(ck.meta_at("adam_g.t"));
        adam_d.t = std::stoll(ck.meta_at("adam_d.t"));
        sampler_.deserialize(ck.meta_at("sampler"));
        next_epoch = std::stoi(ck.meta_at("next_epoch"));
        global_step = std::stoll(ck.meta_at("global_step"));
    }

    CycleGan model;
    AdamState adam_g;
    AdamState adam_d;
    int next_epoch = 1;
    std::int64_t global_step = 0;

private:
    Rng sampler_;
    const Corpus* corpus_ = nullptr;

    static CycleGan build_model(const TrainingConfig& cfg) {
        Rng rng(cfg.seed);
        return CycleGan(cfg.model_config(), rng);
    }

    struct HeadPair {
        Var real_final, fake_final, real_mid, fake_mid;
    };

    static HeadPair disc_scores(MultiScaleDiscriminator& d, Tape& tape, Var real, Var fake, bool trainable,
                                bool update_sn) {
        const int B = real.shape()[0];
        auto scores = d.forward(tape, concat_batch(real, fake), trainable, update_sn);
        HeadPair hp;
        hp.real_final = slice_batch(scores.final_score, 0, B);
        hp.fake_final = slice_batch(scores.final_score, B, B);
        hp.real_mid = slice_batch(scores.mid_score, 0, B);
        hp.fake_mid = slice_batch(scores.mid_score, B, B);
        return hp;
    }

    /// Eq.-style adversarial losses evaluated per head and averaged.
    Var multiscale_d_loss(MultiScaleDiscriminator& d, Tape& tape, const Tensor& real, const Tensor& fake) {
        HeadPair hp = disc_scores(d, tape, constant(tape, real), constant(tape, fake), true, true);
        return scale(add(rals_discriminator_loss(hp.real_final, hp.fake_final),
                         rals_discriminator_loss(hp.real_mid, hp.fake_mid)),
                     0.5f);
    }

    Var multiscale_g_loss(MultiScaleDiscriminator& d, Tape& tape, Var real, Var fake) {
        HeadPair hp = disc_scores(d, tape, real, fake, false, false);
        return scale(
            add(rals_generator_loss(hp.real_final, hp.fake_final), rals_generator_loss(hp.real_mid, hp.fake_mid)),
            0.5f);
    }

    static void abort_if_non_finite(const LossBreakdown& bd) {
        if (const char* name = bd.first_non_finite())
            throw std::runtime_error(std::string("train_step: non-finite loss component ") + name);
    }

    void check_parameters_finite() {
        for (auto* leaf : model.checkpoint_leaves())
            if (!leaf->value.all_finite())
                throw std::runtime_error("train_step: non-finite parameter after update: " + leaf->name);
    }

    static void store_moments(Checkpoint& ck, const std::string& prefix, const AdamState& adam) {
        for (std::size_t i = 0; i < adam.leaves.size(); ++i) {
            ck.put(prefix + "/m/" + adam.leaves[i]->name, adam.m[i]);
            ck.put(prefix + "/v/" + adam.leaves[i]->name, adam.v[i]);
        }
    }

    static void restore_moments(const Checkpoint& ck, const std::string& prefix, AdamState& adam) {
        for (std::size_t i = 0; i < adam.leaves.size(); ++i) {
            adam.m[i] = ck.get(prefix + "/m/" + adam.leaves[i]->name);
            adam.v[i] = ck.get(prefix + "/v/" + adam.leaves[i]->name);
        }
        adam.check_shapes();
    }
};

}  // namespace aiacycle
