#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "aiacycle/models.hpp"

namespace aiacycle {

enum class TrainingMode { non_parallel, parallel };

/// Every training knob, serialized as documented key=value text. The same
/// block is echoed into checkpoints so enhancement rebuilds the exact
/// topology.
struct TrainingConfig {
    float eta = 0.5f;            // compression exponent when compressed_input is on
    int crop_frames = 108;
    int batch = 4;
    float lr_g = 2e-4f;
    float lr_d = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float lambda_cycle = 5.0f;
    float lambda_id = 10.0f;
    int id_epochs = 20;          // identity loss active through this epoch
    int decay_start_epoch = 50;  // constant lr through here, linear decay after
    int total_epochs = 100;
    TrainingMode mode = TrainingMode::non_parallel;
    bool compressed_input = true;
    bool use_atab = true;
    bool use_afab = true;
    bool use_aha = true;
    std::uint64_t seed = 1;
    int base_channels = 64;
    int atfa_modules = 6;
    int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
    std::string manifest;      // training corpus manifest path
    std::string out_dir = ".";

    float effective_eta() const { return compressed_input ? eta : 1.0f; }

    ModelConfig model_config() const {
        ModelConfig m;
        m.base_channels = base_channels;
        m.atfa_modules = atfa_modules;
        m.use_atab = use_atab;
        m.use_afab = use_afab;
        m.use_aha = use_aha;
        return m;
    }

    void validate() const {
        if (!(eta > 0.0f) || eta > 1.0f) throw std::invalid_argument("config: eta must lie in (0, 1]");
        if (crop_frames < 1) throw std::invalid_argument("config: crop_frames must be >= 1");
        if (batch < 1) throw std::invalid_argument("config: batch must be >= 1");
        if (id_epochs > decay_start_epoch || decay_start_epoch > total_epochs)
            throw std::invalid_argument("config: need id_epochs <= decay_start_epoch <= total_epochs");
        if (total_epochs < 1) throw std::invalid_argument("config: total_epochs must be >= 1");
        if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
        model_config().validate();
    }

    std::string serialize() const {
        std::ostringstream os;
        os << "eta=" << eta << "\n";
        os << "crop_frames=" << crop_frames << "\n";
        os << "batch=" << batch << "\n";
        os << "lr_g=" << lr_g << "\n";
        os << "lr_d=" << lr_d << "\n";
        os << "beta1=" << beta1 << "\n";
        os << "beta2=" << beta2 << "\n";
        os << "lambda_cycle=" << lambda_cycle << "\n";
        os << "lambda_id=" << lambda_id << "\n";
        os << "id_epochs=" << id_epochs << "\n";
        os << "decay_start_epoch=" << decay_start_epoch << "\n";
        os << "total_epochs=" << total_epochs << "\n";
        os << "mode=" << (mode == TrainingMode::parallel ? "parallel" : "non_parallel") << "\n";
        os << "compressed_input=" << (compressed_input ? 1 : 0) << "\n";
        os << "use_atab=" << (use_atab ? 1 : 0) << "\n";
        os << "use_afab=" << (use_afab ? 1 : 0) << "\n";
        os << "use_aha=" << (use_aha ? 1 : 0) << "\n";
        os << "seed=" << seed << "\n";
        os << "base_channels=" << base_channels << "\n";
        os << "atfa_modules=" << atfa_modules << "\n";
        os << "checkpoint_every=" << checkpoint_every << "\n";
        os << "manifest=" << manifest << "\n";
        os << "out_dir=" << out_dir << "\n";
        return os.str();
    }

    static TrainingConfig parse(const std::string& text) {
        TrainingConfig cfg;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key=value: " + line);
            const std::string key = line.substr(0, eq);
            const std::string value = line.substr(eq + 1);
            apply(cfg, key, value, lineno);
        }
        return cfg;
    }

    static TrainingConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("config: cannot open " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

private:
    static bool parse_bool(const std::string& v, const std::string& key, int lineno) {
        if (v == "1" || v == "true") return true;
        if (v == "0" || v == "false") return false;
        throw std::invalid_argument("config: line " + std::to_string(lineno) + ": bad boolean for " + key);
    }

    static void apply(TrainingConfig& cfg, const std::string& key, const std::string& value, int lineno) {
        try {
            if (key == "eta") cfg.eta = std::stof(value);
            else if (key == "crop_frames") cfg.crop_frames = std::stoi(value);
            else if (key == "batch") cfg.batch = std::stoi(value);
            else if (key == "lr_g") cfg.lr_g = std::stof(value);
            else if (key == "lr_d") cfg.lr_d = std::stof(value);
            else if (key == "beta1") cfg.beta1 = std::stof(value);
            else if (key == "beta2") cfg.beta2 = std::stof(value);
            else if (key == "lambda_cycle") cfg.lambda_cycle = std::stof(value);
            else if (key == "lambda_id") cfg.lambda_id = std::stof(value);
            else if (key == "id_epochs") cfg.id_epochs = std::stoi(value);
            else if (key == "decay_start_epoch") cfg.decay_start_epoch = std::stoi(value);
            else if (key == "total_epochs") cfg.total_epochs = std::stoi(value);
            else if (key == "mode") {
                if (value == "parallel") cfg.mode = TrainingMode::parallel;
                else if (value == "non_parallel") cfg.mode = TrainingMode::non_parallel;
                else throw std::invalid_argument("mode must be parallel or non_parallel");
            } else if (key == "compressed_input") cfg.compressed_input = parse_bool(value, key, lineno);
            else if (key == "use_atab") cfg.use_atab = parse_bool(value, key, lineno);
            else if (key == "use_afab") cfg.use_afab = parse_bool(value, key, lineno);
            else if (key == "use_aha") cfg.use_aha = parse_bool(value, key, lineno);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "base_channels") cfg.base_channels = std::stoi(value);
            else if (key == "atfa_modules") cfg.atfa_modules = std::stoi(value);
            else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(value);
            else if (key == "manifest") cfg.manifest = value;
            else if (key == "out_dir") cfg.out_dir = value;
            else throw std::invalid_argument("unknown key '" + key + "'");
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config: line " + std::to_string(lineno) + ": " + e.what());
        }
    }
};

}  // namespace aiacycle
