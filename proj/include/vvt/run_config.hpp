#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "vvt/agnostic_loss.hpp"
#include "vvt/edm.hpp"
#include "vvt/errors.hpp"
#include "vvt/keyframe.hpp"
#include "vvt/toy_pipeline.hpp"

namespace vvt {

using nlohmann::json;

// One flat config file drives every subcommand; unknown keys are rejected so
// typos fail loudly, and each run logs the hash of its resolved config.
struct RunConfig {
    std::uint64_t seed = 7;

    // synthetic scene
    int frames = 8;
    int height = 64;
    int width = 48;

    // training
    int steps = 500;
    double learning_rate = 5e-5;
    int batch_size = 2;
    double lambda_agn = 0.5;
    double lambda_n = 0.01;
    std::string ct = "on";
    std::string loss = "refined";

    // noise schedule
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int num_steps = 12;
    double sigma_data = 0.5;
    double p_mean = -1.2;
    double p_std = 1.2;

    // long-video scheduling
    double d_pose = 0.05;
    int s_max = 8;
    int window = 8;
    int overlap = 2;
    std::string keyframe_mode = "greedy";

    // model
    int base_channels = 12;
    int heads = 4;
    int garment_grid = 4;

    // paths
    std::string data_dir;
    std::string checkpoint;
    std::string out_dir = "run";

    void validate() const {
        if (ct != "on" && ct != "off") throw ConfigError("ct must be on|off");
        if (loss != "init" && loss != "refined")
            throw ConfigError("loss must be init|refined");
        if (keyframe_mode != "greedy" && keyframe_mode != "literal")
            throw ConfigError("keyframe_mode must be greedy|literal");
        if (frames < 1 || height < 8 || width < 8)
            throw ConfigError("scene dims too small");
        schedule().validate();
        train_config().validate();
        model_config().validate();
    }

    bool ct_enabled() const { return ct == "on"; }
    LossVariant loss_variant() const {
        return loss == "refined" ? LossVariant::refined : LossVariant::initial;
    }
    KeyframeSelectMode keyframe_select_mode() const {
        return keyframe_mode == "greedy" ? KeyframeSelectMode::greedy
                                         : KeyframeSelectMode::literal;
    }

    NoiseLevelSchedule schedule() const {
        NoiseLevelSchedule s;
        s.sigma_min = sigma_min;
        s.sigma_max = sigma_max;
        s.rho = rho;
        s.num_steps = num_steps;
        s.sigma_data = sigma_data;
        s.p_mean = p_mean;
        s.p_std = p_std;
        return s;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.learning_rate = learning_rate;
        t.batch_size = batch_size;
        t.lambda_agn = lambda_agn;
        t.lambda_n = lambda_n;
        t.ct_enabled = ct_enabled();
        t.variant = loss_variant();
        t.steps = steps;
        t.seed = seed;
        t.schedule = schedule();
        return t;
    }

    ToyModelConfig model_config() const {
        ToyModelConfig m;
        m.base_channels = base_channels;
        m.heads = heads;
        m.garment_grid = garment_grid;
        m.n_window = window;
        return m;
    }

    InferConfig infer_config() const {
        InferConfig i;
        i.schedule = schedule();
        i.ct_enabled = ct_enabled();
        i.seed = seed;
        return i;
    }

    LongGenerationParams long_params() const {
        LongGenerationParams p;
        p.d_pose = d_pose;
        p.s_max = s_max;
        p.n_window = window;
        p.overlap = overlap;
        return p;
    }

    json to_json() const {
        return json{{"seed", seed},
                    {"frames", frames},
                    {"height", height},
                    {"width", width},
                    {"steps", steps},
                    {"learning_rate", learning_rate},
                    {"batch_size", batch_size},
                    {"lambda_agn", lambda_agn},
                    {"lambda_n", lambda_n},
                    {"ct", ct},
                    {"loss", loss},
                    {"sigma_min", sigma_min},
                    {"sigma_max", sigma_max},
                    {"rho", rho},
                    {"num_steps", num_steps},
                    {"sigma_data", sigma_data},
                    {"p_mean", p_mean},
                    {"p_std", p_std},
                    {"d_pose", d_pose},
                    {"s_max", s_max},
                    {"window", window},
                    {"overlap", overlap},
                    {"keyframe_mode", keyframe_mode},
                    {"base_channels", base_channels},
                    {"heads", heads},
                    {"garment_grid", garment_grid},
                    {"data_dir", data_dir},
                    {"checkpoint", checkpoint},
                    {"out_dir", out_dir}};
    }

    static RunConfig from_json(const json& j) {
        RunConfig c;
        const json known = c.to_json();
        for (const auto& [key, value] : j.items()) {
            if (!known.contains(key)) throw ConfigError("unknown config key: " + key);
            (void)value;
        }
        const auto geti = [&](const char* k, int& slot) {
            if (j.contains(k)) slot = j.at(k).get<int>();
        };
        const auto getd = [&](const char* k, double& slot) {
            if (j.contains(k)) slot = j.at(k).get<double>();
        };
        const auto gets = [&](const char* k, std::string& slot) {
            if (j.contains(k)) slot = j.at(k).get<std::string>();
        };
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        geti("frames", c.frames);
        geti("height", c.height);
        geti("width", c.width);
        geti("steps", c.steps);
        getd("learning_rate", c.learning_rate);
        geti("batch_size", c.batch_size);
        getd("lambda_agn", c.lambda_agn);
        getd("lambda_n", c.lambda_n);
        gets("ct", c.ct);
        gets("loss", c.loss);
        getd("sigma_min", c.sigma_min);
        getd("sigma_max", c.sigma_max);
        getd("rho", c.rho);
        geti("num_steps", c.num_steps);
        getd("sigma_data", c.sigma_data);
        getd("p_mean", c.p_mean);
        getd("p_std", c.p_std);
        getd("d_pose", c.d_pose);
        geti("s_max", c.s_max);
        geti("window", c.window);
        geti("overlap", c.overlap);
        gets("keyframe_mode", c.keyframe_mode);
        geti("base_channels", c.base_channels);
        geti("heads", c.heads);
        geti("garment_grid", c.garment_grid);
        gets("data_dir", c.data_dir);
        gets("checkpoint", c.checkpoint);
        gets("out_dir", c.out_dir);
        c.validate();
        return c;
    }

    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("malformed config: " + std::string(e.what()));
        }
        return from_json(j);
    }

    // FNV-1a over the canonical serialized form (keys sorted by the JSON
    // object representation), hex-encoded.
    std::string config_hash() const {
        const std::string s = to_json().dump();
        std::uint64_t h = 14695981039346656037ull;
        for (const unsigned char ch : s) {
            h ^= ch;
            h *= 1099511628211ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return std::string(buf);
    }
};

}  // namespace vvt
