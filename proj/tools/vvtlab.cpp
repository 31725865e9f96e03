// vvtlab: one entry point for data generation, toy training, inference,
// long-video orchestration, scheduling plans, evaluation, the ablation grid,
// and metric plots. Every subcommand writes its outputs plus a
// run_manifest.json (resolved config + hash) into the chosen run directory.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <vvt/vvt.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out;
    std::string data;
    std::string checkpoint;
    std::uint64_t seed = 0;
    int steps = 0;
    int frames = 0;
    int window = 0;
    int overlap = 0;
    int s_max = 0;
    double lambda_agn = 0.0;
    double lambda_n = 0.0;
    double d_pose = 0.0;
    double learning_rate = 0.0;
    std::string ct;
    std::string loss;
    std::string keyframe_mode;
};

void add_common_options(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("--out", o.out, "run directory");
    cmd->add_option("--seed", o.seed, "RNG seed");
    cmd->add_option("--data", o.data, "scene/bundle directory");
    cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file");
    cmd->add_option("--steps", o.steps, "training steps");
    cmd->add_option("--frames", o.frames, "synthetic clip length");
    cmd->add_option("--lambda-agn", o.lambda_agn, "attention loss weight");
    cmd->add_option("--lambda-n", o.lambda_n, "negative-term weight");
    cmd->add_option("--lr", o.learning_rate, "learning rate");
    cmd->add_option("--d-pose", o.d_pose, "keyframe pose threshold");
    cmd->add_option("--s-max", o.s_max, "max keyframe stride");
    cmd->add_option("--window", o.window, "generation window");
    cmd->add_option("--overlap", o.overlap, "segment overlap");
    cmd->add_option("--ct", o.ct, "temporal attention on|off")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--loss", o.loss, "attention loss variant init|refined")
        ->check(CLI::IsMember({"init", "refined"}));
    cmd->add_option("--keyframe-mode", o.keyframe_mode, "greedy|literal")
        ->check(CLI::IsMember({"greedy", "literal"}));
}

vvt::RunConfig resolve_config(const CLI::App* cmd, const CommonOpts& o) {
    vvt::RunConfig cfg = o.config_path.empty()
                             ? vvt::RunConfig{}
                             : vvt::RunConfig::from_file(o.config_path);
    const auto have = [&](const char* name) { return cmd->count(name) > 0; };
    if (have("--seed")) cfg.seed = o.seed;
    if (have("--out")) cfg.out_dir = o.out;
    if (have("--data")) cfg.data_dir = o.data;
    if (have("--checkpoint")) cfg.checkpoint = o.checkpoint;
    if (have("--steps")) cfg.steps = o.steps;
    if (have("--frames")) cfg.frames = o.frames;
    if (have("--lambda-agn")) cfg.lambda_agn = o.lambda_agn;
    if (have("--lambda-n")) cfg.lambda_n = o.lambda_n;
    if (have("--lr")) cfg.learning_rate = o.learning_rate;
    if (have("--d-pose")) cfg.d_pose = o.d_pose;
    if (have("--s-max")) cfg.s_max = o.s_max;
    if (have("--window")) cfg.window = o.window;
    if (have("--overlap")) cfg.overlap = o.overlap;
    if (have("--ct")) cfg.ct = o.ct;
    if (have("--loss")) cfg.loss = o.loss;
    if (have("--keyframe-mode")) cfg.keyframe_mode = o.keyframe_mode;
    cfg.validate();
    return cfg;
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const vvt::RunConfig& cfg) {
    fs::create_directories(out_dir);
    json j{{"command", command},
           {"config_hash", cfg.config_hash()},
           {"config", cfg.to_json()}};
    std::ofstream f(out_dir / "run_manifest.json");
    if (!f) throw vvt::IoError("cannot write run manifest");
    f << j.dump(2) << "\n";
}

vvt::TrainSample sample_from_scene(const vvt::SyntheticScene& scene) {
    vvt::TrainSample s;
    s.bundle = scene.bundle;
    s.garment = scene.garment;
    s.target = scene.target;
    return s;
}

vvt::TrainSample load_sample(const vvt::RunConfig& cfg, bool need_target) {
    vvt::TrainSample sample =
        cfg.data_dir.empty()
            ? sample_from_scene(vvt::generate_synthetic_clip(cfg.seed, cfg.frames,
                                                             cfg.height, cfg.width))
            : vvt::io::read_scene_dir(cfg.data_dir);
    if (need_target && sample.target.n() == 0)
        throw vvt::IoError("scene directory has no target frames");
    return sample;
}

vvt::io::LoadedCheckpoint load_state(const vvt::RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw vvt::ConfigError("--checkpoint is required");
    return vvt::io::load_checkpoint(cfg.checkpoint);
}

int cmd_gen_data(const vvt::RunConfig& cfg) {
    const vvt::SyntheticScene scene =
        vvt::generate_synthetic_clip(cfg.seed, cfg.frames, cfg.height, cfg.width);
    vvt::io::write_scene_dir(cfg.out_dir, scene);
    write_run_manifest(cfg.out_dir, "gen-data", cfg);
    std::cout << "gen-data: wrote " << scene.target.n() << " frames to " << cfg.out_dir
              << " (config " << cfg.config_hash() << ")\n";
    return 0;
}

int cmd_train_toy(const vvt::RunConfig& cfg) {
    const vvt::TrainSample sample = load_sample(cfg, true);
    const vvt::OverfitResult res =
        vvt::overfit_clip(sample, cfg.train_config(), cfg.model_config());

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    std::ofstream mf(out / "metrics.jsonl");
    if (!mf) throw vvt::IoError("cannot write metrics log");
    for (const vvt::TrainStepRecord& rec : res.curve) vvt::io::append_metrics(mf, rec);
    vvt::io::save_checkpoint(out / "checkpoint.bin", res.state, res.state.trained_steps);
    write_run_manifest(out, "train-toy", cfg);
    std::cout << "train-toy: " << res.curve.size() << " steps, final dsm "
              << res.curve.back().dsm << ", agn " << res.curve.back().agn << " -> "
              << cfg.out_dir << "\n";
    return 0;
}

int cmd_infer(const vvt::RunConfig& cfg) {
    const vvt::TrainSample sample = load_sample(cfg, false);
    vvt::io::LoadedCheckpoint loaded = load_state(cfg);
    const vvt::VideoClip clip =
        vvt::infer_clip(sample.bundle, sample.garment, loaded.state, cfg.infer_config());
    const fs::path out(cfg.out_dir);
    vvt::io::write_video_dir(out / "generated", clip);
    write_run_manifest(out, "infer", cfg);
    std::cout << "infer: wrote " << clip.n() << " frames to " << (out / "generated")
              << "\n";
    return 0;
}

int cmd_long_infer(const vvt::RunConfig& cfg) {
    const vvt::TrainSample sample = load_sample(cfg, false);
    vvt::io::LoadedCheckpoint loaded = load_state(cfg);
    vvt::InferConfig ic = cfg.infer_config();
    const vvt::WindowGeneratorFn gen =
        vvt::make_window_generator(loaded.state, sample.garment, ic);
    vvt::LongGenerationParams params = cfg.long_params();
    if (params.n_window > loaded.state.config().n_window)
        params.n_window = loaded.state.config().n_window;
    const vvt::VideoClip clip =
        vvt::orchestrate_long_generation(sample.bundle, gen, params);
    const fs::path out(cfg.out_dir);
    vvt::io::write_video_dir(out / "generated", clip);
    write_run_manifest(out, "long-infer", cfg);
    std::cout << "long-infer: wrote " << clip.n() << " frames to " << (out / "generated")
              << "\n";
    return 0;
}

int cmd_select_keyframes(const vvt::RunConfig& cfg) {
    const vvt::TrainSample sample = load_sample(cfg, false);
    const vvt::KeyframePlan plan = vvt::select_keyframes(
        sample.bundle.pose, cfg.d_pose, cfg.s_max, cfg.keyframe_select_mode());
    const vvt::SegmentPlan segments =
        vvt::plan_segments(sample.bundle.pose.n(), cfg.window, cfg.overlap);
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    vvt::io::write_plan(out / "plan.json", plan, segments, cfg.window);
    write_run_manifest(out, "select-keyframes", cfg);
    std::cout << "select-keyframes: " << plan.omega.size() << " keyframes over "
              << plan.total_frames << " frames -> " << (out / "plan.json") << "\n";
    return 0;
}

int cmd_plan_segments(const vvt::RunConfig& cfg) {
    const vvt::TrainSample sample = load_sample(cfg, false);
    const int f = sample.bundle.pose.n();
    const vvt::SegmentPlan segments = vvt::plan_segments(f, cfg.window, cfg.overlap);
    vvt::KeyframePlan empty;
    empty.d_pose = cfg.d_pose;
    empty.s_max = cfg.s_max;
    empty.total_frames = f;
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    vvt::io::write_plan(out / "plan.json", empty, segments, cfg.window);
    write_run_manifest(out, "plan-segments", cfg);
    std::cout << "plan-segments: " << segments.segments.size() << " segments -> "
              << (out / "plan.json") << "\n";
    return 0;
}

int cmd_eval(const vvt::RunConfig& cfg, const std::string& generated,
             const std::string& reference) {
    const vvt::VideoClip gen = vvt::io::read_video_dir(generated);
    const vvt::VideoClip ref = vvt::io::read_video_dir(reference);
    const double s = vvt::clip_ssim(gen, ref);

    json report{{"ssim", s},
                {"config_hash", cfg.config_hash()},
                {"seed", cfg.seed},
                {"n_frames", gen.n()}};
    if (gen.n() >= 2)
        report["flicker"] = vvt::flicker_score(gen, ref);
    else
        report["flicker"] = nullptr;
    json per_frame = json::array();
    for (int i = 0; i < gen.n(); ++i)
        per_frame.push_back(vvt::ssim(vvt::clip_frame(gen, i), vvt::clip_frame(ref, i)));
    report["per_frame_ssim"] = per_frame;

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    std::ofstream f(out / "report.json");
    if (!f) throw vvt::IoError("cannot write report");
    f << report.dump(2) << "\n";
    write_run_manifest(out, "eval", cfg);
    std::cout << "eval: ssim " << s << ", flicker "
              << (report["flicker"].is_null() ? std::string("n/a")
                                              : report["flicker"].dump())
              << " -> " << (out / "report.json") << "\n";
    return 0;
}

int cmd_ablate(const vvt::RunConfig& cfg) {
    const vvt::TrainSample sample = load_sample(cfg, true);
    const std::vector<double> lambdas = {0.0, 0.05, 0.1, 0.5};
    const std::vector<bool> ct_grid = {true, false};

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    std::ofstream rows(out / "ablation.jsonl");
    if (!rows) throw vvt::IoError("cannot write ablation log");

    for (const double lambda : lambdas)
        for (const bool ct : ct_grid) {
            vvt::TrainConfig tc = cfg.train_config();
            tc.lambda_agn = lambda;
            tc.ct_enabled = ct;
            vvt::OverfitResult res = vvt::overfit_clip(sample, tc, cfg.model_config());

            const vvt::AttentionMass mass =
                vvt::eval_attention_mass(res.state, sample, 1.0, ct, cfg.seed);
            vvt::InferConfig ic = cfg.infer_config();
            ic.ct_enabled = ct;
            const vvt::VideoClip clip =
                vvt::infer_clip(sample.bundle, sample.garment, res.state, ic);

            json row{{"lambda_agn", lambda},
                     {"ct", ct ? "on" : "off"},
                     {"final_dsm", res.curve.back().dsm},
                     {"final_agn", res.curve.back().agn},
                     {"in_mask_mass", mass.in_mask},
                     {"out_mask_mass", mass.out_mask},
                     {"ssim", vvt::clip_ssim(clip, sample.target)}};
            if (clip.n() >= 2) row["flicker"] = vvt::flicker_score(clip, sample.target);
            rows << row.dump() << "\n";
            std::cout << "ablate: lambda_agn=" << lambda << " ct=" << (ct ? "on" : "off")
                      << " in_mask_mass=" << mass.in_mask << "\n";
        }
    write_run_manifest(out, "ablate", cfg);
    std::cout << "ablate: 8 rows -> " << (out / "ablation.jsonl") << "\n";
    return 0;
}

int cmd_plot(const vvt::RunConfig& cfg, const std::string& metrics_path) {
    const std::vector<vvt::TrainStepRecord> records =
        vvt::io::read_metrics(metrics_path);
    if (records.empty()) throw vvt::IoError("metrics log is empty");

    const std::vector<std::pair<std::string, std::function<double(const vvt::TrainStepRecord&)>>>
        fields = {{"dsm", [](const auto& r) { return r.dsm; }},
                  {"agn", [](const auto& r) { return r.agn; }},
                  {"total", [](const auto& r) { return r.total; }},
                  {"in_mask_mass", [](const auto& r) { return r.in_mask_mass; }},
                  {"out_mask_mass", [](const auto& r) { return r.out_mask_mass; }}};

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    for (const auto& [name, get] : fields) {
        std::vector<double> values;
        values.reserve(records.size());
        for (const auto& r : records) values.push_back(get(r));
        vvt::io::write_ppm(out / ("curve_" + name + ".ppm"), vvt::render_curve(values));
    }
    write_run_manifest(out, "plot", cfg);
    std::cout << "plot: " << fields.size() << " curves -> " << cfg.out_dir << "\n";
    return 0;
}

int guard(const std::function<int()>& body) {
    try {
        return body();
    } catch (const vvt::IoError& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return 3;
    } catch (const vvt::NumericsError& e) {
        std::cerr << "error: numerics: " << e.what() << "\n";
        return 1;
    } catch (const vvt::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const vvt::DomainError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const vvt::ScheduleError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const vvt::DimensionError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy video try-on lab"};
    app.require_subcommand(1);
    int exit_code = 0;

    CommonOpts gen_o;
    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic scene bundle");
    add_common_options(gen, gen_o);
    gen->callback([&] {
        exit_code = guard([&] { return cmd_gen_data(resolve_config(gen, gen_o)); });
    });

    CommonOpts train_o;
    CLI::App* train = app.add_subcommand("train-toy", "train the toy generator");
    add_common_options(train, train_o);
    train->callback([&] {
        exit_code = guard([&] { return cmd_train_toy(resolve_config(train, train_o)); });
    });

    CommonOpts infer_o;
    CLI::App* infer = app.add_subcommand("infer", "sample a short clip");
    add_common_options(infer, infer_o);
    infer->callback([&] {
        exit_code = guard([&] { return cmd_infer(resolve_config(infer, infer_o)); });
    });

    CommonOpts long_o;
    CLI::App* longi = app.add_subcommand("long-infer", "keyframe+segment generation");
    add_common_options(longi, long_o);
    longi->callback([&] {
        exit_code = guard([&] { return cmd_long_infer(resolve_config(longi, long_o)); });
    });

    CommonOpts sel_o;
    CLI::App* sel = app.add_subcommand("select-keyframes", "emit a keyframe plan");
    add_common_options(sel, sel_o);
    sel->callback([&] {
        exit_code = guard([&] { return cmd_select_keyframes(resolve_config(sel, sel_o)); });
    });

    CommonOpts seg_o;
    CLI::App* seg = app.add_subcommand("plan-segments", "emit a segment plan");
    add_common_options(seg, seg_o);
    seg->callback([&] {
        exit_code = guard([&] { return cmd_plan_segments(resolve_config(seg, seg_o)); });
    });

    CommonOpts eval_o;
    std::string eval_generated, eval_reference;
    CLI::App* ev = app.add_subcommand("eval", "compare two clip directories");
    add_common_options(ev, eval_o);
    ev->add_option("--generated", eval_generated, "generated clip directory")->required();
    ev->add_option("--reference", eval_reference, "reference clip directory")->required();
    ev->callback([&] {
        exit_code = guard([&] {
            return cmd_eval(resolve_config(ev, eval_o), eval_generated, eval_reference);
        });
    });

    CommonOpts abl_o;
    CLI::App* abl = app.add_subcommand("ablate", "loss-weight x temporal-attention grid");
    add_common_options(abl, abl_o);
    abl->callback([&] {
        exit_code = guard([&] { return cmd_ablate(resolve_config(abl, abl_o)); });
    });

    CommonOpts plot_o;
    std::string plot_metrics;
    CLI::App* plot = app.add_subcommand("plot", "render metric curves as images");
    add_common_options(plot, plot_o);
    plot->add_option("--metrics", plot_metrics, "metrics.jsonl path")->required();
    plot->callback([&] {
        exit_code = guard([&] { return cmd_plot(resolve_config(plot, plot_o), plot_metrics); });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    return exit_code;
}
