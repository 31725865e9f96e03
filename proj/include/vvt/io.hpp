#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vvt/data_model.hpp"
#include "vvt/errors.hpp"
#include "vvt/nn.hpp"
#include "vvt/synthetic.hpp"
#include "vvt/tensor.hpp"
#include "vvt/toy_pipeline.hpp"

namespace vvt::io {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- binary PPM/PGM frames, 8-bit ----

inline int quantize8(double v) {
    const int q = static_cast<int>(std::lround(v * 255.0));
    return std::clamp(q, 0, 255);
}

inline void write_ppm(const fs::path& path, const Tensor& frame) {
    if (frame.rank() != 3 || frame.dim(2) != 3)
        throw DimensionError("write_ppm wants an (H,W,3) frame");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const int h = frame.dim(0), w = frame.dim(1);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x * 3 + c)] =
                    static_cast<unsigned char>(quantize8(frame.at(y, x, c)));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

inline void write_pgm(const fs::path& path, const Tensor& frame) {
    if (frame.rank() != 2) throw DimensionError("write_pgm wants an (H,W) frame");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const int h = frame.dim(0), w = frame.dim(1);
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            row[static_cast<std::size_t>(x)] =
                static_cast<unsigned char>(quantize8(frame.at(y, x)));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("failed writing " + path.string());
}

namespace detail {

inline void skip_netpbm_whitespace(std::istream& in) {
    for (;;) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

inline int read_netpbm_int(std::istream& in) {
    skip_netpbm_whitespace(in);
    int v = 0;
    if (!(in >> v)) throw IoError("truncated netpbm header");
    return v;
}

}  // namespace detail

inline Tensor read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw IoError(path.string() + " is not a binary PPM");
    const int w = detail::read_netpbm_int(in);
    const int h = detail::read_netpbm_int(in);
    const int maxval = detail::read_netpbm_int(in);
    if (maxval != 255) throw IoError("only 8-bit PPM is supported");
    in.get();  // single whitespace after header
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw IoError("truncated pixel data in " + path.string());
    Tensor frame({h, w, 3});
    for (std::size_t i = 0; i < raw.size(); ++i)
        frame[i] = static_cast<double>(raw[i]) / 255.0;
    return frame;
}

inline Tensor read_pgm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P5") throw IoError(path.string() + " is not a binary PGM");
    const int w = detail::read_netpbm_int(in);
    const int h = detail::read_netpbm_int(in);
    const int maxval = detail::read_netpbm_int(in);
    if (maxval != 255) throw IoError("only 8-bit PGM is supported");
    in.get();
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw IoError("truncated pixel data in " + path.string());
    Tensor frame({h, w});
    for (std::size_t i = 0; i < raw.size(); ++i)
        frame[i] = static_cast<double>(raw[i]) / 255.0;
    return frame;
}

// ---- clip directories ----
//
// Plain clip:   <dir>/manifest.txt + <dir>/video/frame_NNNN.ppm
// Scene bundle: adds target/, agnostic/, mask/, densepose/, garment.ppm.

inline std::string frame_name(int i) {
    std::ostringstream os;
    os << "frame_";
    os.width(4);
    os.fill('0');
    os << i;
    return os.str();
}

inline void write_manifest(const fs::path& path,
                           const std::map<std::string, std::string>& kv) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::map<std::string, std::string> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw IoError("malformed manifest line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

namespace detail {

inline Tensor frame_of(const Tensor& frames, int i) {
    Tensor f({frames.dim(1), frames.dim(2), frames.dim(3)});
    for (int y = 0; y < frames.dim(1); ++y)
        for (int x = 0; x < frames.dim(2); ++x)
            for (int c = 0; c < frames.dim(3); ++c) f.at(y, x, c) = frames.at(i, y, x, c);
    return f;
}

inline Tensor mask_frame_of(const Tensor& masks, int i) {
    Tensor f({masks.dim(1), masks.dim(2)});
    for (int y = 0; y < masks.dim(1); ++y)
        for (int x = 0; x < masks.dim(2); ++x) f.at(y, x) = masks.at(i, y, x);
    return f;
}

inline void write_frames(const fs::path& dir, const Tensor& frames) {
    fs::create_directories(dir);
    for (int i = 0; i < frames.dim(0); ++i)
        write_ppm(dir / (frame_name(i) + ".ppm"), frame_of(frames, i));
}

inline Tensor read_frames(const fs::path& dir, int n) {
    Tensor frames;
    for (int i = 0; i < n; ++i) {
        const Tensor f = read_ppm(dir / (frame_name(i) + ".ppm"));
        if (i == 0) frames = Tensor({n, f.dim(0), f.dim(1), 3});
        for (int y = 0; y < f.dim(0); ++y)
            for (int x = 0; x < f.dim(1); ++x)
                for (int c = 0; c < 3; ++c) frames.at(i, y, x, c) = f.at(y, x, c);
    }
    return frames;
}

inline std::string color_string(const std::array<double, 3>& c) {
    std::ostringstream os;
    os << quantize8(c[0]) << "," << quantize8(c[1]) << "," << quantize8(c[2]);
    return os.str();
}

inline std::array<double, 3> parse_color(const std::string& s) {
    std::array<double, 3> c{};
    std::istringstream is(s);
    std::string tok;
    for (int i = 0; i < 3; ++i) {
        if (!std::getline(is, tok, ',')) throw IoError("malformed color: " + s);
        c[static_cast<std::size_t>(i)] = std::stod(tok) / 255.0;
    }
    return c;
}

}  // namespace detail

inline void write_video_dir(const fs::path& dir, const VideoClip& clip) {
    check_video_dims(clip);
    fs::create_directories(dir);
    detail::write_frames(dir / "video", clip.frames);
    write_manifest(dir / "manifest.txt",
                   {{"n_frames", std::to_string(clip.n())},
                    {"height", std::to_string(clip.height())},
                    {"width", std::to_string(clip.width())},
                    {"frame_rate", std::to_string(clip.frame_rate)}});
}

inline VideoClip read_video_dir(const fs::path& dir) {
    const auto kv = read_manifest(dir / "manifest.txt");
    VideoClip clip;
    clip.frame_rate = std::stod(kv.at("frame_rate"));
    clip.frames = detail::read_frames(dir / "video", std::stoi(kv.at("n_frames")));
    check_video_dims(clip);
    return clip;
}

inline void write_scene_dir(const fs::path& dir, const SyntheticScene& scene) {
    fs::create_directories(dir);
    detail::write_frames(dir / "target", scene.target.frames);
    detail::write_frames(dir / "agnostic", scene.bundle.agnostic.frames);
    detail::write_frames(dir / "densepose", scene.bundle.pose.frames);
    fs::create_directories(dir / "mask");
    for (int i = 0; i < scene.bundle.mask.n(); ++i)
        write_pgm(dir / "mask" / (frame_name(i) + ".pgm"),
                  detail::mask_frame_of(scene.bundle.mask.masks, i));
    write_ppm(dir / "garment.ppm", scene.garment.image);
    write_manifest(dir / "manifest.txt",
                   {{"n_frames", std::to_string(scene.target.n())},
                    {"height", std::to_string(scene.target.height())},
                    {"width", std::to_string(scene.target.width())},
                    {"frame_rate", std::to_string(scene.target.frame_rate)},
                    {"fill_value", std::to_string(scene.bundle.agnostic.fill_value)},
                    {"background_color",
                     detail::color_string(scene.bundle.pose.background_color)}});
}

// Reads a scene bundle back as a training sample. target/ is optional (a
// deployment bundle has no ground truth).
inline TrainSample read_scene_dir(const fs::path& dir) {
    const auto kv = read_manifest(dir / "manifest.txt");
    const int n = std::stoi(kv.at("n_frames"));
    const int h = std::stoi(kv.at("height"));
    const int w = std::stoi(kv.at("width"));

    TrainSample sample;
    sample.bundle.agnostic.frames = detail::read_frames(dir / "agnostic", n);
    sample.bundle.agnostic.fill_value = std::stod(kv.at("fill_value"));
    sample.bundle.pose.frames = detail::read_frames(dir / "densepose", n);
    sample.bundle.pose.background_color = detail::parse_color(kv.at("background_color"));
    sample.bundle.mask.masks = Tensor({n, h, w});
    for (int i = 0; i < n; ++i) {
        const Tensor f = read_pgm(dir / "mask" / (frame_name(i) + ".pgm"));
        if (f.dim(0) != h || f.dim(1) != w)
            throw IoError("mask frame size disagrees with the manifest");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                sample.bundle.mask.masks.at(i, y, x) = f.at(y, x) > 0.5 ? 1.0 : 0.0;
    }
    sample.garment.image = read_ppm(dir / "garment.ppm");
    if (fs::exists(dir / "target")) {
        sample.target.frames = detail::read_frames(dir / "target", n);
        sample.target.frame_rate = std::stod(kv.at("frame_rate"));
    }
    return sample;
}

// ---- checkpoints ----
//
// Single little-endian blob: magic, model config, init seed, trained steps,
// optimizer step count, then every parameter with its Adam moments.

inline constexpr char kCheckpointMagic[8] = {'V', 'V', 'T', 'C', 'K', 'P', 'T', '1'};

namespace detail {

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated checkpoint");
    return v;
}

inline void put_tensor(std::ostream& out, const Tensor& t) {
    put<std::int32_t>(out, t.rank());
    for (int i = 0; i < t.rank(); ++i) put<std::int32_t>(out, t.dim(i));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

inline Tensor take_tensor(std::istream& in) {
    const int rank = take<std::int32_t>(in);
    if (rank < 0 || rank > 8) throw IoError("corrupt checkpoint tensor rank");
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) shape[static_cast<std::size_t>(i)] = take<std::int32_t>(in);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint tensor");
    return t;
}

}  // namespace detail

inline void save_checkpoint(const fs::path& path, const ToyState& state,
                            long optimizer_steps) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const ToyModelConfig& c = state.config();
    detail::put<std::int32_t>(out, c.base_channels);
    detail::put<std::int32_t>(out, c.heads);
    detail::put<std::int32_t>(out, c.garment_grid);
    detail::put<std::int32_t>(out, c.n_window);
    detail::put<std::uint64_t>(out, state.seed());
    detail::put<std::int64_t>(out, state.trained_steps);
    detail::put<std::int64_t>(out, optimizer_steps);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.params().count()));
    for (std::size_t i = 0; i < state.params().count(); ++i) {
        const ad::Param& p = state.params().at(i);
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        detail::put_tensor(out, p.value);
        detail::put_tensor(out, p.m);
        detail::put_tensor(out, p.v);
    }
    if (!out) throw IoError("failed writing " + path.string());
}

struct LoadedCheckpoint {
    ToyState state;
    long optimizer_steps = 0;
};

inline LoadedCheckpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError(path.string() + " is not a checkpoint (bad magic)");
    ToyModelConfig cfg;
    cfg.base_channels = detail::take<std::int32_t>(in);
    cfg.heads = detail::take<std::int32_t>(in);
    cfg.garment_grid = detail::take<std::int32_t>(in);
    cfg.n_window = detail::take<std::int32_t>(in);
    const std::uint64_t seed = detail::take<std::uint64_t>(in);
    const std::int64_t trained = detail::take<std::int64_t>(in);
    const std::int64_t opt_steps = detail::take<std::int64_t>(in);

    LoadedCheckpoint loaded{ToyState(cfg, seed), opt_steps};
    loaded.state.trained_steps = trained;
    const std::uint32_t count = detail::take<std::uint32_t>(in);
    if (count != loaded.state.params().count())
        throw IoError("checkpoint parameter count disagrees with the model");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t len = detail::take<std::uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw IoError("truncated checkpoint name");
        ad::Param& p = loaded.state.params().get(name);
        const Tensor value = detail::take_tensor(in);
        const Tensor m = detail::take_tensor(in);
        const Tensor v = detail::take_tensor(in);
        require_same_shape(p.value, value, "checkpoint");
        p.value = value;
        p.m = m;
        p.v = v;
    }
    return loaded;
}

// ---- metrics log: one JSON record per line ----

inline void append_metrics(std::ostream& out, const TrainStepRecord& rec) {
    json j = {{"step", rec.step},
              {"dsm", rec.dsm},
              {"agn", rec.agn},
              {"total", rec.total},
              {"in_mask_mass", rec.in_mask_mass},
              {"out_mask_mass", rec.out_mask_mass}};
    out << j.dump() << "\n";
}

inline std::vector<TrainStepRecord> read_metrics(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<TrainStepRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw IoError("malformed metrics line: " + line);
        TrainStepRecord rec;
        rec.step = j.at("step").get<int>();
        rec.dsm = j.at("dsm").get<double>();
        rec.agn = j.at("agn").get<double>();
        rec.total = j.value("total", 0.0);
        rec.in_mask_mass = j.at("in_mask_mass").get<double>();
        rec.out_mask_mass = j.at("out_mask_mass").get<double>();
        records.push_back(rec);
    }
    return records;
}

// ---- keyframe / segment plan files ----

inline void write_plan(const fs::path& path, const KeyframePlan& plan,
                       const SegmentPlan& segments, int n_window) {
    json j;
    j["omega"] = plan.omega;
    j["d_pose"] = plan.d_pose;
    j["s_max"] = plan.s_max;
    j["total_frames"] = plan.total_frames;
    j["window"] = n_window;
    j["overlap"] = segments.overlap;
    j["segments"] = json::array();
    for (const auto& [s, e] : segments.segments) j["segments"].push_back({s, e});
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

struct LoadedPlan {
    KeyframePlan keyframes;
    SegmentPlan segments;
    int n_window = 0;
};

inline LoadedPlan read_plan(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed plan file: " + std::string(e.what()));
    }
    LoadedPlan plan;
    plan.keyframes.omega = j.at("omega").get<std::vector<int>>();
    plan.keyframes.d_pose = j.at("d_pose").get<double>();
    plan.keyframes.s_max = j.at("s_max").get<int>();
    plan.keyframes.total_frames = j.at("total_frames").get<int>();
    plan.n_window = j.at("window").get<int>();
    plan.segments.overlap = j.at("overlap").get<int>();
    for (const auto& seg : j.at("segments"))
        plan.segments.segments.emplace_back(seg.at(0).get<int>(), seg.at(1).get<int>());
    return plan;
}

}  // namespace vvt::io
