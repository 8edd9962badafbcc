#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dynagmap/config.hpp"
#include "dynagmap/errors.hpp"
#include "dynagmap/eval.hpp"
#include "dynagmap/io.hpp"
#include "dynagmap/pipeline.hpp"
#include "dynagmap/render.hpp"
#include "dynagmap/synth.hpp"

namespace fs = std::filesystem;
using namespace dynagmap;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

/// Bad input from the user: missing files, invalid flags or configs.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) throw UsageError(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, const char* what) {
    if (!fs::is_directory(p)) throw UsageError(std::string(what) + " is not a directory: " + p.string());
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
        if (item.empty()) continue;
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw UsageError("not an integer in list: '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError("empty integer list");
    return out;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out_dir) {
    require_file(spec_path, "scene spec");
    std::ifstream in(spec_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(spec_path.string() + ": " + e.what());
    }
    SceneSpec spec;
    try {
        spec = j.get<SceneSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(spec_path.string() + ": " + e.what());
    }
    spec.validate();
    Sequence seq = generate_scene(spec);
    write_sequence(out_dir, seq);
    std::cout << "wrote " << seq.frames.size() << " frames to " << out_dir.string() << '\n';
    return 0;
}

struct RunArgs {
    fs::path seq;
    fs::path config;
    fs::path out;
    bool no_dynamic = false;
    std::string flow_mode;
    bool dump_renders = false;
    bool timing = false;
};

int cmd_run(const RunArgs& a) {
    require_dir(a.seq, "sequence directory");
    ManageConfig cfg;
    if (!a.config.empty()) {
        require_file(a.config, "config");
        cfg = load_config(a.config);
    }
    if (a.no_dynamic) cfg.dynamic_enabled = false;
    if (!a.flow_mode.empty()) cfg.flow_mode = parse_flow_mode(a.flow_mode);
    cfg.validate();

    LoadedSequence seq = load_sequence(a.seq);
    for (const auto& w : seq.warnings) std::cerr << "warning: " << w << '\n';

    RunOptions opt;
    opt.timing = a.timing;
    if (a.dump_renders) opt.dump_dir = a.out / "renders";
    fs::create_directories(a.out);
    RunResult res = run_sequence(seq.frames, seq.cam, cfg, opt);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';

    write_json(a.out / "metrics.json", metrics_json(res));
    save_checkpoint(a.out / "map.jsonl", res.map, seq.cam);

    const RunSummary& s = res.summary;
    std::printf("frames %zu  psnr %.3f  ssim %.4f", s.frames, s.psnr, s.ssim);
    if (s.dyna_psnr) std::printf("  dyna_psnr %.3f", *s.dyna_psnr);
    std::printf("  static %zu  dynamic %zu  reuse %.3f\n", s.final_n_static, s.final_n_dynamic, s.reuse_rate);
    return 0;
}

int cmd_render(const fs::path& ckpt_path, const std::string& pose_text, double tau, const fs::path& out) {
    require_file(ckpt_path, "checkpoint");
    Pose pose;
    try {
        pose = parse_pose(pose_text);
    } catch (const Error& e) {
        throw UsageError(std::string("--pose: ") + e.what());
    }
    Checkpoint ck = load_checkpoint(ckpt_path);
    RenderSettings settings;
    settings.lambda_alpha = ck.map.config.lambda_alpha;
    RenderOutput img = render_rgb(ck.map, ck.cam, pose, tau, settings);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_ppm(out, img.rgb);
    return 0;
}

int cmd_track(const fs::path& seq_dir, const fs::path& config, int interval, const std::string& targets,
              const fs::path& out) {
    require_dir(seq_dir, "sequence directory");
    if (interval < 1) throw UsageError("--interval must be >= 1");
    const std::vector<int> offsets = parse_int_list(targets);
    ManageConfig cfg;
    if (!config.empty()) {
        require_file(config, "config");
        cfg = load_config(config);
    }
    LoadedSequence seq = load_sequence(seq_dir);
    for (const auto& w : seq.warnings) std::cerr << "warning: " << w << '\n';
    TrackTable table = run_track_predict_protocol(seq.frames, seq.cam, interval, offsets, cfg,
                                                  composed_flow_provider(seq.frames));
    write_json(out, track_table_json(table));
    for (const auto& c : table.cells) {
        std::printf("%-12s target %3d  horizon %3d  evaluated %3d", c.kind.c_str(), c.target, c.horizon,
                    c.evaluated);
        if (c.dyna_psnr) std::printf("  dyna_psnr %.3f", *c.dyna_psnr);
        if (c.flagged) std::printf("  (no frames)");
        std::printf("\n");
    }
    return 0;
}

/// frame index -> file, for names like frame_000012.<suffix>
std::map<std::int64_t, fs::path> index_files(const fs::path& dir, const std::string& suffix) {
    std::map<std::int64_t, fs::path> out;
    const std::string tail = "." + suffix;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("frame_", 0) != 0 || name.size() <= 6 + tail.size()) continue;
        if (name.compare(name.size() - tail.size(), tail.size(), tail) != 0) continue;
        const std::string digits = name.substr(6, name.size() - 6 - tail.size());
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) continue;
        out[std::stoll(digits)] = entry.path();
    }
    return out;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& mask_dir, const fs::path& out) {
    require_dir(pred_dir, "prediction directory");
    require_dir(gt_dir, "ground-truth directory");
    if (!mask_dir.empty()) require_dir(mask_dir, "mask directory");

    auto pred = index_files(pred_dir, "render.ppm");
    if (pred.empty()) pred = index_files(pred_dir, "rgb.ppm");
    const auto gt = index_files(gt_dir, "rgb.ppm");
    const auto masks = mask_dir.empty() ? std::map<std::int64_t, fs::path>{} : index_files(mask_dir, "mask.pgm");
    if (pred.empty()) throw UsageError("no frame_*.render.ppm or frame_*.rgb.ppm in " + pred_dir.string());

    using nlohmann::ordered_json;
    auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    ordered_json frames = ordered_json::array();
    double psnr_sum = 0.0, ssim_sum = 0.0, dyna_sum = 0.0;
    int n = 0, dyna_n = 0;
    for (const auto& [t, path] : pred) {
        auto g = gt.find(t);
        if (g == gt.end()) throw UsageError("missing ground truth " + (gt_dir / frame_file(t, "rgb.ppm")).string());
        const RgbImage a = read_ppm(path);
        const RgbImage b = read_ppm(g->second);
        if (a.width() != b.width() || a.height() != b.height())
            throw UsageError("size mismatch between " + path.string() + " and " + g->second.string());
        std::optional<double> dyna;
        if (auto m = masks.find(t); m != masks.end()) {
            const MaskImage mask = read_pgm(m->second);
            if (mask.width() != a.width() || mask.height() != a.height())
                throw UsageError("size mismatch: " + m->second.string());
            if (std::any_of(mask.data().begin(), mask.data().end(), [](auto v) { return v != 0; }))
                dyna = psnr(a, b, &mask);
        }
        const double p = psnr(a, b);
        const double s = ssim(a, b);
        ordered_json j;
        j["frame"] = t;
        j["psnr"] = p;
        j["ssim"] = s;
        j["dyna_psnr"] = opt(dyna);
        frames.push_back(j);
        psnr_sum += p;
        ssim_sum += s;
        ++n;
        if (dyna) {
            dyna_sum += *dyna;
            ++dyna_n;
        }
    }
    ordered_json summary;
    summary["frames"] = n;
    summary["psnr"] = psnr_sum / n;
    summary["ssim"] = ssim_sum / n;
    summary["dyna_psnr"] = dyna_n ? ordered_json(dyna_sum / dyna_n) : ordered_json(nullptr);
    ordered_json result;
    result["per_frame"] = frames;
    result["summary"] = summary;
    write_json(out, result);
    std::printf("frames %d  psnr %.3f  ssim %.4f\n", n, psnr_sum / n, ssim_sum / n);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Incremental Gaussian-splat mapping of dynamic RGB-D sequences"};
    app.require_subcommand(1);

    fs::path synth_spec, synth_out;
    auto* synth = app.add_subcommand("synth", "Render a synthetic RGB-D sequence from a scene description");
    synth->add_option("--spec", synth_spec, "Scene JSON")->required();
    synth->add_option("--out", synth_out, "Output sequence directory")->required();

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Map a sequence and write metrics.json plus a checkpoint");
    run->add_option("--seq", run_args.seq, "Sequence directory")->required();
    run->add_option("--config", run_args.config, "Config JSON (defaults when omitted)");
    run->add_option("--out", run_args.out, "Output directory")->required();
    auto* no_dyn = run->add_flag("--no-dynamic", run_args.no_dynamic, "Treat everything as static");
    run->add_option("--flow-mode", run_args.flow_mode, "literal or exact")
        ->check(CLI::IsMember({"literal", "exact", "paper_literal", "exact_correspondence"}))
        ->excludes(no_dyn);
    run->add_flag("--dump-renders", run_args.dump_renders, "Write per-frame renders to OUT/renders");
    run->add_flag("--timing", run_args.timing, "Record per-frame wall time in metrics.json");

    fs::path ckpt, render_out;
    std::string pose_text;
    double tau = 0.0;
    auto* rend = app.add_subcommand("render", "Render a checkpoint at any pose and time");
    rend->add_option("--checkpoint", ckpt, "Checkpoint written by run")->required();
    rend->add_option("--pose", pose_text, "\"tx ty tz qx qy qz qw\", world <- camera")->required();
    rend->add_option("--time", tau, "Query time in frames")->required();
    rend->add_option("--out", render_out, "Output PPM")->required();

    fs::path track_seq, track_cfg, track_out;
    int interval = 5;
    std::string targets;
    auto* track = app.add_subcommand("track", "Interpolation/extrapolation protocol on withheld frames");
    track->add_option("--seq", track_seq, "Sequence directory")->required();
    track->add_option("--config", track_cfg, "Config JSON");
    track->add_option("--interval", interval, "Consume every K-th frame")->required();
    track->add_option("--targets", targets, "Comma-separated frame offsets, e.g. \"3,5,10\"")->required();
    track->add_option("--out", track_out, "Output JSON table")->required();

    fs::path pred_dir, gt_dir, mask_dir, eval_out;
    auto* ev = app.add_subcommand("eval", "Score rendered frames against ground truth");
    ev->add_option("--pred", pred_dir, "Directory with frame_*.render.ppm")->required();
    ev->add_option("--gt", gt_dir, "Sequence directory with frame_*.rgb.ppm")->required();
    ev->add_option("--mask", mask_dir, "Directory with frame_*.mask.pgm");
    ev->add_option("--out", eval_out, "Output metrics JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*synth) return cmd_synth(synth_spec, synth_out);
        if (*run) return cmd_run(run_args);
        if (*rend) return cmd_render(ckpt, pose_text, tau, render_out);
        if (*track) return cmd_track(track_seq, track_cfg, interval, targets, track_out);
        if (*ev) return cmd_eval(pred_dir, gt_dir, mask_dir, eval_out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const LoadError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const SpecValidation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const InvalidParameter& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kUsageError;
}
