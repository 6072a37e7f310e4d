#include "stga/cli.hpp"

#include "stga/checkpoint.hpp"
#include "stga/config.hpp"
#include "stga/parallel.hpp"
#include "stga/synth.hpp"
#include "stga/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace stga {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json read_json_file(const fs::path& path, bool argument) {
    std::ifstream is(path);
    if (!is) {
        const std::string msg = "cannot open " + path.string();
        if (argument) throw ArgumentError(msg);
        throw DataError(msg);
    }
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        const std::string msg = path.string() + ": " + e.what();
        if (argument) throw ArgumentError(msg);
        throw DataError(msg);
    }
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    if (!os) throw DataError("cannot write " + path.string());
}

Vec3 background_of(const json& sidecar) {
    const Config c = config_from_json(sidecar.at("config"));
    return Vec3(c.train.background[0], c.train.background[1], c.train.background[2]);
}

std::string frame_name(int k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d.png", k);
    return buf;
}

struct SynthArgs {
    std::uint64_t seed = 0;
    int frames = 24;
    int size = 64;
    std::string motion = "default";
    std::string out;
};

struct TrainArgs {
    std::string data, config, out, mode;
    int iters = -1;
    std::int64_t seed = -1;
};

struct RenderArgs {
    std::string ckpt, data, out;
    int frame = 0;
    int view = -1;
};

struct AnimateArgs {
    std::string ckpt, poses, out_dir, camera;
};

struct EvalArgs {
    std::string ckpt, data;
    bool holdout = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& err) {
    SynthOptions o;
    o.seed = a.seed;
    o.frames = a.frames;
    o.size = a.size;
    if (a.motion == "default") o.motion = SynthMotion::Default;
    else if (a.motion == "static") o.motion = SynthMotion::Static;
    else if (a.motion == "translate") o.motion = SynthMotion::Translate;
    else throw ArgumentError("unknown motion '" + a.motion + "'");
    const FrameDataset d = generate(o);
    save_dataset(a.out, d);
    err << "synth: " << d.frame_count() << " frames " << d.width() << "x" << d.height() << " -> " << a.out << '\n';
    return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& err) {
    Config cfg;
    if (!a.config.empty()) cfg = config_from_json(read_json_file(a.config, true));
    if (a.iters >= 0) cfg.train.iterations = a.iters;
    if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.mode.empty()) cfg.train.mode = parse_mode(a.mode);
    cfg.validate();

    const FrameDataset data = load_dataset(a.data);
    const fs::path out(a.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());

    TrainHooks hooks;
    hooks.on_log = [&err](const LogRow& r) {
        err << "iter " << std::setw(5) << r.iteration << "  loss " << std::fixed << std::setprecision(5) << r.loss.total
            << "  rgb " << r.loss.rgb << "  splats " << r.splat_count << "  psnr " << std::setprecision(2)
            << r.psnr_train << '\n';
        err.unsetf(std::ios::floatfield);
    };
    err << "train: mode " << to_string(cfg.train.mode) << ", " << cfg.train.iterations << " iterations\n";
    TrainResult res = train(data, cfg, hooks);
    if (res.skipped_updates > 0) err << "train: skipped " << res.skipped_updates << " non-finite updates\n";

    Checkpoint ck;
    ck.model = std::move(res.model);
    ck.sidecar = {{"config", config_to_json(cfg)},
                  {"seed", cfg.train.seed},
                  {"mode", to_string(cfg.train.mode)},
                  {"dataset_hash", dataset_hash(a.data)},
                  {"frame_count", data.frame_count()},
                  {"skeleton", skeleton_to_json(data.skeleton)},
                  {"camera", camera_to_json(data.cameras.front())}};
    const fs::path ckpt = out / "model.stga";
    save_checkpoint(ckpt, ck);
    write_json_file(out / "config.json", config_to_json(cfg));
    write_log_csv(out / "train_log.csv", res.log);
    {
        std::ofstream os(out / "densify.csv");
        os << "iteration,frame,added,removed,flagged,triggered_cells\n";
        for (const DensifyStats& d : res.densify) {
            os << d.iteration << ',' << d.frame << ',' << d.added << ',' << d.removed << ',' << d.flagged << ','
               << d.triggered_cells << '\n';
        }
        if (!os) throw DataError("cannot write densify.csv");
    }
    err << "train: " << ck.model.size() << " splats -> " << ckpt.string() << '\n';
    return kExitOk;
}

Skeleton checkpoint_skeleton(const Checkpoint& ck) {
    if (!ck.sidecar.contains("skeleton")) throw DataError("checkpoint sidecar has no skeleton");
    return skeleton_from_json(ck.sidecar.at("skeleton"));
}

int cmd_render(const RenderArgs& a, std::ostream& err) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const FrameDataset data = load_dataset(a.data);
    const int view = a.view < 0 ? a.frame : a.view;
    if (a.frame < 0 || a.frame >= data.frame_count()) throw ArgumentError("--frame out of range");
    if (view >= data.frame_count()) throw ArgumentError("--view out of range");
    const ModelRender r = render_model(ck.model, data.skeleton, data.poses[a.frame], data.time(a.frame),
                                       data.cameras[view], background_of(ck.sidecar));
    write_png(a.out, r.out.image);
    err << "render: frame " << a.frame << " from view " << view << " -> " << a.out << '\n';
    return kExitOk;
}

int cmd_animate(const AnimateArgs& a, std::ostream& err) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const Skeleton skel = checkpoint_skeleton(ck);
    const std::vector<Pose> poses = poses_from_json(read_json_file(a.poses, false));
    if (poses.empty()) throw DataError(a.poses + ": no poses");
    for (const Pose& p : poses) {
        if (p.rotations.size() != skel.size()) throw DataError(a.poses + ": pose bone count does not match the skeleton");
    }
    const Camera cam = a.camera.empty() ? camera_from_json(ck.sidecar.at("camera"))
                                        : camera_from_json(read_json_file(a.camera, false));
    const fs::path dir(a.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    const Vec3 bg = background_of(ck.sidecar);
    const int n = static_cast<int>(poses.size());
    for (int k = 0; k < n; ++k) {
        const ModelRender r = render_model(ck.model, skel, poses[k], frame_time(k, n), cam, bg);
        write_png(dir / frame_name(k), r.out.image);
    }
    err << "animate: " << n << " frames -> " << dir.string() << '\n';
    return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const FrameDataset data = load_dataset(a.data);
    std::vector<int> frames;
    if (a.holdout) {
        frames = data.holdout;
    } else {
        for (int k = 0; k < data.frame_count(); ++k) frames.push_back(k);
    }
    const Metrics m = eval_holdout(ck.model, data, frames, background_of(ck.sidecar));
    out << json{{"psnr", m.psnr}, {"ssim", m.ssim}}.dump() << '\n';
    err << "eval: " << frames.size() << " frames\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Skeleton-driven spacetime Gaussian avatars", args.empty() ? "stga" : args.front()};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0: STGA_THREADS or hardware)")->check(CLI::NonNegativeNumber);

    SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "Generate the synthetic capsule-figure dataset");
    synth->add_option("--seed", sa.seed);
    synth->add_option("--frames", sa.frames)->check(CLI::Range(2, 100000));
    synth->add_option("--size", sa.size)->check(CLI::Range(1, 8192));
    synth->add_option("--motion", sa.motion)->check(CLI::IsMember({"default", "static", "translate"}));
    synth->add_option("--out", sa.out)->required();

    TrainArgs ta;
    CLI::App* trn = app.add_subcommand("train", "Fit a model to a dataset");
    trn->add_option("--data", ta.data)->required();
    trn->add_option("--config", ta.config);
    trn->add_option("--out", ta.out, "Output directory")->required();
    trn->add_option("--iters", ta.iters)->check(CLI::NonNegativeNumber);
    trn->add_option("--seed", ta.seed)->check(CLI::NonNegativeNumber);
    trn->add_option("--mode", ta.mode)->check(CLI::IsMember({"full", "no-flow", "no-stg", "sh"}));

    RenderArgs ra;
    CLI::App* rnd = app.add_subcommand("render", "Render one frame of a dataset");
    rnd->add_option("--ckpt", ra.ckpt)->required();
    rnd->add_option("--data", ra.data)->required();
    rnd->add_option("--frame", ra.frame, "Pose and time")->required();
    rnd->add_option("--view", ra.view, "Camera index (default: --frame)");
    rnd->add_option("--out", ra.out)->required();

    AnimateArgs aa;
    CLI::App* anim = app.add_subcommand("animate", "Render a pose sequence");
    anim->add_option("--ckpt", aa.ckpt)->required();
    anim->add_option("--poses", aa.poses)->required();
    anim->add_option("--out-dir", aa.out_dir)->required();
    anim->add_option("--camera", aa.camera, "Camera JSON (default: first training camera)");

    EvalArgs ea;
    CLI::App* evl = app.add_subcommand("eval", "PSNR/SSIM against a dataset, as JSON");
    evl->add_option("--ckpt", ea.ckpt)->required();
    evl->add_option("--data", ea.data)->required();
    evl->add_flag("--holdout", ea.holdout, "Only the dataset's held-out frames");

    std::vector<const char*> argv;
    for (const std::string& s : args) argv.push_back(s.c_str());
    if (argv.empty()) argv.push_back("stga");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitArgument;
    }

    try {
        if (threads > 0) set_thread_count(threads);
        if (synth->parsed()) return cmd_synth(sa, err);
        if (trn->parsed()) return cmd_train(ta, err);
        if (rnd->parsed()) return cmd_render(ra, err);
        if (anim->parsed()) return cmd_animate(aa, err);
        if (evl->parsed()) return cmd_eval(ea, out, err);
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << '\n';
        return kExitArgument;
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitArgument;
}

}  // namespace stga
