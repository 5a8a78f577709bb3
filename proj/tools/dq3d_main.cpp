// Command-line front end: scene simulation, detection runs, the fixed-vs-
// depth-guided ablation, AP tables, and top-down SVG plots.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dq3d/pipeline.hpp"
#include "dq3d/serialization.hpp"
#include "dq3d/simworld.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitInternal = 4;

struct CommonArgs {
    std::string config_path;
    std::string scene_path;
    std::string out_path;
    uint64_t seed = 0;
    bool seed_set = false;
    int frames = 0;
    bool frames_set = false;
};

dq3d::RunConfig load_run_config(const std::string& path) {
    if (path.empty()) {
        dq3d::RunConfig cfg;  // compiled-in defaults
        return cfg;
    }
    return dq3d::run_config_from_json(dq3d::load_json(path));
}

dq3d::Scene load_scene_file(const std::string& path) { return dq3d::scene_from_json(dq3d::load_json(path)); }

void report_timings(const dq3d::SequenceReport& report) {
    double total = 0.0;
    for (const auto& f : report.frames) total += f.timing_ms;
    std::fprintf(stderr, "timing: %zu frames in %.1f ms (%.1f ms/frame)\n", report.frames.size(), total,
                 report.frames.empty() ? 0.0 : total / static_cast<double>(report.frames.size()));
}

int cmd_simulate(const CommonArgs& args) {
    dq3d::RunConfig cfg = load_run_config(args.config_path);
    if (args.seed_set) cfg.scene_seed = args.seed;
    if (args.frames_set) cfg.sim.frame_count = args.frames;
    const dq3d::Scene scene = dq3d::generate_scene(cfg.sim, cfg.scene_seed);
    dq3d::save_text(args.out_path, dq3d::dump_json(dq3d::scene_to_json(scene)));
    std::fprintf(stderr, "scene: %zu objects, %zu frames -> %s\n", scene.objects.size(),
                 scene.frames.size(), args.out_path.c_str());
    return kExitOk;
}

int cmd_detect(const CommonArgs& args) {
    dq3d::RunConfig cfg = load_run_config(args.config_path);
    if (args.seed_set) cfg.pipeline.weights_seed = args.seed;
    const dq3d::Scene scene = load_scene_file(args.scene_path);
    const dq3d::SequenceReport report = dq3d::run_sequence(scene, cfg.pipeline);
    dq3d::save_text(args.out_path, dq3d::dump_json(dq3d::report_to_json(report, cfg.pipeline)));
    report_timings(report);
    std::fprintf(stderr, "detect: mAP %.4f (%s) -> %s\n", report.ap.map,
                 report.ap.map_defined ? "defined" : "undefined", args.out_path.c_str());
    return kExitOk;
}

int cmd_ablate(const CommonArgs& args) {
    dq3d::RunConfig cfg = load_run_config(args.config_path);
    if (args.seed_set) cfg.pipeline.weights_seed = args.seed;
    const dq3d::Scene scene = load_scene_file(args.scene_path);
    const dq3d::AblationReport report = dq3d::run_ablation(scene, cfg.pipeline);
    const std::string csv = dq3d::ablation_csv(report);
    dq3d::save_text(args.out_path, csv);
    std::cout << csv;
    report_timings(report.fixed_arm);
    report_timings(report.depth_guided_arm);
    return kExitOk;
}

int cmd_eval(const CommonArgs& args) {
    // --report lands in args.scene_path; both are "the input file" slot.
    const dq3d::json j = dq3d::load_json(args.scene_path);
    dq3d::detail::check_schema(j, "dq3d-report");
    std::vector<dq3d::EvalDetection> dets;
    std::vector<dq3d::EvalGt> gts;
    try {
        for (const auto& frame : j.at("frames")) {
            const int f = frame.at("frame_index").get<int>();
            for (const auto& d : frame.at("detections")) {
                dq3d::EvalDetection det;
                det.frame = f;
                const auto scores = d.at("class_scores").get<std::vector<double>>();
                det.class_id = 0;
                det.score = 0.0;
                for (size_t c = 0; c < scores.size(); ++c)
                    if (scores[c] > det.score) {
                        det.score = scores[c];
                        det.class_id = static_cast<int>(c);
                    }
                det.center = dq3d::detail::point_from(d.at("center"));
                dets.push_back(det);
            }
            for (const auto& g : frame.at("gts")) {
                dq3d::EvalGt gt;
                gt.frame = f;
                gt.class_id = g.at("class_id").get<int>();
                gt.center = dq3d::detail::point_from(g.at("center"));
                gts.push_back(gt);
            }
        }
        dq3d::EvalConfig eval_cfg;
        eval_cfg.thresholds = j.at("config").at("ap_thresholds").get<std::vector<double>>();
        eval_cfg.num_classes = j.at("config").at("num_classes").get<int>();
        const dq3d::ApResult ap = dq3d::mean_ap(dets, gts, eval_cfg);
        const std::string csv = dq3d::ap_table_csv(ap, eval_cfg.thresholds);
        if (!args.out_path.empty()) dq3d::save_text(args.out_path, csv);
        std::cout << csv;
    } catch (const dq3d::json::exception& e) {
        throw dq3d::SchemaError(std::string("report: ") + e.what());
    }
    return kExitOk;
}

int cmd_plot_bev(const CommonArgs& args, int frame_index) {
    const dq3d::json j = dq3d::load_json(args.scene_path);
    dq3d::detail::check_schema(j, "dq3d-report");
    try {
        const auto& frames = j.at("frames");
        if (frame_index < 0 || static_cast<size_t>(frame_index) >= frames.size())
            throw dq3d::ConfigError("frame", "index " + std::to_string(frame_index) + " out of range (0.." +
                                                 std::to_string(frames.size() - 1) + ")");
        const auto& frame = frames[static_cast<size_t>(frame_index)];
        std::vector<dq3d::Point3D> refs;
        for (const auto& p : frame.at("ref_points")) refs.push_back(dq3d::detail::point_from(p));
        std::vector<dq3d::GtBox> gts;
        for (const auto& g : frame.at("gts")) {
            dq3d::GtBox gt;
            gt.class_id = g.at("class_id").get<int>();
            gt.center = dq3d::detail::point_from(g.at("center"));
            gts.push_back(gt);
        }
        const auto roi_arr = j.at("config").at("roi");
        dq3d::RoiBounds roi = dq3d::detail::roi_from(roi_arr);
        dq3d::save_text(args.out_path, dq3d::bev_svg(refs, gts, roi, frame_index));
        std::fprintf(stderr, "plot: frame %d, %zu refs, %zu gts -> %s\n", frame_index, refs.size(),
                     gts.size(), args.out_path.c_str());
    } catch (const dq3d::json::exception& e) {
        throw dq3d::SchemaError(std::string("report: ") + e.what());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dq3d: depth-guided multi-view 3D detection, desk scale"};
    app.require_subcommand(1);

    CommonArgs args;
    int frame_index = 0;

    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic scene file");
    simulate->add_option("--config", args.config_path, "Config file (JSON)");
    simulate->add_option("--out", args.out_path, "Output scene path")->required();
    simulate->add_option("--seed", args.seed, "Scene seed override")->each([&](const std::string&) {
        args.seed_set = true;
    });
    simulate->add_option("--frames", args.frames, "Frame count override")->each([&](const std::string&) {
        args.frames_set = true;
    });

    auto* detect = app.add_subcommand("detect", "Run the detection pipeline over a scene");
    detect->add_option("--config", args.config_path, "Config file (JSON)");
    detect->add_option("--scene", args.scene_path, "Scene file")->required();
    detect->add_option("--out", args.out_path, "Output report path")->required();
    detect->add_option("--seed", args.seed, "Weights seed override")->each([&](const std::string&) {
        args.seed_set = true;
    });

    auto* ablate = app.add_subcommand("ablate", "Compare fixed and depth-guided query arms");
    ablate->add_option("--config", args.config_path, "Config file (JSON)");
    ablate->add_option("--scene", args.scene_path, "Scene file")->required();
    ablate->add_option("--out", args.out_path, "Output CSV path")->required();
    ablate->add_option("--seed", args.seed, "Weights seed override")->each([&](const std::string&) {
        args.seed_set = true;
    });

    auto* eval = app.add_subcommand("eval", "Recompute the AP table from a report");
    eval->add_option("--report", args.scene_path, "Report file")->required();
    eval->add_option("--out", args.out_path, "Output CSV path");

    auto* plot = app.add_subcommand("plot-bev", "Render a top-down SVG of one frame");
    plot->add_option("--report", args.scene_path, "Report file")->required();
    plot->add_option("--frame", frame_index, "Frame index");
    plot->add_option("--out", args.out_path, "Output SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return kExitConfig;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(args);
        if (detect->parsed()) return cmd_detect(args);
        if (ablate->parsed()) return cmd_ablate(args);
        if (eval->parsed()) return cmd_eval(args);
        if (plot->parsed()) return cmd_plot_bev(args, frame_index);
    } catch (const dq3d::ConfigError& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return kExitConfig;
    } catch (const dq3d::FileError& e) {
        std::fprintf(stderr, "error: io: %s\n", e.what());
        return kExitIo;
    } catch (const dq3d::SchemaError& e) {
        std::fprintf(stderr, "error: io: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return kExitInternal;
    }
    return kExitOk;
}
