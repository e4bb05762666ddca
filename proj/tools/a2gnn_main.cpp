#include "a2gnn/config.hpp"
#include "a2gnn/fixtures.hpp"
#include "a2gnn/log.hpp"
#include "a2gnn/pipeline.hpp"
#include "a2gnn/rng.hpp"
#include "a2gnn/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
    std::string config_path;
    bool has_seed = false;
    uint64_t seed = 0;
    int jobs = 1;
    bool force = false;
    bool strict_eq28 = false;
    bool global_edges = false;
};

// Config resolution: --config wins; otherwise <dataset>/config.json when it
// exists; otherwise defaults. CLI overrides are applied on top.
a2gnn::PipelineConfig resolve_config(const GlobalArgs& g, const std::string& dataset_dir) {
    a2gnn::PipelineConfig cfg;
    if (!g.config_path.empty()) {
        cfg = a2gnn::PipelineConfig::load(g.config_path);
    } else if (!dataset_dir.empty() && fs::exists(fs::path(dataset_dir) / "config.json")) {
        cfg = a2gnn::PipelineConfig::load((fs::path(dataset_dir) / "config.json").string());
        a2gnn::log_info("using " + (fs::path(dataset_dir) / "config.json").string());
    }
    if (g.has_seed) cfg.seed = g.seed;
    if (g.strict_eq28) cfg.strict_eq28 = true;
    if (g.global_edges) cfg.global_edges = true;
    return cfg;
}

a2gnn::RunOptions run_options(const GlobalArgs& g, bool stage1_only = false) {
    a2gnn::RunOptions o;
    o.force = g.force;
    o.jobs = g.jobs;
    o.stage1_only = stage1_only;
    return o;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Seed-label propagation over affinity-attention pixel graphs"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    GlobalArgs g;
    app.add_option("--config", g.config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", g.seed, "Override the config seed");
    app.add_option("--jobs", g.jobs, "Per-image parallelism")->check(CLI::PositiveNumber);
    app.add_flag("--force", g.force, "Recompute stages even when cached");
    app.add_flag("--strict-eq28", g.strict_eq28,
                 "Literal consistency-check keep rule (comparison mode)");
    app.add_flag("--global-edges", g.global_edges,
                 "Connect all node pairs when building graphs (<= 4096 nodes)");

    std::string dataset_dir, out_dir;
    std::string graphs_dir, labels_dir, boxes_dir, params_out, log_out;
    bool stage1_only = false;
    int n_fixtures = 20, fixture_images = 10, fixture_size = 32;
    double gc_step = 1e-5, gc_tol = 1e-4;

    auto add_dataset_out = [&](CLI::App* cmd) {
        cmd->add_option("--dataset", dataset_dir, "Dataset directory")->required();
        cmd->add_option("--out", out_dir, "Output directory")->required();
    };

    auto* cmd_seeds = app.add_subcommand("seeds", "Assemble, fuse and filter seed labels");
    add_dataset_out(cmd_seeds);
    auto* cmd_aff = app.add_subcommand("train-affinity", "Train the per-image pixel embedder");
    add_dataset_out(cmd_aff);
    auto* cmd_graph = app.add_subcommand("build-graph", "Convert images to weighted pixel graphs");
    add_dataset_out(cmd_graph);

    auto* cmd_train = app.add_subcommand("train-gnn", "Train the propagation network");
    cmd_train->add_option("--graphs", graphs_dir, "Directory of graph TNSR files")->required();
    cmd_train->add_option("--labels", labels_dir, "Directory of label PGMs")->required();
    cmd_train->add_option("--boxes", boxes_dir, "Directory of box JSONs")->required();
    cmd_train->add_option("--out", params_out, "Output parameter TNSR")->required();
    cmd_train->add_option("--log", log_out, "Training log (JSON lines)")->required();
    cmd_train->add_flag("--stage1-only", stage1_only, "Skip the second training stage");

    auto* cmd_infer = app.add_subcommand("infer", "Node probabilities from trained parameters");
    add_dataset_out(cmd_infer);
    auto* cmd_refine = app.add_subcommand("refine", "Upsample, CRF-refine and write pseudo labels");
    add_dataset_out(cmd_refine);
    auto* cmd_inst = app.add_subcommand("instances", "Split pseudo labels into per-box instances");
    add_dataset_out(cmd_inst);
    auto* cmd_eval = app.add_subcommand("eval", "Score pseudo labels against ground truth");
    add_dataset_out(cmd_eval);

    auto* cmd_pipe = app.add_subcommand("pipeline", "Run every stage end to end");
    add_dataset_out(cmd_pipe);
    cmd_pipe->add_flag("--stage1-only", stage1_only, "Skip the second training stage");

    auto* cmd_gc = app.add_subcommand("grad-check", "Verify analytic gradients on random fixtures");
    cmd_gc->add_option("--fixtures", n_fixtures, "Number of random fixtures");
    cmd_gc->add_option("--step", gc_step, "Central-difference step");
    cmd_gc->add_option("--tol", gc_tol, "Max relative error to accept");

    auto* cmd_fix = app.add_subcommand("gen-fixtures", "Emit the synthetic dataset");
    cmd_fix->add_option("--out", out_dir, "Output dataset directory")->required();
    cmd_fix->add_option("--images", fixture_images, "Number of images");
    cmd_fix->add_option("--size", fixture_size, "Image side length");

    CLI11_PARSE(app, argc, argv);
    g.has_seed = seed_opt->count() > 0;

    try {
        if (cmd_seeds->parsed()) {
            a2gnn::PipelineConfig cfg = resolve_config(g, dataset_dir);
            int failures = a2gnn::stage_seeds(dataset_dir, out_dir, cfg, run_options(g));
            if (failures > 0) {
                a2gnn::log_error("seeds: " + std::to_string(failures) + " image(s) failed");
                return 1;
            }
        } else if (cmd_aff->parsed()) {
            a2gnn::stage_train_affinity(dataset_dir, out_dir, resolve_config(g, dataset_dir),
                                        run_options(g));
        } else if (cmd_graph->parsed()) {
            a2gnn::stage_build_graph(dataset_dir, out_dir, resolve_config(g, dataset_dir),
                                     run_options(g));
        } else if (cmd_train->parsed()) {
            a2gnn::train_gnn_from_dirs(graphs_dir, labels_dir, boxes_dir, params_out, log_out,
                                       resolve_config(g, ""), stage1_only);
        } else if (cmd_infer->parsed()) {
            a2gnn::stage_infer(dataset_dir, out_dir, resolve_config(g, dataset_dir),
                               run_options(g));
        } else if (cmd_refine->parsed()) {
            a2gnn::stage_refine(dataset_dir, out_dir, resolve_config(g, dataset_dir),
                                run_options(g));
        } else if (cmd_inst->parsed()) {
            a2gnn::stage_instances(dataset_dir, out_dir, resolve_config(g, dataset_dir),
                                   run_options(g));
        } else if (cmd_eval->parsed()) {
            a2gnn::stage_eval(dataset_dir, out_dir, resolve_config(g, dataset_dir),
                              run_options(g));
        } else if (cmd_pipe->parsed()) {
            a2gnn::PipelineConfig cfg = resolve_config(g, dataset_dir);
            double miou =
                a2gnn::run_pipeline(dataset_dir, out_dir, cfg, run_options(g, stage1_only));
            if (miou >= 0.0) std::printf("miou %.6f\n", miou);
        } else if (cmd_gc->parsed()) {
            a2gnn::PipelineConfig cfg = resolve_config(g, "");
            double worst = 0.0;
            for (int i = 0; i < n_fixtures; ++i) {
                a2gnn::GradCheckFixture fx = a2gnn::random_gradcheck_fixture(
                    a2gnn::mix_seed(cfg.seed, static_cast<uint64_t>(i)));
                a2gnn::GradCheckOptions opts;
                opts.step = gc_step;
                opts.lambda1 = cfg.lambda1;
                opts.sigma_xy = cfg.sigma_xy;
                opts.sigma_rgb = cfg.sigma_rgb;
                double err = a2gnn::grad_check(fx.graph, fx.labels, fx.boxes, fx.params, opts);
                std::printf("fixture %02d: max relative error %.3e\n", i, err);
                worst = std::max(worst, err);
            }
            std::printf("worst %.3e (tolerance %.1e)\n", worst, gc_tol);
            return worst <= gc_tol ? 0 : 1;
        } else if (cmd_fix->parsed()) {
            a2gnn::FixtureConfig fcfg;
            fcfg.n_images = fixture_images;
            fcfg.width = fixture_size;
            fcfg.height = fixture_size;
            fcfg.seed = g.has_seed ? g.seed : 0;
            a2gnn::generate_fixtures(out_dir, fcfg);
        }
    } catch (const std::exception& e) {
        a2gnn::log_error(e.what());
        return 1;
    }
    return 0;
}
