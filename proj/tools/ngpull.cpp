#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ngpull/pipeline.hpp"
#include "ngpull/version.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"Tri-plane signed-distance reconstruction from unoriented point clouds"};
    app.set_version_flag("--version", std::string(ngp::kVersion));
    app.require_subcommand(1);

    // ---- reconstruct -------------------------------------------------------
    ngp::RunConfig rc;
    auto* rec = app.add_subcommand("reconstruct", "Fit an SDF to a point cloud and extract a mesh");
    rec->set_config("--config", "", "Key=value config file; command-line flags win");
    rec->add_option("-i,--input", rc.input, "Input point cloud (.xyz or .ply)")->required();
    rec->add_option("-o,--output", rc.output_mesh, "Output mesh path (.obj or .ply)");
    rec->add_option("--checkpoint", rc.checkpoint_path, "Checkpoint output (default: <output stem>.ngpm)");
    rec->add_option("--loss-log", rc.loss_log_path, "Loss CSV output (default: <output stem>_loss.csv)");
    rec->add_option("--manifest", rc.manifest_path, "Run manifest output (default: <output stem>_manifest.json)");
    rec->add_option("--format", rc.points_format, "Input format: auto|xyz|ply")
        ->check(CLI::IsMember({"auto", "xyz", "ply"}));
    rec->add_option("--margin", rc.margin, "Normalization margin in (0,1]");
    rec->add_option("--iters", rc.train.total_iters, "Total optimization iterations");
    rec->add_option("--stage-iters", rc.train.stage_iters, "Iterations at which the tri-plane doubles");
    auto* initial_opt = rec->add_option("--initial-res", rc.train.initial_resolution, "Starting tri-plane resolution");
    rec->add_option("--final-res", rc.train.final_resolution, "Final tri-plane resolution");
    rec->add_option("--channels", rc.train.channels, "Tri-plane feature channels");
    rec->add_option("--hidden", rc.train.hidden, "Decoder hidden width");
    rec->add_option("--lr-decoder", rc.train.lr_decoder, "Decoder learning rate");
    rec->add_option("--lr-triplane", rc.train.lr_triplane, "Tri-plane learning rate");
    rec->add_option("--batch-size", rc.train.batch_size, "Query-target pairs per step");
    rec->add_option("--seed", rc.train.seed, "Random seed")->envname("NGP_SEED");
    rec->add_option("--queries-per-point", rc.train.sampler.per_point_queries, "Gaussian queries per cloud point per epoch");
    rec->add_option("--density-k", rc.train.sampler.density_k, "Neighbor rank used for the sampling variance");
    rec->add_option("--uniform-fraction", rc.train.sampler.uniform_fraction, "Fraction of each batch drawn uniformly in the cube");
    rec->add_option("--init-radius", rc.train.init_radius, "Radius of the sphere the fresh decoder approximates");
    rec->add_option("--grid-res", rc.grid_res, "Marching cubes grid resolution");
    rec->add_option("--iso", rc.iso, "Iso value for extraction");
    rec->add_option("--chunk", rc.chunk, "Grid evaluation chunk size");
    rec->add_option("--threads", rc.threads, "Worker threads (0 = all cores)");
    rec->add_flag("--analytical-grad", rc.train.analytical_gradients,
                  "Ablation: pull along in-cell analytic gradients instead of the probe stencil");
    rec->add_flag("--no-progressive", rc.no_progressive, "Ablation: train at the final resolution only");
    rec->add_flag("--no-uniform-samples", rc.no_uniform_samples, "Ablation: drop the uniform cube samples");

    // ---- eval --------------------------------------------------------------
    std::string eval_a, eval_b, eval_json, eval_text;
    std::size_t eval_samples = 100000;
    std::uint64_t eval_seed = 42;
    double eval_scale = 1.0;
    auto* ev = app.add_subcommand("eval", "Chamfer/Hausdorff metrics between meshes or point sets");
    ev->add_option("a", eval_a, "First mesh (.obj/.ply) or point set (.xyz/.ply)")->required();
    ev->add_option("b", eval_b, "Second mesh or point set")->required();
    ev->add_option("--samples", eval_samples, "Surface samples per mesh side");
    ev->add_option("--seed", eval_seed, "Sampling seed")->envname("NGP_SEED");
    ev->add_option("--scale", eval_scale, "Multiplier applied to reported values (e.g. 1e3)");
    ev->add_option("--json", eval_json, "Write the report as JSON to this path");
    ev->add_option("--text", eval_text, "Write the aligned text report to this path");

    // ---- query -------------------------------------------------------------
    std::string q_ckpt, q_points, q_out = "distances.txt";
    bool q_bench = false;
    int q_threads = 0;
    auto* qu = app.add_subcommand("query", "Evaluate the learned signed distances at given points");
    qu->add_option("--checkpoint", q_ckpt, "Model checkpoint (.ngpm)")->required();
    qu->add_option("--points", q_points, "World-space query points (.xyz or .ply)")->required();
    qu->add_option("-o,--output", q_out, "Output file, one signed distance per line");
    qu->add_flag("--bench", q_bench, "Report query throughput");
    qu->add_option("--threads", q_threads, "Worker threads (0 = all cores)");

    // ---- extract -----------------------------------------------------------
    ngp::ExtractConfig xc;
    bool unit_space = false;
    auto* ex = app.add_subcommand("extract", "Run marching cubes on a checkpointed model");
    ex->add_option("--checkpoint", xc.checkpoint_path, "Model checkpoint (.ngpm)")->required();
    ex->add_option("-o,--output", xc.output_mesh, "Output mesh path (.obj or .ply)");
    ex->add_option("--grid-res", xc.grid_res, "Marching cubes grid resolution");
    ex->add_option("--iso", xc.iso, "Iso value for extraction");
    ex->add_option("--chunk", xc.chunk, "Grid evaluation chunk size");
    ex->add_option("--threads", xc.threads, "Worker threads (0 = all cores)");
    ex->add_flag("--unit-space", unit_space, "Keep the mesh in normalized [-1,1]^3 coordinates");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (rec->parsed()) {
        ngp::apply_ablation_flags(rc, initial_opt->count() > 0);
        rc.train.validate();
        const auto outcome = ngp::run_reconstruct(rc);
        std::cout << "final loss " << outcome.final_loss << "; mesh " << outcome.mesh_vertices
                  << " vertices / " << outcome.mesh_triangles << " triangles -> " << rc.output_mesh
                  << "\n";
    } else if (ev->parsed()) {
        const auto report = ngp::run_eval(eval_a, eval_b, eval_samples, eval_seed, eval_scale);
        const std::string text = ngp::metric_report_text(report);
        const std::string jdump = ngp::metric_report_json(report).dump(2) + "\n";
        if (!eval_json.empty()) {
            std::ofstream out(eval_json);
            if (!out) throw std::runtime_error("cannot write '" + eval_json + "'");
            out << jdump;
        }
        if (!eval_text.empty()) {
            std::ofstream out(eval_text);
            if (!out) throw std::runtime_error("cannot write '" + eval_text + "'");
            out << text;
        }
        std::cout << text;
    } else if (qu->parsed()) {
        const auto outcome = ngp::run_query(q_ckpt, q_points, q_out, q_bench, q_threads);
        std::cout << outcome.count << " signed distances -> " << q_out << "\n";
    } else if (ex->parsed()) {
        xc.world_space = !unit_space;
        ngp::run_extract(xc);
        std::cout << "mesh -> " << xc.output_mesh << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
