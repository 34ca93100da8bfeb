#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "ngpull/checkpoint.hpp"
#include "ngpull/io.hpp"
#include "ngpull/mesher.hpp"
#include "ngpull/metrics.hpp"
#include "ngpull/point_cloud.hpp"
#include "ngpull/trainer.hpp"
#include "ngpull/version.hpp"

namespace ngp {

using json = nlohmann::json;

struct RunConfig {
    // paths
    std::string input;
    std::string output_mesh = "mesh.obj";
    std::string checkpoint_path;
    std::string loss_log_path;
    std::string manifest_path;
    std::string points_format = "auto";  // auto | xyz | ply

    double margin = 0.9;
    TrainConfig train;

    // extraction
    int grid_res = 256;
    double iso = 0.0;
    int chunk = 65536;

    // evaluation
    std::size_t eval_samples = 100000;
    double metric_scale = 1.0;

    int threads = 0;  // 0 = all cores

    bool no_progressive = false;
    bool no_uniform_samples = false;

    std::string stem() const {
        const auto dot = output_mesh.find_last_of('.');
        return dot == std::string::npos ? output_mesh : output_mesh.substr(0, dot);
    }
    std::string checkpoint_or_default() const {
        return checkpoint_path.empty() ? stem() + ".ngpm" : checkpoint_path;
    }
    std::string loss_log_or_default() const {
        return loss_log_path.empty() ? stem() + "_loss.csv" : loss_log_path;
    }
    std::string manifest_or_default() const {
        return manifest_path.empty() ? stem() + "_manifest.json" : manifest_path;
    }
};

// Resolve the ablation toggles into the training config. `initial_explicit`
// marks whether the user pinned initial_resolution themselves; --no-progressive
// with an explicit mismatch is a configuration error rather than a silent fix.
inline void apply_ablation_flags(RunConfig& cfg, bool initial_explicit) {
    if (cfg.no_progressive) {
        if (initial_explicit && cfg.train.initial_resolution != cfg.train.final_resolution)
            throw std::invalid_argument(
                "--no-progressive requires initial_resolution == final_resolution");
        cfg.train.initial_resolution = cfg.train.final_resolution;
        cfg.train.stage_iters.clear();
    }
    if (cfg.no_uniform_samples) cfg.train.sampler.uniform_fraction = 0.0;
}

namespace detail {

inline std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class StageTimer {
public:
    void start(const std::string& name) {
        name_ = name;
        begin_ = std::chrono::steady_clock::now();
    }
    void stop() {
        const auto end = std::chrono::steady_clock::now();
        seconds_[name_] = std::chrono::duration<double>(end - begin_).count();
    }
    const std::map<std::string, double>& seconds() const { return seconds_; }

private:
    std::string name_;
    std::chrono::steady_clock::time_point begin_;
    std::map<std::string, double> seconds_;
};

template <typename Fn>
auto run_stage(StageTimer& timer, const std::string& name, Fn&& fn) {
    timer.start(name);
    try {
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            timer.stop();
        } else {
            auto result = fn();
            timer.stop();
            return result;
        }
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("stage " + name + ": " + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error("stage " + name + ": " + e.what());
    }
}

}  // namespace detail

inline json to_json(const SamplerConfig& s) {
    return {{"per_point_queries", s.per_point_queries},
            {"density_k", s.density_k},
            {"uniform_fraction", s.uniform_fraction}};
}

inline void from_json_obj(const json& j, SamplerConfig& s) {
    s.per_point_queries = j.value("per_point_queries", s.per_point_queries);
    s.density_k = j.value("density_k", s.density_k);
    s.uniform_fraction = j.value("uniform_fraction", s.uniform_fraction);
}

inline json to_json(const TrainConfig& c) {
    return {{"total_iters", c.total_iters},
            {"stage_iters", c.stage_iters},
            {"initial_resolution", c.initial_resolution},
            {"final_resolution", c.final_resolution},
            {"channels", c.channels},
            {"hidden", c.hidden},
            {"lr_decoder", c.lr_decoder},
            {"lr_triplane", c.lr_triplane},
            {"adam_beta1", c.adam.beta1},
            {"adam_beta2", c.adam.beta2},
            {"adam_eps", c.adam.eps},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"sampler", to_json(c.sampler)},
            {"init_radius", c.init_radius},
            {"triplane_init_std", c.triplane_init_std},
            {"analytical_gradients", c.analytical_gradients}};
}

inline void from_json_obj(const json& j, TrainConfig& c) {
    c.total_iters = j.value("total_iters", c.total_iters);
    c.stage_iters = j.value("stage_iters", c.stage_iters);
    c.initial_resolution = j.value("initial_resolution", c.initial_resolution);
    c.final_resolution = j.value("final_resolution", c.final_resolution);
    c.channels = j.value("channels", c.channels);
    c.hidden = j.value("hidden", c.hidden);
    c.lr_decoder = j.value("lr_decoder", c.lr_decoder);
    c.lr_triplane = j.value("lr_triplane", c.lr_triplane);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("sampler")) from_json_obj(j.at("sampler"), c.sampler);
    c.init_radius = j.value("init_radius", c.init_radius);
    c.triplane_init_std = j.value("triplane_init_std", c.triplane_init_std);
    c.analytical_gradients = j.value("analytical_gradients", c.analytical_gradients);
}

inline json transform_to_json(const NormalizationTransform& t) {
    return {{"center", {t.center.x, t.center.y, t.center.z}}, {"scale", t.scale}};
}

inline NormalizationTransform transform_from_json(const json& j) {
    NormalizationTransform t;
    if (j.contains("center")) {
        t.center = {j["center"][0].get<double>(), j["center"][1].get<double>(),
                    j["center"][2].get<double>()};
    }
    t.scale = j.value("scale", 1.0);
    return t;
}

struct ReconstructOutcome {
    double final_loss = 0.0;
    std::size_t mesh_vertices = 0;
    std::size_t mesh_triangles = 0;
    bool diverged = false;
};

inline std::vector<Vec3d> load_points_any(const std::string& path, const std::string& format) {
    if (format == "xyz") return load_points(path, PointFormat::xyz);
    if (format == "ply") return load_points(path, PointFormat::ply);
    return load_points(path);
}

inline void write_loss_csv(const std::string& path, const std::vector<LossSample>& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write loss log '" + path + "'");
    out << "iter,loss,stage,resolution\n";
    for (const auto& s : history) {
        const bool logged = (s.iter + 1) % 100 == 0 || s.iter + 1 == static_cast<int>(history.size());
        if (!logged) continue;
        out << s.iter + 1 << ',' << detail::format_g17(s.loss) << ',' << s.stage << ',' << s.resolution
            << '\n';
    }
}

inline ReconstructOutcome run_reconstruct(const RunConfig& cfg, std::ostream& log = std::cerr) {
    detail::StageTimer timer;
    ReconstructOutcome outcome;
    const int threads = resolve_threads(cfg.threads);

    auto raw = detail::run_stage(timer, "load", [&] { return load_points_any(cfg.input, cfg.points_format); });
    auto cloud = detail::run_stage(timer, "normalize", [&] { return normalize(raw, cfg.margin); });

    std::vector<Vec3f> train_points;
    train_points.reserve(cloud.size());
    for (const auto& p : cloud.points) train_points.push_back(p.cast<float>());

    auto result = detail::run_stage(timer, "train", [&] {
        return train<float>(train_points, cfg.train, threads, [&](const LossSample& s) {
            if ((s.iter + 1) % 100 == 0)
                log << "iter " << s.iter + 1 << "/" << cfg.train.total_iters << "  loss "
                    << s.loss << "  res " << s.resolution << "\n";
        });
    });

    json echo;
    echo["config"] = to_json(cfg.train);
    echo["transform"] = transform_to_json(cloud.transform);
    echo["iter"] = result.history.empty() ? 0 : result.history.back().iter + 1;
    echo["margin"] = cfg.margin;

    detail::run_stage(timer, "save_checkpoint", [&] {
        save_checkpoint(result.model, result.adam_decoder, result.adam_triplane, echo.dump(),
                        cfg.checkpoint_or_default());
    });
    detail::run_stage(timer, "save_loss_log", [&] { write_loss_csv(cfg.loss_log_or_default(), result.history); });

    if (result.diverged) {
        throw std::runtime_error("stage train: loss became non-finite at iteration " +
                                 std::to_string(result.diverged_at) +
                                 "; checkpoint of last finite state saved to " +
                                 cfg.checkpoint_or_default());
    }

    auto grid = detail::run_stage(timer, "evaluate_grid",
                                  [&] { return evaluate_grid(result.model, cfg.grid_res, cfg.chunk, threads); });
    auto unit_mesh = detail::run_stage(timer, "marching_cubes", [&] { return marching_cubes(grid, cfg.iso); });
    auto world_mesh = detail::run_stage(timer, "denormalize",
                                        [&] { return denormalize_mesh(unit_mesh, cloud.transform); });
    detail::run_stage(timer, "save_mesh", [&] { save_mesh(world_mesh, cfg.output_mesh); });

    outcome.final_loss = result.history.empty() ? 0.0 : result.history.back().loss;
    outcome.mesh_vertices = world_mesh.vertices.size();
    outcome.mesh_triangles = world_mesh.triangles.size();

    json manifest;
    manifest["command"] = "reconstruct";
    manifest["version"] = kVersion;
    manifest["input"] = cfg.input;
    manifest["outputs"] = {{"mesh", cfg.output_mesh},
                           {"checkpoint", cfg.checkpoint_or_default()},
                           {"loss_log", cfg.loss_log_or_default()}};
    manifest["config"] = to_json(cfg.train);
    manifest["margin"] = cfg.margin;
    manifest["grid_res"] = cfg.grid_res;
    manifest["iso"] = cfg.iso;
    manifest["seed"] = cfg.train.seed;
    manifest["threads"] = threads;
    manifest["transform"] = transform_to_json(cloud.transform);
    manifest["final_loss"] = outcome.final_loss;
    manifest["mesh"] = {{"vertices", outcome.mesh_vertices}, {"triangles", outcome.mesh_triangles}};
    manifest["timings_seconds"] = timer.seconds();
    std::ofstream mf(cfg.manifest_or_default());
    if (!mf) throw std::runtime_error("cannot write manifest '" + cfg.manifest_or_default() + "'");
    mf << manifest.dump(2) << '\n';

    return outcome;
}

// Mesh inputs are sampled on the surface; bare point files are used as-is.
inline std::vector<Vec3d> eval_side_points(const std::string& path, std::size_t samples,
                                           std::uint64_t seed) {
    const bool is_ply = path.size() >= 4 && path.compare(path.size() - 4, 4, ".ply") == 0;
    const bool is_obj = path.size() >= 4 && path.compare(path.size() - 4, 4, ".obj") == 0;
    if (is_obj || (is_ply && ply_has_faces(path))) {
        const auto mesh = load_mesh(path);
        return sample_mesh_surface(mesh, samples, seed);
    }
    return load_points(path);
}

inline MetricReport run_eval(const std::string& path_a, const std::string& path_b,
                             std::size_t samples, std::uint64_t seed, double scale) {
    // one seed for both sides: evaluating a mesh against itself is exactly zero
    const auto a = eval_side_points(path_a, samples, seed);
    const auto b = eval_side_points(path_b, samples, seed);
    MetricReport report = compute_metrics(a, b);
    report.seed = seed;
    report.scale = scale;
    return report;
}

// Both emitters share one formatting pass so the numbers printed are
// byte-identical between the JSON and the table.
inline json metric_report_json(const MetricReport& r) {
    json j;
    j["convention"] = "cd_l2 = mean_sq(A->B) + mean_sq(B->A); cd_l1 = mean(A->B) + mean(B->A); "
                      "hd = max of directed maxima; d_c/d_h directed A->B";
    j["scale"] = r.scale;
    j["count_a"] = r.count_a;
    j["count_b"] = r.count_b;
    j["seed"] = r.seed;
    j["cd_l2"] = detail::format_g17(r.cd_l2 * r.scale);
    j["cd_l1"] = detail::format_g17(r.cd_l1 * r.scale);
    j["hd"] = detail::format_g17(r.hd * r.scale);
    j["d_c"] = detail::format_g17(r.d_c * r.scale);
    j["d_h"] = detail::format_g17(r.d_h * r.scale);
    return j;
}

inline std::string metric_report_text(const MetricReport& r) {
    const json j = metric_report_json(r);
    std::string out;
    out += "# chamfer/hausdorff report (scale " + detail::format_g17(r.scale) + ")\n";
    out += "# cd_l2 = mean_sq(A->B) + mean_sq(B->A); cd_l1 = mean(A->B) + mean(B->A)\n";
    out += "# hd = max of directed maxima; d_c/d_h = directed mean/max A->B\n";
    auto row = [&](const char* name) {
        std::string line = name;
        line.resize(8, ' ');
        line += j[name].get<std::string>();
        line += '\n';
        return line;
    };
    out += row("cd_l2");
    out += row("cd_l1");
    out += row("hd");
    out += row("d_c");
    out += row("d_h");
    return out;
}

struct QueryOutcome {
    std::size_t count = 0;
    double queries_per_second = 0.0;
};

inline QueryOutcome run_query(const std::string& checkpoint_path, const std::string& points_path,
                              const std::string& out_path, bool bench, int threads_req) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const int threads = resolve_threads(threads_req);

    NormalizationTransform transform;
    if (!ckpt.config_echo.empty()) {
        const json echo = json::parse(ckpt.config_echo, nullptr, false);
        if (!echo.is_discarded() && echo.contains("transform"))
            transform = transform_from_json(echo["transform"]);
    }

    const auto world = load_points(points_path);
    std::vector<Vec3f> queries;
    queries.reserve(world.size());
    for (const auto& p : world) queries.push_back(transform.to_unit(p).cast<float>());

    std::vector<float> values(queries.size());
    const auto begin = std::chrono::steady_clock::now();
    phi_batch(ckpt.model, queries.data(), queries.size(), values.data(), threads);
    const auto end = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(end - begin).count();

    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write '" + out_path + "'");
    for (const float v : values) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
        out << buf << '\n';
    }

    QueryOutcome outcome;
    outcome.count = queries.size();
    outcome.queries_per_second = secs > 0 ? static_cast<double>(queries.size()) / secs : 0.0;
    if (bench)
        std::cerr << "bench: " << outcome.count << " queries in " << secs << " s -> "
                  << outcome.queries_per_second << " queries/s\n";
    return outcome;
}

struct ExtractConfig {
    std::string checkpoint_path;
    std::string output_mesh = "mesh.obj";
    int grid_res = 256;
    double iso = 0.0;
    int chunk = 65536;
    int threads = 0;
    bool world_space = true;
};

inline void run_extract(const ExtractConfig& cfg) {
    const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    const int threads = resolve_threads(cfg.threads);
    const auto grid = evaluate_grid(ckpt.model, cfg.grid_res, cfg.chunk, threads);
    TriangleMesh mesh = marching_cubes(grid, cfg.iso);
    if (cfg.world_space && !ckpt.config_echo.empty()) {
        const json echo = json::parse(ckpt.config_echo, nullptr, false);
        if (!echo.is_discarded() && echo.contains("transform"))
            mesh = denormalize_mesh(mesh, transform_from_json(echo["transform"]));
    }
    save_mesh(mesh, cfg.output_mesh);
}

}  // namespace ngp
