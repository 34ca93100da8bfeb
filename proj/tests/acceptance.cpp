// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. The sphere fixture runs the full default configuration,
// so expect the whole suite to take tens of minutes on a small machine.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "ngpull/mesher.hpp"
#include "ngpull/metrics.hpp"
#include "ngpull/pipeline.hpp"
#include "ngpull/trainer.hpp"
#include "support/mesh_distance.hpp"
#include "support/oracles.hpp"

using namespace ngp;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int criteria_failed = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s -- %s\n", pass ? "PASS" : "FAIL", index, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++criteria_failed;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: finite differences of the batch loss match the
//    reverse pass on every tri-plane entry and decoder parameter (1e-3
//    relative), with decoder and interpolation isolation checks at 1e-5.
void criterion_gradients() {
    const auto t0 = Clock::now();
    Rng rng(18);
    double worst_full = 0.0;
    long triples = 0;
    bool ok = true;

    for (int trial = 0; trial < 12; ++trial) {
        const int n = 4 + static_cast<int>(rng.uniform_index(5));
        const int c = 2 + static_cast<int>(rng.uniform_index(3));
        const int h = 3 + static_cast<int>(rng.uniform_index(6));
        auto model = test::random_model<double>(n, c, h, 5000 + static_cast<std::uint64_t>(trial));

        QueryBatch<double> batch;
        for (int i = 0; i < 3; ++i) {
            batch.queries.push_back(rng.uniform_vec3<double>(-0.95, 0.95));
            batch.targets.push_back(rng.uniform_vec3<double>(-0.9, 0.9));
            batch.target_index.push_back(i);
            batch.origin.push_back(QueryOrigin::gaussian);
        }

        TriPlane<double> pg(n, c);
        auto dg = model.decoder.make_grads();
        loss_and_gradients(model, batch, pg, dg, 1);

        auto loss_of = [&]() {
            TriPlane<double> tmp_pg(n, c);
            auto tmp_dg = model.decoder.make_grads();
            return loss_and_gradients(model, batch, tmp_pg, tmp_dg, 1);
        };

        for (int p = 0; p < 3; ++p) {
            auto& plane = model.triplane.planes[static_cast<std::size_t>(p)];
            for (std::size_t i = 0; i < plane.size(); ++i) {
                const double saved = plane[i];
                const double fd = test::central_diff4(
                    [&](double delta) {
                        plane[i] = saved + delta;
                        const double l = loss_of();
                        plane[i] = saved;
                        return l;
                    },
                    1e-3);
                const double got = pg.planes[static_cast<std::size_t>(p)][i];
                ++triples;
                if (std::max(std::abs(fd), std::abs(got)) > 1e-7) {
                    const double err = test::rel_err(got, fd);
                    worst_full = std::max(worst_full, err);
                    if (err >= 1e-3) ok = false;
                }
            }
        }
        auto segs = model.decoder.param_segments();
        const auto gsegs = grad_segments(dg);
        for (std::size_t seg = 0; seg < segs.size(); ++seg) {
            for (std::size_t i = 0; i < segs[seg].second; ++i) {
                double* p = segs[seg].first + i;
                const double saved = *p;
                const double fd = test::central_diff4(
                    [&](double delta) {
                        *p = saved + delta;
                        model.decoder.sync_transposed();
                        const double l = loss_of();
                        *p = saved;
                        return l;
                    },
                    1e-3);
                model.decoder.sync_transposed();
                const double got = gsegs[seg].first[i];
                ++triples;
                if (std::max(std::abs(fd), std::abs(got)) > 1e-7) {
                    const double err = test::rel_err(got, fd);
                    worst_full = std::max(worst_full, err);
                    if (err >= 1e-3) ok = false;
                }
            }
        }
    }

    // decoder in isolation at 64-bit, 1e-5
    double worst_dec = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        auto model = test::random_model<double>(4, 2, 4, 800 + static_cast<std::uint64_t>(trial));
        auto& dec = model.decoder;
        std::vector<double> f = {rng.normal(), rng.normal()};
        DecoderTape<double> tape;
        decoder_forward(dec, f.data(), 1, tape);
        auto grads = dec.make_grads();
        avec<double> d1, d2;
        const double upstream = 1.3;
        decoder_backward(dec, tape, &upstream, &grads, static_cast<double*>(nullptr), d1, d2);

        auto segs = dec.param_segments();
        const auto gsegs = grad_segments(grads);
        for (std::size_t seg = 0; seg < segs.size(); ++seg) {
            for (std::size_t i = 0; i < segs[seg].second; ++i) {
                double* p = segs[seg].first + i;
                const double saved = *p;
                const double fd = test::central_diff4(
                    [&](double delta) {
                        *p = saved + delta;
                        dec.sync_transposed();
                        DecoderTape<double> t2;
                        decoder_forward(dec, f.data(), 1, t2);
                        *p = saved;
                        return t2.y[0] * upstream;
                    },
                    1e-4);
                dec.sync_transposed();
                const double got = gsegs[seg].first[i];
                if (std::max(std::abs(fd), std::abs(got)) > 1e-7)
                    worst_dec = std::max(worst_dec, test::rel_err(got, fd));
            }
        }
    }

    // interpolation backward in isolation at 64-bit, 1e-5
    double worst_interp = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto tp = random_triplane<double>(6, 3, 1.0, 600 + static_cast<std::uint64_t>(trial));
        const Vec3d q = rng.uniform_vec3<double>(-1.0, 1.0);
        const Vec3d up{rng.normal(), rng.normal(), rng.normal()};
        avec<double> feature(3);
        TriFootprint<double> fps;
        gather_features_into(tp, q, feature.data(), fps);
        TriPlane<double> grads(6, 3);
        const double upstream[3] = {up.x, up.y, up.z};
        accumulate_plane_grads(grads, fps, upstream);

        for (int p = 0; p < 3; ++p) {
            const auto& fp = fps[static_cast<std::size_t>(p)];
            for (int k = 0; k < 4; ++k) {
                const std::size_t flat = static_cast<std::size_t>(fp.corner[static_cast<std::size_t>(k)]) * 3 +
                                         static_cast<std::size_t>(trial % 3);
                auto& entry = tp.planes[static_cast<std::size_t>(p)][flat];
                const double saved = entry;
                const double fd = test::central_diff4(
                    [&](double delta) {
                        entry = saved + delta;
                        avec<double> f2(3);
                        TriFootprint<double> fp2;
                        gather_features_into(tp, q, f2.data(), fp2);
                        entry = saved;
                        return f2[0] * up.x + f2[1] * up.y + f2[2] * up.z;
                    },
                    1e-4);
                const double got = grads.planes[static_cast<std::size_t>(p)][flat];
                if (std::max(std::abs(fd), std::abs(got)) > 1e-9)
                    worst_interp = std::max(worst_interp, test::rel_err(got, fd));
            }
        }
    }

    ok = ok && worst_dec < 1e-5 && worst_interp < 1e-5;
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "%ld parameter checks; worst rel err: full loss %.2e (tol 1e-3), decoder %.2e, "
                  "interpolation %.2e (tol 1e-5); %.1f s",
                  triples, worst_full, worst_dec, worst_interp, seconds_since(t0));
    report(1, "reverse-mode gradients match finite differences", ok, detail);
}

// ---------------------------------------------------------------------------
// 2. Numerical-gradient exactness on affine and quadratic fields.
void criterion_numgrad_exactness() {
    const auto t0 = Clock::now();
    Rng rng(77);
    double worst = 0.0;

    for (int trial = 0; trial < 5; ++trial) {
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0), c = rng.uniform(-2.0, 2.0);
        const auto model = test::linear_field_model<double>(9, a, b, c, rng.uniform(-0.5, 0.5));
        for (int i = 0; i < 20; ++i) {
            const Vec3d q = rng.uniform_vec3<double>(-0.9, 0.9);
            const Vec3d g = numerical_gradient(model, q);
            worst = std::max({worst, std::abs(g.x - a), std::abs(g.y - b), std::abs(g.z - c)});
        }
    }

    const auto quad = test::quadratic_x_model<double>(9);
    for (double x : {-0.75, -0.25, 0.0, 0.25, 0.5}) {
        const Vec3d g = numerical_gradient(quad, Vec3d{x, 0.0, 0.0});
        worst = std::max({worst, std::abs(g.x - 2.0 * x), std::abs(g.y), std::abs(g.z)});
    }

    char detail[128];
    std::snprintf(detail, sizeof(detail), "worst absolute error %.2e (tol 1e-6); %.1f s", worst,
                  seconds_since(t0));
    report(2, "central differences exact on affine/quadratic fields", worst < 1e-6, detail);
}

// ---------------------------------------------------------------------------
// 3 + 7. Full sphere reconstruction with the default configuration, then the
//        expansion-stability checks on its loss history.
struct SphereRunResult {
    std::vector<LossSample> history;
    std::vector<int> stage_iters;
    bool ok3 = false;
};

SphereRunResult criterion_sphere_reconstruction(int threads) {
    SphereRunResult out;
    const auto t0 = Clock::now();

    const auto world_points = test::sphere_cloud<double>(5000, 0.5, 2024);
    const auto cloud = normalize(world_points, 0.9);
    std::vector<Vec3f> train_points;
    train_points.reserve(cloud.size());
    for (const auto& p : cloud.points) train_points.push_back(p.cast<float>());

    TrainConfig cfg;  // defaults: 20k iters, stages 3k/8k/12k, 4->32, C32 H128, batch 5000
    const auto result = train(train_points, cfg, threads, [&](const LossSample& s) {
        if ((s.iter + 1) % 1000 == 0)
            std::fprintf(stderr, "  sphere run: iter %d loss %.5g res %d\n", s.iter + 1, s.loss,
                         s.resolution);
    });
    out.history = result.history;
    out.stage_iters = cfg.stage_iters;

    if (result.diverged) {
        report(3, "sphere reconstruction (default config)", false, "training diverged");
        return out;
    }

    const auto grid = evaluate_grid(result.model, 128, 1 << 16, threads);
    const auto unit_mesh = marching_cubes(grid, 0.0);
    const auto mesh = denormalize_mesh(unit_mesh, cloud.transform);

    double min_r = 1e30, max_r = 0.0;
    for (const auto& v : mesh.vertices) {
        const double r = v.norm();
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
    }

    // two-sided CD_l1 against the analytic sphere: mesh samples measured
    // exactly to the sphere, sphere samples measured exactly to the mesh
    const auto mesh_samples = sample_mesh_surface(mesh, 10000, 99);
    double d_mesh_to_sphere = 0.0;
    for (const auto& p : mesh_samples) d_mesh_to_sphere += std::abs(p.norm() - 0.5);
    d_mesh_to_sphere /= static_cast<double>(mesh_samples.size());

    const auto sphere_samples = test::sphere_cloud<double>(10000, 0.5, 42);
    test::MeshDistance mesh_dist(mesh);
    double d_sphere_to_mesh = 0.0;
    for (const auto& p : sphere_samples) d_sphere_to_mesh += mesh_dist.distance(p);
    d_sphere_to_mesh /= static_cast<double>(sphere_samples.size());

    const double cd_l1 = d_mesh_to_sphere + d_sphere_to_mesh;
    const bool radii_ok = min_r > 0.47 && max_r < 0.53;
    const double final_loss = result.history.back().loss;
    out.ok3 = cd_l1 < 0.01 && radii_ok && !mesh.triangles.empty() && final_loss < 0.02;

    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "CD_l1 %.5f (tol 0.01; directed %.5f / %.5f), vertex radii [%.4f, %.4f] "
                  "(tol 0.47..0.53), %zu triangles, final loss %.4g (tol 0.02); %.0f s",
                  cd_l1, d_mesh_to_sphere, d_sphere_to_mesh, min_r, max_r, mesh.triangles.size(),
                  final_loss, seconds_since(t0));
    report(3, "sphere reconstruction (default config)", out.ok3, detail);
    return out;
}

void criterion_expansion_stability(const SphereRunResult& run, int total_iters) {
    if (run.history.size() < static_cast<std::size_t>(total_iters)) {
        report(7, "progressive expansion stability", false, "sphere history unavailable");
        return;
    }
    auto mean_range = [&](int begin, int end) {
        double acc = 0.0;
        for (int t = begin; t < end; ++t) acc += run.history[static_cast<std::size_t>(t)].loss;
        return acc / std::max(1, end - begin);
    };

    bool ok = true;
    std::string detail;
    for (std::size_t si = 0; si < run.stage_iters.size(); ++si) {
        const int s = run.stage_iters[si];
        const int stage_end = si + 1 < run.stage_iters.size() ? run.stage_iters[si + 1] : total_iters;
        const double pre = mean_range(s - 500, s);
        const double post = mean_range(s, s + 500);
        const double spike = mean_range(s, s + 100);
        const double settled = mean_range(s + 400, std::min(s + 900, stage_end));
        const double tail = mean_range(stage_end - 500, stage_end);

        // the expansion may bump the smoothed loss by at most 2x, and after
        // a <= 500-iteration transient the fit must not degrade: the loss
        // settles at or below the immediate post-expansion level and is
        // non-increasing through the rest of the stage
        const bool jump_ok = post <= 2.0 * pre;
        const bool recovered = settled <= spike * 1.02 && tail <= post * 1.05;
        ok = ok && jump_ok && recovered;
        char buf[192];
        std::snprintf(buf, sizeof(buf),
                      "[stage %d: pre %.3g post %.3g (%.2fx) spike %.3g settled %.3g tail %.3g"
                      " below-pre:%s] ",
                      s, pre, post, post / pre, spike, settled, tail, tail <= pre ? "yes" : "no");
        detail += buf;
    }
    report(7, "progressive expansion stability", ok, detail);
}

// ---------------------------------------------------------------------------
// 4. Ablation ordering on a reduced sphere task.
void criterion_ablation_ordering(int threads) {
    const auto t0 = Clock::now();
    const auto world_points = test::sphere_cloud<double>(2000, 0.5, 7);
    const auto cloud = normalize(world_points, 0.9);
    std::vector<Vec3f> pts;
    for (const auto& p : cloud.points) pts.push_back(p.cast<float>());

    TrainConfig base;
    base.total_iters = 4000;
    base.stage_iters = {1000, 2000, 3000};
    base.initial_resolution = 4;
    base.final_resolution = 32;
    base.batch_size = 1000;
    base.seed = 5;

    auto final_loss = [](const TrainResult<float>& r) {
        const std::size_t n = r.history.size();
        const std::size_t window = std::min<std::size_t>(100, n);
        double acc = 0.0;
        for (std::size_t i = n - window; i < n; ++i) acc += r.history[i].loss;
        return acc / static_cast<double>(window);
    };

    const auto full = train(pts, base, threads);

    TrainConfig noprog = base;
    noprog.stage_iters = {};
    noprog.initial_resolution = noprog.final_resolution;
    const auto flat = train(pts, noprog, threads);

    TrainConfig analytic = base;
    analytic.analytical_gradients = true;
    const auto ana = train(pts, analytic, threads);

    const double l_full = final_loss(full);
    const double l_flat = flat.diverged ? std::numeric_limits<double>::infinity() : final_loss(flat);
    const double l_ana = ana.diverged ? std::numeric_limits<double>::infinity() : final_loss(ana);

    const bool ok = !full.diverged && l_full < l_flat && l_ana >= 10.0 * l_full;
    char detail[256];
    std::snprintf(detail, sizeof(detail),
                  "final loss: full %.4g < no-progressive %.4g; analytical %.4g (%.0fx full, need "
                  ">= 10x); %.0f s",
                  l_full, l_flat, l_ana, l_ana / l_full, seconds_since(t0));
    report(4, "ablation ordering (progressive, numerical gradients)", ok, detail);
}

// ---------------------------------------------------------------------------
// 5. Query throughput is resolution-independent (O(1) interpolation).
void criterion_throughput(int threads) {
    const auto t0 = Clock::now();
    Rng rng(11);
    std::vector<Vec3f> queries(300000);
    for (auto& q : queries) q = rng.uniform_vec3<float>(-1.0, 1.0);
    std::vector<float> values(queries.size());

    auto qps_for = [&](int resolution) {
        auto model = test::random_model<float>(resolution, 32, 128, 3);
        model.epsilon = SdfModel<float>::epsilon_for_resolution(resolution);
        phi_batch(model, queries.data(), queries.size(), values.data(), threads);  // warm-up
        double best = 0.0;
        for (int rep = 0; rep < 3; ++rep) {
            const auto tb = Clock::now();
            phi_batch(model, queries.data(), queries.size(), values.data(), threads);
            best = std::max(best, static_cast<double>(queries.size()) / seconds_since(tb));
        }
        return best;
    };

    const double qps16 = qps_for(16);
    const double qps64 = qps_for(64);
    const double ratio = std::max(qps16, qps64) / std::min(qps16, qps64);
    char detail[160];
    std::snprintf(detail, sizeof(detail), "N=16: %.3g q/s, N=64: %.3g q/s, ratio %.3f (tol < 1.25); %.0f s",
                  qps16, qps64, ratio, seconds_since(t0));
    report(5, "query throughput stable across resolutions", ratio < 1.25, detail);
}

// ---------------------------------------------------------------------------
// 6. Metric implementations equal brute force exactly.
void criterion_metric_equivalence() {
    const auto t0 = Clock::now();
    Rng rng(23);
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t na = 3 + rng.uniform_index(498);
        const std::size_t nb = 3 + rng.uniform_index(498);
        std::vector<Vec3d> a, b;
        for (std::size_t i = 0; i < na; ++i) a.push_back(rng.uniform_vec3<double>(-1.0, 1.0));
        for (std::size_t i = 0; i < nb; ++i) b.push_back(rng.uniform_vec3<double>(-1.0, 1.0));

        auto directed_ref = [](const std::vector<Vec3d>& from, const std::vector<Vec3d>& to) {
            double sum_sq = 0, sum = 0, mx = 0;
            for (const auto& p : from) {
                double bestd = std::numeric_limits<double>::max();
                for (const auto& q : to) bestd = std::min(bestd, squared_distance(p, q));
                sum_sq += bestd;
                const double d = std::sqrt(bestd);
                sum += d;
                mx = std::max(mx, d);
            }
            const double m = static_cast<double>(from.size());
            return std::array<double, 3>{sum_sq / m, sum / m, mx};
        };
        const auto ab = directed_ref(a, b);
        const auto ba = directed_ref(b, a);
        const auto got = compute_metrics(a, b);
        ok = ok && got.cd_l2 == ab[0] + ba[0] && got.cd_l1 == ab[1] + ba[1] &&
             got.hd == std::max(ab[2], ba[2]) && got.d_c == ab[1] && got.d_h == ab[2];
        ok = ok && chamfer_l2(a, b) == got.cd_l2 && chamfer_l1(a, b) == got.cd_l1 &&
             hausdorff(a, b) == got.hd;
    }
    char detail[96];
    std::snprintf(detail, sizeof(detail), "50 random pairs, exact equality on all five metrics; %.1f s",
                  seconds_since(t0));
    report(6, "metrics equal brute force exactly", ok, detail);
}

// ---------------------------------------------------------------------------
// 8. Byte-identical reruns through the CLI.
void criterion_determinism(const std::string& cli, const fs::path& work) {
    const auto t0 = Clock::now();
    if (cli.empty()) {
        report(8, "byte-identical reruns", false, "no --cli binary provided");
        return;
    }
    const fs::path cloud_path = work / "det_sphere.xyz";
    {
        const auto pts = test::sphere_cloud<double>(800, 0.5, 31);
        std::ofstream out(cloud_path);
        for (const auto& p : pts) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
    }
    const std::string flags =
        " --iters 600 --stage-iters 300 --initial-res 8 --final-res 16 --channels 16 --hidden 32"
        " --batch-size 512 --queries-per-point 10 --density-k 30 --grid-res 32 --threads 2 --seed 77";
    auto run_once = [&](const std::string& stem) {
        const std::string cmd = cli + " reconstruct -i " + cloud_path.string() + " -o " +
                                (work / (stem + ".obj")).string() + flags + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return status >= 0 ? WEXITSTATUS(status) : -1;
    };
    const int rc1 = run_once("det1");
    const int rc2 = run_once("det2");
    const std::string ck1 = slurp(work / "det1.ngpm"), ck2 = slurp(work / "det2.ngpm");
    const std::string lg1 = slurp(work / "det1_loss.csv"), lg2 = slurp(work / "det2_loss.csv");
    const bool ok = rc1 == 0 && rc2 == 0 && !ck1.empty() && ck1 == ck2 && !lg1.empty() && lg1 == lg2;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "exit codes %d/%d; checkpoint bytes %zu (equal: %s); loss log equal: %s; %.0f s", rc1,
                  rc2, ck1.size(), ck1 == ck2 ? "yes" : "no", lg1 == lg2 ? "yes" : "no",
                  seconds_since(t0));
    report(8, "byte-identical reruns", ok, detail);
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    fs::path work = "acceptance_work";
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--cli") cli = argv[i + 1];
        if (flag == "--workdir") work = argv[i + 1];
    }
    fs::create_directories(work);
    const int threads = hardware_threads();
    std::printf("acceptance suite: %d worker threads, workdir %s\n", threads, work.string().c_str());

    criterion_gradients();
    criterion_numgrad_exactness();
    criterion_metric_equivalence();
    criterion_throughput(threads);
    criterion_determinism(cli, work);
    criterion_ablation_ordering(threads);
    const auto sphere = criterion_sphere_reconstruction(threads);
    criterion_expansion_stability(sphere, 20000);

    std::printf("RESULT: %d/8 criteria passed\n", 8 - criteria_failed);
    return criteria_failed == 0 ? 0 : 1;
}
