#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "dain/dataset.hpp"
#include "dain/error.hpp"
#include "dain/image.hpp"
#include "dain/rng.hpp"
#include "dain/tensor.hpp"

namespace dain {

/**
 * Synthetic view-dependent material dataset.
 *
 * Each class is a procedural material: a band-limited albedo texture, a
 * relief height field, and a specular lobe. Classes come in pairs sharing
 * texture band and color while differing in lobe width and relief, so their
 * single-view appearance is similar but their angular behaviour is not.
 * Views are rendered per (theta, delta, illumination) with Lambertian +
 * specular shading, view-dependent foreshortening/rotation of the image
 * frame, and relief-induced parallax. Everything derives from the seed.
 */
struct SynthConfig {
    int classes = 8;
    int instances_per_class = 12;
    int image_size = 36;
    int conditions = 2;
    std::uint64_t seed = 0;
    bool control_class = false;  // class 0 rendered flat and purely diffuse
    std::filesystem::path out_dir;
    int workers = 1;
};

namespace synth {

struct Wave {
    double kx, ky, phase, amp;
};

struct Recipe {
    std::vector<Wave> albedo, height;
    double color[3];
    double k_spec, lobe, relief;
};

struct Light {
    double dir[3];
    double intensity;
};

/// Illumination conditions: fixed light directions and intensities.
inline Light condition_light(int idx) {
    static const double table[4][3] = {
        {55.0, 30.0, 1.00}, {40.0, 140.0, 0.85}, {65.0, 250.0, 1.10}, {45.0, 330.0, 0.75}};
    const double* row = table[idx % 4];
    const double e = row[0] * M_PI / 180.0, a = row[1] * M_PI / 180.0;
    return Light{{std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e)}, row[2]};
}

inline std::vector<Wave> make_waves(RngState& rng, double freq_center, int components) {
    std::vector<Wave> waves(static_cast<std::size_t>(components));
    double amp_sum = 0.0;
    for (auto& w : waves) {
        const double f = freq_center * rng.uniform_in(0.7, 1.3);
        const double ang = rng.uniform_in(0.0, 2.0 * M_PI);
        w.kx = f * M_PI * std::cos(ang);
        w.ky = f * M_PI * std::sin(ang);
        w.phase = rng.uniform_in(0.0, 2.0 * M_PI);
        w.amp = rng.uniform_in(0.5, 1.0);
        amp_sum += w.amp;
    }
    for (auto& w : waves) w.amp /= amp_sum;  // field stays in [-1, 1]
    return waves;
}

inline double field_value(const std::vector<Wave>& waves, double x, double y) {
    double v = 0.0;
    for (const auto& w : waves) v += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return v;
}

inline void field_with_gradient(const std::vector<Wave>& waves, double x, double y, double& v, double& gx,
                                double& gy) {
    v = gx = gy = 0.0;
    for (const auto& w : waves) {
        const double arg = w.kx * x + w.ky * y + w.phase;
        v += w.amp * std::sin(arg);
        const double c = w.amp * std::cos(arg);
        gx += c * w.kx;
        gy += c * w.ky;
    }
}

inline Recipe class_recipe(const SynthConfig& cfg, int class_idx, RngState master) {
    const int pair = class_idx / 2;
    const int variant = class_idx % 2;
    RngState pair_rng = master.split(1000 + pair);
    RngState class_rng = master.split(2000 + class_idx);

    Recipe r;
    const double freq = (1.6 + 1.1 * pair) * pair_rng.uniform_in(0.95, 1.05);
    for (int c = 0; c < 3; ++c) r.color[c] = pair_rng.uniform_in(0.35, 0.75);

    // Variants share appearance statistics but differ in angular behaviour:
    // a wide, weak lobe over gentle relief versus a narrow lobe over strong
    // relief.
    if (variant == 0) {
        r.k_spec = 0.22 * class_rng.uniform_in(0.9, 1.1);
        r.lobe = 6.0 * class_rng.uniform_in(0.85, 1.15);
        r.relief = 0.15 * class_rng.uniform_in(0.8, 1.2);
    } else {
        r.k_spec = 0.30 * class_rng.uniform_in(0.9, 1.1);
        r.lobe = 48.0 * class_rng.uniform_in(0.85, 1.15);
        r.relief = 0.55 * class_rng.uniform_in(0.8, 1.2);
    }
    if (cfg.control_class && class_idx == 0) {
        r.k_spec = 0.0;
        r.relief = 0.0;
    }

    RngState wave_rng = class_rng.split(7);
    r.albedo = make_waves(wave_rng, freq, 10);
    r.height = make_waves(wave_rng, freq * 0.6, 8);
    return r;
}

inline Recipe instance_recipe(const SynthConfig& cfg, int class_idx, int instance_idx, RngState master) {
    Recipe r = class_recipe(cfg, class_idx, master);
    RngState inst_rng = master.split(3000 + class_idx).split(static_cast<std::uint64_t>(instance_idx));

    // Instances perturb the class material and redraw texture phases.
    for (auto& w : r.albedo) w.phase = inst_rng.uniform_in(0.0, 2.0 * M_PI);
    for (auto& w : r.height) w.phase = inst_rng.uniform_in(0.0, 2.0 * M_PI);
    for (double& c : r.color) c = std::clamp(c + inst_rng.uniform_in(-0.05, 0.05), 0.05, 0.95);
    r.k_spec *= inst_rng.uniform_in(0.9, 1.1);
    r.lobe *= inst_rng.uniform_in(0.9, 1.1);
    r.relief *= inst_rng.uniform_in(0.9, 1.1);
    if (cfg.control_class && class_idx == 0) {
        r.k_spec = 0.0;
        r.relief = 0.0;
    }
    return r;
}

/// Render one view. theta tilts the camera along the image y axis
/// (foreshortening); phi = delta rotates the viewing azimuth.
inline Tensor render_view(const Recipe& r, int size, double theta_deg, double phi_deg, const Light& light) {
    const double theta = theta_deg * M_PI / 180.0;
    const double phi = phi_deg * M_PI / 180.0;
    const double ct = std::cos(theta), tt = std::tan(theta);
    const double cp = std::cos(phi), sp = std::sin(phi);
    const double parallax_gain = 0.08;

    // view direction in world space
    const double v[3] = {-std::sin(theta) * sp, std::sin(theta) * cp, ct};
    const double* l = light.dir;
    double half[3] = {l[0] + v[0], l[1] + v[1], l[2] + v[2]};
    const double hn = std::sqrt(half[0] * half[0] + half[1] * half[1] + half[2] * half[2]);
    for (double& h : half) h /= hn;

    Tensor img({3, size, size});
    const double c = (size - 1) / 2.0;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double ux = (x - c) / c;
            const double uy = (y - c) / c;
            // image -> surface: undo foreshortening, then the azimuth roll
            const double fx = ux, fy = uy / ct;
            double px = cp * fx + sp * fy;
            double py = -sp * fx + cp * fy;

            // relief parallax along the tilt axis
            const double h0 = field_value(r.height, px, py);
            px += h0 * r.relief * parallax_gain * tt * (-sp);
            py += h0 * r.relief * parallax_gain * tt * cp;

            double alb, hval, hgx, hgy;
            alb = field_value(r.albedo, px, py);
            field_with_gradient(r.height, px, py, hval, hgx, hgy);

            double n[3] = {-r.relief * hgx, -r.relief * hgy, 1.0};
            const double nn = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
            for (double& nv : n) nv /= nn;

            const double ndotl = std::max(0.0, n[0] * l[0] + n[1] * l[1] + n[2] * l[2]);
            const double ndoth = std::max(0.0, n[0] * half[0] + n[1] * half[1] + n[2] * half[2]);
            const double spec = r.k_spec * std::pow(ndoth, r.lobe);
            const double albedo01 = 0.55 + 0.45 * alb;

            for (int ch = 0; ch < 3; ++ch) {
                const double val = light.intensity * (r.color[ch] * albedo01 * ndotl + spec);
                img(ch, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
            }
        }
    }
    return img;
}

inline std::string class_dir_name(int c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "class%02d", c);
    return buf;
}

inline std::string instance_dir_name(int c, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class%02d_i%02d", c, i);
    return buf;
}

inline std::string view_file_name(int theta, int delta) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "theta%+03d_delta%d.png", theta, delta);
    return buf;
}

} // namespace synth

/**
 * Materialize the synthetic dataset tree under cfg.out_dir (same layout
 * scan_gtos reads) and return its index. Bitwise deterministic for a fixed
 * seed; instances render in parallel when cfg.workers > 1.
 */
inline DatasetIndex generate_synthetic(const SynthConfig& cfg) {
    if (cfg.classes < 2) throw ArgumentError("generate_synthetic: need at least 2 classes");
    if (cfg.instances_per_class < 4) throw ArgumentError("generate_synthetic: need at least 4 instances");
    if (cfg.image_size < 16) throw ArgumentError("generate_synthetic: image_size must be >= 16");
    if (cfg.conditions < 1) throw ArgumentError("generate_synthetic: need at least 1 condition");

    const RngState master(cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);

    struct Job {
        int class_idx, instance_idx;
    };
    std::vector<Job> jobs;
    for (int c = 0; c < cfg.classes; ++c)
        for (int i = 0; i < cfg.instances_per_class; ++i) jobs.push_back({c, i});

    for (const Job& job : jobs)
        for (int t = 0; t < cfg.conditions; ++t) {
            char cond[16];
            std::snprintf(cond, sizeof(cond), "cond%d", t);
            std::filesystem::create_directories(cfg.out_dir / synth::class_dir_name(job.class_idx) /
                                                synth::instance_dir_name(job.class_idx, job.instance_idx) /
                                                cond);
        }

    auto render_instance = [&](const Job& job) {
        const synth::Recipe recipe = synth::instance_recipe(cfg, job.class_idx, job.instance_idx, master);
        const auto inst_dir = cfg.out_dir / synth::class_dir_name(job.class_idx) /
                              synth::instance_dir_name(job.class_idx, job.instance_idx);
        for (int t = 0; t < cfg.conditions; ++t) {
            char cond[16];
            std::snprintf(cond, sizeof(cond), "cond%d", t);
            const synth::Light light = synth::condition_light(t);
            for (int theta : kBaseThetas)
                for (int delta : {0, 5}) {
                    const Tensor img = synth::render_view(recipe, cfg.image_size, theta, delta, light);
                    png_write(inst_dir / cond / synth::view_file_name(theta, delta), img);
                }
        }
    };

    const int workers = std::max(1, cfg.workers);
    if (workers == 1) {
        for (const Job& job : jobs) render_instance(job);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1))
                    render_instance(jobs[j]);
            });
        for (auto& th : pool) th.join();
    }

    return scan_gtos(cfg.out_dir);
}

} // namespace dain
