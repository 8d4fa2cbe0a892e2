#pragma once

// Random problem builders shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mvseg/mixture.hpp"
#include "mvseg/phantom.hpp"
#include "mvseg/quantify.hpp"
#include "mvseg/registration.hpp"

namespace testsupport {

using namespace mvseg;
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Parameters with spread-out means so no likelihood underflows.
inline MvmmParams random_params(Rng& rng, const TissueConfig& config, double value_scale = 100.0)
{
    MvmmParams p;
    p.config = config;
    double total = 0.0;
    for (std::size_t k = 0; k < config.label_count; ++k) {
        p.label_proportions.push_back(uniform(rng, 0.2, 1.0));
        total += p.label_proportions.back();
    }
    for (auto& v : p.label_proportions) {
        v /= total;
    }
    for (std::size_t i = 0; i < config.image_count(); ++i) {
        p.sigma_floor.push_back(1e-3);
        auto& per_image = p.components.emplace_back();
        for (std::size_t k = 0; k < config.label_count; ++k) {
            auto& per_label = per_image.emplace_back();
            double tau_total = 0.0;
            for (int c = 0; c < config.components[i][k]; ++c) {
                per_label.push_back({uniform(rng, 0.2, 1.0), uniform(rng, 0.1, 0.9) * value_scale,
                                     uniform(rng, 0.08, 0.25) * value_scale});
                tau_total += per_label.back().tau;
            }
            for (auto& g : per_label) {
                g.tau /= tau_total;
            }
        }
    }
    p.validate();
    return p;
}

inline TissueConfig random_config(Rng& rng, std::size_t images, std::size_t labels, int max_components = 3)
{
    TissueConfig c;
    c.label_count = labels;
    c.components.assign(images, std::vector<int>(labels, 1));
    for (auto& row : c.components) {
        for (auto& v : row) {
            v = uniform_int(rng, 1, max_components);
        }
    }
    c.validate();
    return c;
}

/// Samples with intensities in [0, scale] and strictly positive prior rows summing to 1.
inline WarpedSamples random_samples(Rng& rng, std::size_t n, std::size_t images, std::size_t labels,
                                    double scale = 100.0)
{
    WarpedSamples s;
    s.voxel_count = n;
    s.intensity.assign(images, std::vector<double>(n));
    s.prior.assign(labels, std::vector<double>(n));
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t i = 0; i < images; ++i) {
            s.intensity[i][x] = uniform(rng, 0.0, scale);
        }
        double total = 0.0;
        for (std::size_t k = 0; k < labels; ++k) {
            s.prior[k][x] = uniform(rng, 0.05, 1.0);
            total += s.prior[k][x];
        }
        for (std::size_t k = 0; k < labels; ++k) {
            s.prior[k][x] /= total;
        }
    }
    return s;
}

/// Sum of a few low-frequency sinusoids: smooth at the voxel scale.
inline ScalarVolume smooth_random_image(Rng& rng, const VolumeGrid& grid, double offset, double amplitude)
{
    struct Wave {
        Vec3 k;
        double phase;
        double amp;
    };
    std::vector<Wave> waves;
    for (int w = 0; w < 4; ++w) {
        Vec3 k(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        k *= uniform(rng, 0.15, 0.45) / k.norm();
        waves.push_back({k, uniform(rng, 0.0, 2.0 * std::numbers::pi), uniform(rng, 0.3, 1.0)});
    }
    ScalarVolume img(grid);
    for (std::size_t x = 0; x < img.values.size(); ++x) {
        const Vec3 p = grid.world(x);
        double v = 0.0;
        for (const auto& w : waves) {
            v += w.amp * std::sin(w.k.dot(p) + w.phase);
        }
        img.values[x] = offset + amplitude * v / 4.0;
    }
    return img;
}

/// Smooth two-channel prior with channel values in [0.1, 0.9].
inline PriorMap smooth_random_prior(Rng& rng, const VolumeGrid& grid)
{
    PriorMap prior;
    prior.grid = grid;
    prior.label_names = {"background", "wall"};
    ScalarVolume wall = smooth_random_image(rng, grid, 0.5, 0.8);
    for (auto& v : wall.values) {
        v = std::clamp(v, 0.1, 0.9);
    }
    ScalarVolume bg(grid);
    for (std::size_t x = 0; x < bg.values.size(); ++x) {
        bg.values[x] = 1.0 - wall.values[x];
    }
    prior.channels = {bg, wall};
    return prior;
}

/// Near-identity affine plus a random FFD on a lattice covering `domain`.
inline TransformStack random_transform(Rng& rng, const VolumeGrid& domain, double control_spacing, double ffd_scale,
                                       double affine_scale = 0.03, double translation_scale = 0.5)
{
    TransformStack t = TransformStack::identity(domain, control_spacing);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            t.affine.matrix(r, c) += uniform(rng, -affine_scale, affine_scale);
        }
        t.affine.translation[r] = uniform(rng, -translation_scale, translation_scale);
    }
    for (auto& d : t.ffd.displacements) {
        d = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)) * ffd_scale;
    }
    return t;
}

inline std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("mvseg_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testsupport
