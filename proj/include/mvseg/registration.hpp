#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "mvseg/mixture.hpp"

namespace mvseg {

/// ICM schedule and gradient-ascent settings.
struct OptimizerConfig {
    int em_iters_per_block = 5;
    int transform_steps_per_block = 3;
    int icm_blocks = 20;
    double step_size_affine = 0.5;  // mm of displacement-equivalent motion per step
    double step_size_ffd = 0.5;     // mm, largest control-point move per step
    double ll_rel_tol = 1e-6;
    double grad_norm_tol = 1e-8;    // per-voxel gradient norm below which a transform is left alone
    int max_halvings = 10;
    /// Converts affine matrix entries to mm for step normalization; <= 0
    /// selects half the domain diagonal.
    double affine_length_scale = 0.0;
    bool optimize_affine = true;
    bool optimize_ffd = true;
    /// freeze_images[i] keeps F_i fixed; missing entries mean "optimize".
    std::vector<bool> freeze_images;
    bool freeze_map = false;

    void validate() const;
    bool image_frozen(std::size_t i) const { return i < freeze_images.size() && freeze_images[i]; }
};

/// dLL/d(parameters) of one transform: affine block (see AffineTransform::parameters) then FFD block.
struct GradientVector {
    std::array<double, AffineTransform::kParameterCount> affine{};
    std::vector<double> ffd;

    std::vector<double> flat() const;
    double norm() const;
    bool all_finite() const;
};

/// Gradient of the log-likelihood with respect to image i's transform.
GradientVector grad_image_transform(const MvmmParams& params, const Scene& scene, const SceneTransforms& transforms,
                                    std::size_t image);
/// Gradient with respect to the prior-map transform; differentiates the
/// normalized prior including its normalizer.
GradientVector grad_map_transform(const MvmmParams& params, const Scene& scene, const SceneTransforms& transforms);

struct AscentResult {
    TransformStack transform;
    double value = 0.0;
    bool improved = false;
    int halvings = 0;
};

using TransformObjective = std::function<double(const TransformStack&)>;

/// Normalized ascent direction: the affine block scaled to `step_size_affine`
/// (2-norm, matrix entries in mm via the length scale) and the FFD block so
/// that the largest control-point move is `step_size_ffd`.
GradientVector ascent_direction(const GradientVector& gradient, const OptimizerConfig& config, double length_scale);

/// One safeguarded step: try the normalized direction, halving up to
/// `max_halvings` times until `objective` exceeds `current_value`. A zero
/// gradient leaves the transform unchanged.
AscentResult ascend(const TransformStack& transform, const GradientVector& gradient, const OptimizerConfig& config,
                    const TransformObjective& objective, double current_value, double length_scale = 1.0);

struct TraceEntry {
    std::string phase;  // "init", "em", "image<i>", "map"
    int block = 0;
    int iteration = 0;
    double log_likelihood = 0.0;
    double gradient_norm = 0.0;
    int halvings = 0;
};

struct IcmResult {
    MvmmParams params;
    SceneTransforms transforms;
    PosteriorField posteriors;
    std::vector<TraceEntry> trace;
    std::vector<std::string> warnings;
    std::size_t reseed_count = 0;
    int blocks_run = 0;
};

/// Alternates EM sweeps (transforms fixed) with safeguarded gradient ascent
/// on each unfrozen F_i and then F_m (parameters fixed).
IcmResult icm_fit(const Scene& scene, const MvmmParams& initial_params, const SceneTransforms& initial_transforms,
                  const OptimizerConfig& config);

struct SegmentationOutcome {
    IcmResult fit;
    Classification classes;
};

/// init_params -> icm_fit -> classify, starting from `initial_transforms`.
SegmentationOutcome segment_scene(const Scene& scene, const TissueConfig& tissue, const OptimizerConfig& optimizer,
                                  const SceneTransforms& initial_transforms);

}  // namespace mvseg
