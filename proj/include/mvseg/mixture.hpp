#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "mvseg/prior.hpp"
#include "mvseg/transform.hpp"
#include "mvseg/volume.hpp"

namespace mvseg {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Label set and number of Gaussian subtypes per (image, label).
struct TissueConfig {
    std::size_t label_count = 2;
    /// components[i][k] >= 1.
    std::vector<std::vector<int>> components;
    /// Image whose brightest wall component is the enhanced (scar) subtype.
    std::size_t scar_image = 0;
    std::int32_t wall_label = kWallLabel;

    std::size_t image_count() const { return components.size(); }
    void validate() const;

    /// Background 2 per image; wall 2 in image 0 (normal, enhanced), 1 in image 1.
    static TissueConfig two_image_default();
    /// Image-0-only restriction of two_image_default().
    static TissueConfig single_image_default();
};

struct GaussianComponent {
    double tau = 1.0;
    double mu = 0.0;
    double sigma = 1.0;
};

/// Model parameters: label proportions and per (image, label) Gaussian mixtures.
struct MvmmParams {
    TissueConfig config;
    std::vector<double> label_proportions;                          // pi_k, sums to 1
    std::vector<std::vector<std::vector<GaussianComponent>>> components;  // [i][k][c]
    std::vector<double> sigma_floor;                                // per image

    void validate() const;
    const GaussianComponent& component(std::size_t i, std::size_t k, std::size_t c) const
    {
        return components[i][k][c];
    }
    /// Component with the largest mean (lowest index on ties).
    std::size_t brightest_component(std::size_t i, std::size_t k) const;
};

/// Expectations of the hidden label / subtype indicators.
struct PosteriorField {
    std::size_t voxel_count = 0;
    std::vector<std::vector<double>> label_post;                            // [k][x]
    std::vector<std::vector<std::vector<std::vector<double>>>> component_post;  // [i][k][c][x]

    /// Throws ModelError if the sum-to-one or component-sum invariants fail.
    void validate(double tolerance = 1e-6) const;
};

/// Images and prior defined around the common space `domain`.
struct Scene {
    VolumeGrid domain;
    std::vector<ScalarVolume> images;
    PriorMap prior;
    double image_background = 0.0;
};

/// One transform per image (F_i) and one for the prior map (F_m).
struct SceneTransforms {
    std::vector<TransformStack> images;
    TransformStack map;

    static SceneTransforms identity(const Scene& scene, double control_spacing = 10.0);
};

/// Image intensities I_i(F_i(x)) and prior values A_k(F_m(x)) at every voxel of the domain.
struct WarpedSamples {
    std::size_t voxel_count = 0;
    std::vector<std::vector<double>> intensity;  // [i][x]
    std::vector<std::vector<double>> prior;      // [k][x]
};

/// F(x) for every voxel center of `domain`, using separable B-spline stencils.
std::vector<Vec3> warp_points(const VolumeGrid& domain, const TransformStack& t);
std::vector<double> warp_image(const ScalarVolume& image, const VolumeGrid& domain, const TransformStack& t,
                               double background = 0.0);
std::vector<std::vector<double>> warp_prior(const PriorMap& prior, const VolumeGrid& domain, const TransformStack& t);
WarpedSamples warp_scene(const Scene& scene, const SceneTransforms& transforms);

/// Normal density; throws ModelError if sigma is not positive or below `sigma_floor`.
double gaussian_pdf(double mu, double sigma, double v, double sigma_floor = 0.0);
/// d/dv of gaussian_pdf.
double gaussian_pdf_dv(double mu, double sigma, double v, double sigma_floor = 0.0);

/// pi_kx = A_k pi_k / sum_l A_l pi_l; the plain proportions (normalized) when every numerator is 0.
std::vector<double> voxel_prior(const MvmmParams& params, std::span<const double> prior_values);
std::vector<double> voxel_prior(const MvmmParams& params, const PriorMap& prior, const TransformStack& map_transform,
                                const Vec3& x);

/// Per-image tissue densities p(I_i | k) = sum_c tau_ikc Phi_ikc(v_i).
std::vector<double> image_tissue_pdf(const MvmmParams& params, std::span<const double> intensities, std::size_t k);
std::vector<double> image_tissue_pdf(const MvmmParams& params, const std::vector<ScalarVolume>& images,
                                     const std::vector<TransformStack>& transforms, const Vec3& x, std::size_t k,
                                     double background = 0.0);

/// Per-voxel log-domain evaluation of the model. Holds precomputed component
/// constants so the hot loops avoid repeated logs.
class MixtureEvaluator {
public:
    explicit MixtureEvaluator(const MvmmParams& params);

    struct Terms {
        std::vector<double> log_prior;          // log pi_kx, [k]
        std::vector<double> log_tissue;         // log p(I_i | k), [i * K + k]
        std::vector<double> log_weighted_comp;  // log tau_ikc Phi_ikc(v_i), flat component index
        std::vector<double> log_joint;          // log pi_kx + sum_i log p(I_i | k), [k]
        double log_lh = 0.0;                    // log LH(x), unfloored
    };

    void evaluate(std::span<const double> prior_values, std::span<const double> intensities, Terms& out) const;
    /// Gathers voxel x from warped samples and evaluates.
    void evaluate(const WarpedSamples& samples, std::size_t x, Terms& out) const;

    const MvmmParams& params() const { return *params_; }
    std::size_t component_count() const { return flat_.size(); }
    std::size_t flat_index(std::size_t i, std::size_t k, std::size_t c) const
    {
        return offsets_[i * params_->config.label_count + k] + c;
    }

    struct FlatComponent {
        std::size_t image;
        std::size_t label;
        std::size_t index;
        double log_tau;
        double mu;
        double inv_var;
        double log_norm;  // -log(sigma sqrt(2 pi))
    };
    const std::vector<FlatComponent>& components() const { return flat_; }

private:
    const MvmmParams* params_;
    std::vector<FlatComponent> flat_;
    std::vector<std::size_t> offsets_;
    std::vector<double> pi_;
    double pi_sum_ = 1.0;
};

/// Per-voxel likelihood floor applied before taking the log.
inline constexpr double kLikelihoodFloor = 1e-300;

double log_likelihood(const MvmmParams& params, const WarpedSamples& samples);
double log_likelihood(const MvmmParams& params, const Scene& scene, const SceneTransforms& transforms);

PosteriorField e_step(const MvmmParams& params, const WarpedSamples& samples);
PosteriorField e_step(const MvmmParams& params, const Scene& scene, const SceneTransforms& transforms);

struct MStepReport {
    struct Reseed {
        std::size_t image;
        std::size_t label;
        std::size_t component;
    };
    std::vector<Reseed> reseeded;
};

/// Weighted-MLE updates of tau, mu, sigma and the MM fixed-point update of pi
/// with the prior normalizer frozen at `previous`.
MvmmParams m_step(const PosteriorField& posteriors, const WarpedSamples& samples, const MvmmParams& previous,
                  MStepReport* report = nullptr);
MvmmParams m_step(const PosteriorField& posteriors, const Scene& scene, const SceneTransforms& transforms,
                  const MvmmParams& previous, MStepReport* report = nullptr);

/// Variance floor per image: 1e-4 x intensity range (1e-4 if the image is constant).
std::vector<double> sigma_floors(const std::vector<ScalarVolume>& images);

/// Argmax-prior assignment, then per (image, label) equal-count intensity
/// slices seed the components: mean of each slice, pooled std / C, uniform tau.
MvmmParams init_params(const WarpedSamples& samples, const TissueConfig& config, std::span<const double> floors);
MvmmParams init_params(const Scene& scene, const SceneTransforms& transforms, const TissueConfig& config);

struct Classification {
    LabelVolume labels;
    LabelVolume scar;
};

/// Argmax label per voxel (lowest id on ties). A voxel is scar when its label
/// is the wall and the brightest wall component of the scar image has the
/// largest subtype posterior. Needs at least two wall components in that image.
Classification classify(const PosteriorField& posteriors, const MvmmParams& params, const VolumeGrid& grid);

/// Plain pairwise (cascade) summation; the reduction order used by every model sum.
double pairwise_sum(std::span<const double> values);

}  // namespace mvseg
