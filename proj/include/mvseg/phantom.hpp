#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mvseg/mixture.hpp"

namespace mvseg {

class SpecError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11): a keyed
/// bijection of a 128-bit counter. Identical bytes on every platform.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter counter, Key key);

    explicit Philox4x32(std::uint64_t seed);

    /// Four 32-bit words for `counter` under this generator's key.
    Counter operator()(const Counter& counter) const { return block(counter, key_); }
    /// Uniform in (0, 1) from one word.
    static double to_unit(std::uint32_t word);
    /// Standard normal via Box-Muller from the first two words of block(counter).
    double normal(const Counter& counter) const;

private:
    Key key_;
};

/// Voxel tissue classes of the phantom.
enum class Tissue : std::int32_t { Outside = 0, Blood = 1, Wall = 2, Scar = 3 };
inline constexpr std::size_t kTissueCount = 4;

/// Scar patch: the part of the wall within `half_angle_deg` of `direction` seen from the center.
struct ScarPatch {
    Vec3 direction{1.0, 0.0, 0.0};
    double half_angle_deg = 30.0;
};

struct TissueGaussian {
    double mu = 0.0;
    double sigma = 1.0;
};

struct PhantomSpec {
    VolumeGrid grid{{64, 64, 64}, Vec3::Ones(), Vec3::Zero()};
    Vec3 center{31.5, 31.5, 31.5};
    Vec3 radii{16.0, 13.0, 11.0};  // blood-pool ellipsoid, mm
    double wall_thickness = 3.0;    // mm, grown outward along each radius
    std::vector<ScarPatch> scars;
    /// [image][tissue] in Tissue order.
    std::vector<std::array<TissueGaussian, kTissueCount>> tissues;
    std::uint64_t seed = 1;
    /// Std (voxels) of the Gaussian kernel that correlates the noise; 0 gives white noise.
    /// The filtered field is rescaled to unit variance.
    double noise_correlation = 1.0;
    /// Ground-truth F_i per image (common space -> image space); empty means identity.
    std::vector<TransformStack> transforms;
    double prior_sigma = 2.0;
    /// Shift (mm) of the anatomy used to build the prior.
    Vec3 anatomy_shift = Vec3::Zero();
    /// mm by which the image and prior field of view exceeds `grid` on every side.
    double image_margin = 8.0;
    /// Image voxel size; <= 0 in a component reuses the grid spacing.
    Vec3 image_spacing = Vec3::Zero();

    /// 64^3 (or `size`^3) at 1 mm: LGE-like image 0 and anatomy-like image 1, two scar patches.
    static PhantomSpec standard(std::int64_t size = 64, std::uint64_t seed = 1);

    /// Throws SpecError on invalid values and GridError if the geometry leaves the grid.
    void validate() const;
    std::size_t image_count() const { return tissues.size(); }
    /// Lattice at `image_spacing` covering `grid` grown by `image_margin` per side.
    VolumeGrid image_grid() const;
};

/// Images and prior cover the enlarged field of view; the label volumes cover the common space.
struct Phantom {
    std::vector<ScalarVolume> images;
    LabelVolume tissue;         // Tissue class per voxel of the common space
    LabelVolume truth_labels;   // 0 background, 1 wall (scar included)
    LabelVolume truth_scar;     // 1 on scar voxels
    LabelVolume anatomy;        // mid-wall surface interior, the segmentation the prior is built from
    PriorMap prior;
    std::vector<TransformStack> truth_transforms;

    Scene scene() const;
};

/// Unit-variance noise field on `grid` for image `image`: white normals from
/// the generator, Gaussian-filtered when `correlation` > 0.
ScalarVolume phantom_noise(const VolumeGrid& grid, const Philox4x32& rng, std::uint32_t image, double correlation);

/// Tissue class of a world point of the common space.
Tissue phantom_tissue(const PhantomSpec& spec, const Vec3& x);

/// Image i at voxel y holds a draw from the Gaussian of tissue(F_i^{-1}(y)), so
/// I_i(F_i(x)) follows tissue(x). Deterministic in the seed.
Phantom generate_phantom(const PhantomSpec& spec);

/// Translation plus a smooth FFD whose control displacements are uniform in
/// [-1, 1]^3 scaled so the largest component equals `ffd_amplitude` mm.
TransformStack misalignment(const VolumeGrid& domain, const Vec3& translation, double ffd_amplitude,
                            std::uint64_t seed, double control_spacing = 10.0);

}  // namespace mvseg
