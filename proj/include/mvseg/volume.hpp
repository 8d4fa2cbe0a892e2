#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mvseg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index3 = std::array<std::int64_t, 3>;

/// Thrown when a grid or volume violates its structural invariants.
class GridError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned voxel lattice: world = origin + index * spacing (componentwise).
struct VolumeGrid {
    Index3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    VolumeGrid() = default;
    VolumeGrid(Index3 dims, Vec3 spacing, Vec3 origin = Vec3::Zero());

    /// Throws GridError unless dims >= 1 and spacing is finite and positive.
    void validate() const;

    std::size_t voxel_count() const
    {
        return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
    }

    /// Row-major offset with x fastest.
    std::size_t offset(std::int64_t i, std::int64_t j, std::int64_t k) const
    {
        return static_cast<std::size_t>(i + dims[0] * (j + dims[1] * k));
    }
    std::size_t offset(const Index3& idx) const { return offset(idx[0], idx[1], idx[2]); }
    Index3 index_of(std::size_t offset) const;

    bool contains(const Index3& idx) const
    {
        return idx[0] >= 0 && idx[1] >= 0 && idx[2] >= 0 && idx[0] < dims[0] && idx[1] < dims[1] &&
               idx[2] < dims[2];
    }

    Vec3 world(const Index3& idx) const;
    Vec3 world(std::size_t offset) const { return world(index_of(offset)); }
    /// Continuous voxel coordinate of a world point.
    Vec3 continuous_index(const Vec3& p) const;

    /// Axis-aligned world bounding box of the voxel centers.
    Vec3 lower_corner() const { return origin; }
    Vec3 upper_corner() const;

    bool operator==(const VolumeGrid& other) const;
};

/// Real-valued volume on a grid.
struct ScalarVolume {
    VolumeGrid grid;
    std::vector<double> values;

    ScalarVolume() = default;
    explicit ScalarVolume(VolumeGrid grid, double fill = 0.0);
    ScalarVolume(VolumeGrid grid, std::vector<double> values);

    /// Throws GridError on size mismatch or a non-finite value.
    void validate() const;

    double& at(std::int64_t i, std::int64_t j, std::int64_t k) { return values[grid.offset(i, j, k)]; }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const { return values[grid.offset(i, j, k)]; }
};

/// Non-negative integer labels on a grid.
struct LabelVolume {
    VolumeGrid grid;
    std::vector<std::int32_t> labels;

    LabelVolume() = default;
    explicit LabelVolume(VolumeGrid grid, std::int32_t fill = 0);
    LabelVolume(VolumeGrid grid, std::vector<std::int32_t> labels);

    /// Throws GridError on size mismatch or a label outside `allowed` (all non-negative labels if empty).
    void validate(std::span<const std::int32_t> allowed = {}) const;

    std::int32_t& at(std::int64_t i, std::int64_t j, std::int64_t k) { return labels[grid.offset(i, j, k)]; }
    std::int32_t at(std::int64_t i, std::int64_t j, std::int64_t k) const { return labels[grid.offset(i, j, k)]; }

    std::size_t count(std::int32_t label) const;
};

/// Trilinear interpolation at a world point. Points outside the voxel-center
/// hull return `background`. A singleton axis accepts points within half a voxel.
double sample_trilinear(const ScalarVolume& vol, const Vec3& p, double background = 0.0);

/// World-space gradient of the trilinear interpolant.
///
/// Inside a cell this is the exact derivative of the interpolant. Where a
/// coordinate lies exactly on a lattice plane the two one-sided derivatives are
/// averaged, which on-lattice reduces to the central difference
/// (v[i+1] - v[i-1]) / (2 * spacing). Zero outside the support and along
/// singleton axes.
Vec3 sample_gradient(const ScalarVolume& vol, const Vec3& p);

/// Value and gradient in one pass; used by the hot loops.
struct ValueAndGradient {
    double value = 0.0;
    Vec3 gradient = Vec3::Zero();
};
ValueAndGradient sample_with_gradient(const ScalarVolume& vol, const Vec3& p, double background = 0.0);

/// Resample onto `target` with sample_trilinear. Throws GridError if the two
/// grids' bounding boxes are disjoint.
ScalarVolume resample_to_grid(const ScalarVolume& vol, const VolumeGrid& target, double background = 0.0);

/// Nearest-neighbour label resampling, used to carry label maps between grids.
LabelVolume resample_labels(const LabelVolume& vol, const VolumeGrid& target, std::int32_t background = 0);

}  // namespace mvseg
