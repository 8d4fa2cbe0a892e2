#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "mvseg/volume.hpp"

namespace mvseg {

class TransformError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cubic B-spline weights B0..B3 at local coordinate u in [0, 1).
std::array<double, 4> bspline_basis(double u);
/// Derivatives dB0/du..dB3/du.
std::array<double, 4> bspline_basis_derivative(double u);

/// y = matrix * x + translation.
struct AffineTransform {
    Mat3 matrix = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static constexpr std::size_t kParameterCount = 12;

    static AffineTransform identity() { return {}; }
    static AffineTransform translation_by(const Vec3& t) { return {Mat3::Identity(), t}; }

    /// Throws TransformError if the matrix is singular or non-finite.
    void validate() const;

    Vec3 apply(const Vec3& x) const { return matrix * x + translation; }

    /// Parameters as 9 row-major matrix entries then 3 translation components.
    std::array<double, kParameterCount> parameters() const;
    void set_parameters(std::span<const double> p);
};

/// Per-point B-spline evaluation footprint: 4 control indices per axis and
/// their weights. Control indices may fall outside the lattice; those terms
/// are skipped.
struct FfdStencil {
    Index3 base{};  // lattice index of the first of the 4 supporting control points per axis
    std::array<std::array<double, 4>, 3> weight{};
    std::array<std::array<double, 4>, 3> dweight{};  // d weight / d world coordinate
};

/// Tensor-product cubic B-spline displacement field D(x) = x + sum_c B_c(x) phi_c.
struct FfdTransform {
    Vec3 control_origin = Vec3::Zero();
    Vec3 control_spacing{10.0, 10.0, 10.0};
    Index3 control_dims{4, 4, 4};
    std::vector<Vec3> displacements = std::vector<Vec3>(64, Vec3::Zero());

    FfdTransform() = default;
    FfdTransform(Vec3 origin, Vec3 spacing, Index3 dims);

    /// Zero-displacement lattice whose supports fully cover `domain`: one
    /// control cell before the first voxel and two after the last.
    static FfdTransform covering(const VolumeGrid& domain, const Vec3& spacing);
    static FfdTransform covering(const VolumeGrid& domain, double spacing = 10.0)
    {
        return covering(domain, Vec3::Constant(spacing));
    }

    void validate() const;

    std::size_t control_point_count() const { return displacements.size(); }
    std::size_t parameter_count() const { return 3 * displacements.size(); }
    std::size_t control_offset(const Index3& idx) const
    {
        return static_cast<std::size_t>(idx[0] + control_dims[0] * (idx[1] + control_dims[1] * idx[2]));
    }
    Index3 control_index(std::size_t offset) const;
    Vec3 control_position(const Index3& idx) const;

    FfdStencil stencil(const Vec3& x) const;
    /// The displacement sum_c B_c(x) phi_c (without the identity part).
    Vec3 displacement(const Vec3& x) const;
    Vec3 displacement(const FfdStencil& s) const;
    /// d displacement / dx.
    Mat3 displacement_jacobian(const FfdStencil& s) const;
    Vec3 apply(const Vec3& x) const { return x + displacement(x); }

    bool is_zero() const;
};

/// F(x) = affine(ffd(x)); the composition order is fixed.
struct TransformStack {
    AffineTransform affine;
    FfdTransform ffd;

    TransformStack() = default;
    TransformStack(AffineTransform a, FfdTransform f) : affine(std::move(a)), ffd(std::move(f)) {}

    /// Identity map with a zero FFD lattice covering `domain`.
    static TransformStack identity(const VolumeGrid& domain, double control_spacing = 10.0);

    void validate() const;

    std::size_t parameter_count() const { return AffineTransform::kParameterCount + ffd.parameter_count(); }
    /// Affine block first (see AffineTransform::parameters), then FFD
    /// displacements as (x, y, z) per control point in lattice order.
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> p);

    Vec3 apply(const Vec3& x) const { return affine.apply(ffd.apply(x)); }

    /// dF(x)/d(parameter d). Zero for FFD parameters whose control point does
    /// not support x. Throws TransformError on an out-of-range index.
    Vec3 param_jacobian(const Vec3& x, std::size_t d) const;

    /// dF/dx, analytic.
    Mat3 spatial_jacobian(const Vec3& x) const;
};

Vec3 apply(const TransformStack& t, const Vec3& x);
Vec3 param_jacobian(const TransformStack& t, const Vec3& x, std::size_t d);
Mat3 spatial_jacobian(const TransformStack& t, const Vec3& x);

/// Newton solve of F(x) = y starting from `guess` (y if omitted). Throws
/// TransformError if it fails to reach `tolerance` mm.
Vec3 invert_point(const TransformStack& t, const Vec3& y, double tolerance = 1e-9, int max_iterations = 50);

}  // namespace mvseg
