#include "mvseg/transform.hpp"

#include <Eigen/LU>

#include <cmath>
#include <string>

namespace mvseg {

std::array<double, 4> bspline_basis(double u)
{
    if (!(u >= 0.0 && u < 1.0)) {
        throw TransformError("bspline_basis: u must lie in [0, 1), got " + std::to_string(u));
    }
    const double v = 1.0 - u;
    const double u2 = u * u;
    const double u3 = u2 * u;
    return {v * v * v / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0, (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
            u3 / 6.0};
}

std::array<double, 4> bspline_basis_derivative(double u)
{
    if (!(u >= 0.0 && u < 1.0)) {
        throw TransformError("bspline_basis_derivative: u must lie in [0, 1)");
    }
    const double v = 1.0 - u;
    const double u2 = u * u;
    return {-0.5 * v * v, 1.5 * u2 - 2.0 * u, -1.5 * u2 + u + 0.5, 0.5 * u2};
}

void AffineTransform::validate() const
{
    if (!matrix.allFinite() || !translation.allFinite()) {
        throw TransformError("affine transform has non-finite entries");
    }
    if (matrix.determinant() == 0.0) {
        throw TransformError("affine matrix is singular");
    }
}

std::array<double, AffineTransform::kParameterCount> AffineTransform::parameters() const
{
    std::array<double, kParameterCount> p{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            p[static_cast<std::size_t>(3 * r + c)] = matrix(r, c);
        }
        p[static_cast<std::size_t>(9 + r)] = translation[r];
    }
    return p;
}

void AffineTransform::set_parameters(std::span<const double> p)
{
    if (p.size() != kParameterCount) {
        throw TransformError("affine transform needs 12 parameters");
    }
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            matrix(r, c) = p[static_cast<std::size_t>(3 * r + c)];
        }
        translation[r] = p[static_cast<std::size_t>(9 + r)];
    }
}

FfdTransform::FfdTransform(Vec3 origin, Vec3 spacing, Index3 dims)
    : control_origin(std::move(origin)),
      control_spacing(std::move(spacing)),
      control_dims(dims),
      displacements(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), Vec3::Zero())
{
    validate();
}

FfdTransform FfdTransform::covering(const VolumeGrid& domain, const Vec3& spacing)
{
    domain.validate();
    Index3 dims{};
    for (int a = 0; a < 3; ++a) {
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw TransformError("FFD control spacing must be finite and positive");
        }
        const double extent = domain.upper_corner()[a] - domain.lower_corner()[a];
        dims[a] = static_cast<std::int64_t>(std::floor(extent / spacing[a])) + 4;
    }
    return FfdTransform(domain.origin - spacing, spacing, dims);
}

void FfdTransform::validate() const
{
    for (int a = 0; a < 3; ++a) {
        if (control_dims[a] < 4) {
            throw TransformError("FFD lattice needs at least 4 control points per axis");
        }
        if (!(control_spacing[a] > 0.0) || !std::isfinite(control_spacing[a])) {
            throw TransformError("FFD control spacing must be finite and positive");
        }
    }
    const auto n = static_cast<std::size_t>(control_dims[0] * control_dims[1] * control_dims[2]);
    if (displacements.size() != n) {
        throw TransformError("FFD displacement count does not match the lattice");
    }
    for (const auto& d : displacements) {
        if (!d.allFinite()) {
            throw TransformError("FFD displacement is not finite");
        }
    }
}

Index3 FfdTransform::control_index(std::size_t off) const
{
    const auto o = static_cast<std::int64_t>(off);
    return {o % control_dims[0], (o / control_dims[0]) % control_dims[1], o / (control_dims[0] * control_dims[1])};
}

Vec3 FfdTransform::control_position(const Index3& idx) const
{
    return control_origin + Vec3(static_cast<double>(idx[0]), static_cast<double>(idx[1]), static_cast<double>(idx[2]))
                                .cwiseProduct(control_spacing);
}

FfdStencil FfdTransform::stencil(const Vec3& x) const
{
    FfdStencil s;
    for (int a = 0; a < 3; ++a) {
        const double c = (x[a] - control_origin[a]) / control_spacing[a];
        const double cell = std::floor(c);
        const double u = c - cell;
        s.base[a] = static_cast<std::int64_t>(cell) - 1;
        s.weight[a] = bspline_basis(u);
        const auto db = bspline_basis_derivative(u);
        for (int i = 0; i < 4; ++i) {
            s.dweight[a][i] = db[i] / control_spacing[a];
        }
    }
    return s;
}

Vec3 FfdTransform::displacement(const FfdStencil& s) const
{
    Vec3 d = Vec3::Zero();
    for (int k = 0; k < 4; ++k) {
        const auto zk = s.base[2] + k;
        if (zk < 0 || zk >= control_dims[2]) {
            continue;
        }
        for (int j = 0; j < 4; ++j) {
            const auto yj = s.base[1] + j;
            if (yj < 0 || yj >= control_dims[1]) {
                continue;
            }
            const double wyz = s.weight[1][j] * s.weight[2][k];
            for (int i = 0; i < 4; ++i) {
                const auto xi = s.base[0] + i;
                if (xi < 0 || xi >= control_dims[0]) {
                    continue;
                }
                d += (s.weight[0][i] * wyz) * displacements[control_offset({xi, yj, zk})];
            }
        }
    }
    return d;
}

Vec3 FfdTransform::displacement(const Vec3& x) const
{
    return displacement(stencil(x));
}

Mat3 FfdTransform::displacement_jacobian(const FfdStencil& s) const
{
    Mat3 j = Mat3::Zero();
    for (int k = 0; k < 4; ++k) {
        const auto zk = s.base[2] + k;
        if (zk < 0 || zk >= control_dims[2]) {
            continue;
        }
        for (int jj = 0; jj < 4; ++jj) {
            const auto yj = s.base[1] + jj;
            if (yj < 0 || yj >= control_dims[1]) {
                continue;
            }
            for (int i = 0; i < 4; ++i) {
                const auto xi = s.base[0] + i;
                if (xi < 0 || xi >= control_dims[0]) {
                    continue;
                }
                const Vec3 grad(s.dweight[0][i] * s.weight[1][jj] * s.weight[2][k],
                                s.weight[0][i] * s.dweight[1][jj] * s.weight[2][k],
                                s.weight[0][i] * s.weight[1][jj] * s.dweight[2][k]);
                j += displacements[control_offset({xi, yj, zk})] * grad.transpose();
            }
        }
    }
    return j;
}

bool FfdTransform::is_zero() const
{
    for (const auto& d : displacements) {
        if (!d.isZero(0.0)) {
            return false;
        }
    }
    return true;
}

TransformStack TransformStack::identity(const VolumeGrid& domain, double control_spacing)
{
    return {AffineTransform::identity(), FfdTransform::covering(domain, control_spacing)};
}

void TransformStack::validate() const
{
    affine.validate();
    ffd.validate();
}

std::vector<double> TransformStack::parameters() const
{
    std::vector<double> p;
    p.reserve(parameter_count());
    const auto a = affine.parameters();
    p.insert(p.end(), a.begin(), a.end());
    for (const auto& d : ffd.displacements) {
        p.push_back(d[0]);
        p.push_back(d[1]);
        p.push_back(d[2]);
    }
    return p;
}

void TransformStack::set_parameters(std::span<const double> p)
{
    if (p.size() != parameter_count()) {
        throw TransformError("transform needs " + std::to_string(parameter_count()) + " parameters, got " +
                             std::to_string(p.size()));
    }
    affine.set_parameters(p.first(AffineTransform::kParameterCount));
    for (std::size_t c = 0; c < ffd.displacements.size(); ++c) {
        const auto base = AffineTransform::kParameterCount + 3 * c;
        ffd.displacements[c] = Vec3(p[base], p[base + 1], p[base + 2]);
    }
}

Vec3 TransformStack::param_jacobian(const Vec3& x, std::size_t d) const
{
    if (d >= parameter_count()) {
        throw TransformError("parameter index " + std::to_string(d) + " out of range");
    }
    if (d < 9) {
        const Vec3 y = ffd.apply(x);
        Vec3 out = Vec3::Zero();
        out[static_cast<Eigen::Index>(d / 3)] = y[static_cast<Eigen::Index>(d % 3)];
        return out;
    }
    if (d < AffineTransform::kParameterCount) {
        Vec3 out = Vec3::Zero();
        out[static_cast<Eigen::Index>(d - 9)] = 1.0;
        return out;
    }
    const auto rel = d - AffineTransform::kParameterCount;
    const Index3 cp = ffd.control_index(rel / 3);
    const auto comp = static_cast<Eigen::Index>(rel % 3);
    const FfdStencil s = ffd.stencil(x);
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
        const auto local = cp[a] - s.base[a];
        if (local < 0 || local > 3) {
            return Vec3::Zero();
        }
        w *= s.weight[a][static_cast<std::size_t>(local)];
    }
    return affine.matrix.col(comp) * w;
}

Mat3 TransformStack::spatial_jacobian(const Vec3& x) const
{
    return affine.matrix * (Mat3::Identity() + ffd.displacement_jacobian(ffd.stencil(x)));
}

Vec3 apply(const TransformStack& t, const Vec3& x)
{
    return t.apply(x);
}

Vec3 param_jacobian(const TransformStack& t, const Vec3& x, std::size_t d)
{
    return t.param_jacobian(x, d);
}

Mat3 spatial_jacobian(const TransformStack& t, const Vec3& x)
{
    return t.spatial_jacobian(x);
}

Vec3 invert_point(const TransformStack& t, const Vec3& y, double tolerance, int max_iterations)
{
    // Start from the inverse affine, then Newton on the full map.
    Vec3 x = t.affine.matrix.lu().solve(y - t.affine.translation);
    for (int it = 0; it < max_iterations; ++it) {
        const Vec3 r = t.apply(x) - y;
        if (r.norm() <= tolerance) {
            return x;
        }
        x -= t.spatial_jacobian(x).lu().solve(r);
    }
    if ((t.apply(x) - y).norm() <= tolerance) {
        return x;
    }
    throw TransformError("invert_point: Newton iteration did not converge");
}

}  // namespace mvseg
