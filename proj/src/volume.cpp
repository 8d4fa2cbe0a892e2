#include "mvseg/volume.hpp"

#include <algorithm>
#include <cmath>

namespace mvseg {

VolumeGrid::VolumeGrid(Index3 dims_, Vec3 spacing_, Vec3 origin_)
    : dims(dims_), spacing(std::move(spacing_)), origin(std::move(origin_))
{
    validate();
}

void VolumeGrid::validate() const
{
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) {
            throw GridError("grid dimension " + std::to_string(a) + " must be >= 1");
        }
        if (!std::isfinite(spacing[a]) || spacing[a] <= 0.0) {
            throw GridError("grid spacing " + std::to_string(a) + " must be finite and positive");
        }
        if (!std::isfinite(origin[a])) {
            throw GridError("grid origin must be finite");
        }
    }
}

Index3 VolumeGrid::index_of(std::size_t off) const
{
    const auto o = static_cast<std::int64_t>(off);
    return {o % dims[0], (o / dims[0]) % dims[1], o / (dims[0] * dims[1])};
}

Vec3 VolumeGrid::world(const Index3& idx) const
{
    return {origin[0] + static_cast<double>(idx[0]) * spacing[0],
            origin[1] + static_cast<double>(idx[1]) * spacing[1],
            origin[2] + static_cast<double>(idx[2]) * spacing[2]};
}

Vec3 VolumeGrid::continuous_index(const Vec3& p) const
{
    return (p - origin).cwiseQuotient(spacing);
}

Vec3 VolumeGrid::upper_corner() const
{
    return world(Index3{dims[0] - 1, dims[1] - 1, dims[2] - 1});
}

bool VolumeGrid::operator==(const VolumeGrid& other) const
{
    return dims == other.dims && spacing == other.spacing && origin == other.origin;
}

ScalarVolume::ScalarVolume(VolumeGrid g, double fill) : grid(std::move(g)), values(grid.voxel_count(), fill) {}

ScalarVolume::ScalarVolume(VolumeGrid g, std::vector<double> v) : grid(std::move(g)), values(std::move(v))
{
    validate();
}

void ScalarVolume::validate() const
{
    grid.validate();
    if (values.size() != grid.voxel_count()) {
        throw GridError("scalar volume has " + std::to_string(values.size()) + " values, grid needs " +
                        std::to_string(grid.voxel_count()));
    }
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw GridError("scalar volume contains a non-finite value");
        }
    }
}

LabelVolume::LabelVolume(VolumeGrid g, std::int32_t fill) : grid(std::move(g)), labels(grid.voxel_count(), fill) {}

LabelVolume::LabelVolume(VolumeGrid g, std::vector<std::int32_t> l) : grid(std::move(g)), labels(std::move(l))
{
    validate();
}

void LabelVolume::validate(std::span<const std::int32_t> allowed) const
{
    grid.validate();
    if (labels.size() != grid.voxel_count()) {
        throw GridError("label volume has " + std::to_string(labels.size()) + " labels, grid needs " +
                        std::to_string(grid.voxel_count()));
    }
    for (auto l : labels) {
        if (l < 0) {
            throw GridError("label volume contains a negative label");
        }
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), l) == allowed.end()) {
            throw GridError("label " + std::to_string(l) + " is not in the declared label set");
        }
    }
}

std::size_t LabelVolume::count(std::int32_t label) const
{
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

namespace {

// Per-axis location of a point inside the voxel-center hull.
struct AxisCell {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    double frac = 0.0;
    bool on_node = false;  // coordinate is exactly a lattice index
    bool singleton = false;
};

bool locate(double c, std::int64_t n, AxisCell& cell)
{
    if (n == 1) {
        if (!(std::abs(c) <= 0.5)) {
            return false;
        }
        cell = AxisCell{0, 0, 0.0, false, true};
        return true;
    }
    if (!(c >= 0.0 && c <= static_cast<double>(n - 1))) {
        return false;
    }
    auto lo = std::min(static_cast<std::int64_t>(std::floor(c)), n - 2);
    cell.lo = lo;
    cell.hi = lo + 1;
    cell.frac = c - static_cast<double>(lo);
    cell.on_node = (c == std::floor(c));
    cell.singleton = false;
    return true;
}

// Interpolant over the 8 corners; `deriv_axis` >= 0 replaces that axis'
// weights (1-f, f) by (-1, 1), giving the derivative in index units.
double corner_sum(const ScalarVolume& vol, const std::array<AxisCell, 3>& cells, int deriv_axis)
{
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        double wz = 0.0;
        if (deriv_axis == 2) {
            wz = dz ? 1.0 : -1.0;
        } else {
            wz = dz ? cells[2].frac : 1.0 - cells[2].frac;
        }
        if (wz == 0.0) {
            continue;
        }
        const auto z = dz ? cells[2].hi : cells[2].lo;
        for (int dy = 0; dy < 2; ++dy) {
            double wy = 0.0;
            if (deriv_axis == 1) {
                wy = dy ? 1.0 : -1.0;
            } else {
                wy = dy ? cells[1].frac : 1.0 - cells[1].frac;
            }
            if (wy == 0.0) {
                continue;
            }
            const auto y = dy ? cells[1].hi : cells[1].lo;
            const double* row = vol.values.data() + vol.grid.offset(0, y, z);
            double wx0 = 0.0;
            double wx1 = 0.0;
            if (deriv_axis == 0) {
                wx0 = -1.0;
                wx1 = 1.0;
            } else {
                wx0 = 1.0 - cells[0].frac;
                wx1 = cells[0].frac;
            }
            double rowsum = 0.0;
            if (wx0 != 0.0) {
                rowsum += wx0 * row[cells[0].lo];
            }
            if (wx1 != 0.0) {
                rowsum += wx1 * row[cells[0].hi];
            }
            acc += wz * wy * rowsum;
        }
    }
    return acc;
}

bool locate_point(const ScalarVolume& vol, const Vec3& p, std::array<AxisCell, 3>& cells)
{
    const Vec3 c = vol.grid.continuous_index(p);
    for (int a = 0; a < 3; ++a) {
        if (!locate(c[a], vol.grid.dims[a], cells[a])) {
            return false;
        }
    }
    return true;
}

Vec3 gradient_at(const ScalarVolume& vol, const std::array<AxisCell, 3>& cells)
{
    Vec3 g = Vec3::Zero();
    for (int a = 0; a < 3; ++a) {
        const auto& cell = cells[a];
        if (cell.singleton) {
            continue;
        }
        const auto n = vol.grid.dims[a];
        double d = 0.0;
        if (cell.on_node) {
            // Node index: `lo` unless the point sits on the last node.
            const auto node = cell.frac == 0.0 ? cell.lo : cell.hi;
            auto left = cells;
            auto right = cells;
            int sides = 0;
            if (node > 0) {
                left[a] = AxisCell{node - 1, node, 1.0, true, false};
                d += corner_sum(vol, left, a);
                ++sides;
            }
            if (node < n - 1) {
                right[a] = AxisCell{node, node + 1, 0.0, true, false};
                d += corner_sum(vol, right, a);
                ++sides;
            }
            d /= static_cast<double>(sides);
        } else {
            d = corner_sum(vol, cells, a);
        }
        g[a] = d / vol.grid.spacing[a];
    }
    return g;
}

}  // namespace

double sample_trilinear(const ScalarVolume& vol, const Vec3& p, double background)
{
    std::array<AxisCell, 3> cells;
    if (!locate_point(vol, p, cells)) {
        return background;
    }
    return corner_sum(vol, cells, -1);
}

Vec3 sample_gradient(const ScalarVolume& vol, const Vec3& p)
{
    std::array<AxisCell, 3> cells;
    if (!locate_point(vol, p, cells)) {
        return Vec3::Zero();
    }
    return gradient_at(vol, cells);
}

ValueAndGradient sample_with_gradient(const ScalarVolume& vol, const Vec3& p, double background)
{
    std::array<AxisCell, 3> cells;
    if (!locate_point(vol, p, cells)) {
        return {background, Vec3::Zero()};
    }
    return {corner_sum(vol, cells, -1), gradient_at(vol, cells)};
}

namespace {

bool boxes_overlap(const VolumeGrid& a, const VolumeGrid& b)
{
    for (int ax = 0; ax < 3; ++ax) {
        const double half_a = a.dims[ax] == 1 ? 0.5 * a.spacing[ax] : 0.0;
        const double half_b = b.dims[ax] == 1 ? 0.5 * b.spacing[ax] : 0.0;
        const double lo = std::max(a.lower_corner()[ax] - half_a, b.lower_corner()[ax] - half_b);
        const double hi = std::min(a.upper_corner()[ax] + half_a, b.upper_corner()[ax] + half_b);
        if (lo > hi) {
            return false;
        }
    }
    return true;
}

}  // namespace

ScalarVolume resample_to_grid(const ScalarVolume& vol, const VolumeGrid& target, double background)
{
    target.validate();
    if (!boxes_overlap(vol.grid, target)) {
        throw GridError("resample_to_grid: source and target grids are spatially disjoint");
    }
    ScalarVolume out(target);
    for (std::size_t o = 0; o < out.values.size(); ++o) {
        out.values[o] = sample_trilinear(vol, target.world(o), background);
    }
    return out;
}

LabelVolume resample_labels(const LabelVolume& vol, const VolumeGrid& target, std::int32_t background)
{
    target.validate();
    if (!boxes_overlap(vol.grid, target)) {
        throw GridError("resample_labels: source and target grids are spatially disjoint");
    }
    LabelVolume out(target, background);
    for (std::size_t o = 0; o < out.labels.size(); ++o) {
        const Vec3 c = vol.grid.continuous_index(target.world(o));
        Index3 idx{};
        for (int a = 0; a < 3; ++a) {
            idx[a] = static_cast<std::int64_t>(std::llround(c[a]));
        }
        if (vol.grid.contains(idx)) {
            out.labels[o] = vol.labels[vol.grid.offset(idx)];
        }
    }
    return out;
}

}  // namespace mvseg
