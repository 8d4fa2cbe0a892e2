#include "mvseg/phantom.hpp"

#include <cmath>
#include <numbers>

namespace mvseg {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo)
{
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

double ellipsoid_radius(const Vec3& d, const Vec3& radii)
{
    return d.cwiseQuotient(radii).norm();
}

}  // namespace

Philox4x32::Counter Philox4x32::block(Counter c, Key k)
{
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        std::uint32_t hi0;
        std::uint32_t lo0;
        std::uint32_t hi1;
        std::uint32_t lo1;
        mulhilo(kMul0, c[0], hi0, lo0);
        mulhilo(kMul1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
}

Philox4x32::Philox4x32(std::uint64_t seed)
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}
{
}

double Philox4x32::to_unit(std::uint32_t word)
{
    return (static_cast<double>(word) + 0.5) * 0x1p-32;
}

double Philox4x32::normal(const Counter& counter) const
{
    const Counter w = (*this)(counter);
    const double u1 = to_unit(w[0]);
    const double u2 = to_unit(w[1]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

PhantomSpec PhantomSpec::standard(std::int64_t size, std::uint64_t seed)
{
    PhantomSpec s;
    const double n = static_cast<double>(size);
    s.grid = VolumeGrid({size, size, size}, Vec3::Ones(), Vec3::Zero());
    s.center = Vec3::Constant(0.5 * (n - 1.0));
    s.radii = Vec3(0.85, 0.76, 0.69) * (0.5 * n - 5.0);
    s.wall_thickness = 3.0;
    s.scars = {{Vec3(1.0, 0.3, 0.2).normalized(), 12.0},   {Vec3(-0.5, 1.0, -0.3).normalized(), 10.0},
               {Vec3(0.2, -0.8, 0.6).normalized(), 10.0},  {Vec3(-0.7, -0.4, -0.6).normalized(), 14.0},
               {Vec3(0.3, 0.6, 0.9).normalized(), 10.0},   {Vec3(0.4, -0.5, -0.9).normalized(), 12.0}};
    //            outside      blood        wall        scar
    s.tissues = {{{{40.0, 8.0}, {40.0, 8.0}, {60.0, 8.0}, {140.0, 12.0}}},
                 {{{30.0, 8.0}, {160.0, 8.0}, {90.0, 8.0}, {90.0, 8.0}}}};
    s.image_spacing = Vec3::Constant(0.85);
    s.seed = seed;
    return s;
}

void PhantomSpec::validate() const
{
    grid.validate();
    if (!(wall_thickness > 0.0)) {
        throw SpecError("phantom: wall thickness must be positive");
    }
    if (!(radii.minCoeff() > 0.0) || !radii.allFinite() || !center.allFinite() || !anatomy_shift.allFinite()) {
        throw SpecError("phantom: radii must be positive and finite");
    }
    if (tissues.empty()) {
        throw SpecError("phantom: at least one image is required");
    }
    for (const auto& image : tissues) {
        for (const auto& g : image) {
            if (!(g.sigma > 0.0) || !std::isfinite(g.mu) || !std::isfinite(g.sigma)) {
                throw SpecError("phantom: every tissue needs a finite mean and a positive sigma");
            }
        }
    }
    for (const auto& p : scars) {
        if (!(p.direction.norm() > 0.0) || !(p.half_angle_deg > 0.0 && p.half_angle_deg <= 180.0)) {
            throw SpecError("phantom: scar patch needs a nonzero direction and a half angle in (0, 180]");
        }
    }
    if (!transforms.empty() && transforms.size() != tissues.size()) {
        throw SpecError("phantom: one transform per image is required");
    }
    for (const auto& t : transforms) {
        t.validate();
    }
    if (!(image_margin >= 0.0) || !image_spacing.allFinite()) {
        throw SpecError("phantom: image margin must be non-negative");
    }
    if (!(prior_sigma > 0.0)) {
        throw SpecError("phantom: prior sigma must be positive");
    }
    const Vec3 outer = radii + Vec3::Constant(wall_thickness);
    const Vec3 lo = grid.lower_corner();
    const Vec3 hi = grid.upper_corner();
    for (const Vec3& c : {center, Vec3(center + anatomy_shift)}) {
        for (int a = 0; a < 3; ++a) {
            if (c[a] - outer[a] < lo[a] + grid.spacing[a] || c[a] + outer[a] > hi[a] - grid.spacing[a]) {
                throw GridError("phantom: the wall ellipsoid does not fit inside the grid with a one-voxel margin");
            }
        }
    }
}

VolumeGrid PhantomSpec::image_grid() const
{
    Vec3 spacing = grid.spacing;
    Index3 dims{};
    const Vec3 lo = grid.world(Index3{0, 0, 0}) - Vec3::Constant(image_margin);
    const Vec3 hi = grid.world(Index3{grid.dims[0] - 1, grid.dims[1] - 1, grid.dims[2] - 1}) +
                    Vec3::Constant(image_margin);
    for (int a = 0; a < 3; ++a) {
        if (image_spacing[a] > 0.0) {
            spacing[a] = image_spacing[a];
        }
        dims[a] = static_cast<std::int64_t>(std::ceil((hi[a] - lo[a]) / spacing[a] - 1e-9)) + 1;
    }
    return VolumeGrid(dims, spacing, lo);
}

Tissue phantom_tissue(const PhantomSpec& spec, const Vec3& x)
{
    const Vec3 d = x - spec.center;
    if (ellipsoid_radius(d, spec.radii) <= 1.0) {
        return Tissue::Blood;
    }
    if (ellipsoid_radius(d, spec.radii + Vec3::Constant(spec.wall_thickness)) > 1.0) {
        return Tissue::Outside;
    }
    const double len = d.norm();
    for (const auto& p : spec.scars) {
        const double cosang = d.dot(p.direction) / (len * p.direction.norm());
        if (cosang >= std::cos(p.half_angle_deg * std::numbers::pi / 180.0)) {
            return Tissue::Scar;
        }
    }
    return Tissue::Wall;
}

ScalarVolume phantom_noise(const VolumeGrid& grid, const Philox4x32& rng, std::uint32_t image, double correlation)
{
    const auto radius = correlation > 0.0 ? static_cast<std::int64_t>(std::ceil(3.0 * correlation)) : 0;
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1), 1.0);
    if (radius > 0) {
        double sum = 0.0;
        for (std::int64_t r = -radius; r <= radius; ++r) {
            auto& w = kernel[static_cast<std::size_t>(r + radius)];
            w = std::exp(-0.5 * static_cast<double>(r * r) / (correlation * correlation));
            sum += w;
        }
        for (auto& w : kernel) {
            w /= sum;
        }
    }
    double sq = 0.0;
    for (double w : kernel) {
        sq += w * w;
    }
    const double rescale = 1.0 / std::sqrt(sq * sq * sq);

    // White noise on a grid padded by the kernel radius, keyed by padded index.
    Index3 pd{};
    for (int a = 0; a < 3; ++a) {
        pd[a] = grid.dims[a] + 2 * radius;
    }
    const VolumeGrid padded(pd, grid.spacing, grid.origin);
    std::vector<double> field(padded.voxel_count());
    for (std::size_t v = 0; v < field.size(); ++v) {
        field[v] = rng.normal({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(v >> 32), image, 0u});
    }
    if (radius > 0) {
        std::vector<double> tmp(field.size());
        const std::int64_t stride[3] = {1, pd[0], pd[0] * pd[1]};
        for (int a = 0; a < 3; ++a) {
            std::fill(tmp.begin(), tmp.end(), 0.0);
            for (std::size_t v = 0; v < field.size(); ++v) {
                const Index3 idx = padded.index_of(v);
                double acc = 0.0;
                for (std::int64_t r = -radius; r <= radius; ++r) {
                    const std::int64_t j = idx[a] + r;
                    if (j >= 0 && j < pd[a]) {
                        acc += kernel[static_cast<std::size_t>(r + radius)] *
                               field[static_cast<std::size_t>(static_cast<std::int64_t>(v) + r * stride[a])];
                    }
                }
                tmp[v] = acc;
            }
            field.swap(tmp);
        }
    }
    ScalarVolume out(grid);
    for (std::size_t v = 0; v < out.values.size(); ++v) {
        const Index3 idx = grid.index_of(v);
        out.values[v] = rescale * field[padded.offset(idx[0] + radius, idx[1] + radius, idx[2] + radius)];
    }
    return out;
}

Scene Phantom::scene() const
{
    Scene s;
    s.domain = tissue.grid;  // images extend past it so small warps stay in their field of view
    s.images = images;
    s.prior = prior;
    return s;
}

Phantom generate_phantom(const PhantomSpec& spec)
{
    spec.validate();
    const VolumeGrid& g = spec.grid;
    const std::size_t n = g.voxel_count();

    Phantom ph;
    ph.tissue = LabelVolume(g);
    ph.truth_labels = LabelVolume(g);
    ph.truth_scar = LabelVolume(g);
    ph.anatomy = LabelVolume(g);
    const Vec3 mid_radii = spec.radii + Vec3::Constant(0.5 * spec.wall_thickness);
    const Vec3 anatomy_center = spec.center + spec.anatomy_shift;
    for (std::size_t x = 0; x < n; ++x) {
        const Vec3 p = g.world(x);
        const Tissue t = phantom_tissue(spec, p);
        ph.tissue.labels[x] = static_cast<std::int32_t>(t);
        ph.truth_labels.labels[x] = (t == Tissue::Wall || t == Tissue::Scar) ? kWallLabel : kBackgroundLabel;
        ph.truth_scar.labels[x] = t == Tissue::Scar ? 1 : 0;
        ph.anatomy.labels[x] = ellipsoid_radius(p - anatomy_center, mid_radii) <= 1.0 ? 1 : 0;
    }
    const VolumeGrid fov = spec.image_grid();
    const std::size_t m = fov.voxel_count();
    LabelVolume wide_anatomy(fov);
    for (std::size_t y = 0; y < m; ++y) {
        wide_anatomy.labels[y] = ellipsoid_radius(fov.world(y) - anatomy_center, mid_radii) <= 1.0 ? 1 : 0;
    }
    ph.prior = wall_prior_from_segmentation(wide_anatomy, spec.prior_sigma);

    const Philox4x32 rng(spec.seed);
    for (std::size_t i = 0; i < spec.image_count(); ++i) {
        const TransformStack truth =
            spec.transforms.empty() ? TransformStack::identity(g) : spec.transforms[i];
        const bool identity = spec.transforms.empty() ||
                              (truth.affine.matrix == Mat3::Identity() && truth.affine.translation.isZero() &&
                               truth.ffd.is_zero());
        const ScalarVolume noise = phantom_noise(fov, rng, static_cast<std::uint32_t>(i), spec.noise_correlation);
        ScalarVolume img(fov);
        for (std::size_t y = 0; y < m; ++y) {
            const Vec3 p = fov.world(y);
            const Tissue t = phantom_tissue(spec, identity ? p : invert_point(truth, p));
            const auto& gauss = spec.tissues[i][static_cast<std::size_t>(t)];
            img.values[y] = gauss.mu + gauss.sigma * noise.values[y];
        }
        ph.images.push_back(std::move(img));
        ph.truth_transforms.push_back(truth);
    }
    return ph;
}

TransformStack misalignment(const VolumeGrid& domain, const Vec3& translation, double ffd_amplitude,
                            std::uint64_t seed, double control_spacing)
{
    TransformStack t = TransformStack::identity(domain, control_spacing);
    t.affine.translation = translation;
    if (ffd_amplitude > 0.0) {
        const Philox4x32 rng(seed);
        double largest = 0.0;
        for (std::size_t c = 0; c < t.ffd.control_point_count(); ++c) {
            const auto w = rng({static_cast<std::uint32_t>(c), 0u, 0u, 1u});
            for (int a = 0; a < 3; ++a) {
                t.ffd.displacements[c][a] = 2.0 * Philox4x32::to_unit(w[static_cast<std::size_t>(a)]) - 1.0;
                largest = std::max(largest, std::abs(t.ffd.displacements[c][a]));
            }
        }
        for (auto& d : t.ffd.displacements) {
            d *= ffd_amplitude / largest;
        }
    }
    return t;
}

}  // namespace mvseg
