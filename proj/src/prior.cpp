#include "mvseg/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace mvseg {

void PriorMap::validate(double tolerance) const
{
    grid.validate();
    if (channels.empty()) {
        throw GridError("prior map has no channels");
    }
    if (!label_names.empty() && label_names.size() != channels.size()) {
        throw GridError("prior map label names do not match the channel count");
    }
    for (const auto& ch : channels) {
        if (!(ch.grid == grid)) {
            throw GridError("prior channel grid differs from the prior grid");
        }
        ch.validate();
    }
    for (std::size_t v = 0; v < grid.voxel_count(); ++v) {
        double sum = 0.0;
        for (const auto& ch : channels) {
            const double p = ch.values[v];
            if (p < 0.0 || p > 1.0) {
                throw GridError("prior value outside [0, 1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > tolerance) {
            throw GridError("prior channels do not sum to 1 at voxel " + std::to_string(v));
        }
    }
}

std::int32_t PriorMap::argmax(std::size_t voxel) const
{
    std::int32_t best = 0;
    for (std::size_t k = 1; k < channels.size(); ++k) {
        if (channels[k].values[voxel] > channels[static_cast<std::size_t>(best)].values[voxel]) {
            best = static_cast<std::int32_t>(k);
        }
    }
    return best;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas: out[q] = min_p weight * (q - p)^2 + f[p].
void envelope_1d(const std::vector<double>& f, double weight, std::vector<double>& out, std::vector<std::int64_t>& v,
                 std::vector<double>& z)
{
    const auto n = static_cast<std::int64_t>(f.size());
    out.assign(f.size(), kInf);
    v.resize(f.size());
    z.resize(f.size() + 1);
    std::int64_t k = -1;
    for (std::int64_t q = 0; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] == kInf) {
            continue;
        }
        const double fq = f[static_cast<std::size_t>(q)] + weight * static_cast<double>(q * q);
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s = 0.0;
        while (true) {
            const auto p = v[static_cast<std::size_t>(k)];
            const double fp = f[static_cast<std::size_t>(p)] + weight * static_cast<double>(p * p);
            s = (fq - fp) / (2.0 * weight * static_cast<double>(q - p));
            if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        if (s <= z[static_cast<std::size_t>(k)]) {
            // Only possible when k == 0: the new parabola dominates everywhere.
            v[0] = q;
            z[1] = kInf;
            continue;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k + 1)] = kInf;
    }
    if (k < 0) {
        return;
    }
    std::int64_t j = 0;
    for (std::int64_t q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(j + 1)] < static_cast<double>(q)) {
            ++j;
        }
        const auto p = v[static_cast<std::size_t>(j)];
        const auto dq = static_cast<double>(q - p);
        out[static_cast<std::size_t>(q)] = weight * dq * dq + f[static_cast<std::size_t>(p)];
    }
}

}  // namespace

ScalarVolume distance_to_boundary(const LabelVolume& seg)
{
    seg.validate();
    const auto& g = seg.grid;
    const std::size_t nfg =
        static_cast<std::size_t>(std::count_if(seg.labels.begin(), seg.labels.end(), [](auto l) { return l != 0; }));
    if (nfg == 0 || nfg == g.voxel_count()) {
        throw GridError("distance_to_boundary needs both foreground and background voxels");
    }

    const auto nx = g.dims[0];
    const auto ny = g.dims[1];
    const auto nz = g.dims[2];
    // Doubled lattice: even coordinates are voxel centers, odd ones face midpoints.
    const auto mx = 2 * nx - 1;
    const auto my = 2 * ny - 1;
    const auto mz = 2 * nz - 1;
    const double wx = 0.25 * g.spacing[0] * g.spacing[0];
    const double wy = 0.25 * g.spacing[1] * g.spacing[1];
    const double wz = 0.25 * g.spacing[2] * g.spacing[2];

    auto fg = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return seg.labels[g.offset(i, j, k)] != 0; };
    auto is_site = [&](std::int64_t X, std::int64_t Y, std::int64_t Z) {
        const int odd = static_cast<int>(X & 1) + static_cast<int>(Y & 1) + static_cast<int>(Z & 1);
        if (odd != 1) {
            return false;
        }
        if (X & 1) {
            return fg((X - 1) / 2, Y / 2, Z / 2) != fg((X + 1) / 2, Y / 2, Z / 2);
        }
        if (Y & 1) {
            return fg(X / 2, (Y - 1) / 2, Z / 2) != fg(X / 2, (Y + 1) / 2, Z / 2);
        }
        return fg(X / 2, Y / 2, (Z - 1) / 2) != fg(X / 2, Y / 2, (Z + 1) / 2);
    };

    std::vector<double> line;
    std::vector<double> res;
    std::vector<std::int64_t> v;
    std::vector<double> z;

    // Pass along z, keeping even z only: a[X + mx * (Y + my * kz)].
    std::vector<double> a(static_cast<std::size_t>(mx * my * nz), kInf);
    line.resize(static_cast<std::size_t>(mz));
    for (std::int64_t Y = 0; Y < my; ++Y) {
        for (std::int64_t X = 0; X < mx; ++X) {
            if ((X & 1) && (Y & 1)) {
                continue;  // no sites and never queried
            }
            bool any = false;
            for (std::int64_t Z = 0; Z < mz; ++Z) {
                const bool site = is_site(X, Y, Z);
                line[static_cast<std::size_t>(Z)] = site ? 0.0 : kInf;
                any = any || site;
            }
            if (!any) {
                continue;
            }
            envelope_1d(line, wz, res, v, z);
            for (std::int64_t kz = 0; kz < nz; ++kz) {
                a[static_cast<std::size_t>(X + mx * (Y + my * kz))] = res[static_cast<std::size_t>(2 * kz)];
            }
        }
    }

    // Pass along y, keeping even y: b[X + mx * (ky + ny * kz)].
    std::vector<double> b(static_cast<std::size_t>(mx * ny * nz), kInf);
    line.resize(static_cast<std::size_t>(my));
    for (std::int64_t kz = 0; kz < nz; ++kz) {
        for (std::int64_t X = 0; X < mx; ++X) {
            for (std::int64_t Y = 0; Y < my; ++Y) {
                line[static_cast<std::size_t>(Y)] = a[static_cast<std::size_t>(X + mx * (Y + my * kz))];
            }
            envelope_1d(line, wy, res, v, z);
            for (std::int64_t ky = 0; ky < ny; ++ky) {
                b[static_cast<std::size_t>(X + mx * (ky + ny * kz))] = res[static_cast<std::size_t>(2 * ky)];
            }
        }
    }

    // Pass along x.
    ScalarVolume out(g);
    line.resize(static_cast<std::size_t>(mx));
    for (std::int64_t kz = 0; kz < nz; ++kz) {
        for (std::int64_t ky = 0; ky < ny; ++ky) {
            for (std::int64_t X = 0; X < mx; ++X) {
                line[static_cast<std::size_t>(X)] = b[static_cast<std::size_t>(X + mx * (ky + ny * kz))];
            }
            envelope_1d(line, wx, res, v, z);
            for (std::int64_t kx = 0; kx < nx; ++kx) {
                out.values[g.offset(kx, ky, kz)] = std::sqrt(res[static_cast<std::size_t>(2 * kx)]);
            }
        }
    }
    return out;
}

double wall_prior_value(double distance, double sigma, double truncation)
{
    if (distance > truncation) {
        return 0.0;
    }
    return std::exp(-distance * distance / (2.0 * sigma * sigma));
}

PriorMap wall_prior_from_segmentation(const LabelVolume& seg, double sigma, double truncation)
{
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw GridError("wall prior sigma must be positive");
    }
    if (seg.labels.size() == seg.grid.voxel_count() &&
        std::none_of(seg.labels.begin(), seg.labels.end(), [](auto l) { return l != 0; })) {
        throw GridError("wall prior needs a nonempty foreground");
    }
    if (truncation <= 0.0) {
        truncation = 4.0 * sigma;
    }
    const ScalarVolume dist = distance_to_boundary(seg);

    PriorMap prior;
    prior.grid = seg.grid;
    prior.label_names = {"background", "wall"};
    prior.channels.assign(2, ScalarVolume(seg.grid));
    for (std::size_t v = 0; v < dist.values.size(); ++v) {
        const double w = wall_prior_value(dist.values[v], sigma, truncation);
        prior.channels[kWallLabel].values[v] = w;
        prior.channels[kBackgroundLabel].values[v] = 1.0 - w;
    }
    return prior;
}

LabelVolume fuse_labels_majority(const std::vector<LabelVolume>& atlas_labels)
{
    if (atlas_labels.empty()) {
        throw GridError("label fusion needs at least one atlas");
    }
    const auto& grid = atlas_labels.front().grid;
    for (const auto& a : atlas_labels) {
        a.validate();
        if (!(a.grid == grid)) {
            throw GridError("label fusion: atlas grids differ");
        }
    }
    LabelVolume out(grid);
    std::map<std::int32_t, int> votes;
    for (std::size_t v = 0; v < out.labels.size(); ++v) {
        votes.clear();
        for (const auto& a : atlas_labels) {
            ++votes[a.labels[v]];
        }
        // std::map iterates in ascending label order, so strict > keeps the lowest id on ties.
        std::int32_t best = votes.begin()->first;
        int best_count = 0;
        for (const auto& [label, count] : votes) {
            if (count > best_count) {
                best = label;
                best_count = count;
            }
        }
        out.labels[v] = best;
    }
    return out;
}

}  // namespace mvseg
