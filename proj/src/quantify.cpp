#include "mvseg/quantify.hpp"

#include <algorithm>
#include <cmath>

namespace mvseg {

std::size_t SurfaceShell::scar_count() const
{
    return static_cast<std::size_t>(std::count(scar.begin(), scar.end(), true));
}

MetricsReport MetricsReport::from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn)
{
    auto ratio = [](std::uint64_t num, std::uint64_t den) {
        return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    MetricsReport m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
    m.sensitivity = ratio(tp, tp + fn);
    m.specificity = ratio(tn, tn + fp);
    m.dice = ratio(2 * tp, 2 * tp + fp + fn);
    return m;
}

SurfaceShell extract_shell(const LabelVolume& seg)
{
    seg.validate();
    const auto& g = seg.grid;
    SurfaceShell shell;
    shell.grid = g;
    static constexpr std::array<std::array<int, 3>, 6> kFaces{
        {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    for (std::size_t off = 0; off < seg.labels.size(); ++off) {
        if (seg.labels[off] == 0) {
            continue;
        }
        const Index3 idx = g.index_of(off);
        bool boundary = false;
        for (const auto& f : kFaces) {
            const Index3 n{idx[0] + f[0], idx[1] + f[1], idx[2] + f[2]};
            if (!g.contains(n) || seg.labels[g.offset(n)] == 0) {
                boundary = true;
                break;
            }
        }
        if (boundary) {
            shell.elements.push_back(off);
            shell.positions.push_back(g.world(idx));
        }
    }
    if (shell.elements.empty()) {
        throw GridError("extract_shell: segmentation has no foreground");
    }
    shell.scar.assign(shell.elements.size(), false);
    return shell;
}

SurfaceShell project_scar(const SurfaceShell& shell, const LabelVolume& scar_map, double max_dist)
{
    scar_map.validate();
    SurfaceShell out = shell;
    const auto& g = scar_map.grid;
    const double r2 = max_dist * max_dist;
    for (std::size_t e = 0; e < shell.size(); ++e) {
        const Vec3& p = shell.positions[e];
        const Vec3 c = g.continuous_index(p);
        Index3 lo{};
        Index3 hi{};
        bool empty = false;
        for (int a = 0; a < 3; ++a) {
            const double reach = max_dist / g.spacing[a];
            lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(c[a] - reach)));
            hi[a] = std::min<std::int64_t>(g.dims[a] - 1, static_cast<std::int64_t>(std::floor(c[a] + reach)));
            empty = empty || lo[a] > hi[a];
        }
        bool hit = false;
        for (auto k = lo[2]; !empty && !hit && k <= hi[2]; ++k) {
            for (auto j = lo[1]; !hit && j <= hi[1]; ++j) {
                for (auto i = lo[0]; !hit && i <= hi[0]; ++i) {
                    if (scar_map.labels[g.offset(i, j, k)] == 0) {
                        continue;
                    }
                    hit = (g.world(Index3{i, j, k}) - p).squaredNorm() <= r2;
                }
            }
        }
        out.scar[e] = hit;
    }
    return out;
}

MetricsReport surface_metrics(const SurfaceShell& pred, const SurfaceShell& truth)
{
    if (!(pred.grid == truth.grid) || pred.elements != truth.elements || pred.scar.size() != pred.elements.size() ||
        truth.scar.size() != truth.elements.size()) {
        throw GridError("surface_metrics: shells do not share the same elements");
    }
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;
    for (std::size_t e = 0; e < pred.size(); ++e) {
        const bool p = pred.scar[e];
        const bool t = truth.scar[e];
        tp += static_cast<std::uint64_t>(p && t);
        fp += static_cast<std::uint64_t>(p && !t);
        tn += static_cast<std::uint64_t>(!p && !t);
        fn += static_cast<std::uint64_t>(!p && t);
    }
    return MetricsReport::from_counts(tp, fp, tn, fn);
}

MetricsReport voxel_metrics(const LabelVolume& pred, const LabelVolume& truth)
{
    if (!(pred.grid == truth.grid) || pred.labels.size() != truth.labels.size()) {
        throw GridError("voxel_metrics: grids differ");
    }
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;
    for (std::size_t x = 0; x < pred.labels.size(); ++x) {
        const bool p = pred.labels[x] != 0;
        const bool t = truth.labels[x] != 0;
        tp += static_cast<std::uint64_t>(p && t);
        fp += static_cast<std::uint64_t>(p && !t);
        tn += static_cast<std::uint64_t>(!p && !t);
        fn += static_cast<std::uint64_t>(!p && t);
    }
    return MetricsReport::from_counts(tp, fp, tn, fn);
}

int OtsuResult::bin_of(double v) const
{
    const double b = std::floor((v - lower) / bin_width);
    return static_cast<int>(std::clamp(b, 0.0, static_cast<double>(kOtsuBins - 1)));
}

OtsuResult otsu(std::span<const double> values)
{
    if (values.empty()) {
        throw GridError("otsu: no values");
    }
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) {
        throw GridError("otsu: all values are equal");
    }
    OtsuResult r;
    r.lower = lo;
    r.bin_width = (hi - lo) / kOtsuBins;

    std::array<double, kOtsuBins> hist{};
    for (double v : values) {
        hist[static_cast<std::size_t>(r.bin_of(v))] += 1.0;
    }
    const double total = static_cast<double>(values.size());
    double sum_all = 0.0;
    for (int b = 0; b < kOtsuBins; ++b) {
        sum_all += b * hist[static_cast<std::size_t>(b)];
    }

    double w0 = 0.0;
    double sum0 = 0.0;
    double best = -1.0;
    int best_bin = 1;
    for (int t = 1; t < kOtsuBins; ++t) {
        w0 += hist[static_cast<std::size_t>(t - 1)];
        sum0 += (t - 1) * hist[static_cast<std::size_t>(t - 1)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) {
            continue;
        }
        const double m0 = sum0 / w0;
        const double m1 = (sum_all - sum0) / w1;
        const double between = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_bin = t;
        }
    }
    r.bin = best_bin;
    r.threshold = lo + best_bin * r.bin_width;
    return r;
}

double otsu_threshold(std::span<const double> values)
{
    return otsu(values).threshold;
}

Classification otsu_baseline(const ScalarVolume& image, const PriorMap& prior, const VolumeGrid& domain)
{
    prior.validate();
    domain.validate();
    const ScalarVolume img = image.grid == domain ? image : resample_to_grid(image, domain);
    PriorMap local = prior;
    if (!(prior.grid == domain)) {
        local.grid = domain;
        for (auto& ch : local.channels) {
            ch = resample_to_grid(ch, domain);
        }
    }
    const auto wall = static_cast<std::int32_t>(kWallLabel);

    Classification out{LabelVolume(domain), LabelVolume(domain)};
    std::vector<double> masked;
    for (std::size_t x = 0; x < img.values.size(); ++x) {
        if (local.argmax(x) == wall) {
            out.labels.labels[x] = wall;
            masked.push_back(img.values[x]);
        }
    }
    if (masked.empty()) {
        throw GridError("otsu_baseline: the prior has no wall region");
    }
    const OtsuResult split = otsu(masked);
    for (std::size_t x = 0; x < img.values.size(); ++x) {
        if (out.labels.labels[x] == wall && split.upper(img.values[x])) {
            out.scar.labels[x] = 1;
        }
    }
    return out;
}

Classification otsu_baseline(const ScalarVolume& image, const PriorMap& prior)
{
    return otsu_baseline(image, prior, prior.grid);
}

SegmentationOutcome gmm_baseline(const ScalarVolume& image, const PriorMap& prior, const VolumeGrid& domain,
                                 const TissueConfig& tissue, const OptimizerConfig& optimizer)
{
    if (tissue.image_count() != 1) {
        throw ModelError("gmm_baseline expects a single-image tissue config");
    }
    Scene scene;
    scene.domain = domain;
    scene.prior = prior;
    scene.images.push_back(image);
    OptimizerConfig frozen = optimizer;
    frozen.freeze_images = {true};
    frozen.freeze_map = true;
    return segment_scene(scene, tissue, frozen, SceneTransforms::identity(scene));
}

SegmentationOutcome gmm_baseline(const ScalarVolume& image, const PriorMap& prior, const TissueConfig& tissue,
                                 const OptimizerConfig& optimizer)
{
    return gmm_baseline(image, prior, prior.grid, tissue, optimizer);
}

}  // namespace mvseg
