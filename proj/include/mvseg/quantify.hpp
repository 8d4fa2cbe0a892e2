#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvseg/registration.hpp"

namespace mvseg {

/// Boundary voxels of an anatomical foreground with a per-element scar flag.
struct SurfaceShell {
    VolumeGrid grid;
    std::vector<std::size_t> elements;  // sorted voxel offsets
    std::vector<Vec3> positions;        // world position of each element
    std::vector<bool> scar;

    std::size_t size() const { return elements.size(); }
    std::size_t scar_count() const;
};

struct MetricsReport {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;
    double dice = 0.0;
    double accuracy = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;

    /// Metrics from confusion counts. A ratio with an empty denominator is 1
    /// (nothing to get wrong).
    static MetricsReport from_counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn);
};

/// Foreground (label != 0) voxels with at least one background 6-neighbour;
/// outside the grid counts as background. Throws GridError on empty foreground.
SurfaceShell extract_shell(const LabelVolume& seg);

/// Flags each element that has a scar voxel (label != 0) within `max_dist` mm.
SurfaceShell project_scar(const SurfaceShell& shell, const LabelVolume& scar_map, double max_dist = 3.0);

/// Confusion counts over shell elements, scar as the positive class. Throws
/// GridError if the two shells do not share the same elements.
MetricsReport surface_metrics(const SurfaceShell& pred, const SurfaceShell& truth);

/// Voxel-wise metrics of two binary maps (label != 0 is positive).
MetricsReport voxel_metrics(const LabelVolume& pred, const LabelVolume& truth);

struct OtsuResult {
    double threshold = 0.0;  // lower edge of the first bin of the upper class
    int bin = 0;             // values in bins >= bin form the upper class
    double lower = 0.0;
    double bin_width = 0.0;

    int bin_of(double v) const;
    bool upper(double v) const { return bin_of(v) >= bin; }
};

inline constexpr int kOtsuBins = 256;

/// Between-class-variance maximizing split of a 256-bin histogram over the
/// value range; ties go to the lower threshold. Throws GridError if all values are equal.
OtsuResult otsu(std::span<const double> values);
double otsu_threshold(std::span<const double> values);

/// Thresholding baseline: the wall mask is the argmax-prior wall region; mask
/// voxels in the upper Otsu class of `image` are scar. Image and prior are
/// resampled onto `domain`.
Classification otsu_baseline(const ScalarVolume& image, const PriorMap& prior, const VolumeGrid& domain);
Classification otsu_baseline(const ScalarVolume& image, const PriorMap& prior);

/// Single-image mixture baseline: the model restricted to `image` with every
/// transform frozen at identity, on `domain`.
SegmentationOutcome gmm_baseline(const ScalarVolume& image, const PriorMap& prior, const VolumeGrid& domain,
                                 const TissueConfig& tissue, const OptimizerConfig& optimizer);
SegmentationOutcome gmm_baseline(const ScalarVolume& image, const PriorMap& prior, const TissueConfig& tissue,
                                 const OptimizerConfig& optimizer);

}  // namespace mvseg
