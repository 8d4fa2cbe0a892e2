#pragma once

#include <string>
#include <vector>

#include "mvseg/volume.hpp"

namespace mvseg {

/// Label ids used throughout the two-label model.
inline constexpr std::int32_t kBackgroundLabel = 0;
inline constexpr std::int32_t kWallLabel = 1;

/// Per-voxel label prior channels A_k on one grid. Channel k holds p(s(x) = k).
struct PriorMap {
    VolumeGrid grid;
    std::vector<ScalarVolume> channels;
    std::vector<std::string> label_names;

    std::size_t label_count() const { return channels.size(); }

    /// Throws GridError unless every channel lives on `grid`, values lie in
    /// [0, 1] and the channels sum to 1 within `tolerance` at every voxel.
    void validate(double tolerance = 1e-6) const;

    /// Index of the channel with the largest value at a voxel (lowest id on ties).
    std::int32_t argmax(std::size_t voxel) const;
};

/// Unsigned Euclidean distance (mm) from every voxel center to the nearest
/// foreground/background face center. A face is the interface between two
/// face-adjacent voxels of which exactly one is foreground (label != 0).
/// Exact on the lattice; computed by separable lower-envelope passes over a
/// doubled lattice. Throws GridError if the volume is all foreground or all
/// background.
ScalarVolume distance_to_boundary(const LabelVolume& seg);

/// exp(-d^2 / (2 sigma^2)) for d <= truncation, else 0.
double wall_prior_value(double distance, double sigma, double truncation);

/// Two-channel (background, wall) prior: a unit-peak Gaussian of the distance
/// to the segmentation boundary. `truncation` <= 0 selects 4 sigma.
PriorMap wall_prior_from_segmentation(const LabelVolume& seg, double sigma = 2.0, double truncation = 0.0);

/// Per-voxel modal label; ties go to the lowest label id.
LabelVolume fuse_labels_majority(const std::vector<LabelVolume>& atlas_labels);

}  // namespace mvseg
