#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "mvseg/quantify.hpp"
#include "mvseg/registration.hpp"

namespace mvseg {

/// Exit statuses of the command-line tool; every failure class has its own.
enum class ExitCode : int {
    Ok = 0,
    Usage = 2,
    NotFound = 3,
    Truncated = 4,
    BadMagic = 5,
    UnsupportedType = 6,
    BadHeader = 7,
    Unwritable = 8,
    GridMismatch = 9,
    Model = 10,
    Transform = 11,
    Spec = 12,
    Internal = 13,
};

/// Inputs and settings of one segmentation run.
struct RunConfig {
    std::vector<std::filesystem::path> images;
    std::filesystem::path prior;
    std::filesystem::path segmentation;  // optional; enables surface projection
    TissueConfig tissue = TissueConfig::two_image_default();
    OptimizerConfig optimizer;
    double control_spacing = 10.0;
    double projection_radius = 3.0;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;

    /// Throws FormatError(NotFound) naming the first missing input.
    void validate() const;
};

/// Writes labels.nii, scar.nii, params.json, transforms.json, posterior.json,
/// trace.jsonl, run.json and, with a segmentation, surface.vtk + surface.json.
SegmentationOutcome cmd_segment(const RunConfig& config);

/// Surface metrics of `pred_scar` against `truth_scar` on the shell of `segmentation`.
MetricsReport cmd_eval(const std::filesystem::path& pred_scar, const std::filesystem::path& truth_scar,
                       const std::filesystem::path& segmentation, double radius);

/// Parses "a,b/c,d" (per image, per label component counts).
std::vector<std::vector<int>> parse_component_counts(const std::string& text);

/// Entry point of the `mvseg` tool; `args` excludes the program name.
/// Failures print one line "mvseg: error[<kind>]: <message>" to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mvseg
