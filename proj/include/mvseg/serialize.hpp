#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvseg/quantify.hpp"
#include "mvseg/registration.hpp"

namespace mvseg {

using Json = nlohmann::json;

/// {"affine": {"matrix": [9 row-major], "translation": [3]},
///  "ffd": {"origin": [3], "spacing": [3], "dims": [3], "displacements": [3 per control point]}}
Json to_json(const TransformStack& t);
TransformStack transform_from_json(const Json& j);

/// {"images": [stack...], "map": stack}
Json to_json(const SceneTransforms& t);
SceneTransforms scene_transforms_from_json(const Json& j);

Json to_json(const TissueConfig& c);
TissueConfig tissue_config_from_json(const Json& j);

/// Full parameter set; round-trips through params_from_json.
Json to_json(const MvmmParams& p);
MvmmParams params_from_json(const Json& j);

/// Expected voxel count per label and per (image, label, component).
Json posterior_summary(const PosteriorField& post);

Json to_json(const MetricsReport& m);
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& name, const MetricsReport& m);

Json to_json(const TraceEntry& e);
/// One JSON object per line.
void write_trace(std::ostream& out, const std::vector<TraceEntry>& trace);

/// Legacy ASCII VTK polydata: one vertex per shell element, "scar" point scalar (0/1).
void write_shell_vtk(std::ostream& out, const SurfaceShell& shell);

Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const Json& j, const std::filesystem::path& path);

}  // namespace mvseg
