#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvseg/prior.hpp"
#include "mvseg/volume.hpp"

namespace mvseg {

/// Distinct failure classes of volume reading; each maps to its own CLI exit status.
enum class FormatErrorKind {
    NotFound,
    Truncated,
    BadMagic,
    UnsupportedType,
    BadHeader,
    Unwritable,
};

const char* to_string(FormatErrorKind kind);

class FormatError : public std::runtime_error {
public:
    FormatError(FormatErrorKind kind, const std::string& message, std::int64_t offset = -1);
    FormatErrorKind kind() const { return kind_; }
    /// Byte offset the error refers to, or -1.
    std::int64_t offset() const { return offset_; }

private:
    FormatErrorKind kind_;
    std::int64_t offset_;
};

enum class VoxelType : std::int16_t {
    UInt8 = 2,
    Int16 = 4,
    Float32 = 16,
};

/// Raw file contents: a 3-D grid with one or more channels (4th dimension).
struct VolumeFile {
    VolumeGrid grid;
    std::int64_t channels = 1;
    VoxelType type = VoxelType::Float32;
    std::vector<double> values;  // channel-major, x fastest within a channel
};

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kDataOffset = 352;

/// Reads a single-file ".nii" volume, or a ".json" header naming a float64 raw payload.
VolumeFile read_volume_file(const std::filesystem::path& path);
void write_volume_file(const VolumeFile& file, const std::filesystem::path& path);

ScalarVolume read_scalar_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);
void write_volume(const ScalarVolume& vol, const std::filesystem::path& path, VoxelType type = VoxelType::Float32);
/// Written as uint8 when every label fits, else int16.
void write_volume(const LabelVolume& vol, const std::filesystem::path& path);

/// Multi-channel float32 volume plus a "<stem>.labels.json" sidecar naming each channel.
void write_prior(const PriorMap& prior, const std::filesystem::path& path);
PriorMap read_prior(const std::filesystem::path& path);
std::filesystem::path prior_sidecar_path(const std::filesystem::path& path);

}  // namespace mvseg
