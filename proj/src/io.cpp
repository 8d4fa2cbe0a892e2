#include "mvseg/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace mvseg {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(FormatErrorKind kind)
{
    switch (kind) {
    case FormatErrorKind::NotFound: return "not_found";
    case FormatErrorKind::Truncated: return "truncated";
    case FormatErrorKind::BadMagic: return "bad_magic";
    case FormatErrorKind::UnsupportedType: return "unsupported_type";
    case FormatErrorKind::BadHeader: return "bad_header";
    case FormatErrorKind::Unwritable: return "unwritable";
    }
    return "unknown";
}

FormatError::FormatError(FormatErrorKind kind, const std::string& message, std::int64_t offset)
    : std::runtime_error(message), kind_(kind), offset_(offset)
{
}

namespace {

// Header field offsets of the 348-byte single-file layout.
namespace hdr {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t intent_code = 68;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t qoffset_x = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
}  // namespace hdr

template <typename T>
T byteswap_value(T v)
{
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(std::begin(b), std::end(b));
    std::memcpy(&v, b, sizeof(T));
    return v;
}

class HeaderView {
public:
    HeaderView(const std::vector<unsigned char>& bytes, bool swap) : bytes_(bytes), swap_(swap) {}

    template <typename T>
    T get(std::size_t offset) const
    {
        T v;
        std::memcpy(&v, bytes_.data() + offset, sizeof(T));
        return swap_ ? byteswap_value(v) : v;
    }

private:
    const std::vector<unsigned char>& bytes_;
    bool swap_;
};

template <typename T>
void put(std::vector<unsigned char>& bytes, std::size_t offset, T v)
{
    std::memcpy(bytes.data() + offset, &v, sizeof(T));
}

std::size_t bytes_per_voxel(VoxelType t)
{
    switch (t) {
    case VoxelType::UInt8: return 1;
    case VoxelType::Int16: return 2;
    case VoxelType::Float32: return 4;
    }
    return 0;
}

std::vector<unsigned char> slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(FormatErrorKind::NotFound, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_json_path(const fs::path& path)
{
    return path.extension() == ".json";
}

VolumeFile read_raw_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError(FormatErrorKind::NotFound, "cannot open " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(FormatErrorKind::BadHeader, path.string() + ": " + e.what());
    }
    if (j.value("dtype", std::string{}) != "float64") {
        throw FormatError(FormatErrorKind::UnsupportedType, path.string() + ": raw payload must be float64");
    }
    VolumeFile f;
    try {
        const auto dims = j.at("dims").get<std::array<std::int64_t, 3>>();
        const auto sp = j.at("spacing").get<std::array<double, 3>>();
        const auto org = j.at("origin").get<std::array<double, 3>>();
        f.grid = VolumeGrid({dims[0], dims[1], dims[2]}, Vec3(sp[0], sp[1], sp[2]), Vec3(org[0], org[1], org[2]));
        f.channels = j.value("channels", std::int64_t{1});
    } catch (const json::exception& e) {
        throw FormatError(FormatErrorKind::BadHeader, path.string() + ": " + e.what());
    } catch (const GridError& e) {
        throw FormatError(FormatErrorKind::BadHeader, path.string() + ": " + e.what());
    }
    f.type = VoxelType::Float32;
    const fs::path raw = path.parent_path() / j.at("data").get<std::string>();
    const auto bytes = slurp(raw);
    const std::size_t n = f.grid.voxel_count() * static_cast<std::size_t>(f.channels);
    if (bytes.size() < n * sizeof(double)) {
        throw FormatError(FormatErrorKind::Truncated, raw.string() + ": payload shorter than the header declares",
                          static_cast<std::int64_t>(bytes.size()));
    }
    f.values.resize(n);
    std::memcpy(f.values.data(), bytes.data(), n * sizeof(double));
    return f;
}

void write_raw_json(const VolumeFile& f, const fs::path& path)
{
    fs::path raw = path;
    raw.replace_extension(".raw");
    json j;
    j["dims"] = f.grid.dims;
    j["spacing"] = {f.grid.spacing[0], f.grid.spacing[1], f.grid.spacing[2]};
    j["origin"] = {f.grid.origin[0], f.grid.origin[1], f.grid.origin[2]};
    j["channels"] = f.channels;
    j["dtype"] = "float64";
    j["data"] = raw.filename().string();
    std::ofstream out(path);
    if (!out) {
        throw FormatError(FormatErrorKind::Unwritable, "cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
    std::ofstream rout(raw, std::ios::binary);
    if (!rout) {
        throw FormatError(FormatErrorKind::Unwritable, "cannot write " + raw.string());
    }
    rout.write(reinterpret_cast<const char*>(f.values.data()),
               static_cast<std::streamsize>(f.values.size() * sizeof(double)));
}

}  // namespace

VolumeFile read_volume_file(const fs::path& path)
{
    if (is_json_path(path)) {
        return read_raw_json(path);
    }
    const auto bytes = slurp(path);
    const auto name = path.string();
    if (bytes.size() < kHeaderSize) {
        throw FormatError(FormatErrorKind::Truncated,
                          name + ": file ends at byte " + std::to_string(bytes.size()) + " inside the 348-byte header",
                          static_cast<std::int64_t>(bytes.size()));
    }
    std::int32_t sizeof_hdr = 0;
    std::memcpy(&sizeof_hdr, bytes.data(), 4);
    bool swap = false;
    if (sizeof_hdr != 348) {
        if (byteswap_value(sizeof_hdr) == 348) {
            swap = true;
        } else {
            throw FormatError(FormatErrorKind::BadHeader, name + ": sizeof_hdr at offset 0 is not 348", 0);
        }
    }
    if (!(bytes[hdr::magic] == 'n' && bytes[hdr::magic + 1] == '+' && bytes[hdr::magic + 2] == '1' &&
          bytes[hdr::magic + 3] == '\0')) {
        throw FormatError(FormatErrorKind::BadMagic,
                          name + ": magic mismatch at offset " + std::to_string(hdr::magic) + " (expected \"n+1\")",
                          static_cast<std::int64_t>(hdr::magic));
    }
    const HeaderView h(bytes, swap);

    const auto datatype = h.get<std::int16_t>(hdr::datatype);
    VoxelType type{};
    switch (datatype) {
    case 2: type = VoxelType::UInt8; break;
    case 4: type = VoxelType::Int16; break;
    case 16: type = VoxelType::Float32; break;
    default:
        throw FormatError(FormatErrorKind::UnsupportedType,
                          name + ": datatype code " + std::to_string(datatype) + " at offset " +
                              std::to_string(hdr::datatype) + " is not uint8/int16/float32",
                          static_cast<std::int64_t>(hdr::datatype));
    }

    std::array<std::int16_t, 8> dim{};
    for (std::size_t d = 0; d < 8; ++d) {
        dim[d] = h.get<std::int16_t>(hdr::dim + 2 * d);
    }
    if (dim[0] < 1 || dim[0] > 4) {
        throw FormatError(FormatErrorKind::BadHeader, name + ": dim[0] must be 1..4", static_cast<std::int64_t>(hdr::dim));
    }
    Index3 dims{1, 1, 1};
    for (int a = 0; a < 3; ++a) {
        if (a < dim[0]) {
            dims[a] = dim[static_cast<std::size_t>(a + 1)];
        }
        if (dims[a] < 1) {
            throw FormatError(FormatErrorKind::BadHeader, name + ": non-positive dimension",
                              static_cast<std::int64_t>(hdr::dim));
        }
    }
    const std::int64_t channels = dim[0] == 4 ? dim[4] : 1;
    if (channels < 1) {
        throw FormatError(FormatErrorKind::BadHeader, name + ": non-positive channel count",
                          static_cast<std::int64_t>(hdr::dim));
    }

    Vec3 spacing;
    for (int a = 0; a < 3; ++a) {
        spacing[a] = h.get<float>(hdr::pixdim + 4 * static_cast<std::size_t>(a + 1));
    }
    Vec3 origin = Vec3::Zero();
    const auto qform = h.get<std::int16_t>(hdr::qform_code);
    const auto sform = h.get<std::int16_t>(hdr::sform_code);
    if (sform > 0) {
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) {
                const double v = h.get<float>(hdr::srow_x + 16 * static_cast<std::size_t>(r) + 4 * static_cast<std::size_t>(c));
                if (c == 3) {
                    origin[r] = v;
                } else if (c == r) {
                    spacing[r] = v;
                } else if (v != 0.0) {
                    throw FormatError(FormatErrorKind::BadHeader, name + ": sform is not axis-aligned",
                                      static_cast<std::int64_t>(hdr::srow_x));
                }
            }
        }
    } else if (qform > 0) {
        for (int q = 0; q < 3; ++q) {
            if (h.get<float>(hdr::quatern_b + 4 * static_cast<std::size_t>(q)) != 0.0f) {
                throw FormatError(FormatErrorKind::BadHeader, name + ": qform rotation is not the identity",
                                  static_cast<std::int64_t>(hdr::quatern_b));
            }
            origin[q] = h.get<float>(hdr::qoffset_x + 4 * static_cast<std::size_t>(q));
        }
        if (h.get<float>(hdr::pixdim) < 0.0f) {
            throw FormatError(FormatErrorKind::BadHeader, name + ": qform flips the z axis",
                              static_cast<std::int64_t>(hdr::pixdim));
        }
    }

    VolumeFile f;
    f.type = type;
    f.channels = channels;
    try {
        f.grid = VolumeGrid(dims, spacing, origin);
    } catch (const GridError& e) {
        throw FormatError(FormatErrorKind::BadHeader, name + ": " + e.what());
    }

    const auto vox_offset = static_cast<std::size_t>(h.get<float>(hdr::vox_offset));
    if (vox_offset < kHeaderSize) {
        throw FormatError(FormatErrorKind::BadHeader, name + ": vox_offset lies inside the header",
                          static_cast<std::int64_t>(hdr::vox_offset));
    }
    const std::size_t n = f.grid.voxel_count() * static_cast<std::size_t>(channels);
    const std::size_t bpv = bytes_per_voxel(type);
    if (bytes.size() < vox_offset + n * bpv) {
        throw FormatError(FormatErrorKind::Truncated,
                          name + ": expected " + std::to_string(n * bpv) + " data bytes from offset " +
                              std::to_string(vox_offset) + ", file has " + std::to_string(bytes.size()),
                          static_cast<std::int64_t>(bytes.size()));
    }

    const double slope = h.get<float>(hdr::scl_slope);
    const double inter = h.get<float>(hdr::scl_inter);
    const bool scaled = slope != 0.0 && std::isfinite(slope) && !(slope == 1.0 && inter == 0.0);

    f.values.resize(n);
    const unsigned char* data = bytes.data() + vox_offset;
    for (std::size_t v = 0; v < n; ++v) {
        double value = 0.0;
        switch (type) {
        case VoxelType::UInt8: value = data[v]; break;
        case VoxelType::Int16: {
            std::int16_t s;
            std::memcpy(&s, data + 2 * v, 2);
            value = swap ? byteswap_value(s) : s;
            break;
        }
        case VoxelType::Float32: {
            float s;
            std::memcpy(&s, data + 4 * v, 4);
            value = swap ? byteswap_value(s) : s;
            break;
        }
        }
        f.values[v] = scaled ? value * slope + inter : value;
    }
    return f;
}

void write_volume_file(const VolumeFile& f, const fs::path& path)
{
    if (is_json_path(path)) {
        write_raw_json(f, path);
        return;
    }
    f.grid.validate();
    const std::size_t n = f.grid.voxel_count() * static_cast<std::size_t>(f.channels);
    if (f.values.size() != n) {
        throw FormatError(FormatErrorKind::BadHeader, "write_volume_file: value count does not match the grid");
    }
    const std::size_t bpv = bytes_per_voxel(f.type);
    std::vector<unsigned char> bytes(kDataOffset + n * bpv, 0);

    put<std::int32_t>(bytes, hdr::sizeof_hdr, 348);
    put<std::int16_t>(bytes, hdr::dim, f.channels > 1 ? 4 : 3);
    for (int a = 0; a < 3; ++a) {
        put<std::int16_t>(bytes, hdr::dim + 2 * static_cast<std::size_t>(a + 1), static_cast<std::int16_t>(f.grid.dims[a]));
    }
    put<std::int16_t>(bytes, hdr::dim + 8, static_cast<std::int16_t>(f.channels));
    for (std::size_t d = 5; d < 8; ++d) {
        put<std::int16_t>(bytes, hdr::dim + 2 * d, 1);
    }
    put<std::int16_t>(bytes, hdr::intent_code, 0);
    put<std::int16_t>(bytes, hdr::datatype, static_cast<std::int16_t>(f.type));
    put<std::int16_t>(bytes, hdr::bitpix, static_cast<std::int16_t>(8 * bpv));
    put<float>(bytes, hdr::pixdim, 1.0f);
    for (int a = 0; a < 3; ++a) {
        put<float>(bytes, hdr::pixdim + 4 * static_cast<std::size_t>(a + 1), static_cast<float>(f.grid.spacing[a]));
    }
    put<float>(bytes, hdr::pixdim + 16, 1.0f);
    put<float>(bytes, hdr::vox_offset, static_cast<float>(kDataOffset));
    put<float>(bytes, hdr::scl_slope, 1.0f);
    put<float>(bytes, hdr::scl_inter, 0.0f);
    bytes[hdr::xyzt_units] = 2;  // mm
    const char desc[] = "mvseg";
    std::memcpy(bytes.data() + hdr::descrip, desc, sizeof(desc));
    put<std::int16_t>(bytes, hdr::qform_code, 1);
    put<std::int16_t>(bytes, hdr::sform_code, 1);
    for (int a = 0; a < 3; ++a) {
        put<float>(bytes, hdr::qoffset_x + 4 * static_cast<std::size_t>(a), static_cast<float>(f.grid.origin[a]));
        for (int c = 0; c < 4; ++c) {
            const double v = c == 3 ? f.grid.origin[a] : (c == a ? f.grid.spacing[a] : 0.0);
            put<float>(bytes, hdr::srow_x + 16 * static_cast<std::size_t>(a) + 4 * static_cast<std::size_t>(c),
                       static_cast<float>(v));
        }
    }
    std::memcpy(bytes.data() + hdr::magic, "n+1\0", 4);

    unsigned char* data = bytes.data() + kDataOffset;
    for (std::size_t v = 0; v < n; ++v) {
        const double value = f.values[v];
        switch (f.type) {
        case VoxelType::UInt8: data[v] = static_cast<unsigned char>(std::clamp(std::lround(value), 0L, 255L)); break;
        case VoxelType::Int16: {
            const auto s = static_cast<std::int16_t>(std::clamp(std::lround(value), -32768L, 32767L));
            std::memcpy(data + 2 * v, &s, 2);
            break;
        }
        case VoxelType::Float32: {
            const auto s = static_cast<float>(value);
            std::memcpy(data + 4 * v, &s, 4);
            break;
        }
        }
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError(FormatErrorKind::Unwritable, "cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError(FormatErrorKind::Unwritable, "write failed for " + path.string());
    }
}

ScalarVolume read_scalar_volume(const fs::path& path)
{
    VolumeFile f = read_volume_file(path);
    if (f.channels != 1) {
        throw FormatError(FormatErrorKind::BadHeader, path.string() + ": expected a single-channel volume");
    }
    ScalarVolume v(f.grid);
    v.values = std::move(f.values);
    try {
        v.validate();
    } catch (const GridError& e) {
        throw FormatError(FormatErrorKind::BadHeader, path.string() + ": " + e.what());
    }
    return v;
}

LabelVolume read_label_volume(const fs::path& path)
{
    const VolumeFile f = read_volume_file(path);
    if (f.channels != 1) {
        throw FormatError(FormatErrorKind::BadHeader, path.string() + ": expected a single-channel volume");
    }
    LabelVolume v(f.grid);
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        const double x = f.values[i];
        if (!(x >= 0.0) || x != std::floor(x)) {
            throw FormatError(FormatErrorKind::BadHeader, path.string() + ": label volume holds a non-label value");
        }
        v.labels[i] = static_cast<std::int32_t>(x);
    }
    return v;
}

void write_volume(const ScalarVolume& vol, const fs::path& path, VoxelType type)
{
    write_volume_file(VolumeFile{vol.grid, 1, type, vol.values}, path);
}

void write_volume(const LabelVolume& vol, const fs::path& path)
{
    const auto max_label = vol.labels.empty() ? 0 : *std::max_element(vol.labels.begin(), vol.labels.end());
    if (max_label > 32767) {
        throw FormatError(FormatErrorKind::UnsupportedType, "label " + std::to_string(max_label) + " exceeds int16");
    }
    VolumeFile f{vol.grid, 1, max_label <= 255 ? VoxelType::UInt8 : VoxelType::Int16, {}};
    f.values.assign(vol.labels.begin(), vol.labels.end());
    write_volume_file(f, path);
}

fs::path prior_sidecar_path(const fs::path& path)
{
    fs::path p = path;
    p.replace_extension(".labels.json");
    return p;
}

void write_prior(const PriorMap& prior, const fs::path& path)
{
    VolumeFile f{prior.grid, static_cast<std::int64_t>(prior.label_count()), VoxelType::Float32, {}};
    for (const auto& ch : prior.channels) {
        f.values.insert(f.values.end(), ch.values.begin(), ch.values.end());
    }
    write_volume_file(f, path);
    json j;
    j["labels"] = prior.label_names;
    std::ofstream out(prior_sidecar_path(path));
    if (!out) {
        throw FormatError(FormatErrorKind::Unwritable, "cannot write " + prior_sidecar_path(path).string());
    }
    out << j.dump(2) << '\n';
}

PriorMap read_prior(const fs::path& path)
{
    const VolumeFile f = read_volume_file(path);
    PriorMap prior;
    prior.grid = f.grid;
    const auto n = f.grid.voxel_count();
    for (std::int64_t c = 0; c < f.channels; ++c) {
        ScalarVolume ch(f.grid);
        std::copy_n(f.values.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * n), n,
                    ch.values.begin());
        prior.channels.push_back(std::move(ch));
    }
    const auto sidecar = prior_sidecar_path(path);
    if (fs::exists(sidecar)) {
        std::ifstream in(sidecar);
        try {
            json j;
            in >> j;
            prior.label_names = j.at("labels").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw FormatError(FormatErrorKind::BadHeader, sidecar.string() + ": " + e.what());
        }
    } else {
        for (std::int64_t c = 0; c < f.channels; ++c) {
            prior.label_names.push_back("label" + std::to_string(c));
        }
    }
    try {
        prior.validate(1e-5);
    } catch (const GridError& e) {
        throw FormatError(FormatErrorKind::BadHeader, path.string() + ": " + e.what());
    }
    return prior;
}

}  // namespace mvseg
