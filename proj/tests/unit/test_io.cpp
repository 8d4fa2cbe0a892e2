#include <doctest.h>

#include <bit>
#include <cstring>

#include "mvseg/io.hpp"
#include "mvseg/serialize.hpp"
#include "support.hpp"

using namespace mvseg;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

template <typename T>
void put(std::vector<unsigned char>& b, std::size_t at, T v, bool big)
{
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if (big) {
        std::reverse(raw, raw + sizeof(T));
    }
    std::memcpy(b.data() + at, raw, sizeof(T));
}

/// Minimal single-file header laid out field by field, followed by int16 payload.
std::vector<unsigned char> hand_built(const std::vector<std::int16_t>& payload, std::int16_t nx, std::int16_t ny,
                                      std::int16_t nz, bool big = false)
{
    std::vector<unsigned char> b(352 + 2 * payload.size(), 0);
    put<std::int32_t>(b, 0, 348, big);
    put<std::int16_t>(b, 40, 3, big);
    put<std::int16_t>(b, 42, nx, big);
    put<std::int16_t>(b, 44, ny, big);
    put<std::int16_t>(b, 46, nz, big);
    put<std::int16_t>(b, 48, 1, big);
    put<std::int16_t>(b, 70, 4, big);
    put<std::int16_t>(b, 72, 16, big);
    put<float>(b, 76, 1.0f, big);
    put<float>(b, 80, 0.5f, big);
    put<float>(b, 84, 2.0f, big);
    put<float>(b, 88, 3.0f, big);
    put<float>(b, 108, 352.0f, big);
    put<float>(b, 112, 2.0f, big);
    put<float>(b, 116, 1.0f, big);
    put<std::int16_t>(b, 252, 1, big);
    put<float>(b, 268, -4.0f, big);
    put<float>(b, 272, 5.0f, big);
    put<float>(b, 276, 6.0f, big);
    std::memcpy(b.data() + 344, "n+1\0", 4);
    for (std::size_t v = 0; v < payload.size(); ++v) {
        put<std::int16_t>(b, 352 + 2 * v, payload[v], big);
    }
    return b;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b)
{
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

FormatErrorKind kind_of(const fs::path& p)
{
    try {
        (void)read_volume_file(p);
    } catch (const FormatError& e) {
        return e.kind();
    }
    FAIL("no FormatError");
    return FormatErrorKind::BadHeader;
}

}  // namespace

TEST_SUITE("io")
{
    TEST_CASE("hand-built header in either byte order")
    {
        const fs::path dir = scratch_dir("io_hand");
        const std::vector<std::int16_t> payload{0, 1, -2, 300, 7, 8};
        for (bool big : {false, true}) {
            const fs::path p = dir / (big ? "big.nii" : "little.nii");
            write_bytes(p, hand_built(payload, 3, 2, 1, big));
            const ScalarVolume v = read_scalar_volume(p);
            CHECK(v.grid.dims == Index3{3, 2, 1});
            CHECK(v.grid.spacing.isApprox(Vec3(0.5, 2.0, 3.0)));
            CHECK(v.grid.origin.isApprox(Vec3(-4.0, 5.0, 6.0)));
            for (std::size_t x = 0; x < payload.size(); ++x) {
                CHECK(v.values[x] == 2.0 * payload[x] + 1.0);
            }
        }
    }

    TEST_CASE("malformed files map to distinct errors")
    {
        const fs::path dir = scratch_dir("io_bad");
        auto bytes = hand_built({1, 2, 3, 4}, 2, 2, 1);
        auto magic = bytes;
        magic[345] = 'x';
        write_bytes(dir / "magic.nii", magic);
        try {
            (void)read_volume_file(dir / "magic.nii");
            FAIL("accepted a bad magic");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatErrorKind::BadMagic);
            CHECK(e.offset() == 344);
            CHECK(std::string(e.what()).find("344") != std::string::npos);
        }
        auto cut = bytes;
        cut.resize(cut.size() - 3);
        write_bytes(dir / "cut.nii", cut);
        CHECK(kind_of(dir / "cut.nii") == FormatErrorKind::Truncated);
        write_bytes(dir / "short.nii", std::vector<unsigned char>(bytes.begin(), bytes.begin() + 100));
        CHECK(kind_of(dir / "short.nii") == FormatErrorKind::Truncated);
        auto type = bytes;
        put<std::int16_t>(type, 70, 64, false);
        write_bytes(dir / "type.nii", type);
        CHECK(kind_of(dir / "type.nii") == FormatErrorKind::UnsupportedType);
        auto dims = bytes;
        put<std::int16_t>(dims, 42, 0, false);
        write_bytes(dir / "dims.nii", dims);
        CHECK(kind_of(dir / "dims.nii") == FormatErrorKind::BadHeader);
        CHECK(kind_of(dir / "absent.nii") == FormatErrorKind::NotFound);
    }

    TEST_CASE("float32 round trip is exact")
    {
        Rng rng(60);
        const fs::path dir = scratch_dir("io_round");
        const VolumeGrid g({5, 4, 3}, Vec3(0.75, 1.25, 2.5), Vec3(-3.0, 1.5, 10.0));
        ScalarVolume v(g);
        for (auto& x : v.values) {
            x = static_cast<float>(uniform(rng, -1000.0, 1000.0));
        }
        write_volume(v, dir / "v.nii");
        const ScalarVolume r = read_scalar_volume(dir / "v.nii");
        CHECK(r.grid == g);
        CHECK(r.values == v.values);
        const VolumeFile f = read_volume_file(dir / "v.nii");
        CHECK(f.type == VoxelType::Float32);
    }

    TEST_CASE("json and raw fallback keeps doubles exactly")
    {
        Rng rng(61);
        const fs::path dir = scratch_dir("io_json");
        const VolumeGrid g({3, 3, 2}, Vec3(1.0, 1.0, 1.0));
        ScalarVolume v(g);
        for (auto& x : v.values) {
            x = uniform(rng, 0.0, 1.0);
        }
        write_volume(v, dir / "v.json");
        CHECK(read_scalar_volume(dir / "v.json").values == v.values);
    }

    TEST_CASE("label volumes")
    {
        const fs::path dir = scratch_dir("io_labels");
        const VolumeGrid g({4, 1, 1}, Vec3::Ones());
        const LabelVolume small(g, std::vector<std::int32_t>{0, 1, 2, 255});
        write_volume(small, dir / "small.nii");
        CHECK(read_volume_file(dir / "small.nii").type == VoxelType::UInt8);
        CHECK(read_label_volume(dir / "small.nii").labels == small.labels);
        const LabelVolume big(g, std::vector<std::int32_t>{0, 1, 2, 1000});
        write_volume(big, dir / "big.nii");
        CHECK(read_volume_file(dir / "big.nii").type == VoxelType::Int16);
        CHECK(read_label_volume(dir / "big.nii").labels == big.labels);
        write_volume(ScalarVolume(g, std::vector<double>{0.0, 1.5, 0.0, 1.0}), dir / "frac.nii");
        CHECK_THROWS(read_label_volume(dir / "frac.nii"));
    }

    TEST_CASE("prior maps keep channels and names")
    {
        Rng rng(62);
        const fs::path dir = scratch_dir("io_prior");
        const PriorMap prior = smooth_random_prior(rng, VolumeGrid({5, 5, 5}, Vec3::Ones()));
        write_prior(prior, dir / "prior.nii");
        CHECK(fs::exists(prior_sidecar_path(dir / "prior.nii")));
        const PriorMap back = read_prior(dir / "prior.nii");
        CHECK(back.label_names == prior.label_names);
        REQUIRE(back.label_count() == 2);
        for (std::size_t x = 0; x < 125; ++x) {
            CHECK(back.channels[1].values[x] == doctest::Approx(prior.channels[1].values[x]).epsilon(1e-7));
        }
    }

    TEST_CASE("unwritable destinations")
    {
        const VolumeGrid g({2, 2, 2}, Vec3::Ones());
        try {
            write_volume(ScalarVolume(g), "/nonexistent_dir_for_mvseg/x.nii");
            FAIL("wrote into a missing directory");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatErrorKind::Unwritable);
        }
    }
}

TEST_SUITE("serialize")
{
    TEST_CASE("transforms and parameters round-trip through JSON")
    {
        Rng rng(63);
        const VolumeGrid dom({10, 10, 10}, Vec3::Ones());
        const TransformStack t = random_transform(rng, dom, 4.0, 0.5);
        const Json j = Json::parse(to_json(t).dump());
        CHECK(transform_from_json(j).parameters() == t.parameters());
        CHECK(transform_from_json(j).ffd.control_dims == t.ffd.control_dims);

        const TissueConfig cfg = random_config(rng, 2, 2, 3);
        const MvmmParams p = random_params(rng, cfg);
        const MvmmParams q = params_from_json(Json::parse(to_json(p).dump()));
        CHECK(q.config.components == p.config.components);
        CHECK(q.label_proportions == p.label_proportions);
        CHECK(q.components[1][1][0].sigma == p.components[1][1][0].sigma);
        CHECK_THROWS(transform_from_json(Json::parse(R"({"affine": {"matrix": [1, 2]}})")));
    }

    TEST_CASE("metrics CSV row")
    {
        const MetricsReport m = MetricsReport::from_counts(8, 2, 8, 2);
        CHECK(metrics_csv_header() == "name,tp,fp,tn,fn,dice,accuracy,sensitivity,specificity");
        const std::string row = metrics_csv_row("case", m);
        CHECK(row.rfind("case,8,2,8,2,", 0) == 0);
        CHECK(to_json(m)["dice"].get<double>() == doctest::Approx(0.8));
    }

    TEST_CASE("trace lines and shell export")
    {
        std::ostringstream trace;
        write_trace(trace, {{"init", 0, 0, -10.5, 0.0, 0}, {"em", 1, 1, -9.0, 0.0, 0}});
        std::istringstream lines(trace.str());
        std::string line;
        int n = 0;
        while (std::getline(lines, line)) {
            CHECK(Json::parse(line).contains("phase"));
            ++n;
        }
        CHECK(n == 2);

        LabelVolume seg(VolumeGrid({3, 3, 3}, Vec3::Ones()));
        seg.at(1, 1, 1) = 1;
        SurfaceShell shell = extract_shell(seg);
        shell.scar = {true};
        std::ostringstream vtk;
        write_shell_vtk(vtk, shell);
        CHECK(vtk.str().find("POINTS 1") != std::string::npos);
        CHECK(vtk.str().find("SCALARS scar") != std::string::npos);
    }

    TEST_CASE("malformed JSON files are header errors")
    {
        const fs::path dir = scratch_dir("json_bad");
        std::ofstream(dir / "bad.json") << "{ not json";
        try {
            (void)read_json_file(dir / "bad.json");
            FAIL("parsed malformed JSON");
        } catch (const FormatError& e) {
            CHECK(e.kind() == FormatErrorKind::BadHeader);
        }
    }
}
