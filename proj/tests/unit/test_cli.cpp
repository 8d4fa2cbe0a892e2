#include <doctest.h>

#include <sstream>

#include "mvseg/cli.hpp"
#include "mvseg/io.hpp"
#include "mvseg/serialize.hpp"
#include "support.hpp"

using namespace mvseg;
using namespace testsupport;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args)
{
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

/// Phantom written once per test binary run.
const fs::path& phantom_dir()
{
    static const fs::path dir = [] {
        const fs::path d = scratch_dir("cli_phantom");
        const Run r = cli({"phantom", "--out", d.string(), "--size", "28", "--seed", "5"});
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

std::string at(const std::string& name)
{
    return (phantom_dir() / name).string();
}

}  // namespace

TEST_SUITE("cli")
{
    TEST_CASE("component count parsing")
    {
        CHECK(parse_component_counts("2,2/2,1") == std::vector<std::vector<int>>{{2, 2}, {2, 1}});
        CHECK(parse_component_counts("1,3") == std::vector<std::vector<int>>{{1, 3}});
        CHECK_THROWS(parse_component_counts("2,x"));
        CHECK_THROWS(parse_component_counts("2,2/1"));
    }

    TEST_CASE("usage errors")
    {
        const Run none = cli({});
        CHECK(none.code == static_cast<int>(ExitCode::Usage));
        CHECK(none.err.rfind("mvseg: error[usage]: ", 0) == 0);
        CHECK(cli({"segment", "--prior", "p.nii"}).code == static_cast<int>(ExitCode::Usage));
        CHECK(cli({"frobnicate"}).code == static_cast<int>(ExitCode::Usage));
        const Run help = cli({"--help"});
        CHECK(help.code == 0);
        CHECK(help.out.find("segment") != std::string::npos);
    }

    TEST_CASE("phantom outputs")
    {
        for (const char* f : {"image0.nii", "image1.nii", "truth_labels.nii", "truth_scar.nii", "anatomy.nii",
                              "prior.nii", "truth_transforms.json"}) {
            CHECK(fs::exists(phantom_dir() / f));
        }
        const fs::path again = scratch_dir("cli_phantom_again");
        REQUIRE(cli({"phantom", "--out", again.string(), "--size", "28", "--seed", "5"}).code == 0);
        CHECK(slurp(again / "image0.nii") == slurp(phantom_dir() / "image0.nii"));
        CHECK(cli({"phantom", "--out", again.string(), "--size", "28", "--wall-thickness", "-1"}).code ==
              static_cast<int>(ExitCode::Spec));
        CHECK(cli({"phantom", "--out", again.string(), "--size", "28", "--wall-thickness", "8"}).code ==
              static_cast<int>(ExitCode::GridMismatch));
    }

    TEST_CASE("missing and malformed inputs")
    {
        const fs::path dir = scratch_dir("cli_missing");
        const Run missing = cli({"segment", "--image", (dir / "nope.nii").string(), "--prior", at("prior.nii"),
                                 "--out", (dir / "o").string()});
        CHECK(missing.code == static_cast<int>(ExitCode::NotFound));
        CHECK(missing.err.find("nope.nii") != std::string::npos);
        CHECK(missing.err.rfind("mvseg: error[not_found]: ", 0) == 0);

        const std::string bytes = slurp(phantom_dir() / "image0.nii");
        std::string bad_magic = bytes;
        bad_magic[344] = 'X';
        std::ofstream(dir / "bad.nii", std::ios::binary) << bad_magic;
        const Run bad = cli({"project", "--scar", (dir / "bad.nii").string(), "--seg", at("anatomy.nii"), "--out",
                             (dir / "p").string()});
        CHECK(bad.code == static_cast<int>(ExitCode::BadMagic));
        CHECK(bad.err.find("error[bad_magic]") != std::string::npos);

        std::ofstream(dir / "short.nii", std::ios::binary) << bytes.substr(0, 400);
        CHECK(cli({"project", "--scar", (dir / "short.nii").string(), "--seg", at("anatomy.nii"), "--out",
                   (dir / "p").string()})
                  .code == static_cast<int>(ExitCode::Truncated));
        CHECK(cli({"eval", "--pred", at("truth_scar.nii"), "--truth", at("image0.nii"), "--seg", at("anatomy.nii"),
                   "--out", (dir / "m").string()})
                  .code != 0);
    }

    TEST_CASE("eval of truth against itself and against nothing")
    {
        const fs::path dir = scratch_dir("cli_eval");
        const Run self = cli({"eval", "--pred", at("truth_scar.nii"), "--truth", at("truth_scar.nii"), "--seg",
                              at("anatomy.nii"), "--out", (dir / "self").string(), "--name", "self"});
        REQUIRE(self.code == 0);
        const Json js = read_json_file(dir / "self.json");
        CHECK(js["dice"].get<double>() == 1.0);
        CHECK(slurp(dir / "self.csv").rfind(metrics_csv_header() + "\nself,", 0) == 0);

        const LabelVolume truth = read_label_volume(at("truth_scar.nii"));
        write_volume(LabelVolume(truth.grid), dir / "empty.nii");
        REQUIRE(cli({"eval", "--pred", (dir / "empty.nii").string(), "--truth", at("truth_scar.nii"), "--seg",
                     at("anatomy.nii"), "--out", (dir / "empty").string()})
                    .code == 0);
        const Json je = read_json_file(dir / "empty.json");
        CHECK(je["dice"].get<double>() == 0.0);
        CHECK(je["sensitivity"].get<double>() == 0.0);
    }

    TEST_CASE("prior subcommand matches the library")
    {
        const fs::path dir = scratch_dir("cli_prior");
        REQUIRE(cli({"prior", "--seg", at("anatomy.nii"), "--out", (dir / "p.nii").string(), "--sigma", "1.5"}).code == 0);
        const PriorMap got = read_prior(dir / "p.nii");
        const PriorMap want = wall_prior_from_segmentation(read_label_volume(at("anatomy.nii")), 1.5);
        REQUIRE(got.grid == want.grid);
        for (std::size_t x = 0; x < want.channels[1].values.size(); x += 13) {
            CHECK(got.channels[1].values[x] == doctest::Approx(want.channels[1].values[x]).epsilon(1e-6));
        }
    }

    TEST_CASE("segment and baselines write their artifacts")
    {
        const fs::path dir = scratch_dir("cli_segment");
        const Run sg = cli({"segment", "--image", at("image0.nii"), "--image", at("image1.nii"), "--prior",
                            at("prior.nii"), "--seg", at("anatomy.nii"), "--out", (dir / "mv").string(), "--components",
                            "1,2/2,1", "--blocks", "2", "--em-iters", "3"});
        REQUIRE(sg.code == 0);
        for (const char* f : {"labels.nii", "scar.nii", "params.json", "transforms.json", "posterior.json",
                              "trace.jsonl", "run.json", "surface.vtk", "surface.json"}) {
            CHECK(fs::exists(dir / "mv" / f));
        }
        CHECK(read_label_volume(dir / "mv" / "scar.nii").count(1) > 0);
        CHECK(read_label_volume(dir / "mv" / "labels.nii").grid == read_label_volume(at("anatomy.nii")).grid);

        REQUIRE(cli({"baseline-otsu", "--image", at("image0.nii"), "--prior", at("prior.nii"), "--seg",
                     at("anatomy.nii"), "--out", (dir / "otsu").string()})
                    .code == 0);
        CHECK(fs::exists(dir / "otsu" / "surface.vtk"));
        REQUIRE(cli({"baseline-gmm", "--image", at("image0.nii"), "--prior", at("prior.nii"), "--seg",
                     at("anatomy.nii"), "--out", (dir / "gmm").string(), "--components", "1,2", "--blocks", "2"})
                    .code == 0);
        CHECK(fs::exists(dir / "gmm" / "params.json"));
        REQUIRE(cli({"project", "--scar", at("truth_scar.nii"), "--seg", at("anatomy.nii"), "--out",
                     (dir / "proj").string(), "--radius", "2"})
                    .code == 0);
        CHECK(read_json_file(dir / "proj" / "surface.json")["radius"].get<double>() == 2.0);
    }

    TEST_CASE("configuration files in JSON and TOML")
    {
        const fs::path dir = scratch_dir("cli_config");
        std::ofstream(dir / "eval.json") << "{\"pred\": \"" << at("truth_scar.nii") << "\", \"truth\": \""
                                          << at("truth_scar.nii") << "\", \"seg\": \"" << at("anatomy.nii")
                                          << "\", \"out\": \"" << (dir / "j").string() << "\", \"radius\": 2.5}";
        REQUIRE(cli({"eval", "--config", (dir / "eval.json").string()}).code == 0);
        CHECK(fs::exists(dir / "j.json"));

        std::ofstream(dir / "project.toml") << "scar = \"" << at("truth_scar.nii") << "\"\nseg = \""
                                             << at("anatomy.nii") << "\"\nout = \"" << (dir / "t").string()
                                             << "\"\nradius = 1.0\n";
        REQUIRE(cli({"project", "--config", (dir / "project.toml").string()}).code == 0);
        CHECK(read_json_file(dir / "t" / "surface.json")["radius"].get<double>() == 1.0);

        // Explicit flags override the file.
        REQUIRE(cli({"project", "--config", (dir / "project.toml").string(), "--radius", "2.0"}).code == 0);
        CHECK(read_json_file(dir / "t" / "surface.json")["radius"].get<double>() == 2.0);

        std::ofstream(dir / "phantom.json") << "{\"out\": \"" << (dir / "ph").string()
                                             << "\", \"size\": 24, \"translation\": [1, 0, 0]}";
        REQUIRE(cli({"phantom", "--config", (dir / "phantom.json").string()}).code == 0);
        CHECK(fs::exists(dir / "ph" / "image0.nii"));

        std::ofstream(dir / "broken.json") << "{\"pred\": ";
        CHECK(cli({"eval", "--config", (dir / "broken.json").string()}).code == static_cast<int>(ExitCode::Usage));
        std::ofstream(dir / "unknown.json") << "{\"bogus\": 1}";
        CHECK(cli({"eval", "--config", (dir / "unknown.json").string()}).code == static_cast<int>(ExitCode::Usage));
        CHECK(cli({"eval", "--config", (dir / "absent.json").string()}).code == static_cast<int>(ExitCode::NotFound));
    }
}
