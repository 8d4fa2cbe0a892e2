#include "mvseg/cli.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "mvseg/io.hpp"
#include "mvseg/phantom.hpp"
#include "mvseg/serialize.hpp"

namespace mvseg {

namespace fs = std::filesystem;

namespace {

/// Config files: a JSON object when the first non-blank character is '{', TOML otherwise.
class JsonOrTomlConfig : public CLI::ConfigBase {
public:
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override
    {
        std::string text((std::istreambuf_iterator<char>(input)), std::istreambuf_iterator<char>());
        const auto first = text.find_first_not_of(" \t\r\n");
        if (first == std::string::npos || text[first] != '{') {
            std::istringstream toml(text);
            return CLI::ConfigBase::from_config(toml);
        }
        Json j;
        try {
            j = Json::parse(text);
        } catch (const Json::exception& e) {
            throw CLI::ConversionError(std::string("config: ") + e.what());
        }
        std::vector<CLI::ConfigItem> items;
        flatten(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const Json& v)
    {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        return v.dump();
    }

    static void flatten(const Json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items)
    {
        for (const auto& [key, value] : obj.items()) {
            std::string name = key;
            std::replace(name.begin(), name.end(), '_', '-');
            if (value.is_null()) {
                continue;
            }
            if (value.is_object()) {
                auto sub = parents;
                sub.push_back(name);
                flatten(value, sub, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = name;
            if (value.is_array()) {
                const bool nested = !value.empty() && value.front().is_array();
                if (nested) {
                    std::string joined;
                    for (std::size_t r = 0; r < value.size(); ++r) {
                        joined += r ? "/" : "";
                        for (std::size_t c = 0; c < value[r].size(); ++c) {
                            joined += (c ? "," : "") + scalar(value[r][c]);
                        }
                    }
                    item.inputs.push_back(joined);
                } else {
                    for (const auto& e : value) {
                        item.inputs.push_back(scalar(e));
                    }
                }
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }
};

struct CliFailure {
    ExitCode code;
    std::string kind;
};

void add_config_option(CLI::App* sub)
{
    sub->add_option("--config", "JSON or TOML file of option values; command-line flags take precedence");
}

bool given_on_command_line(const std::vector<std::string>& args, const std::string& flag)
{
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Replaces a subcommand's --config file by the equivalent option tokens.
std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& args)
{
    if (args.empty()) {
        return args;
    }
    const CLI::App* sub = nullptr;
    for (const auto* candidate : app.get_subcommands({})) {
        if (candidate->get_name() == args.front()) {
            sub = candidate;
        }
    }
    if (sub == nullptr) {
        return args;
    }
    std::vector<std::string> rest;
    std::vector<fs::path> files;
    for (std::size_t n = 0; n < args.size(); ++n) {
        if (args[n] == "--config") {
            if (n + 1 >= args.size()) {
                throw CLI::ArgumentMismatch("--config needs a file");
            }
            files.emplace_back(args[++n]);
        } else if (args[n].rfind("--config=", 0) == 0) {
            files.emplace_back(args[n].substr(9));
        } else {
            rest.push_back(args[n]);
        }
    }
    const std::vector<std::string> explicit_args = rest;
    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) {
            throw FormatError(FormatErrorKind::NotFound, "config file not found: " + file.string());
        }
        for (const auto& item : JsonOrTomlConfig{}.from_config(in)) {
            std::string name = item.name;
            std::replace(name.begin(), name.end(), '_', '-');
            if (!item.parents.empty() || name.empty()) {
                throw CLI::ConversionError("config " + file.string() + ": nested key \"" + item.fullname() + "\"");
            }
            const std::string flag = "--" + name;
            const CLI::Option* opt = sub->get_option_no_throw(flag);
            if (opt == nullptr || name == "config") {
                throw CLI::ConversionError("config " + file.string() + ": unknown option \"" + name + "\"");
            }
            if (given_on_command_line(explicit_args, flag)) {
                continue;
            }
            if (opt->get_expected_max() == 0) {
                const std::string v = item.inputs.empty() ? "true" : item.inputs.front();
                if (v == "true" || v == "1") {
                    rest.push_back(flag);
                }
                continue;
            }
            if (opt->get_expected_min() > 1) {
                rest.push_back(flag);
                rest.insert(rest.end(), item.inputs.begin(), item.inputs.end());
                continue;
            }
            for (const auto& v : item.inputs) {
                rest.push_back(flag);
                rest.push_back(v);
            }
        }
    }
    return rest;
}

CliFailure classify_failure(const FormatError& e)
{
    switch (e.kind()) {
    case FormatErrorKind::NotFound: return {ExitCode::NotFound, "not_found"};
    case FormatErrorKind::Truncated: return {ExitCode::Truncated, "truncated"};
    case FormatErrorKind::BadMagic: return {ExitCode::BadMagic, "bad_magic"};
    case FormatErrorKind::UnsupportedType: return {ExitCode::UnsupportedType, "unsupported_type"};
    case FormatErrorKind::BadHeader: return {ExitCode::BadHeader, "bad_header"};
    case FormatErrorKind::Unwritable: return {ExitCode::Unwritable, "unwritable"};
    }
    return {ExitCode::Internal, "internal"};
}

std::string one_line(std::string msg)
{
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::replace(msg.begin(), msg.end(), '\r', ' ');
    return msg;
}

int fail(std::ostream& err, const CliFailure& f, const std::string& msg)
{
    err << "mvseg: error[" << f.kind << "]: " << one_line(msg) << '\n';
    return static_cast<int>(f.code);
}

void require_file(const fs::path& p)
{
    if (!fs::is_regular_file(p)) {
        throw FormatError(FormatErrorKind::NotFound, "input not found: " + p.string());
    }
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw FormatError(FormatErrorKind::Unwritable, "cannot create directory " + dir.string());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError(FormatErrorKind::Unwritable, "cannot write " + path.string());
    }
    out << text;
}

Vec3 to_vec3(const std::vector<double>& v)
{
    return v.size() == 3 ? Vec3(v[0], v[1], v[2]) : Vec3::Zero();
}

LabelVolume on_grid(const LabelVolume& seg, const VolumeGrid& grid, const std::string& what)
{
    if (!(seg.grid == grid)) {
        throw GridError(what + " grid does not match the common-space grid");
    }
    return seg;
}

void write_classification(const Classification& c, const fs::path& dir)
{
    write_volume(c.labels, dir / "labels.nii");
    write_volume(c.scar, dir / "scar.nii");
}

void write_projection(const LabelVolume& seg, const LabelVolume& scar, double radius, const fs::path& dir)
{
    const SurfaceShell shell = project_scar(extract_shell(on_grid(seg, scar.grid, "segmentation")), scar, radius);
    std::ostringstream vtk;
    write_shell_vtk(vtk, shell);
    write_text(dir / "surface.vtk", vtk.str());
    write_json_file(Json{{"elements", shell.size()}, {"scar_elements", shell.scar_count()}, {"radius", radius}},
                    dir / "surface.json");
}

void write_fit(const IcmResult& fit, const fs::path& dir)
{
    write_json_file(to_json(fit.params), dir / "params.json");
    write_json_file(to_json(fit.transforms), dir / "transforms.json");
    write_json_file(posterior_summary(fit.posteriors), dir / "posterior.json");
    std::ostringstream trace;
    write_trace(trace, fit.trace);
    write_text(dir / "trace.jsonl", trace.str());
}

Json optimizer_json(const OptimizerConfig& o)
{
    return Json{{"em_iters_per_block", o.em_iters_per_block},
                {"transform_steps_per_block", o.transform_steps_per_block},
                {"icm_blocks", o.icm_blocks},
                {"step_size_affine", o.step_size_affine},
                {"step_size_ffd", o.step_size_ffd},
                {"ll_rel_tol", o.ll_rel_tol},
                {"grad_norm_tol", o.grad_norm_tol},
                {"max_halvings", o.max_halvings},
                {"optimize_affine", o.optimize_affine},
                {"optimize_ffd", o.optimize_ffd},
                {"freeze_images", o.freeze_images},
                {"freeze_map", o.freeze_map}};
}

/// Optimizer flags shared by segment and baseline-gmm.
struct OptimizerFlags {
    OptimizerConfig config;
    std::vector<int> freeze;
    bool no_affine = false;
    bool no_ffd = false;

    void attach(CLI::App* app)
    {
        app->add_option("--em-iters", config.em_iters_per_block, "EM cycles per ICM block")->capture_default_str();
        app->add_option("--steps", config.transform_steps_per_block, "ascent steps per transform per block")
            ->capture_default_str();
        app->add_option("--blocks", config.icm_blocks, "ICM blocks")->capture_default_str();
        app->add_option("--step-affine", config.step_size_affine, "affine step (mm)")->capture_default_str();
        app->add_option("--step-ffd", config.step_size_ffd, "largest control-point move per step (mm)")
            ->capture_default_str();
        app->add_option("--ll-rel-tol", config.ll_rel_tol, "relative LL gain that ends the fit")
            ->capture_default_str();
        app->add_option("--grad-tol", config.grad_norm_tol, "per-voxel gradient norm below which a transform rests")
            ->capture_default_str();
        app->add_option("--max-halvings", config.max_halvings, "step halvings per ascent step")
            ->capture_default_str();
        app->add_option("--freeze-image", freeze, "keep F_i of image i fixed (repeatable)");
        app->add_flag("--freeze-map", config.freeze_map, "keep the prior-map transform fixed");
        app->add_flag("--no-affine", no_affine, "optimize only the FFD part");
        app->add_flag("--no-ffd", no_ffd, "optimize only the affine part");
    }

    OptimizerConfig resolve(std::size_t images) const
    {
        OptimizerConfig c = config;
        c.optimize_affine = !no_affine;
        c.optimize_ffd = !no_ffd;
        c.freeze_images.assign(images, false);
        for (int i : freeze) {
            if (i < 0 || static_cast<std::size_t>(i) >= images) {
                throw ModelError("--freeze-image " + std::to_string(i) + " is out of range");
            }
            c.freeze_images[static_cast<std::size_t>(i)] = true;
        }
        c.validate();
        return c;
    }
};

}  // namespace

std::vector<std::vector<int>> parse_component_counts(const std::string& text)
{
    std::vector<std::vector<int>> out;
    std::stringstream images(text);
    std::string image;
    while (std::getline(images, image, '/')) {
        auto& row = out.emplace_back();
        std::stringstream labels(image);
        std::string tok;
        while (std::getline(labels, tok, ',')) {
            std::size_t used = 0;
            int v = 0;
            try {
                v = std::stoi(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || tok.find_first_not_of(" \t", used) != std::string::npos) {
                throw ModelError("component counts: cannot parse \"" + tok + "\" in \"" + text + "\"");
            }
            row.push_back(v);
        }
    }
    if (out.empty()) {
        throw ModelError("component counts: empty specification");
    }
    for (const auto& row : out) {
        if (row.size() != out.front().size()) {
            throw ModelError("component counts: every image needs the same number of labels in \"" + text + "\"");
        }
    }
    return out;
}

void RunConfig::validate() const
{
    if (images.empty()) {
        throw ModelError("segment: at least one --image is required");
    }
    for (const auto& p : images) {
        require_file(p);
    }
    require_file(prior);
    if (!segmentation.empty()) {
        require_file(segmentation);
    }
    if (tissue.image_count() != images.size()) {
        throw ModelError("segment: the component counts describe " + std::to_string(tissue.image_count()) +
                         " images but " + std::to_string(images.size()) + " were given");
    }
    tissue.validate();
    optimizer.validate();
    if (!(projection_radius >= 0.0) || !(control_spacing > 0.0)) {
        throw ModelError("segment: radius must be non-negative and control spacing positive");
    }
}

SegmentationOutcome cmd_segment(const RunConfig& config)
{
    config.validate();
    Scene scene;
    scene.prior = read_prior(config.prior);
    scene.domain = scene.prior.grid;
    for (const auto& p : config.images) {
        scene.images.push_back(read_scalar_volume(p));
    }
    LabelVolume seg;
    if (!config.segmentation.empty()) {
        seg = read_label_volume(config.segmentation);
        scene.domain = seg.grid;
    }
    ensure_dir(config.output_dir);

    const SegmentationOutcome result =
        segment_scene(scene, config.tissue, config.optimizer, SceneTransforms::identity(scene, config.control_spacing));

    write_classification(result.classes, config.output_dir);
    write_fit(result.fit, config.output_dir);
    Json run;
    Json images = Json::array();
    for (const auto& p : config.images) {
        images.push_back(p.string());
    }
    run["images"] = std::move(images);
    run["prior"] = config.prior.string();
    run["segmentation"] = config.segmentation.string();
    run["tissue"] = to_json(config.tissue);
    run["optimizer"] = optimizer_json(config.optimizer);
    run["control_spacing"] = config.control_spacing;
    run["projection_radius"] = config.projection_radius;
    run["seed"] = config.seed;
    run["blocks_run"] = result.fit.blocks_run;
    run["reseed_count"] = result.fit.reseed_count;
    run["warnings"] = result.fit.warnings;
    run["log_likelihood"] = result.fit.trace.empty() ? 0.0 : result.fit.trace.back().log_likelihood;
    write_json_file(run, config.output_dir / "run.json");
    if (!config.segmentation.empty()) {
        write_projection(seg, result.classes.scar, config.projection_radius, config.output_dir);
    }
    return result;
}

MetricsReport cmd_eval(const fs::path& pred_scar, const fs::path& truth_scar, const fs::path& segmentation,
                       double radius)
{
    for (const auto& p : {pred_scar, truth_scar, segmentation}) {
        require_file(p);
    }
    const LabelVolume pred = read_label_volume(pred_scar);
    const LabelVolume truth = read_label_volume(truth_scar);
    const LabelVolume seg = read_label_volume(segmentation);
    if (!(pred.grid == truth.grid) || !(seg.grid == truth.grid)) {
        throw GridError("eval: predicted scar, truth scar and segmentation must share one grid");
    }
    const SurfaceShell shell = extract_shell(seg);
    return surface_metrics(project_scar(shell, pred, radius), project_scar(shell, truth, radius));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Joint two-image segmentation with a multivariate mixture model and embedded registration", "mvseg"};
    app.require_subcommand(1);

    // phantom
    auto* ph = app.add_subcommand("phantom", "generate a synthetic two-image phantom with ground truth");
    fs::path ph_out;
    std::int64_t ph_size = 64;
    std::uint64_t ph_seed = 1;
    std::vector<double> ph_translation{0.0, 0.0, 0.0};
    double ph_ffd = 0.0;
    std::vector<double> ph_shift{0.0, 0.0, 0.0};
    int ph_image = 0;
    double ph_wall = 3.0;
    double ph_prior_sigma = 2.0;
    add_config_option(ph);
    ph->add_option("--out", ph_out, "output directory")->required();
    ph->add_option("--size", ph_size, "voxels per axis (1 mm spacing)")->capture_default_str();
    ph->add_option("--seed", ph_seed, "noise seed")->capture_default_str();
    ph->add_option("--translation", ph_translation, "ground-truth translation of the misaligned image (mm)")
        ->expected(3)
        ->delimiter(',');
    ph->add_option("--ffd-amplitude", ph_ffd, "largest ground-truth control-point displacement (mm)")
        ->capture_default_str();
    ph->add_option("--misaligned-image", ph_image, "image receiving the ground-truth transform")->capture_default_str();
    ph->add_option("--wall-thickness", ph_wall, "wall thickness (mm)")->capture_default_str();
    ph->add_option("--prior-sigma", ph_prior_sigma, "Gaussian width of the generated prior (mm)")->capture_default_str();
    ph->add_option("--anatomy-shift", ph_shift, "shift of the anatomy the prior is built from (mm)")
        ->expected(3)
        ->delimiter(',');

    // prior
    auto* pr = app.add_subcommand("prior", "build a wall prior from an anatomical segmentation");
    std::vector<fs::path> pr_segs;
    fs::path pr_out;
    double pr_sigma = 2.0;
    double pr_trunc = 0.0;
    add_config_option(pr);
    pr->add_option("--seg", pr_segs, "segmentation(s); several are fused by majority vote")->required();
    pr->add_option("--out", pr_out, "output prior volume")->required();
    pr->add_option("--sigma", pr_sigma, "Gaussian width (mm)")->capture_default_str();
    pr->add_option("--truncation", pr_trunc, "cut-off distance (mm); 0 selects 4 sigma")->capture_default_str();

    // segment
    auto* sg = app.add_subcommand("segment", "joint segmentation with registration");
    RunConfig run;
    std::string sg_components = "2,2/2,1";
    OptimizerFlags sg_opt;
    add_config_option(sg);
    sg->add_option("--image", run.images, "input image (repeat per image; image order matches --components)")
        ->required();
    sg->add_option("--prior", run.prior, "prior volume")->required();
    sg->add_option("--seg", run.segmentation, "anatomical segmentation for surface projection");
    sg->add_option("--out", run.output_dir, "output directory")->required();
    sg->add_option("--components", sg_components, "components per label, images separated by '/'")
        ->capture_default_str();
    sg->add_option("--scar-image", run.tissue.scar_image, "image holding the enhanced component")
        ->capture_default_str();
    sg->add_option("--control-spacing", run.control_spacing, "FFD control spacing (mm)")->capture_default_str();
    sg->add_option("--radius", run.projection_radius, "projection radius (mm)")->capture_default_str();
    sg->add_option("--seed", run.seed, "run seed (recorded; the fit is deterministic)")->capture_default_str();
    sg_opt.attach(sg);

    // baseline-otsu
    auto* bo = app.add_subcommand("baseline-otsu", "Otsu threshold inside the prior wall region");
    fs::path bo_image;
    fs::path bo_prior;
    fs::path bo_seg;
    fs::path bo_out;
    double bo_radius = 3.0;
    add_config_option(bo);
    bo->add_option("--image", bo_image, "enhanced image")->required();
    bo->add_option("--prior", bo_prior, "prior volume")->required();
    bo->add_option("--seg", bo_seg, "anatomical segmentation for surface projection");
    bo->add_option("--out", bo_out, "output directory")->required();
    bo->add_option("--radius", bo_radius, "projection radius (mm)")->capture_default_str();

    // baseline-gmm
    auto* bg = app.add_subcommand("baseline-gmm", "single-image mixture without registration");
    fs::path bg_image;
    fs::path bg_prior;
    fs::path bg_seg;
    fs::path bg_out;
    double bg_radius = 3.0;
    std::string bg_components = "2,2";
    OptimizerFlags bg_opt;
    add_config_option(bg);
    bg->add_option("--image", bg_image, "enhanced image")->required();
    bg->add_option("--prior", bg_prior, "prior volume")->required();
    bg->add_option("--seg", bg_seg, "anatomical segmentation for surface projection");
    bg->add_option("--out", bg_out, "output directory")->required();
    bg->add_option("--components", bg_components, "components per label")->capture_default_str();
    bg->add_option("--radius", bg_radius, "projection radius (mm)")->capture_default_str();
    bg_opt.attach(bg);

    // eval
    auto* ev = app.add_subcommand("eval", "surface scar metrics of a prediction against truth");
    fs::path ev_pred;
    fs::path ev_truth;
    fs::path ev_seg;
    fs::path ev_out;
    std::string ev_name = "run";
    double ev_radius = 3.0;
    add_config_option(ev);
    ev->add_option("--pred", ev_pred, "predicted scar map")->required();
    ev->add_option("--truth", ev_truth, "ground-truth scar map")->required();
    ev->add_option("--seg", ev_seg, "anatomical segmentation defining the surface")->required();
    ev->add_option("--out", ev_out, "output prefix; writes <prefix>.json and <prefix>.csv")->required();
    ev->add_option("--name", ev_name, "row label of the CSV line")->capture_default_str();
    ev->add_option("--radius", ev_radius, "projection radius (mm)")->capture_default_str();

    // project
    auto* pj = app.add_subcommand("project", "project a scar map onto the surface shell");
    fs::path pj_scar;
    fs::path pj_seg;
    fs::path pj_out;
    double pj_radius = 3.0;
    add_config_option(pj);
    pj->add_option("--scar", pj_scar, "scar map")->required();
    pj->add_option("--seg", pj_seg, "anatomical segmentation defining the surface")->required();
    pj->add_option("--out", pj_out, "output directory")->required();
    pj->add_option("--radius", pj_radius, "projection radius (mm)")->capture_default_str();

    try {
        const std::vector<std::string> expanded = expand_config(app, args);
        std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        return fail(err, {ExitCode::Usage, "usage"}, e.what());
    } catch (const FormatError& e) {
        return fail(err, classify_failure(e), e.what());
    }

    try {
        if (ph->parsed()) {
            PhantomSpec spec = PhantomSpec::standard(ph_size, ph_seed);
            spec.anatomy_shift = to_vec3(ph_shift);
            spec.wall_thickness = ph_wall;
            spec.prior_sigma = ph_prior_sigma;
            const Vec3 t = to_vec3(ph_translation);
            if (ph_image < 0 || static_cast<std::size_t>(ph_image) >= spec.image_count()) {
                throw SpecError("--misaligned-image is out of range");
            }
            if (!t.isZero() || ph_ffd > 0.0) {
                spec.transforms.assign(spec.image_count(), TransformStack::identity(spec.grid));
                spec.transforms[static_cast<std::size_t>(ph_image)] = misalignment(spec.grid, t, ph_ffd, ph_seed);
            }
            const Phantom p = generate_phantom(spec);
            ensure_dir(ph_out);
            for (std::size_t i = 0; i < p.images.size(); ++i) {
                write_volume(p.images[i], ph_out / ("image" + std::to_string(i) + ".nii"));
            }
            write_volume(p.truth_labels, ph_out / "truth_labels.nii");
            write_volume(p.truth_scar, ph_out / "truth_scar.nii");
            write_volume(p.tissue, ph_out / "tissue.nii");
            write_volume(p.anatomy, ph_out / "anatomy.nii");
            write_prior(p.prior, ph_out / "prior.nii");
            Json truth = Json::array();
            for (const auto& tr : p.truth_transforms) {
                truth.push_back(to_json(tr));
            }
            write_json_file(truth, ph_out / "truth_transforms.json");
            out << "phantom: " << p.images.size() << " images, " << p.truth_scar.count(1) << " scar voxels -> "
                << ph_out.string() << '\n';
        } else if (pr->parsed()) {
            std::vector<LabelVolume> segs;
            for (const auto& p : pr_segs) {
                require_file(p);
                segs.push_back(read_label_volume(p));
            }
            const LabelVolume seg = segs.size() == 1 ? segs.front() : fuse_labels_majority(segs);
            write_prior(wall_prior_from_segmentation(seg, pr_sigma, pr_trunc), pr_out);
            out << "prior: " << pr_out.string() << '\n';
        } else if (sg->parsed()) {
            run.tissue.components = parse_component_counts(sg_components);
            run.tissue.label_count = run.tissue.components.front().size();
            run.optimizer = sg_opt.resolve(run.images.size());
            const SegmentationOutcome r = cmd_segment(run);
            out << "segment: " << r.fit.blocks_run << " blocks, LL "
                << (r.fit.trace.empty() ? 0.0 : r.fit.trace.back().log_likelihood) << ", "
                << r.classes.scar.count(1) << " scar voxels -> " << run.output_dir.string() << '\n';
            for (const auto& w : r.fit.warnings) {
                err << "mvseg: warning: " << one_line(w) << '\n';
            }
        } else if (bo->parsed()) {
            require_file(bo_image);
            require_file(bo_prior);
            if (!bo_seg.empty()) {
                require_file(bo_seg);
            }
            const PriorMap prior = read_prior(bo_prior);
            const ScalarVolume image = read_scalar_volume(bo_image);
            const LabelVolume seg = bo_seg.empty() ? LabelVolume() : read_label_volume(bo_seg);
            const Classification c = otsu_baseline(image, prior, bo_seg.empty() ? prior.grid : seg.grid);
            ensure_dir(bo_out);
            write_classification(c, bo_out);
            if (!bo_seg.empty()) {
                write_projection(seg, c.scar, bo_radius, bo_out);
            }
            out << "baseline-otsu: " << c.scar.count(1) << " scar voxels -> " << bo_out.string() << '\n';
        } else if (bg->parsed()) {
            require_file(bg_image);
            require_file(bg_prior);
            if (!bg_seg.empty()) {
                require_file(bg_seg);
            }
            TissueConfig tissue = TissueConfig::single_image_default();
            tissue.components = parse_component_counts(bg_components);
            tissue.label_count = tissue.components.front().size();
            const PriorMap prior = read_prior(bg_prior);
            const ScalarVolume image = read_scalar_volume(bg_image);
            const LabelVolume seg = bg_seg.empty() ? LabelVolume() : read_label_volume(bg_seg);
            const SegmentationOutcome r =
                gmm_baseline(image, prior, bg_seg.empty() ? prior.grid : seg.grid, tissue, bg_opt.resolve(1));
            ensure_dir(bg_out);
            write_classification(r.classes, bg_out);
            write_fit(r.fit, bg_out);
            if (!bg_seg.empty()) {
                write_projection(seg, r.classes.scar, bg_radius, bg_out);
            }
            out << "baseline-gmm: " << r.classes.scar.count(1) << " scar voxels -> " << bg_out.string() << '\n';
        } else if (ev->parsed()) {
            const MetricsReport m = cmd_eval(ev_pred, ev_truth, ev_seg, ev_radius);
            fs::path json_path = ev_out;
            json_path += ".json";
            fs::path csv_path = ev_out;
            csv_path += ".csv";
            write_json_file(to_json(m), json_path);
            write_text(csv_path, metrics_csv_header() + "\n" + metrics_csv_row(ev_name, m) + "\n");
            out << metrics_csv_row(ev_name, m) << '\n';
        } else if (pj->parsed()) {
            require_file(pj_scar);
            require_file(pj_seg);
            const LabelVolume scar = read_label_volume(pj_scar);
            ensure_dir(pj_out);
            write_projection(read_label_volume(pj_seg), scar, pj_radius, pj_out);
            out << "project: -> " << (pj_out / "surface.vtk").string() << '\n';
        }
    } catch (const FormatError& e) {
        return fail(err, classify_failure(e), e.what());
    } catch (const GridError& e) {
        return fail(err, {ExitCode::GridMismatch, "grid"}, e.what());
    } catch (const ModelError& e) {
        return fail(err, {ExitCode::Model, "model"}, e.what());
    } catch (const TransformError& e) {
        return fail(err, {ExitCode::Transform, "transform"}, e.what());
    } catch (const SpecError& e) {
        return fail(err, {ExitCode::Spec, "spec"}, e.what());
    } catch (const std::exception& e) {
        return fail(err, {ExitCode::Internal, "internal"}, e.what());
    }
    return 0;
}

}  // namespace mvseg
