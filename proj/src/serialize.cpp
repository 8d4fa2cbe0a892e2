#include "mvseg/serialize.hpp"

#include <cstdio>
#include <fstream>

#include "mvseg/io.hpp"

namespace mvseg {

namespace {

Json vec_json(const Vec3& v)
{
    return Json::array({v[0], v[1], v[2]});
}

Vec3 vec_from(const Json& j)
{
    const auto a = j.get<std::array<double, 3>>();
    return {a[0], a[1], a[2]};
}

template <typename F>
auto guarded(const char* what, F&& f)
{
    try {
        return f();
    } catch (const Json::exception& e) {
        throw FormatError(FormatErrorKind::BadHeader, std::string(what) + ": " + e.what());
    }
}

}  // namespace

Json to_json(const TransformStack& t)
{
    Json j;
    const auto p = t.affine.parameters();
    j["affine"]["matrix"] = std::vector<double>(p.begin(), p.begin() + 9);
    j["affine"]["translation"] = std::vector<double>(p.begin() + 9, p.end());
    j["ffd"]["origin"] = vec_json(t.ffd.control_origin);
    j["ffd"]["spacing"] = vec_json(t.ffd.control_spacing);
    j["ffd"]["dims"] = t.ffd.control_dims;
    std::vector<double> d;
    d.reserve(t.ffd.parameter_count());
    for (const auto& v : t.ffd.displacements) {
        d.insert(d.end(), {v[0], v[1], v[2]});
    }
    j["ffd"]["displacements"] = std::move(d);
    return j;
}

TransformStack transform_from_json(const Json& j)
{
    return guarded("transform", [&] {
        TransformStack t;
        auto m = j.at("affine").at("matrix").get<std::vector<double>>();
        const auto tr = j.at("affine").at("translation").get<std::vector<double>>();
        if (m.size() != 9 || tr.size() != 3) {
            throw TransformError("transform: affine needs 9 matrix and 3 translation values");
        }
        m.insert(m.end(), tr.begin(), tr.end());
        t.affine.set_parameters(m);
        const auto& f = j.at("ffd");
        t.ffd = FfdTransform(vec_from(f.at("origin")), vec_from(f.at("spacing")), f.at("dims").get<Index3>());
        const auto d = f.at("displacements").get<std::vector<double>>();
        if (d.size() != t.ffd.parameter_count()) {
            throw TransformError("transform: displacement count does not match the lattice");
        }
        for (std::size_t c = 0; c < t.ffd.control_point_count(); ++c) {
            t.ffd.displacements[c] = Vec3(d[3 * c], d[3 * c + 1], d[3 * c + 2]);
        }
        t.validate();
        return t;
    });
}

Json to_json(const SceneTransforms& t)
{
    Json j;
    j["images"] = Json::array();
    for (const auto& s : t.images) {
        j["images"].push_back(to_json(s));
    }
    j["map"] = to_json(t.map);
    return j;
}

SceneTransforms scene_transforms_from_json(const Json& j)
{
    return guarded("transforms", [&] {
        SceneTransforms t;
        for (const auto& s : j.at("images")) {
            t.images.push_back(transform_from_json(s));
        }
        t.map = transform_from_json(j.at("map"));
        return t;
    });
}

Json to_json(const TissueConfig& c)
{
    return Json{{"label_count", c.label_count},
                {"components", c.components},
                {"scar_image", c.scar_image},
                {"wall_label", c.wall_label}};
}

TissueConfig tissue_config_from_json(const Json& j)
{
    return guarded("tissue", [&] {
        TissueConfig c;
        c.label_count = j.value("label_count", c.label_count);
        c.components = j.at("components").get<std::vector<std::vector<int>>>();
        c.scar_image = j.value("scar_image", c.scar_image);
        c.wall_label = j.value("wall_label", c.wall_label);
        c.validate();
        return c;
    });
}

Json to_json(const MvmmParams& p)
{
    Json j;
    j["config"] = to_json(p.config);
    j["label_proportions"] = p.label_proportions;
    j["sigma_floor"] = p.sigma_floor;
    Json comps = Json::array();
    for (const auto& image : p.components) {
        Json per_image = Json::array();
        for (const auto& label : image) {
            Json per_label = Json::array();
            for (const auto& g : label) {
                per_label.push_back(Json{{"tau", g.tau}, {"mu", g.mu}, {"sigma", g.sigma}});
            }
            per_image.push_back(std::move(per_label));
        }
        comps.push_back(std::move(per_image));
    }
    j["components"] = std::move(comps);
    return j;
}

MvmmParams params_from_json(const Json& j)
{
    return guarded("params", [&] {
        MvmmParams p;
        p.config = tissue_config_from_json(j.at("config"));
        p.label_proportions = j.at("label_proportions").get<std::vector<double>>();
        p.sigma_floor = j.at("sigma_floor").get<std::vector<double>>();
        for (const auto& image : j.at("components")) {
            auto& per_image = p.components.emplace_back();
            for (const auto& label : image) {
                auto& per_label = per_image.emplace_back();
                for (const auto& g : label) {
                    per_label.push_back({g.at("tau").get<double>(), g.at("mu").get<double>(),
                                         g.at("sigma").get<double>()});
                }
            }
        }
        p.validate();
        return p;
    });
}

Json posterior_summary(const PosteriorField& post)
{
    Json j;
    j["voxel_count"] = post.voxel_count;
    Json labels = Json::array();
    for (const auto& lp : post.label_post) {
        labels.push_back(pairwise_sum(lp));
    }
    j["label_mass"] = std::move(labels);
    Json comps = Json::array();
    for (const auto& image : post.component_post) {
        Json per_image = Json::array();
        for (const auto& label : image) {
            Json per_label = Json::array();
            for (const auto& c : label) {
                per_label.push_back(pairwise_sum(c));
            }
            per_image.push_back(std::move(per_label));
        }
        comps.push_back(std::move(per_image));
    }
    j["component_mass"] = std::move(comps);
    return j;
}

Json to_json(const MetricsReport& m)
{
    return Json{{"tp", m.tp},           {"fp", m.fp},
                {"tn", m.tn},           {"fn", m.fn},
                {"dice", m.dice},       {"accuracy", m.accuracy},
                {"sensitivity", m.sensitivity}, {"specificity", m.specificity}};
}

std::string metrics_csv_header()
{
    return "name,tp,fp,tn,fn,dice,accuracy,sensitivity,specificity";
}

std::string metrics_csv_row(const std::string& name, const MetricsReport& m)
{
    char buf[256];
    std::snprintf(buf, sizeof(buf), ",%llu,%llu,%llu,%llu,%.17g,%.17g,%.17g,%.17g",
                  static_cast<unsigned long long>(m.tp), static_cast<unsigned long long>(m.fp),
                  static_cast<unsigned long long>(m.tn), static_cast<unsigned long long>(m.fn), m.dice, m.accuracy,
                  m.sensitivity, m.specificity);
    return name + buf;
}

Json to_json(const TraceEntry& e)
{
    return Json{{"phase", e.phase},
                {"block", e.block},
                {"iteration", e.iteration},
                {"log_likelihood", e.log_likelihood},
                {"gradient_norm", e.gradient_norm},
                {"halvings", e.halvings}};
}

void write_trace(std::ostream& out, const std::vector<TraceEntry>& trace)
{
    for (const auto& e : trace) {
        out << to_json(e).dump() << '\n';
    }
}

void write_shell_vtk(std::ostream& out, const SurfaceShell& shell)
{
    out << "# vtk DataFile Version 3.0\n"
        << "mvseg surface shell\n"
        << "ASCII\n"
        << "DATASET POLYDATA\n"
        << "POINTS " << shell.size() << " double\n";
    char buf[128];
    for (const auto& p : shell.positions) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
        out << buf;
    }
    out << "VERTICES " << shell.size() << ' ' << 2 * shell.size() << '\n';
    for (std::size_t e = 0; e < shell.size(); ++e) {
        out << "1 " << e << '\n';
    }
    out << "POINT_DATA " << shell.size() << '\n' << "SCALARS scar int 1\n" << "LOOKUP_TABLE default\n";
    for (std::size_t e = 0; e < shell.size(); ++e) {
        out << (shell.scar[e] ? 1 : 0) << '\n';
    }
}

Json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FormatError(FormatErrorKind::NotFound, "cannot open " + path.string());
    }
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError(FormatErrorKind::BadHeader, path.string() + ": " + e.what());
    }
}

void write_json_file(const Json& j, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw FormatError(FormatErrorKind::Unwritable, "cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw FormatError(FormatErrorKind::Unwritable, "write failed for " + path.string());
    }
}

}  // namespace mvseg
