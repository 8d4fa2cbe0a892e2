#include "mvseg/registration.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogLikelihoodFloor = std::log(kLikelihoodFloor);

// Chain rule from per-voxel dLL/dF(x) to the transform parameters.
GradientVector chain_to_parameters(const VolumeGrid& domain, const TransformStack& t, const std::vector<Vec3>& dll_dy)
{
    const auto N = domain.voxel_count();
    const auto& ffd = t.ffd;
    GradientVector out;
    out.ffd.assign(ffd.parameter_count(), 0.0);

    std::array<std::vector<FfdStencil>, 3> axis;
    for (int a = 0; a < 3; ++a) {
        axis[a].resize(static_cast<std::size_t>(domain.dims[a]));
        for (std::int64_t n = 0; n < domain.dims[a]; ++n) {
            Vec3 p = domain.origin;
            p[a] += static_cast<double>(n) * domain.spacing[a];
            axis[a][static_cast<std::size_t>(n)] = ffd.stencil(p);
        }
    }

    std::array<std::vector<double>, AffineTransform::kParameterCount> terms;
    for (auto& v : terms) {
        v.assign(N, 0.0);
    }
    const Mat3 mt = t.affine.matrix.transpose();

    for (std::int64_t k = 0; k < domain.dims[2]; ++k) {
        const auto& sz = axis[2][static_cast<std::size_t>(k)];
        for (std::int64_t j = 0; j < domain.dims[1]; ++j) {
            const auto& sy = axis[1][static_cast<std::size_t>(j)];
            for (std::int64_t i = 0; i < domain.dims[0]; ++i) {
                const auto off = domain.offset(i, j, k);
                const Vec3& g = dll_dy[off];
                if (g.isZero(0.0)) {
                    continue;
                }
                const auto& sx = axis[0][static_cast<std::size_t>(i)];
                FfdStencil s;
                s.base = {sx.base[0], sy.base[1], sz.base[2]};
                s.weight = {sx.weight[0], sy.weight[1], sz.weight[2]};
                const Vec3 d = domain.world(Index3{i, j, k}) + ffd.displacement(s);
                for (int r = 0; r < 3; ++r) {
                    for (int c = 0; c < 3; ++c) {
                        terms[static_cast<std::size_t>(3 * r + c)][off] = g[r] * d[c];
                    }
                    terms[static_cast<std::size_t>(9 + r)][off] = g[r];
                }
                const Vec3 h = mt * g;
                for (int cz = 0; cz < 4; ++cz) {
                    const auto zc = s.base[2] + cz;
                    if (zc < 0 || zc >= ffd.control_dims[2]) {
                        continue;
                    }
                    for (int cy = 0; cy < 4; ++cy) {
                        const auto yc = s.base[1] + cy;
                        if (yc < 0 || yc >= ffd.control_dims[1]) {
                            continue;
                        }
                        const double wyz = s.weight[1][cy] * s.weight[2][cz];
                        for (int cx = 0; cx < 4; ++cx) {
                            const auto xc = s.base[0] + cx;
                            if (xc < 0 || xc >= ffd.control_dims[0]) {
                                continue;
                            }
                            const double w = s.weight[0][cx] * wyz;
                            const auto base = 3 * ffd.control_offset({xc, yc, zc});
                            out.ffd[base] += w * h[0];
                            out.ffd[base + 1] += w * h[1];
                            out.ffd[base + 2] += w * h[2];
                        }
                    }
                }
            }
        }
    }
    for (std::size_t p = 0; p < terms.size(); ++p) {
        out.affine[p] = pairwise_sum(terms[p]);
    }
    return out;
}

void check_scene(const Scene& scene, const SceneTransforms& transforms, const MvmmParams& params)
{
    if (scene.images.size() != params.config.image_count() || transforms.images.size() != scene.images.size()) {
        throw ModelError("scene, transforms and model disagree on the number of images");
    }
    if (scene.prior.label_count() != params.config.label_count) {
        throw ModelError("prior map channel count does not match the label count");
    }
}

}  // namespace

void OptimizerConfig::validate() const
{
    if (em_iters_per_block < 1 || transform_steps_per_block < 1 || icm_blocks < 1) {
        throw ModelError("optimizer iteration counts must be >= 1");
    }
    if (!(step_size_affine > 0.0) || !(step_size_ffd > 0.0) || !(ll_rel_tol > 0.0) || !(grad_norm_tol > 0.0)) {
        throw ModelError("optimizer step sizes and tolerances must be positive");
    }
    if (max_halvings < 0) {
        throw ModelError("max_halvings must be non-negative");
    }
}

std::vector<double> GradientVector::flat() const
{
    std::vector<double> v(affine.begin(), affine.end());
    v.insert(v.end(), ffd.begin(), ffd.end());
    return v;
}

double GradientVector::norm() const
{
    double s = 0.0;
    for (double a : affine) {
        s += a * a;
    }
    for (double f : ffd) {
        s += f * f;
    }
    return std::sqrt(s);
}

bool GradientVector::all_finite() const
{
    return std::all_of(affine.begin(), affine.end(), [](double v) { return std::isfinite(v); }) &&
           std::all_of(ffd.begin(), ffd.end(), [](double v) { return std::isfinite(v); });
}

GradientVector grad_image_transform(const MvmmParams& params, const Scene& scene, const SceneTransforms& transforms,
                                    std::size_t image)
{
    check_scene(scene, transforms, params);
    if (image >= scene.images.size()) {
        throw ModelError("grad_image_transform: image index out of range");
    }
    const auto K = params.config.label_count;
    const auto& domain = scene.domain;
    const auto N = domain.voxel_count();

    WarpedSamples samples = warp_scene(scene, transforms);
    const auto pts = warp_points(domain, transforms.images[image]);
    std::vector<Vec3> image_grad(N);
    for (std::size_t x = 0; x < N; ++x) {
        const auto vg = sample_with_gradient(scene.images[image], pts[x], scene.image_background);
        samples.intensity[image][x] = vg.value;
        image_grad[x] = vg.gradient;
    }

    const MixtureEvaluator eval(params);
    const auto& comps = eval.components();
    MixtureEvaluator::Terms t;
    std::vector<Vec3> dll_dy(N, Vec3::Zero());
    for (std::size_t x = 0; x < N; ++x) {
        if (image_grad[x].isZero(0.0)) {
            continue;
        }
        eval.evaluate(samples, x, t);
        if (!(t.log_lh > kLogLikelihoodFloor)) {
            continue;  // floored voxels have a constant contribution
        }
        const double v = samples.intensity[image][x];
        // sum_k pi_kx prod_{j != i} p_j(k) sum_c tau Phi' / LH
        //   = sum_k sum_c P_ikcx (mu - v) / sigma^2
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            if (t.log_joint[k] == kNegInf) {
                continue;
            }
            const double lt = t.log_tissue[image * K + k];
            const double label_part = t.log_joint[k] - t.log_lh - lt;
            const auto ncomp = params.components[image][k].size();
            for (std::size_t c = 0; c < ncomp; ++c) {
                const auto& fc = comps[eval.flat_index(image, k, c)];
                const double p = std::exp(label_part + t.log_weighted_comp[eval.flat_index(image, k, c)]);
                s += p * (fc.mu - v) * fc.inv_var;
            }
        }
        dll_dy[x] = s * image_grad[x];
    }
    return chain_to_parameters(domain, transforms.images[image], dll_dy);
}

GradientVector grad_map_transform(const MvmmParams& params, const Scene& scene, const SceneTransforms& transforms)
{
    check_scene(scene, transforms, params);
    const auto K = params.config.label_count;
    const auto I = params.config.image_count();
    const auto& domain = scene.domain;
    const auto N = domain.voxel_count();
    const auto& pi = params.label_proportions;

    WarpedSamples samples = warp_scene(scene, transforms);
    const auto pts = warp_points(domain, transforms.map);
    std::vector<std::vector<Vec3>> prior_grad(K, std::vector<Vec3>(N));
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t x = 0; x < N; ++x) {
            const auto vg = sample_with_gradient(scene.prior.channels[k], pts[x], 0.0);
            samples.prior[k][x] = vg.value;
            prior_grad[k][x] = vg.gradient;
        }
    }

    const MixtureEvaluator eval(params);
    MixtureEvaluator::Terms t;
    std::vector<Vec3> dll_dz(N, Vec3::Zero());
    for (std::size_t x = 0; x < N; ++x) {
        double norm = 0.0;
        Vec3 dnorm = Vec3::Zero();
        for (std::size_t k = 0; k < K; ++k) {
            norm += pi[k] * samples.prior[k][x];
            dnorm += pi[k] * prior_grad[k][x];
        }
        // Outside the prior support pi_kx falls back to the constant proportions.
        if (!(norm > 0.0)) {
            continue;
        }
        bool flat = true;
        for (std::size_t k = 0; k < K && flat; ++k) {
            flat = prior_grad[k][x].isZero(0.0);
        }
        if (flat) {
            continue;
        }
        eval.evaluate(samples, x, t);
        if (!(t.log_lh > kLogLikelihoodFloor)) {
            continue;
        }
        Vec3 g = Vec3::Zero();
        for (std::size_t k = 0; k < K; ++k) {
            double log_data = 0.0;
            for (std::size_t i = 0; i < I; ++i) {
                log_data += t.log_tissue[i * K + k];
            }
            if (log_data == kNegInf) {
                continue;
            }
            const double ratio = std::exp(log_data - t.log_lh);  // p(I | k) / LH
            const Vec3 dpi = pi[k] * prior_grad[k][x] / norm - (pi[k] * samples.prior[k][x] / (norm * norm)) * dnorm;
            g += ratio * dpi;
        }
        dll_dz[x] = g;
    }
    return chain_to_parameters(domain, transforms.map, dll_dz);
}

GradientVector ascent_direction(const GradientVector& gradient, const OptimizerConfig& config, double length_scale)
{
    GradientVector dir;
    dir.ffd.assign(gradient.ffd.size(), 0.0);
    const double L = length_scale > 0.0 ? length_scale : 1.0;

    if (config.optimize_affine) {
        // Matrix entries become mm-equivalent through L.
        double sq = 0.0;
        for (std::size_t p = 0; p < 9; ++p) {
            const double gu = gradient.affine[p] / L;
            sq += gu * gu;
        }
        for (std::size_t p = 9; p < 12; ++p) {
            sq += gradient.affine[p] * gradient.affine[p];
        }
        const double n = std::sqrt(sq);
        if (n > 0.0) {
            for (std::size_t p = 0; p < 9; ++p) {
                dir.affine[p] = config.step_size_affine * (gradient.affine[p] / L) / n / L;
            }
            for (std::size_t p = 9; p < 12; ++p) {
                dir.affine[p] = config.step_size_affine * gradient.affine[p] / n;
            }
        }
    }
    if (config.optimize_ffd && !gradient.ffd.empty()) {
        double longest = 0.0;
        for (std::size_t c = 0; c + 2 < gradient.ffd.size(); c += 3) {
            const double len = std::sqrt(gradient.ffd[c] * gradient.ffd[c] + gradient.ffd[c + 1] * gradient.ffd[c + 1] +
                                         gradient.ffd[c + 2] * gradient.ffd[c + 2]);
            longest = std::max(longest, len);
        }
        if (longest > 0.0) {
            for (std::size_t p = 0; p < gradient.ffd.size(); ++p) {
                dir.ffd[p] = config.step_size_ffd * gradient.ffd[p] / longest;
            }
        }
    }
    return dir;
}

AscentResult ascend(const TransformStack& transform, const GradientVector& gradient, const OptimizerConfig& config,
                    const TransformObjective& objective, double current_value, double length_scale)
{
    AscentResult result{transform, current_value, false, 0};
    if (!gradient.all_finite()) {
        throw ModelError("ascend: gradient is not finite");
    }
    if (gradient.ffd.size() != transform.ffd.parameter_count()) {
        throw ModelError("ascend: gradient does not match the transform");
    }
    const GradientVector dir = ascent_direction(gradient, config, length_scale);
    const auto step = dir.flat();
    if (std::all_of(step.begin(), step.end(), [](double s) { return s == 0.0; })) {
        return result;
    }
    const auto base = transform.parameters();
    std::vector<double> trial(base.size());
    double scale = 1.0;
    for (int h = 0; h <= config.max_halvings; ++h) {
        for (std::size_t p = 0; p < base.size(); ++p) {
            trial[p] = base[p] + scale * step[p];
        }
        TransformStack candidate = transform;
        candidate.set_parameters(trial);
        if (candidate.affine.matrix.determinant() > 0.0) {
            const double value = objective(candidate);
            if (value > current_value) {
                return AscentResult{std::move(candidate), value, true, h};
            }
        }
        scale *= 0.5;
    }
    result.halvings = config.max_halvings;
    return result;
}

IcmResult icm_fit(const Scene& scene, const MvmmParams& initial_params, const SceneTransforms& initial_transforms,
                  const OptimizerConfig& config)
{
    config.validate();
    check_scene(scene, initial_transforms, initial_params);

    IcmResult r{initial_params, initial_transforms, {}, {}, {}, 0, 0};
    const auto& domain = scene.domain;
    const double N = static_cast<double>(domain.voxel_count());
    const double length_scale = config.affine_length_scale > 0.0
                                    ? config.affine_length_scale
                                    : 0.5 * (domain.upper_corner() - domain.lower_corner()).norm();

    WarpedSamples samples = warp_scene(scene, r.transforms);
    double ll = log_likelihood(r.params, samples);
    r.trace.push_back({"init", 0, 0, ll, 0.0, 0});

    for (int block = 1; block <= config.icm_blocks; ++block) {
        r.blocks_run = block;
        const double ll_start = ll;

        for (int it = 1; it <= config.em_iters_per_block; ++it) {
            const PosteriorField post = e_step(r.params, samples);
            MStepReport report;
            r.params = m_step(post, samples, r.params, &report);
            r.reseed_count += report.reseeded.size();
            for (const auto& rs : report.reseeded) {
                r.warnings.push_back("block " + std::to_string(block) + ": reseeded component (" +
                                     std::to_string(rs.image) + ", " + std::to_string(rs.label) + ", " +
                                     std::to_string(rs.component) + ")");
            }
            ll = log_likelihood(r.params, samples);
            r.trace.push_back({"em", block, it, ll, 0.0, 0});
        }

        auto optimize = [&](const std::string& phase, auto&& gradient_fn, TransformStack& target,
                            auto&& resample) {
            for (int step = 1; step <= config.transform_steps_per_block; ++step) {
                const GradientVector g = gradient_fn();
                const double gnorm = g.norm();
                if (!(gnorm / N > config.grad_norm_tol)) {
                    r.trace.push_back({phase, block, step, ll, gnorm, 0});
                    break;
                }
                const TransformObjective objective = [&](const TransformStack& candidate) {
                    WarpedSamples trial = samples;
                    resample(trial, candidate);
                    return log_likelihood(r.params, trial);
                };
                AscentResult res = ascend(target, g, config, objective, ll, length_scale);
                r.trace.push_back({phase, block, step, res.value, gnorm, res.halvings});
                if (!res.improved) {
                    r.warnings.push_back("block " + std::to_string(block) + ": " + phase +
                                         " ascent found no improving step");
                    break;
                }
                target = std::move(res.transform);
                resample(samples, target);
                ll = res.value;
            }
        };

        for (std::size_t i = 0; i < scene.images.size(); ++i) {
            if (config.image_frozen(i)) {
                continue;
            }
            optimize(
                "image" + std::to_string(i),
                [&] { return grad_image_transform(r.params, scene, r.transforms, i); }, r.transforms.images[i],
                [&](WarpedSamples& s, const TransformStack& t) {
                    s.intensity[i] = warp_image(scene.images[i], domain, t, scene.image_background);
                });
        }
        if (!config.freeze_map) {
            optimize(
                "map", [&] { return grad_map_transform(r.params, scene, r.transforms); }, r.transforms.map,
                [&](WarpedSamples& s, const TransformStack& t) { s.prior = warp_prior(scene.prior, domain, t); });
        }

        if (ll - ll_start < config.ll_rel_tol * std::abs(ll_start)) {
            break;
        }
    }
    r.posteriors = e_step(r.params, samples);
    return r;
}

SegmentationOutcome segment_scene(const Scene& scene, const TissueConfig& tissue, const OptimizerConfig& optimizer,
                                  const SceneTransforms& initial_transforms)
{
    const MvmmParams init = init_params(scene, initial_transforms, tissue);
    IcmResult fit = icm_fit(scene, init, initial_transforms, optimizer);
    Classification classes = classify(fit.posteriors, fit.params, scene.domain);
    return {std::move(fit), std::move(classes)};
}

}  // namespace mvseg
