#include "mvseg/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace mvseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
const double kLogLikelihoodFloor = std::log(kLikelihoodFloor);

double log_sum_exp(std::span<const double> xs)
{
    double m = kNegInf;
    for (double x : xs) {
        m = std::max(m, x);
    }
    if (m == kNegInf) {
        return kNegInf;
    }
    double s = 0.0;
    for (double x : xs) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

double pairwise_sum_range(const double* v, std::size_t n)
{
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += v[i];
        }
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum_range(v, half) + pairwise_sum_range(v + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> values)
{
    return pairwise_sum_range(values.data(), values.size());
}

// ---------------------------------------------------------------- configuration

void TissueConfig::validate() const
{
    if (label_count < 1) {
        throw ModelError("tissue config needs at least one label");
    }
    if (components.empty()) {
        throw ModelError("tissue config needs at least one image");
    }
    for (const auto& per_image : components) {
        if (per_image.size() != label_count) {
            throw ModelError("tissue config: component table must have one entry per label");
        }
        for (int c : per_image) {
            if (c < 1) {
                throw ModelError("tissue config: every component count must be >= 1");
            }
        }
    }
    if (scar_image >= components.size()) {
        throw ModelError("tissue config: scar image index out of range");
    }
    if (wall_label < 0 || static_cast<std::size_t>(wall_label) >= label_count) {
        throw ModelError("tissue config: wall label out of range");
    }
}

TissueConfig TissueConfig::two_image_default()
{
    TissueConfig c;
    c.label_count = 2;
    c.components = {{2, 2}, {2, 1}};
    return c;
}

TissueConfig TissueConfig::single_image_default()
{
    TissueConfig c;
    c.label_count = 2;
    c.components = {{2, 2}};
    return c;
}

void MvmmParams::validate() const
{
    config.validate();
    const auto K = config.label_count;
    if (label_proportions.size() != K) {
        throw ModelError("label proportion count does not match the label set");
    }
    double pi_sum = 0.0;
    for (double p : label_proportions) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw ModelError("label proportions must be finite and non-negative");
        }
        pi_sum += p;
    }
    if (!(pi_sum > 0.0)) {
        throw ModelError("label proportions must not all be zero");
    }
    if (components.size() != config.image_count() || sigma_floor.size() != config.image_count()) {
        throw ModelError("component table does not match the image count");
    }
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (components[i].size() != K) {
            throw ModelError("component table does not match the label count");
        }
        for (std::size_t k = 0; k < K; ++k) {
            const auto& comps = components[i][k];
            if (comps.size() != static_cast<std::size_t>(config.components[i][k])) {
                throw ModelError("component count differs from the tissue config");
            }
            double tau_sum = 0.0;
            for (const auto& g : comps) {
                if (!(g.tau >= 0.0 && g.tau <= 1.0) || !std::isfinite(g.mu)) {
                    throw ModelError("invalid Gaussian component");
                }
                if (!(g.sigma >= sigma_floor[i]) || !(g.sigma > 0.0) || !std::isfinite(g.sigma)) {
                    throw ModelError("component sigma below the floor");
                }
                tau_sum += g.tau;
            }
            if (std::abs(tau_sum - 1.0) > 1e-9) {
                throw ModelError("component proportions do not sum to 1");
            }
        }
    }
}

std::size_t MvmmParams::brightest_component(std::size_t i, std::size_t k) const
{
    const auto& comps = components[i][k];
    std::size_t best = 0;
    for (std::size_t c = 1; c < comps.size(); ++c) {
        if (comps[c].mu > comps[best].mu) {
            best = c;
        }
    }
    return best;
}

void PosteriorField::validate(double tolerance) const
{
    const auto K = label_post.size();
    for (std::size_t x = 0; x < voxel_count; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double p = label_post[k][x];
            if (!(p >= -tolerance && p <= 1.0 + tolerance)) {
                throw ModelError("label posterior outside [0, 1]");
            }
            s += p;
        }
        if (std::abs(s - 1.0) > tolerance) {
            throw ModelError("label posteriors do not sum to 1 at voxel " + std::to_string(x));
        }
        for (const auto& per_image : component_post) {
            for (std::size_t k = 0; k < K; ++k) {
                double cs = 0.0;
                for (const auto& comp : per_image[k]) {
                    cs += comp[x];
                }
                if (std::abs(cs - label_post[k][x]) > tolerance) {
                    throw ModelError("component posteriors do not sum to the label posterior");
                }
            }
        }
    }
}

// ---------------------------------------------------------------- warping

SceneTransforms SceneTransforms::identity(const Scene& scene, double control_spacing)
{
    SceneTransforms t;
    t.images.assign(scene.images.size(), TransformStack::identity(scene.domain, control_spacing));
    t.map = TransformStack::identity(scene.domain, control_spacing);
    return t;
}

std::vector<Vec3> warp_points(const VolumeGrid& domain, const TransformStack& t)
{
    std::vector<Vec3> out(domain.voxel_count());
    const auto& ffd = t.ffd;
    const bool has_ffd = !ffd.is_zero();

    // The domain lattice is separable, so each axis has its own stencil table.
    std::array<std::vector<FfdStencil>, 3> axis;
    if (has_ffd) {
        for (int a = 0; a < 3; ++a) {
            axis[a].resize(static_cast<std::size_t>(domain.dims[a]));
            for (std::int64_t n = 0; n < domain.dims[a]; ++n) {
                Vec3 p = domain.origin;
                p[a] += static_cast<double>(n) * domain.spacing[a];
                axis[a][static_cast<std::size_t>(n)] = ffd.stencil(p);
            }
        }
    }

    for (std::int64_t k = 0; k < domain.dims[2]; ++k) {
        for (std::int64_t j = 0; j < domain.dims[1]; ++j) {
            for (std::int64_t i = 0; i < domain.dims[0]; ++i) {
                const Vec3 x = domain.world(Index3{i, j, k});
                Vec3 y = x;
                if (has_ffd) {
                    FfdStencil s;
                    s.base = {axis[0][static_cast<std::size_t>(i)].base[0], axis[1][static_cast<std::size_t>(j)].base[1],
                              axis[2][static_cast<std::size_t>(k)].base[2]};
                    s.weight = {axis[0][static_cast<std::size_t>(i)].weight[0],
                                axis[1][static_cast<std::size_t>(j)].weight[1],
                                axis[2][static_cast<std::size_t>(k)].weight[2]};
                    y += ffd.displacement(s);
                }
                out[domain.offset(i, j, k)] = t.affine.apply(y);
            }
        }
    }
    return out;
}

std::vector<double> warp_image(const ScalarVolume& image, const VolumeGrid& domain, const TransformStack& t,
                               double background)
{
    const auto pts = warp_points(domain, t);
    std::vector<double> out(pts.size());
    for (std::size_t x = 0; x < pts.size(); ++x) {
        out[x] = sample_trilinear(image, pts[x], background);
    }
    return out;
}

std::vector<std::vector<double>> warp_prior(const PriorMap& prior, const VolumeGrid& domain, const TransformStack& t)
{
    const auto pts = warp_points(domain, t);
    std::vector<std::vector<double>> out(prior.label_count(), std::vector<double>(pts.size()));
    for (std::size_t k = 0; k < prior.label_count(); ++k) {
        for (std::size_t x = 0; x < pts.size(); ++x) {
            out[k][x] = sample_trilinear(prior.channels[k], pts[x], 0.0);
        }
    }
    return out;
}

WarpedSamples warp_scene(const Scene& scene, const SceneTransforms& transforms)
{
    if (transforms.images.size() != scene.images.size()) {
        throw ModelError("one transform per image is required");
    }
    WarpedSamples s;
    s.voxel_count = scene.domain.voxel_count();
    for (std::size_t i = 0; i < scene.images.size(); ++i) {
        s.intensity.push_back(warp_image(scene.images[i], scene.domain, transforms.images[i], scene.image_background));
    }
    s.prior = warp_prior(scene.prior, scene.domain, transforms.map);
    return s;
}

// ---------------------------------------------------------------- densities

double gaussian_pdf(double mu, double sigma, double v, double sigma_floor)
{
    if (!(sigma > 0.0) || sigma < sigma_floor || !std::isfinite(sigma)) {
        throw ModelError("gaussian_pdf: sigma " + std::to_string(sigma) + " below floor " + std::to_string(sigma_floor));
    }
    const double z = (v - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double gaussian_pdf_dv(double mu, double sigma, double v, double sigma_floor)
{
    return gaussian_pdf(mu, sigma, v, sigma_floor) * (mu - v) / (sigma * sigma);
}

std::vector<double> voxel_prior(const MvmmParams& params, std::span<const double> prior_values)
{
    const auto K = params.config.label_count;
    if (prior_values.size() != K) {
        throw ModelError("voxel_prior: prior value count does not match the label count");
    }
    std::vector<double> out(K);
    double norm = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        out[k] = prior_values[k] * params.label_proportions[k];
        norm += out[k];
    }
    if (norm > 0.0) {
        for (auto& p : out) {
            p /= norm;
        }
        return out;
    }
    const double pi_sum =
        std::accumulate(params.label_proportions.begin(), params.label_proportions.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        out[k] = params.label_proportions[k] / pi_sum;
    }
    return out;
}

std::vector<double> voxel_prior(const MvmmParams& params, const PriorMap& prior, const TransformStack& map_transform,
                                const Vec3& x)
{
    const Vec3 y = map_transform.apply(x);
    std::vector<double> a(prior.label_count());
    for (std::size_t k = 0; k < a.size(); ++k) {
        a[k] = sample_trilinear(prior.channels[k], y, 0.0);
    }
    return voxel_prior(params, a);
}

std::vector<double> image_tissue_pdf(const MvmmParams& params, std::span<const double> intensities, std::size_t k)
{
    const auto I = params.config.image_count();
    if (intensities.size() != I || k >= params.config.label_count) {
        throw ModelError("image_tissue_pdf: argument shape mismatch");
    }
    std::vector<double> out(I, 0.0);
    for (std::size_t i = 0; i < I; ++i) {
        for (const auto& g : params.components[i][k]) {
            out[i] += g.tau * gaussian_pdf(g.mu, g.sigma, intensities[i], params.sigma_floor[i]);
        }
    }
    return out;
}

std::vector<double> image_tissue_pdf(const MvmmParams& params, const std::vector<ScalarVolume>& images,
                                     const std::vector<TransformStack>& transforms, const Vec3& x, std::size_t k,
                                     double background)
{
    if (images.size() != transforms.size()) {
        throw ModelError("image_tissue_pdf: one transform per image is required");
    }
    std::vector<double> v(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        v[i] = sample_trilinear(images[i], transforms[i].apply(x), background);
    }
    return image_tissue_pdf(params, v, k);
}

// ---------------------------------------------------------------- evaluator

MixtureEvaluator::MixtureEvaluator(const MvmmParams& params) : params_(&params)
{
    params.validate();
    const auto K = params.config.label_count;
    const auto I = params.config.image_count();
    offsets_.resize(I * K);
    for (std::size_t i = 0; i < I; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            offsets_[i * K + k] = flat_.size();
            const auto& comps = params.components[i][k];
            for (std::size_t c = 0; c < comps.size(); ++c) {
                const auto& g = comps[c];
                flat_.push_back(FlatComponent{i, k, c, g.tau > 0.0 ? std::log(g.tau) : kNegInf, g.mu,
                                              1.0 / (g.sigma * g.sigma), -std::log(g.sigma) - kLogSqrt2Pi});
            }
        }
    }
    pi_ = params.label_proportions;
    pi_sum_ = std::accumulate(pi_.begin(), pi_.end(), 0.0);
}

void MixtureEvaluator::evaluate(std::span<const double> prior_values, std::span<const double> intensities,
                                Terms& out) const
{
    const auto K = params_->config.label_count;
    const auto I = params_->config.image_count();
    out.log_prior.resize(K);
    out.log_tissue.resize(I * K);
    out.log_weighted_comp.resize(flat_.size());
    out.log_joint.resize(K);

    double norm = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        norm += prior_values[k] * pi_[k];
    }
    if (norm > 0.0) {
        const double log_norm = std::log(norm);
        for (std::size_t k = 0; k < K; ++k) {
            const double num = prior_values[k] * pi_[k];
            out.log_prior[k] = num > 0.0 ? std::log(num) - log_norm : kNegInf;
        }
    } else {
        for (std::size_t k = 0; k < K; ++k) {
            out.log_prior[k] = pi_[k] > 0.0 ? std::log(pi_[k] / pi_sum_) : kNegInf;
        }
    }

    for (std::size_t f = 0; f < flat_.size(); ++f) {
        const auto& g = flat_[f];
        const double d = intensities[g.image] - g.mu;
        out.log_weighted_comp[f] = g.log_tau + g.log_norm - 0.5 * d * d * g.inv_var;
    }
    for (std::size_t i = 0; i < I; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const auto begin = offsets_[i * K + k];
            const auto count = params_->components[i][k].size();
            out.log_tissue[i * K + k] =
                log_sum_exp(std::span<const double>(out.log_weighted_comp).subspan(begin, count));
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        double lj = out.log_prior[k];
        for (std::size_t i = 0; i < I; ++i) {
            lj += out.log_tissue[i * K + k];
        }
        out.log_joint[k] = lj;
    }
    out.log_lh = log_sum_exp(out.log_joint);
}

void MixtureEvaluator::evaluate(const WarpedSamples& samples, std::size_t x, Terms& out) const
{
    const auto K = params_->config.label_count;
    const auto I = params_->config.image_count();
    std::array<double, 8> a{};
    std::array<double, 8> v{};
    if (K > a.size() || I > v.size()) {
        throw ModelError("evaluator supports at most 8 labels and 8 images");
    }
    for (std::size_t k = 0; k < K; ++k) {
        a[k] = samples.prior[k][x];
    }
    for (std::size_t i = 0; i < I; ++i) {
        v[i] = samples.intensity[i][x];
    }
    evaluate(std::span<const double>(a.data(), K), std::span<const double>(v.data(), I), out);
}

// ---------------------------------------------------------------- EM

namespace {

void check_samples(const MvmmParams& params, const WarpedSamples& samples)
{
    if (samples.intensity.size() != params.config.image_count() ||
        samples.prior.size() != params.config.label_count) {
        throw ModelError("warped samples do not match the model's images and labels");
    }
}

}  // namespace

double log_likelihood(const MvmmParams& params, const WarpedSamples& samples)
{
    check_samples(params, samples);
    const MixtureEvaluator eval(params);
    MixtureEvaluator::Terms t;
    std::vector<double> per_voxel(samples.voxel_count);
    for (std::size_t x = 0; x < samples.voxel_count; ++x) {
        eval.evaluate(samples, x, t);
        per_voxel[x] = std::max(t.log_lh, kLogLikelihoodFloor);
    }
    return pairwise_sum(per_voxel);
}

double log_likelihood(const MvmmParams& params, const Scene& scene, const SceneTransforms& transforms)
{
    return log_likelihood(params, warp_scene(scene, transforms));
}

PosteriorField e_step(const MvmmParams& params, const WarpedSamples& samples)
{
    check_samples(params, samples);
    const MixtureEvaluator eval(params);
    const auto K = params.config.label_count;
    const auto I = params.config.image_count();
    const auto N = samples.voxel_count;

    PosteriorField post;
    post.voxel_count = N;
    post.label_post.assign(K, std::vector<double>(N));
    post.component_post.resize(I);
    for (std::size_t i = 0; i < I; ++i) {
        post.component_post[i].resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            post.component_post[i][k].assign(params.components[i][k].size(), std::vector<double>(N));
        }
    }

    MixtureEvaluator::Terms t;
    for (std::size_t x = 0; x < N; ++x) {
        eval.evaluate(samples, x, t);
        for (std::size_t k = 0; k < K; ++k) {
            const double p = t.log_lh == kNegInf ? std::exp(t.log_prior[k]) : std::exp(t.log_joint[k] - t.log_lh);
            post.label_post[k][x] = p;
            for (std::size_t i = 0; i < I; ++i) {
                const double lt = t.log_tissue[i * K + k];
                const auto ncomp = params.components[i][k].size();
                for (std::size_t c = 0; c < ncomp; ++c) {
                    const double r = lt == kNegInf ? params.components[i][k][c].tau
                                                   : std::exp(t.log_weighted_comp[eval.flat_index(i, k, c)] - lt);
                    post.component_post[i][k][c][x] = p * r;
                }
            }
        }
    }
    return post;
}

PosteriorField e_step(const MvmmParams& params, const Scene& scene, const SceneTransforms& transforms)
{
    return e_step(params, warp_scene(scene, transforms));
}

namespace {

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q)
{
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const double total = pairwise_sum(weights);
    if (!(total > 0.0)) {
        return values.empty() ? 0.0 : values[order[order.size() / 2]];
    }
    double acc = 0.0;
    for (auto idx : order) {
        acc += weights[idx];
        if (acc >= q * total) {
            return values[idx];
        }
    }
    return values[order.back()];
}

}  // namespace

MvmmParams m_step(const PosteriorField& posteriors, const WarpedSamples& samples, const MvmmParams& previous,
                  MStepReport* report)
{
    check_samples(previous, samples);
    previous.validate();
    const auto K = previous.config.label_count;
    const auto I = previous.config.image_count();
    const auto N = samples.voxel_count;
    if (posteriors.voxel_count != N || posteriors.label_post.size() != K || posteriors.component_post.size() != I) {
        throw ModelError("posterior field does not match the samples");
    }
    const double degenerate_weight = 1e-8 * static_cast<double>(N);

    MvmmParams next = previous;
    std::vector<double> buf(N);
    std::vector<double> buf2(N);

    for (std::size_t i = 0; i < I; ++i) {
        const auto& v = samples.intensity[i];
        for (std::size_t k = 0; k < K; ++k) {
            const auto C = previous.components[i][k].size();
            std::vector<double> weight(C);
            for (std::size_t c = 0; c < C; ++c) {
                weight[c] = pairwise_sum(posteriors.component_post[i][k][c]);
            }
            const double tissue_weight = pairwise_sum(weight);
            if (!(tissue_weight > 0.0)) {
                continue;  // nothing assigned to this tissue: keep the previous estimates
            }
            std::vector<bool> degenerate(C, false);
            for (std::size_t c = 0; c < C; ++c) {
                auto& g = next.components[i][k][c];
                const auto& p = posteriors.component_post[i][k][c];
                if (weight[c] < degenerate_weight) {
                    degenerate[c] = true;
                    continue;
                }
                for (std::size_t x = 0; x < N; ++x) {
                    buf[x] = p[x] * v[x];
                }
                const double mu = pairwise_sum(buf) / weight[c];
                for (std::size_t x = 0; x < N; ++x) {
                    const double d = v[x] - mu;
                    buf[x] = p[x] * d * d;
                }
                const double var = pairwise_sum(buf) / weight[c];
                g.mu = mu;
                g.sigma = std::max(std::sqrt(var), previous.sigma_floor[i]);
                g.tau = weight[c] / tissue_weight;
            }
            if (std::any_of(degenerate.begin(), degenerate.end(), [](bool d) { return d; })) {
                const auto& pk = posteriors.label_post[k];
                const double reseed_mu = weighted_quantile(v, pk, 0.9);
                for (std::size_t x = 0; x < N; ++x) {
                    buf[x] = pk[x] * v[x];
                }
                const double wk = pairwise_sum(pk);
                const double mean = wk > 0.0 ? pairwise_sum(buf) / wk : reseed_mu;
                for (std::size_t x = 0; x < N; ++x) {
                    const double d = v[x] - mean;
                    buf2[x] = pk[x] * d * d;
                }
                const double sd = wk > 0.0 ? std::sqrt(pairwise_sum(buf2) / wk) : 1.0;
                for (std::size_t c = 0; c < C; ++c) {
                    if (!degenerate[c]) {
                        continue;
                    }
                    auto& g = next.components[i][k][c];
                    g.mu = reseed_mu;
                    g.sigma = std::max(sd / static_cast<double>(C), previous.sigma_floor[i]);
                    g.tau = 0.01;
                    if (report) {
                        report->reseeded.push_back({i, k, c});
                    }
                }
                double tau_sum = 0.0;
                for (const auto& g : next.components[i][k]) {
                    tau_sum += g.tau;
                }
                for (auto& g : next.components[i][k]) {
                    g.tau /= tau_sum;
                }
            }
        }
    }

    // pi_k <- sum_x P_kx / sum_x (A_k(x) / C_x), C_x = sum_l A_l(x) pi_l at the previous iterate.
    // Voxels outside the prior support behave as a uniform prior.
    std::vector<std::vector<double>> ratio(K, std::vector<double>(N));
    for (std::size_t x = 0; x < N; ++x) {
        double cx = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            cx += samples.prior[k][x] * previous.label_proportions[k];
        }
        if (cx > 0.0) {
            for (std::size_t k = 0; k < K; ++k) {
                ratio[k][x] = samples.prior[k][x] / cx;
            }
        } else {
            double pi_sum = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                pi_sum += previous.label_proportions[k];
            }
            for (std::size_t k = 0; k < K; ++k) {
                ratio[k][x] = 1.0 / pi_sum;
            }
        }
    }
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double num = pairwise_sum(posteriors.label_post[k]);
        const double den = pairwise_sum(ratio[k]);
        next.label_proportions[k] = den > 0.0 ? num / den : previous.label_proportions[k];
        total += next.label_proportions[k];
    }
    if (total > 0.0) {
        for (auto& p : next.label_proportions) {
            p /= total;
        }
    } else {
        next.label_proportions = previous.label_proportions;
    }
    return next;
}

MvmmParams m_step(const PosteriorField& posteriors, const Scene& scene, const SceneTransforms& transforms,
                  const MvmmParams& previous, MStepReport* report)
{
    return m_step(posteriors, warp_scene(scene, transforms), previous, report);
}

std::vector<double> sigma_floors(const std::vector<ScalarVolume>& images)
{
    std::vector<double> floors;
    for (const auto& img : images) {
        if (img.values.empty()) {
            floors.push_back(1e-4);
            continue;
        }
        const auto [lo, hi] = std::minmax_element(img.values.begin(), img.values.end());
        const double range = *hi - *lo;
        floors.push_back(range > 0.0 ? 1e-4 * range : 1e-4);
    }
    return floors;
}

MvmmParams init_params(const WarpedSamples& samples, const TissueConfig& config, std::span<const double> floors)
{
    config.validate();
    const auto K = config.label_count;
    const auto I = config.image_count();
    const auto N = samples.voxel_count;
    if (samples.intensity.size() != I || samples.prior.size() != K) {
        throw ModelError("init_params: samples do not match the tissue config");
    }
    if (floors.size() != I) {
        throw ModelError("init_params: one sigma floor per image is required");
    }

    std::vector<std::size_t> assigned(N, 0);
    std::vector<double> mass(K, 0.0);
    for (std::size_t x = 0; x < N; ++x) {
        std::size_t best = 0;
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            total += samples.prior[k][x];
            if (samples.prior[k][x] > samples.prior[best][x]) {
                best = k;
            }
        }
        assigned[x] = best;
        for (std::size_t k = 0; k < K; ++k) {
            mass[k] += total > 0.0 ? samples.prior[k][x] / total : 1.0 / static_cast<double>(K);
        }
    }

    MvmmParams p;
    p.config = config;
    p.sigma_floor.assign(floors.begin(), floors.end());
    const double mass_total = std::accumulate(mass.begin(), mass.end(), 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        p.label_proportions.push_back(mass[k] / mass_total);
    }

    p.components.resize(I);
    for (std::size_t i = 0; i < I; ++i) {
        p.components[i].resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<double> vals;
            for (std::size_t x = 0; x < N; ++x) {
                if (assigned[x] == k) {
                    vals.push_back(samples.intensity[i][x]);
                }
            }
            if (vals.empty()) {
                throw ModelError("init_params: label " + std::to_string(k) + " receives no voxels at argmax prior");
            }
            std::sort(vals.begin(), vals.end());
            const double n = static_cast<double>(vals.size());
            const double mean = pairwise_sum(vals) / n;
            std::vector<double> sq(vals.size());
            for (std::size_t j = 0; j < vals.size(); ++j) {
                sq[j] = (vals[j] - mean) * (vals[j] - mean);
            }
            const double sd = std::sqrt(pairwise_sum(sq) / n);
            const auto C = static_cast<std::size_t>(config.components[i][k]);
            for (std::size_t c = 0; c < C; ++c) {
                const auto lo = c * vals.size() / C;
                auto hi = (c + 1) * vals.size() / C;
                hi = std::max(hi, lo + 1);
                const double slice_mean =
                    pairwise_sum(std::span<const double>(vals).subspan(lo, hi - lo)) / static_cast<double>(hi - lo);
                p.components[i][k].push_back(GaussianComponent{1.0 / static_cast<double>(C), slice_mean,
                                                               std::max(sd / static_cast<double>(C), floors[i])});
            }
        }
    }
    p.validate();
    return p;
}

MvmmParams init_params(const Scene& scene, const SceneTransforms& transforms, const TissueConfig& config)
{
    return init_params(warp_scene(scene, transforms), config, sigma_floors(scene.images));
}

Classification classify(const PosteriorField& posteriors, const MvmmParams& params, const VolumeGrid& grid)
{
    const auto K = params.config.label_count;
    const auto N = posteriors.voxel_count;
    if (grid.voxel_count() != N || posteriors.label_post.size() != K) {
        throw ModelError("classify: posterior field does not match the grid");
    }
    const auto si = params.config.scar_image;
    const auto wall = static_cast<std::size_t>(params.config.wall_label);
    const auto& wall_comps = posteriors.component_post[si][wall];
    const bool has_subtypes = wall_comps.size() >= 2;
    const auto bright = params.brightest_component(si, wall);

    Classification out{LabelVolume(grid), LabelVolume(grid)};
    for (std::size_t x = 0; x < N; ++x) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
            if (posteriors.label_post[k][x] > posteriors.label_post[best][x]) {
                best = k;
            }
        }
        out.labels.labels[x] = static_cast<std::int32_t>(best);
        if (best != wall || !has_subtypes) {
            continue;
        }
        std::size_t best_c = 0;
        for (std::size_t c = 1; c < wall_comps.size(); ++c) {
            if (wall_comps[c][x] > wall_comps[best_c][x]) {
                best_c = c;
            }
        }
        out.scar.labels[x] = best_c == bright ? 1 : 0;
    }
    return out;
}

}  // namespace mvseg
