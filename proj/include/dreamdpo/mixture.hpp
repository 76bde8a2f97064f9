#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dreamdpo/schedule.hpp"
#include "dreamdpo/vec.hpp"

namespace dreamdpo {

// Analytic stand-in for the frozen denoiser: a labeled isotropic Gaussian
// mixture whose diffused marginals stay closed-form. Labels play the role of
// the conditioning text; "unconditional" means the full mixture.

struct GaussianComponent {
    double weight = 1.0;
    Vec mean;
    double stdev = 1.0;  // isotropic, >= 0
    int label = 0;
};

struct GaussianMixture {
    std::vector<GaussianComponent> components;

    std::size_t dim() const { return components.empty() ? 0 : components[0].mean.size(); }

    bool has_label(int label) const {
        for (const auto& c : components) {
            if (c.label == label) return true;
        }
        return false;
    }
};

inline GaussianMixture make_mixture(std::vector<GaussianComponent> components) {
    if (components.empty()) throw ParameterError("mixture needs at least one component");
    const std::size_t d = components[0].mean.size();
    double wsum = 0.0;
    for (const auto& c : components) {
        if (c.mean.size() != d) throw ShapeError("mixture components disagree on dimension");
        if (!(c.weight > 0.0)) throw ParameterError("component weights must be strictly positive");
        if (c.stdev < 0.0) throw ParameterError("component stdev must be nonnegative");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-12) {
        throw ParameterError("component weights must sum to 1 (got " + std::to_string(wsum) + ")");
    }
    GaussianMixture m;
    m.components = std::move(components);
    return m;
}

// One component of the diffused marginal p_t: N(sqrt(ab)*mu, (ab*s^2 + 1-ab) I).
struct DiffusedComponent {
    double weight = 1.0;
    Vec mean;
    double variance = 1.0;
};

// Marginal mixture parameters at time t, optionally restricted to one label
// (weights renormalized over the selected subset). t = 0 returns the clean
// mixture.
inline std::vector<DiffusedComponent> diffused_density_params(const GaussianMixture& gmm, int t,
                                                              const NoiseSchedule& sched,
                                                              std::optional<int> label = std::nullopt) {
    check_timestep(t, sched);
    if (label && !gmm.has_label(*label)) {
        throw LabelError("no mixture component with label " + std::to_string(*label));
    }
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double root_ab = std::sqrt(ab);

    std::vector<DiffusedComponent> out;
    double wsum = 0.0;
    for (const auto& c : gmm.components) {
        if (label && c.label != *label) continue;
        DiffusedComponent d;
        d.weight = c.weight;
        d.mean.resize(c.mean.size());
        for (std::size_t i = 0; i < c.mean.size(); ++i) d.mean[i] = root_ab * c.mean[i];
        d.variance = ab * c.stdev * c.stdev + (1.0 - ab);
        wsum += c.weight;
        out.push_back(std::move(d));
    }
    for (auto& d : out) d.weight /= wsum;
    return out;
}

namespace detail {

constexpr double two_pi = 6.28318530717958647692;

// Per-component log weight * N(x; mean, var I), all in log space.
inline std::vector<double> component_log_terms(const Vec& x,
                                               const std::vector<DiffusedComponent>& comps) {
    std::vector<double> lt(comps.size());
    for (std::size_t k = 0; k < comps.size(); ++k) {
        const auto& c = comps[k];
        if (!(c.variance > 0.0)) {
            throw ParameterError("degenerate component (zero variance) in density evaluation");
        }
        require_same_size(x, c.mean, "log_density");
        const double d2 = squared_distance(x, c.mean);
        lt[k] = std::log(c.weight) - 0.5 * d2 / c.variance -
                0.5 * static_cast<double>(x.size()) * std::log(two_pi * c.variance);
    }
    return lt;
}

inline double log_sum_exp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace detail

// log p_t(x | label); label absent = full mixture.
inline double log_density(const Vec& x, int t, const GaussianMixture& gmm,
                          const NoiseSchedule& sched, std::optional<int> label = std::nullopt) {
    const auto comps = diffused_density_params(gmm, t, sched, label);
    return detail::log_sum_exp(detail::component_log_terms(x, comps));
}

// Closed-form noise prediction: eps_hat = -sqrt(1 - ab) * grad_x log p_t(x),
// computed through posterior responsibilities. Finite for all finite x.
inline Vec epsilon_pred(const Vec& x_t, int t, const GaussianMixture& gmm,
                        const NoiseSchedule& sched, std::optional<int> label = std::nullopt) {
    check_timestep(t, sched, 1);
    const auto comps = diffused_density_params(gmm, t, sched, label);
    const auto lt = detail::component_log_terms(x_t, comps);
    const double lse = detail::log_sum_exp(lt);
    const double root_1mab = std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t)]);

    Vec out(x_t.size(), 0.0);
    for (std::size_t k = 0; k < comps.size(); ++k) {
        const double resp = std::exp(lt[k] - lse);
        const double scale = resp / comps[k].variance;
        for (std::size_t i = 0; i < x_t.size(); ++i) {
            out[i] += scale * (x_t[i] - comps[k].mean[i]);
        }
    }
    for (double& v : out) v *= root_1mab;
    return out;
}

// Classifier-free guidance spec: scale s and the conditioning label. Label
// absent means unconditional, which only makes sense at scale 0.
struct CfgSpec {
    double scale = 1.0;
    std::optional<int> label;
};

// eps_uncond + s * (eps_cond - eps_uncond). The s = 0 and s = 1 endpoints
// return the single underlying prediction exactly.
inline Vec cfg_epsilon(const Vec& x_t, int t, const GaussianMixture& gmm,
                       const NoiseSchedule& sched, const CfgSpec& cfg) {
    if (!std::isfinite(cfg.scale)) throw ParameterError("cfg scale must be finite");
    if (cfg.scale == 0.0) return epsilon_pred(x_t, t, gmm, sched);
    if (!cfg.label) throw ParameterError("cfg scale != 0 requires a conditioning label");
    if (cfg.scale == 1.0) return epsilon_pred(x_t, t, gmm, sched, cfg.label);

    Vec uncond = epsilon_pred(x_t, t, gmm, sched);
    const Vec cond = epsilon_pred(x_t, t, gmm, sched, cfg.label);
    for (std::size_t i = 0; i < uncond.size(); ++i) {
        uncond[i] += cfg.scale * (cond[i] - uncond[i]);
    }
    return uncond;
}

// One-step clean-sample prediction: (x_t - sqrt(1 - ab) * eps_hat) / sqrt(ab).
// Exact inverse of forward_diffuse when eps_hat is the injected noise.
inline Vec predict_x0(const Vec& x_t, int t, const Vec& eps_hat, const NoiseSchedule& sched) {
    require_same_size(x_t, eps_hat, "predict_x0");
    check_timestep(t, sched);
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double cb = std::sqrt(1.0 - ab);
    const double inv_ca = 1.0 / std::sqrt(ab);
    Vec out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = (x_t[i] - cb * eps_hat[i]) * inv_ca;
    return out;
}

}  // namespace dreamdpo
