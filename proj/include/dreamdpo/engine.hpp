#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dreamdpo/mixture.hpp"
#include "dreamdpo/ranker.hpp"
#include "dreamdpo/representation.hpp"
#include "dreamdpo/rng.hpp"
#include "dreamdpo/schedule.hpp"
#include "dreamdpo/vec.hpp"

namespace dreamdpo {

// Optimization loop: pair construction, one-step prediction, ranking, the
// piecewise preference gradient (with the plain score-distillation gradient as
// baseline), pullback, parameter update.

enum class PairStrategy { different_noises, different_timesteps };

struct PairStrategySpec {
    PairStrategy kind = PairStrategy::different_noises;
    int gap = 0;  // timestep offset of the second pair member (different_timesteps)
};

enum class OptimizerKind { sgd, adam };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

enum class Mode { dreamdpo, sds };

struct RunConfig {
    Mode mode = Mode::dreamdpo;
    double tau = 1e-3;  // score-gap threshold; may be +infinity
    double cfg_scale = 1.0;
    std::optional<int> label;  // conditioning; absent = unconditional oracle
    PairStrategySpec pair_strategy;
    int steps = 100;
    double learning_rate = 0.01;
    OptimizerKind optimizer = OptimizerKind::adam;
    AdamParams adam;
    int t_min = 1;
    int t_max = 1000;
    std::uint64_t seed = 0;
    std::vector<ViewSpec> views{ViewSpec::identity()};
};

// One iteration's noising bundle. t2 duplicates t + gap so downstream code
// does not need the strategy to know the second member's timestep.
struct PairSample {
    int t = 0;
    int t2 = 0;
    Vec eps1, eps2;
    Vec xt1, xt2;
    Vec x0hat1, x0hat2;
};

enum class Branch {
    pull_only,  // s_gap < tau: raw guided prediction, no noise subtraction
    push_pull,  // win/lose delta difference
    skipped,    // annotation error, parameters untouched
    none,       // sds iterations (no ranking)
};

struct IterationTrace {
    int iteration = 0;
    int t = 0;
    std::optional<double> reward_win;
    std::optional<double> reward_lose;
    std::optional<double> s_gap;
    Branch branch = Branch::none;
    double gradient_norm = 0.0;
    std::optional<double> metric_avg_reward;
};

// The random tuple one iteration consumes. Both modes and all tau values draw
// the identical sequence for a given (config, seed), which is what makes
// sweeps replayable and same-seed baselines noise-matched.
struct PairDraw {
    int view_index = 0;
    int t = 1;
    Vec eps1, eps2;
};

inline int base_t_upper(const RunConfig& cfg) {
    return cfg.pair_strategy.kind == PairStrategy::different_timesteps
               ? cfg.t_max - cfg.pair_strategy.gap
               : cfg.t_max;
}

inline PairDraw draw_pair(Rng& rng, const RunConfig& cfg, std::size_t dim) {
    PairDraw d;
    d.view_index = rng.uniform_int(0, static_cast<int>(cfg.views.size()) - 1);
    d.t = rng.uniform_int(cfg.t_min, base_t_upper(cfg));
    d.eps1 = rng.normal_vec(dim);
    d.eps2 = rng.normal_vec(dim);
    return d;
}

// Pre-draws the whole run's tuples so several runs can consume one stream.
inline std::vector<PairDraw> record_pair_stream(const RunConfig& cfg, std::size_t dim) {
    Rng rng(cfg.seed);
    std::vector<PairDraw> stream;
    stream.reserve(static_cast<std::size_t>(cfg.steps));
    for (int i = 0; i < cfg.steps; ++i) stream.push_back(draw_pair(rng, cfg, dim));
    return stream;
}

// ---- pair construction --------------------------------------------------------

inline PairSample construct_pair(const Vec& x0, Vec eps1, Vec eps2, int t,
                                 const PairStrategySpec& strategy, const NoiseSchedule& sched) {
    if (strategy.gap < 0) throw ParameterError("pair gap must be nonnegative");
    PairSample p;
    p.t = t;
    if (strategy.kind == PairStrategy::different_timesteps) {
        p.t2 = t + strategy.gap;
        check_timestep(p.t2, sched);
        p.eps1 = std::move(eps1);
        p.eps2 = p.eps1;  // shared noise
    } else {
        p.t2 = t;
        p.eps1 = std::move(eps1);
        p.eps2 = std::move(eps2);
    }
    p.xt1 = forward_diffuse(x0, p.eps1, p.t, sched);
    p.xt2 = forward_diffuse(x0, p.eps2, p.t2, sched);
    return p;
}

inline PairSample construct_pair(const Vec& x0, Rng& rng, int t, const PairStrategySpec& strategy,
                                 const NoiseSchedule& sched) {
    Vec eps1 = rng.normal_vec(x0.size());
    Vec eps2 = strategy.kind == PairStrategy::different_noises ? rng.normal_vec(x0.size()) : Vec{};
    return construct_pair(x0, std::move(eps1), std::move(eps2), t, strategy, sched);
}

// Noise prediction used throughout the loop. With a label this is the guided
// prediction at the given scale; unconditional runs have nothing to guide
// toward, so the plain unconditional prediction is used regardless of scale.
inline Vec guided_epsilon(const Vec& x_t, int t, const GaussianMixture& gmm,
                          const NoiseSchedule& sched, double scale, std::optional<int> label) {
    if (!label) return epsilon_pred(x_t, t, gmm, sched);
    return cfg_epsilon(x_t, t, gmm, sched, CfgSpec{scale, label});
}

// Fills the one-step predictions; the ranking consumes these, not the noisy
// samples.
inline void complete_pair(PairSample& pair, const GaussianMixture& gmm, const NoiseSchedule& sched,
                          std::optional<int> label) {
    const Vec eh1 = epsilon_pred(pair.xt1, pair.t, gmm, sched, label);
    const Vec eh2 = epsilon_pred(pair.xt2, pair.t2, gmm, sched, label);
    pair.x0hat1 = predict_x0(pair.xt1, pair.t, eh1, sched);
    pair.x0hat2 = predict_x0(pair.xt2, pair.t2, eh2, sched);
}

// ---- gradients -------------------------------------------------------------------

// Piecewise preference gradient. Below the threshold only the win example is
// pulled, using the raw guided prediction with no noise subtraction; above it
// the win delta (guidance scale s) is pulled and the lose delta (guidance
// scale 1) is pushed away. w(t) is evaluated at the recorded base timestep.
inline Vec dreamdpo_gradient(const PairSample& pair, const PairwiseVerdict& verdict,
                             const RunConfig& cfg, const GaussianMixture& gmm,
                             const NoiseSchedule& sched) {
    const double w = weight(pair.t, sched);
    const bool win_first = verdict.win_index == 1;
    const Vec& xt_win = win_first ? pair.xt1 : pair.xt2;
    const Vec& xt_lose = win_first ? pair.xt2 : pair.xt1;
    const Vec& eps_win = win_first ? pair.eps1 : pair.eps2;
    const Vec& eps_lose = win_first ? pair.eps2 : pair.eps1;
    const int t_win = win_first ? pair.t : pair.t2;
    const int t_lose = win_first ? pair.t2 : pair.t;

    if (verdict.s_gap < cfg.tau) {
        Vec g = guided_epsilon(xt_win, t_win, gmm, sched, cfg.cfg_scale, cfg.label);
        for (double& v : g) v *= w;
        return g;
    }
    const Vec g_win = guided_epsilon(xt_win, t_win, gmm, sched, cfg.cfg_scale, cfg.label);
    const Vec g_lose = guided_epsilon(xt_lose, t_lose, gmm, sched, 1.0, cfg.label);
    Vec out(g_win.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = w * ((g_win[i] - eps_win[i]) - (g_lose[i] - eps_lose[i]));
    }
    return out;
}

// Plain score-distillation gradient: w(t) * (guided prediction - injected noise).
inline Vec sds_gradient(const Vec& x0, int t, const Vec& eps, const RunConfig& cfg,
                        const GaussianMixture& gmm, const NoiseSchedule& sched) {
    const Vec xt = forward_diffuse(x0, eps, t, sched);
    Vec g = guided_epsilon(xt, t, gmm, sched, cfg.cfg_scale, cfg.label);
    const double w = weight(t, sched);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = w * (g[i] - eps[i]);
    return g;
}

// ---- optimizer -------------------------------------------------------------------

class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate, AdamParams params, std::size_t dim)
        : kind_(kind), lr_(learning_rate), p_(params) {
        if (kind_ == OptimizerKind::adam) {
            m_.assign(dim, 0.0);
            v_.assign(dim, 0.0);
        }
    }

    void apply(Vec& params, const Vec& grad) {
        require_same_size(params, grad, "optimizer");
        if (kind_ == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
            return;
        }
        ++step_;
        const double c1 = 1.0 - std::pow(p_.beta1, step_);
        const double c2 = 1.0 - std::pow(p_.beta2, step_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = p_.beta1 * m_[i] + (1.0 - p_.beta1) * grad[i];
            v_[i] = p_.beta2 * v_[i] + (1.0 - p_.beta2) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + p_.eps);
        }
    }

private:
    OptimizerKind kind_;
    double lr_;
    AdamParams p_;
    Vec m_, v_;
    int step_ = 0;
};

// ---- run loop --------------------------------------------------------------------

struct EngineHooks {
    // Observes each non-skipped iteration after the gradient is formed and
    // before the update. verdict is null for sds iterations.
    std::function<void(int iteration, const PairSample&, const PairwiseVerdict* verdict,
                       const Vec& image_grad)>
        on_gradient;
};

// Average-reward metric column; null = column stays empty.
using MetricFn = std::function<std::optional<double>(const Representation&)>;

inline void validate_run_config(const RunConfig& cfg, const NoiseSchedule& sched,
                                const Representation& rep, const GaussianMixture& gmm) {
    if (cfg.steps < 0) throw ParameterError("steps must be >= 0");
    if (!(cfg.learning_rate >= 0.0)) throw ParameterError("learning_rate must be >= 0");
    if (std::isnan(cfg.tau) || cfg.tau < 0.0) throw ParameterError("tau must be >= 0 (or inf)");
    if (cfg.views.empty()) throw ParameterError("at least one view required");
    if (!(1 <= cfg.t_min && cfg.t_min <= cfg.t_max && cfg.t_max <= sched.T)) {
        throw ParameterError("need 1 <= t_min <= t_max <= T");
    }
    if (cfg.pair_strategy.kind == PairStrategy::different_timesteps) {
        if (cfg.pair_strategy.gap < 0) throw ParameterError("pair gap must be >= 0");
        if (base_t_upper(cfg) < cfg.t_min) {
            throw ParameterError("pair gap leaves no valid base timesteps");
        }
    }
    if (cfg.label && !gmm.has_label(*cfg.label)) {
        throw LabelError("run label " + std::to_string(*cfg.label) + " not in mixture");
    }
    if (std::holds_alternative<DirectVector>(rep)) {
        for (const auto& v : cfg.views) {
            if (v.kind != ViewSpec::Kind::identity) {
                throw ViewError("DirectVector runs require identity views");
            }
        }
    }
    if (gmm.dim() != render_dim(rep)) {
        throw ShapeError("mixture dimension does not match render dimension");
    }
}

struct EngineState {
    RunConfig cfg;
    Representation rep;
    const GaussianMixture* gmm = nullptr;
    const NoiseSchedule* sched = nullptr;
    Ranker* ranker = nullptr;  // unused in sds mode
    Optimizer optimizer;
    Rng rng;
    int iteration = 0;
    const std::vector<PairDraw>* replay = nullptr;
    MetricFn metric;
    const EngineHooks* hooks = nullptr;

    EngineState(RunConfig config, Representation representation, const GaussianMixture& mixture,
                const NoiseSchedule& schedule, Ranker* rank)
        : cfg(std::move(config)),
          rep(std::move(representation)),
          gmm(&mixture),
          sched(&schedule),
          ranker(rank),
          optimizer(cfg.optimizer, cfg.learning_rate, cfg.adam, param_count(rep)),
          rng(cfg.seed) {
        validate_run_config(cfg, schedule, rep, mixture);
        if (cfg.mode == Mode::dreamdpo && ranker == nullptr) {
            throw ParameterError("dreamdpo mode needs a ranker");
        }
    }
};

// One iteration: sample (view, t, noises), render, pair, predict, rank,
// gradient, pullback, update. Annotation errors downgrade to a skipped
// iteration with parameters untouched.
inline IterationTrace step(EngineState& s) {
    const std::size_t dim = render_dim(s.rep);
    PairDraw local;
    const PairDraw* d;
    if (s.replay) {
        if (s.iteration >= static_cast<int>(s.replay->size())) {
            throw ParameterError("replay stream shorter than step count");
        }
        d = &(*s.replay)[static_cast<std::size_t>(s.iteration)];
    } else {
        local = draw_pair(s.rng, s.cfg, dim);
        d = &local;
    }

    const ViewSpec& view = s.cfg.views[static_cast<std::size_t>(d->view_index)];
    const Vec x0 = render(s.rep, view);

    IterationTrace tr;
    tr.iteration = s.iteration;
    tr.t = d->t;

    Vec image_grad;
    PairSample pair;
    std::optional<PairwiseVerdict> verdict;

    if (s.cfg.mode == Mode::sds) {
        image_grad = sds_gradient(x0, d->t, d->eps1, s.cfg, *s.gmm, *s.sched);
        pair.t = pair.t2 = d->t;
        pair.eps1 = d->eps1;
        pair.xt1 = forward_diffuse(x0, d->eps1, d->t, *s.sched);
        tr.branch = Branch::none;
    } else {
        pair = construct_pair(x0, d->eps1, d->eps2, d->t, s.cfg.pair_strategy, *s.sched);
        complete_pair(pair, *s.gmm, *s.sched, s.cfg.label);
        try {
            verdict = s.ranker->compare(pair.x0hat1, pair.x0hat2);
        } catch (const AnnotationError&) {
            tr.branch = Branch::skipped;
        }
        if (verdict) {
            tr.reward_win = verdict->reward_win;
            tr.reward_lose = verdict->reward_lose;
            tr.s_gap = verdict->s_gap;
            tr.branch = verdict->s_gap < s.cfg.tau ? Branch::pull_only : Branch::push_pull;
            image_grad = dreamdpo_gradient(pair, *verdict, s.cfg, *s.gmm, *s.sched);
        }
    }

    if (!image_grad.empty()) {
        const Vec param_grad = pullback(s.rep, view, image_grad);
        tr.gradient_norm = norm(param_grad);
        if (s.hooks && s.hooks->on_gradient) {
            s.hooks->on_gradient(s.iteration, pair, verdict ? &*verdict : nullptr, image_grad);
        }
        Vec params = get_params(s.rep);
        s.optimizer.apply(params, param_grad);
        set_params(s.rep, params);
    }

    tr.metric_avg_reward = s.metric ? s.metric(s.rep) : std::nullopt;
    ++s.iteration;
    return tr;
}

struct RunResult {
    Representation rep;
    std::vector<IterationTrace> traces;
};

// Executes exactly cfg.steps iterations (a fixed budget stands in for a
// convergence test) and returns the final representation plus all traces.
inline RunResult run(const RunConfig& cfg, Representation rep, const GaussianMixture& gmm,
                     const NoiseSchedule& sched, Ranker* ranker, MetricFn metric = {},
                     const std::vector<PairDraw>* replay = nullptr,
                     const EngineHooks* hooks = nullptr) {
    EngineState state(cfg, std::move(rep), gmm, sched, ranker);
    state.metric = std::move(metric);
    state.replay = replay;
    state.hooks = hooks;
    RunResult result;
    result.traces.reserve(static_cast<std::size_t>(cfg.steps));
    for (int i = 0; i < cfg.steps; ++i) result.traces.push_back(step(state));
    result.rep = std::move(state.rep);
    return result;
}

}  // namespace dreamdpo
