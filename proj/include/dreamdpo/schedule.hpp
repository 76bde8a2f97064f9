#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dreamdpo/vec.hpp"

namespace dreamdpo {

// Gradient weight w(t).
enum class WeightKind {
    one,
    one_minus_alpha_bar,
    sigma_squared,  // equals one_minus_alpha_bar under the variance-preserving convention
};

// Discrete variance-preserving forward-diffusion schedule.
//
// Convention: a single cumulative alpha_bar with
//   x_t = sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps,
// so sigma(t)^2 = 1 - alpha_bar[t] and the one-step x0 prediction is the
// exact algebraic inverse.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> alpha_bar;  // size T+1, alpha_bar[0] == 1
    WeightKind weight_kind = WeightKind::one_minus_alpha_bar;
};

inline void check_timestep(int t, const NoiseSchedule& sched, int t_lo = 0) {
    if (t < t_lo || t > sched.T) {
        throw ParameterError("timestep " + std::to_string(t) + " outside [" +
                             std::to_string(t_lo) + ", " + std::to_string(sched.T) + "]");
    }
}

// Builds a schedule from explicit cumulative alphas, enforcing the structural
// invariants: alpha_bar[0] = 1 exactly, strictly decreasing, all in (0, 1].
inline NoiseSchedule make_schedule(std::vector<double> alpha_bar,
                                   WeightKind wk = WeightKind::one_minus_alpha_bar) {
    if (alpha_bar.size() < 2) throw ParameterError("schedule needs at least one step");
    if (alpha_bar[0] != 1.0) throw ParameterError("alpha_bar[0] must be exactly 1");
    for (std::size_t t = 1; t < alpha_bar.size(); ++t) {
        if (!(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0)) {
            throw ParameterError("alpha_bar[" + std::to_string(t) + "] outside (0, 1]");
        }
        if (!(alpha_bar[t] < alpha_bar[t - 1])) {
            throw ParameterError("alpha_bar not strictly decreasing at t=" + std::to_string(t));
        }
    }
    NoiseSchedule s;
    s.T = static_cast<int>(alpha_bar.size()) - 1;
    s.alpha_bar = std::move(alpha_bar);
    s.weight_kind = wk;
    return s;
}

// Linear-beta schedule: beta_i interpolates beta_min..beta_max over i = 1..T,
// alpha_bar[t] = prod_{i<=t} (1 - beta_i).
inline NoiseSchedule make_linear_schedule(int T, double beta_min, double beta_max,
                                          WeightKind wk = WeightKind::one_minus_alpha_bar) {
    if (T < 2) throw ParameterError("make_linear_schedule: T must be >= 2");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
        throw ParameterError("make_linear_schedule: need 0 < beta_min <= beta_max < 1");
    }
    std::vector<double> ab(static_cast<std::size_t>(T) + 1);
    ab[0] = 1.0;
    double prod = 1.0;
    for (int i = 1; i <= T; ++i) {
        const double beta = beta_min + (beta_max - beta_min) * static_cast<double>(i - 1) /
                                           static_cast<double>(T - 1);
        prod *= 1.0 - beta;
        ab[static_cast<std::size_t>(i)] = prod;
    }
    return make_schedule(std::move(ab), wk);
}

inline double sigma(int t, const NoiseSchedule& sched) {
    check_timestep(t, sched);
    return std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t)]);
}

// x_t = sqrt(alpha_bar) * x0 + sqrt(1 - alpha_bar) * eps. Accepts t = 0 as
// the identity endpoint.
inline Vec forward_diffuse(const Vec& x0, const Vec& eps, int t, const NoiseSchedule& sched) {
    require_same_size(x0, eps, "forward_diffuse");
    check_timestep(t, sched);
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
    const double ca = std::sqrt(ab);
    const double cb = std::sqrt(1.0 - ab);
    Vec out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = ca * x0[i] + cb * eps[i];
    return out;
}

// w(t); strictly positive for t >= 1.
inline double weight(int t, const NoiseSchedule& sched) {
    check_timestep(t, sched, 1);
    switch (sched.weight_kind) {
        case WeightKind::one:
            return 1.0;
        case WeightKind::one_minus_alpha_bar:
        case WeightKind::sigma_squared:
            return 1.0 - sched.alpha_bar[static_cast<std::size_t>(t)];
    }
    throw ParameterError("unknown weight kind");
}

}  // namespace dreamdpo
