#pragma once

// Gaussian diffusion over fixed-length windows.
//
// Forward corruption (step t = 1..T):
//   x^t = sqrt(1 - beta_t) * x^{t-1} + sqrt(beta_t) * z,          z ~ N(0, I)
// with the closed form
//   x^t = sqrt(alpha_bar_t) * x^0 + sqrt(1 - alpha_bar_t) * z.
// Backward denoising uses the predicted noise eps_hat:
//   mu = (x^t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)
//   x^{t-1} = mu + sigma_t * z   (no noise at t = 1)
// Self-guidance shifts the mean by strength * sigma_t^2 * grad log p(obs|x^t),
// where the observation model is Gaussian around the x^0 reconstruction and
// the gradient flows through the noise predictor.

#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ant/rng.hpp"
#include "ant/schedule.hpp"

namespace ant {

// Anything that predicts noise from (window, step) and can backpropagate a
// vector through that prediction to its input.
template <class D>
concept NoisePredictor = requires(const D& d, std::span<const double> x, int t,
                                  std::span<const double> upstream) {
    { d.predict(x, t) } -> std::convertible_to<std::vector<double>>;
    { d.input_gradient(x, t, upstream) } -> std::convertible_to<std::vector<double>>;
};

enum class VarianceKind { posterior, beta };

struct GuidanceTarget {
    std::vector<double> observed;  // target values; entries with mask 0 are ignored
    std::vector<double> mask;      // 1 = observed coordinate, 0 = free
    double strength = 1.0;
};

namespace detail {

inline void check_step(int t, const Schedule& s, int lo) {
    if (t < lo || t > s.steps()) {
        throw std::invalid_argument("step " + std::to_string(t) + " outside [" +
                                    std::to_string(lo) + ", " + std::to_string(s.steps()) + "]");
    }
}

inline void check_finite(std::span<const double> x, const char* what, int t) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string(what) + " produced a non-finite value at step " +
                                     std::to_string(t));
        }
    }
}

inline double sigma2_at(const Schedule& s, int t, VarianceKind kind) {
    return kind == VarianceKind::posterior ? s.posterior_var_at(t) : s.beta_at(t);
}

}  // namespace detail

inline std::vector<double> forward_step(std::span<const double> x_prev, int t, const Schedule& s,
                                        Rng& rng) {
    detail::check_step(t, s, 1);
    const double keep = std::sqrt(1.0 - s.beta_at(t));
    const double noise = std::sqrt(s.beta_at(t));
    std::vector<double> out(x_prev.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * x_prev[i] + noise * rng.normal();
    return out;
}

// Closed-form jump from x^0 to x^t. t = 0 is allowed and returns x^0 exactly
// (the noise coefficient is zero).
inline std::vector<double> forward_closed(std::span<const double> x0, int t, const Schedule& s,
                                          Rng& rng) {
    detail::check_step(t, s, 0);
    const double ab = s.alpha_bar_at(t);
    const double keep = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * x0[i] + noise * rng.normal();
    return out;
}

// Iterative corruption chain; element t-1 holds x^t. This is the trajectory
// the score pipeline consumes, so it deliberately chains forward_step rather
// than sampling each step independently.
inline std::vector<std::vector<double>> corrupt_trajectory(std::span<const double> x0,
                                                           const Schedule& s, Rng& rng) {
    std::vector<std::vector<double>> traj(static_cast<std::size_t>(s.steps()));
    std::vector<double> cur(x0.begin(), x0.end());
    for (int t = 1; t <= s.steps(); ++t) {
        cur = forward_step(cur, t, s, rng);
        traj[static_cast<std::size_t>(t - 1)] = cur;
    }
    return traj;
}

// Inverts the closed form given the realized noise:
// x^0 = (x^t - sqrt(1 - alpha_bar_t) * eps) / sqrt(alpha_bar_t).
inline std::vector<double> predict_x0(std::span<const double> x_t, std::span<const double> eps,
                                      int t, const Schedule& s) {
    detail::check_step(t, s, 1);
    if (eps.size() != x_t.size()) throw std::invalid_argument("eps length differs from x_t");
    const double ab = s.alpha_bar_at(t);
    const double inv = 1.0 / std::sqrt(ab);
    const double coef = std::sqrt(1.0 - ab);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - coef * eps[i]) * inv;
    return out;
}

namespace detail {

inline std::vector<double> backward_mean(std::span<const double> x_t,
                                         std::span<const double> eps_hat, int t,
                                         const Schedule& s) {
    const double a = s.alpha_at(t);
    const double ab = s.alpha_bar_at(t);
    const double coef = (1.0 - a) / std::sqrt(1.0 - ab);
    const double inv = 1.0 / std::sqrt(a);
    std::vector<double> mu(x_t.size());
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = (x_t[i] - coef * eps_hat[i]) * inv;
    return mu;
}

}  // namespace detail

inline std::vector<double> backward_step(std::span<const double> x_t,
                                         std::span<const double> eps_hat, int t, const Schedule& s,
                                         Rng& rng, VarianceKind kind = VarianceKind::posterior) {
    detail::check_step(t, s, 1);
    if (eps_hat.size() != x_t.size()) throw std::invalid_argument("eps_hat length differs from x_t");
    std::vector<double> mu = detail::backward_mean(x_t, eps_hat, t, s);
    if (t > 1) {
        const double sigma = std::sqrt(detail::sigma2_at(s, t, kind));
        for (double& v : mu) v += sigma * rng.normal();
    }
    detail::check_finite(mu, "backward step", t);
    return mu;
}

// Log-density of the Gaussian observation model around the reconstruction:
//   log p(obs | x^t) = -1/2 * sum_i mask_i * (obs_i - x0_hat(x^t)_i)^2
// (up to the additive constant, which no gradient cares about).
template <NoisePredictor D>
double guidance_log_density(std::span<const double> x_t, const D& denoiser, int t,
                            const Schedule& s, const GuidanceTarget& target) {
    if (target.observed.size() != x_t.size() || target.mask.size() != x_t.size()) {
        throw std::invalid_argument("guidance target size differs from x_t");
    }
    std::vector<double> eps_hat = denoiser.predict(x_t, t);
    std::vector<double> x0 = predict_x0(x_t, eps_hat, t, s);
    double acc = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        double r = target.mask[i] * (target.observed[i] - x0[i]);
        acc += r * r;
    }
    return -0.5 * acc;
}

// grad_x log p(obs | x^t). With u = mask^2 * (obs - x0_hat):
//   grad = (u - sqrt(1 - alpha_bar_t) * J_eps^T u) / sqrt(alpha_bar_t)
// where J_eps^T u comes from the predictor's input backprop, so the chain
// through the denoiser is kept intact. For 0/1 masks mask^2 == mask.
template <NoisePredictor D>
std::vector<double> guidance_gradient(std::span<const double> x_t, const D& denoiser, int t,
                                      const Schedule& s, const GuidanceTarget& target) {
    if (target.observed.size() != x_t.size() || target.mask.size() != x_t.size()) {
        throw std::invalid_argument("guidance target size differs from x_t");
    }
    std::vector<double> eps_hat = denoiser.predict(x_t, t);
    std::vector<double> x0 = predict_x0(x_t, eps_hat, t, s);
    std::vector<double> r(x_t.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = target.mask[i] * target.mask[i] * (target.observed[i] - x0[i]);
    }

    std::vector<double> vjp = denoiser.input_gradient(x_t, t, r);
    const double ab = s.alpha_bar_at(t);
    const double coef = std::sqrt(1.0 - ab);
    const double inv = 1.0 / std::sqrt(ab);
    std::vector<double> grad(x_t.size());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = (r[i] - coef * vjp[i]) * inv;
    detail::check_finite(grad, "guidance gradient", t);
    return grad;
}

// One guided denoising step. target == nullptr (or strength 0) reproduces
// backward_step exactly: the guidance path consumes no randomness, so the
// noise draw below sees the same stream either way.
template <NoisePredictor D>
std::vector<double> guided_backward_step(std::span<const double> x_t, const D& denoiser, int t,
                                         const Schedule& s, const GuidanceTarget* target, Rng& rng,
                                         VarianceKind kind = VarianceKind::posterior) {
    detail::check_step(t, s, 1);
    std::vector<double> eps_hat = denoiser.predict(x_t, t);
    if (eps_hat.size() != x_t.size()) {
        throw std::invalid_argument("noise predictor returned a window of the wrong length");
    }
    std::vector<double> mu = detail::backward_mean(x_t, eps_hat, t, s);
    if (target != nullptr && target->strength != 0.0) {
        std::vector<double> grad = guidance_gradient(x_t, denoiser, t, s, *target);
        const double scale = target->strength * detail::sigma2_at(s, t, kind);
        for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += scale * grad[i];
    }
    if (t > 1) {
        const double sigma = std::sqrt(detail::sigma2_at(s, t, kind));
        for (double& v : mu) v += sigma * rng.normal();
    }
    detail::check_finite(mu, "guided backward step", t);
    return mu;
}

// Full ancestral sampling pass: x^T ~ N(0, I), then T denoising steps.
template <NoisePredictor D>
std::vector<double> sample(const D& denoiser, const Schedule& s, int window, Rng& rng,
                           const GuidanceTarget* target = nullptr,
                           VarianceKind kind = VarianceKind::posterior) {
    if (window < 1) throw std::invalid_argument("sample needs window >= 1");
    std::vector<double> x(static_cast<std::size_t>(window));
    for (double& v : x) v = rng.normal();
    for (int t = s.steps(); t >= 1; --t) {
        x = guided_backward_step<D>(x, denoiser, t, s, target, rng, kind);
    }
    return x;
}

}  // namespace ant
