#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vvt/data_model.hpp"
#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

// Noise-level schedule for training (log-normal sigma draws) and inference
// (rho-spaced ladder from sigma_max down to sigma_min, then 0).
struct NoiseLevelSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int num_steps = 12;
    double sigma_data = 0.5;
    double p_mean = -1.2;
    double p_std = 1.2;

    void validate() const {
        if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
            throw ScheduleError("need 0 < sigma_min < sigma_max");
        if (num_steps < 1) throw ScheduleError("num_steps must be >= 1");
        if (!(sigma_data > 0.0)) throw ScheduleError("sigma_data must be positive");
        if (!(rho > 0.0)) throw ScheduleError("rho must be positive");
    }
};

struct Preconditioning {
    double c_skip = 1.0;
    double c_out = 0.0;
    double c_in = 1.0;
    double c_noise = 0.0;
};

// c_skip = sd^2/(s^2+sd^2), c_out = s*sd/sqrt(s^2+sd^2),
// c_in = 1/sqrt(s^2+sd^2), c_noise = ln(s)/4.
inline Preconditioning precondition(double sigma, double sigma_data = 0.5) {
    if (sigma < 0.0) throw DomainError("sigma must be nonnegative");
    if (!(sigma_data > 0.0)) throw DomainError("sigma_data must be positive");
    const double s2 = sigma * sigma;
    const double d2 = sigma_data * sigma_data;
    Preconditioning p;
    p.c_skip = d2 / (s2 + d2);
    p.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
    p.c_in = 1.0 / std::sqrt(s2 + d2);
    p.c_noise = sigma > 0.0 ? 0.25 * std::log(sigma) : 0.0;
    return p;
}

struct LossWeights {
    std::function<double(double)> lambda_sigma;
};

// EDM weighting (s^2+sd^2)/(s*sd)^2; with the unit-variance preconditioning
// this keeps the effective loss scale flat across noise levels.
inline LossWeights edm_loss_weights(double sigma_data = 0.5) {
    return LossWeights{[sigma_data](double sigma) {
        const double num = sigma * sigma + sigma_data * sigma_data;
        const double den = sigma * sigma_data;
        return num / (den * den);
    }};
}

// Raw network U(c_in*x; c_noise): takes the scaled latent and the noise
// embedding value, returns a 4-channel latent of the same shape. Conditioning
// is whatever the callable captured.
using RawNetFn = std::function<Tensor(const Tensor& scaled, double c_noise)>;

// D(x;sigma) = c_skip*x + c_out*U(c_in*x; c_noise).
inline LatentClip apply_denoiser(const RawNetFn& raw_net, const LatentClip& x,
                                 double sigma, double sigma_data = 0.5) {
    const Preconditioning p = precondition(sigma, sigma_data);
    Tensor scaled = x.latents;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= p.c_in;
    Tensor u = raw_net(scaled, p.c_noise);
    require_same_shape(u, x.latents, "apply_denoiser");
    LatentClip out = x;
    for (std::size_t i = 0; i < u.size(); ++i)
        out.latents[i] = p.c_skip * x.latents[i] + p.c_out * u[i];
    return out;
}

// Full denoiser callable D(x; sigma) used by the loss and the sampler.
using DenoiserFn = std::function<LatentClip(const LatentClip&, double)>;

// lambda_sigma * mean((D(x0+n; sigma) - x0)^2). The mean reduction keeps loss
// magnitudes resolution-independent.
inline double dsm_loss(const DenoiserFn& denoiser, const LatentClip& x0,
                       const LatentClip& noise, double sigma,
                       const LossWeights& weights = edm_loss_weights()) {
    require_same_shape(x0.latents, noise.latents, "dsm_loss");
    if (!(sigma > 0.0)) throw DomainError("dsm_loss needs sigma > 0");
    LatentClip noisy = x0;
    for (std::size_t i = 0; i < noisy.latents.size(); ++i)
        noisy.latents[i] += noise.latents[i];
    const LatentClip denoised = denoiser(noisy, sigma);
    require_same_shape(denoised.latents, x0.latents, "dsm_loss");
    return weights.lambda_sigma(sigma) * mse(denoised.latents, x0.latents);
}

// Training draw: sigma = exp(Normal(p_mean, p_std)).
inline double sample_sigma(const NoiseLevelSchedule& schedule, Rng& rng) {
    schedule.validate();
    std::normal_distribution<double> dist(schedule.p_mean, schedule.p_std);
    return std::exp(dist(rng));
}

// Decreasing rho-spaced ladder [sigma_max .. sigma_min, 0].
inline std::vector<double> sigma_steps(const NoiseLevelSchedule& schedule) {
    schedule.validate();
    const int n = schedule.num_steps;
    std::vector<double> steps;
    steps.reserve(static_cast<std::size_t>(n) + 1);
    if (n == 1) {
        steps.push_back(schedule.sigma_max);
    } else {
        const double max_r = std::pow(schedule.sigma_max, 1.0 / schedule.rho);
        const double min_r = std::pow(schedule.sigma_min, 1.0 / schedule.rho);
        for (int i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / static_cast<double>(n - 1);
            steps.push_back(std::pow(max_r + t * (min_r - max_r), schedule.rho));
        }
    }
    steps.push_back(0.0);
    return steps;
}

// Per-step observer for debug latent dumps.
using SampleObserverFn =
    std::function<void(int step, double sigma, const LatentClip&)>;

// Euler step: x <- x + (s_next - s_cur) * (x - D(x;s_cur)) / s_cur.
inline LatentClip euler_sample(const DenoiserFn& denoiser, const LatentClip& x_T,
                               const NoiseLevelSchedule& schedule,
                               const SampleObserverFn& observer = {}) {
    const std::vector<double> ladder = sigma_steps(schedule);
    LatentClip x = x_T;
    for (std::size_t k = 0; k + 1 < ladder.size(); ++k) {
        const double cur = ladder[k];
        const double next = ladder[k + 1];
        if (!(cur > 0.0))
            throw ScheduleError("sigma ladder hit zero before the last step");
        const LatentClip denoised = denoiser(x, cur);
        require_same_shape(denoised.latents, x.latents, "euler_sample");
        const double h = (next - cur) / cur;
        for (std::size_t i = 0; i < x.latents.size(); ++i)
            x.latents[i] += h * (x.latents[i] - denoised.latents[i]);
        if (observer) observer(static_cast<int>(k), next, x);
    }
    return x;
}

}  // namespace vvt
