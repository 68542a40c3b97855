#pragma once

#include <fstream>
#include <sstream>
#include <vector>

#include "frameslide/core.hpp"

namespace frameslide {

// Variance schedule for a T-step diffusion chain. Index convention: entry
// t-1 of each vector holds the value for diffusion step t, t in 1..T.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;
  std::vector<double> sigmas;

  double beta(int t) const {
    check_step(t);
    return betas[t - 1];
  }
  // alpha_bar(0) == 1 by convention (clean data).
  double alpha_bar(int t) const {
    if (t == 0) return 1.0;
    check_step(t);
    return alpha_bars[t - 1];
  }
  double sigma(int t) const {
    check_step(t);
    return sigmas[t - 1];
  }
  void check_step(int t) const {
    if (t < 1 || t > T)
      throw RangeError("diffusion step " + std::to_string(t) + " outside 1.." + std::to_string(T));
  }
};

inline NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("make_linear_schedule: T must be >= 1, got " + std::to_string(T));
  if (!(beta_start > 0.0))
    throw ConfigError("make_linear_schedule: beta_start must be > 0, got " + std::to_string(beta_start));
  if (!(beta_end < 1.0))
    throw ConfigError("make_linear_schedule: beta_end must be < 1, got " + std::to_string(beta_end));
  if (!(beta_start <= beta_end))
    throw ConfigError("make_linear_schedule: beta_start must be <= beta_end");

  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alpha_bars.resize(T);
  s.sigmas.resize(T);
  for (int i = 0; i < T; ++i) {
    double frac = (T == 1) ? 0.0 : double(i) / double(T - 1);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bars[i] = (i == 0 ? 1.0 : s.alpha_bars[i - 1]) * (1.0 - s.betas[i]);
    s.sigmas[i] = std::sqrt(s.betas[i]);
  }
  return s;
}

inline void write_schedule_csv(const NoiseSchedule& s, std::ostream& os) {
  os << "t,beta,alpha_bar,sigma\n";
  os.precision(17);
  for (int t = 1; t <= s.T; ++t)
    os << t << "," << s.betas[t - 1] << "," << s.alpha_bars[t - 1] << "," << s.sigmas[t - 1] << "\n";
}

inline void write_schedule_csv(const NoiseSchedule& s, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_schedule_csv(s, os);
}

// --- per-tensor operations -------------------------------------------------

// One forward noising step: z_t = sqrt(1-beta_t) z_{t-1} + sqrt(beta_t) eps.
inline Tensor forward_step(const Tensor& z_prev, int t, const Tensor& noise,
                           const NoiseSchedule& sched) {
  sched.check_step(t);
  z_prev.require_same_shape(noise);
  double a = std::sqrt(1.0 - sched.beta(t));
  double b = std::sqrt(sched.beta(t));
  Tensor out(z_prev.h, z_prev.w, z_prev.c);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * z_prev.v[i] + b * noise.v[i];
  return out;
}

// Single-step jump to step t: z_t = sqrt(abar_t) z_0 + sqrt(1-abar_t) eps.
inline Tensor forward_jump(const Tensor& z0, int t, const Tensor& noise,
                           const NoiseSchedule& sched) {
  sched.check_step(t);
  z0.require_same_shape(noise);
  double a = std::sqrt(sched.alpha_bar(t));
  double b = std::sqrt(1.0 - sched.alpha_bar(t));
  Tensor out(z0.h, z0.w, z0.c);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a * z0.v[i] + b * noise.v[i];
  return out;
}

// Ancestral reverse step from the epsilon parameterization. The injected
// noise term is dropped at t = 1 so the final latent is deterministic.
inline Tensor reverse_step(const Tensor& z_t, const Tensor& eps_hat, int t, const Tensor& noise,
                           const NoiseSchedule& sched) {
  sched.check_step(t);
  z_t.require_same_shape(eps_hat);
  z_t.require_same_shape(noise);
  double inv = 1.0 / std::sqrt(1.0 - sched.beta(t));
  double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  double sig = (t == 1) ? 0.0 : sched.sigma(t);
  Tensor out(z_t.h, z_t.w, z_t.c);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = inv * (z_t.v[i] - coef * eps_hat.v[i]) + sig * noise.v[i];
  return out;
}

// Deterministic (eta = 0) skip-step update from step tau_i down to tau_prev.
inline Tensor ddim_step(const Tensor& z, const Tensor& eps_hat, int tau_i, int tau_prev,
                        const NoiseSchedule& sched) {
  if (!(tau_prev < tau_i))
    throw RangeError("ddim_step: need tau_prev < tau_i, got " + std::to_string(tau_prev) +
                     " >= " + std::to_string(tau_i));
  if (tau_prev < 0) throw RangeError("ddim_step: tau_prev must be >= 0");
  sched.check_step(tau_i);
  z.require_same_shape(eps_hat);
  double ai = sched.alpha_bar(tau_i);
  double ap = sched.alpha_bar(tau_prev);
  double c0 = std::sqrt(ap / ai);
  double ce = std::sqrt(1.0 - ap) - std::sqrt(ap * (1.0 - ai) / ai);
  Tensor out(z.h, z.w, z.c);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = c0 * z.v[i] + ce * eps_hat.v[i];
  return out;
}

// Classifier-free guidance: eps_uncond + g (eps_cond - eps_uncond).
inline Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double g) {
  if (g < 0.0) throw ConfigError("cfg_combine: guidance scale must be >= 0");
  eps_uncond.require_same_shape(eps_cond);
  Tensor out(eps_uncond.h, eps_uncond.w, eps_uncond.c);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = eps_uncond.v[i] + g * (eps_cond.v[i] - eps_uncond.v[i]);
  return out;
}

// --- per-clip wrappers -----------------------------------------------------

namespace detail {
template <typename F>
LatentClip map_frames(const LatentClip& a, const LatentClip& b, int step_out, F&& f) {
  if (a.length() != b.length()) throw ShapeError("clip length mismatch");
  LatentClip out;
  out.step = step_out;
  out.frames.reserve(a.frames.size());
  for (size_t i = 0; i < a.frames.size(); ++i) out.frames.push_back(f(a.frames[i], b.frames[i]));
  return out;
}
}  // namespace detail

inline LatentClip forward_step(const LatentClip& z_prev, int t, const LatentClip& noise,
                               const NoiseSchedule& sched) {
  return detail::map_frames(z_prev, noise, t,
                            [&](const Tensor& a, const Tensor& b) { return forward_step(a, t, b, sched); });
}

inline LatentClip forward_jump(const LatentClip& z0, int t, const LatentClip& noise,
                               const NoiseSchedule& sched) {
  return detail::map_frames(z0, noise, t,
                            [&](const Tensor& a, const Tensor& b) { return forward_jump(a, t, b, sched); });
}

inline LatentClip reverse_step(const LatentClip& z_t, const LatentClip& eps_hat, int t,
                               const LatentClip& noise, const NoiseSchedule& sched) {
  if (z_t.length() != eps_hat.length() || z_t.length() != noise.length())
    throw ShapeError("clip length mismatch in reverse_step");
  LatentClip out;
  out.step = t - 1;
  out.frames.reserve(z_t.frames.size());
  for (size_t i = 0; i < z_t.frames.size(); ++i)
    out.frames.push_back(reverse_step(z_t.frames[i], eps_hat.frames[i], t, noise.frames[i], sched));
  return out;
}

inline LatentClip ddim_step(const LatentClip& z, const LatentClip& eps_hat, int tau_i, int tau_prev,
                            const NoiseSchedule& sched) {
  return detail::map_frames(z, eps_hat, tau_prev, [&](const Tensor& a, const Tensor& b) {
    return ddim_step(a, b, tau_i, tau_prev, sched);
  });
}

inline LatentClip cfg_combine(const LatentClip& eps_uncond, const LatentClip& eps_cond, double g) {
  return detail::map_frames(eps_uncond, eps_cond, eps_uncond.step,
                            [&](const Tensor& a, const Tensor& b) { return cfg_combine(a, b, g); });
}

// Uniform-stride DDIM subsequence over 1..T, always ending at T.
inline std::vector<int> ddim_timesteps(int T, int n_steps) {
  if (n_steps < 2 || n_steps > T)
    throw ConfigError("ddim_timesteps: step count must be in 2..T, got " + std::to_string(n_steps));
  std::vector<int> taus(n_steps);
  for (int i = 0; i < n_steps; ++i) taus[i] = int(std::llround(double(i + 1) * T / n_steps));
  for (int i = 1; i < n_steps; ++i)
    if (taus[i] <= taus[i - 1]) taus[i] = taus[i - 1] + 1;
  taus.back() = T;
  return taus;
}

}  // namespace frameslide
