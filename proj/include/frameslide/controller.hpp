#pragma once

#include <deque>
#include <functional>
#include <map>

#include "frameslide/codec.hpp"
#include "frameslide/core.hpp"
#include "frameslide/denoiser.hpp"
#include "frameslide/schedule.hpp"

namespace frameslide {

// K-slot conditioning queue of clean latents, oldest first.
class FrameQueue {
 public:
  static FrameQueue repeat(const LatentFrame& z0, int k) {
    if (k < 1) throw ConfigError("FrameQueue: K must be >= 1");
    FrameQueue q;
    q.slots_.assign(size_t(k), z0);
    return q;
  }

  // Builds the queue from given frames, padding with repeats of the first
  // frame when short and keeping the most recent K when long.
  static FrameQueue from_frames(const std::vector<LatentFrame>& frames, int k) {
    if (k < 1) throw ConfigError("FrameQueue: K must be >= 1");
    if (frames.empty()) throw ConfigError("FrameQueue: need at least one frame");
    FrameQueue q;
    int pad = k - int(frames.size());
    for (int i = 0; i < pad; ++i) q.slots_.push_back(frames.front());
    size_t start = pad >= 0 ? 0 : frames.size() - size_t(k);
    for (size_t i = start; i < frames.size(); ++i) q.slots_.push_back(frames[i]);
    return q;
  }

  int k() const { return int(slots_.size()); }
  const LatentFrame& slot(int i) const { return slots_.at(size_t(i)); }
  const std::deque<LatentFrame>& slots() const { return slots_; }

  // FIFO slide: dequeue the oldest latent, enqueue the new one.
  void slide(LatentFrame next) {
    slots_.pop_front();
    slots_.push_back(std::move(next));
  }

 private:
  std::deque<LatentFrame> slots_;
};

struct GenerationConfig {
  int T = 50;
  int K = 4;
  int M = 15;
  double guidance = 9.0;
  int ddim_steps = 0;   // 0 = full DDPM chain
  int resample_u = 1;   // U = 1 means no extra resampling
  uint64_t seed = 0;
  bool use_inversion = true;

  void validate() const {
    if (K < 1) throw ConfigError("GenerationConfig: K must be >= 1");
    if (M < 1) throw ConfigError("GenerationConfig: M must be >= 1");
    if (T < 1) throw ConfigError("GenerationConfig: T must be >= 1");
    if (resample_u < 1) throw ConfigError("GenerationConfig: resample iterations must be >= 1");
    if (ddim_steps != 0 && (ddim_steps < 2 || ddim_steps > T))
      throw ConfigError("GenerationConfig: ddim_steps must be 0 or in 2..T");
    if (guidance < 0.0) throw ConfigError("GenerationConfig: guidance must be >= 0");
  }
};

// One line per replacement event, consumed by the invariant tests.
struct TraceEvent {
  int step = 0;
  int resample = 0;
  uint64_t replaced_checksum = 0;
};
using TraceSink = std::function<void(const TraceEvent&)>;

struct RunStats {
  long denoise_calls = 0;      // guided denoise steps (one per Eq. 7c application)
  int peak_resident_latents = 0;
  void note_resident(int n) { peak_resident_latents = std::max(peak_resident_latents, n); }
};

namespace detail {

// One guided noise prediction. Conditioning collapses to the conditional
// branch when g == 1 or when the denoiser ignores labels.
inline LatentClip guided_eps(const Denoiser& den, const LatentClip& z, int t,
                             const ConditionLabel& y, double g, RunStats* stats) {
  if (stats) stats->denoise_calls++;
  if (g == 1.0 || !den.conditioning_active()) return den.predict(z, t, y);
  LatentClip uncond = den.predict(z, t, ConditionLabel::null());
  LatentClip cond = den.predict(z, t, y);
  return cfg_combine(uncond, cond, g);
}

inline LatentClip noise_clip(Rng& rng, int n, int h, int w, int c) {
  LatentClip clip(n, h, w, c);
  for (auto& f : clip.frames) rng.fill_normal(f);
  return clip;
}

}  // namespace detail

// Plain T2V sampling: full reverse chain (DDPM or DDIM) from unit Gaussian
// noise, returning a clean clip of K+1 frames.
inline LatentClip sample_t2v(const Denoiser& den, const NoiseSchedule& sched,
                             const ConditionLabel& y, const GenerationConfig& cfg, int h, int w,
                             int c, Rng& rng, RunStats* stats = nullptr) {
  cfg.validate();
  if (sched.T != cfg.T) throw ConfigError("sample_t2v: schedule T does not match config T");
  const int n = cfg.K + 1;
  LatentClip z = detail::noise_clip(rng, n, h, w, c);
  z.step = cfg.T;
  if (cfg.ddim_steps == 0) {
    for (int t = cfg.T; t >= 1; --t) {
      LatentClip eps = detail::guided_eps(den, z, t, y, cfg.guidance, stats);
      LatentClip noise = detail::noise_clip(rng, n, h, w, c);
      z = reverse_step(z, eps, t, noise, sched);
    }
  } else {
    std::vector<int> taus = ddim_timesteps(cfg.T, cfg.ddim_steps);
    for (int i = int(taus.size()) - 1; i >= 0; --i) {
      int tau = taus[size_t(i)];
      int tau_prev = (i == 0) ? 0 : taus[size_t(i) - 1];
      LatentClip eps = detail::guided_eps(den, z, tau, y, cfg.guidance, stats);
      z = ddim_step(z, eps, tau, tau_prev, sched);
    }
  }
  z.step = 0;
  return z;
}

// Replacing-based baseline: at every reverse step, overwrite each masked
// frame with a freshly forward-noised copy of its clean latent, then take
// one denoise step. The clean latents are written back at the end so masked
// outputs match their conditions exactly.
inline LatentClip sample_replacing(const Denoiser& den, const NoiseSchedule& sched,
                                   const std::map<int, LatentFrame>& conditioned,
                                   const ConditionLabel& y, const GenerationConfig& cfg, int h,
                                   int w, int c, Rng& rng, RunStats* stats = nullptr) {
  cfg.validate();
  if (sched.T != cfg.T) throw ConfigError("sample_replacing: schedule T does not match config T");
  const int n = cfg.K + 1;
  for (const auto& [idx, frame] : conditioned) {
    if (idx < 0 || idx >= n)
      throw RangeError("sample_replacing: mask index " + std::to_string(idx) + " outside 0.." +
                       std::to_string(n - 1));
    if (frame.h != h || frame.w != w || frame.c != c)
      throw ShapeError("sample_replacing: conditioned frame shape mismatch");
  }
  LatentClip z = detail::noise_clip(rng, n, h, w, c);
  z.step = cfg.T;
  auto overwrite = [&](int t) {
    for (const auto& [idx, frame] : conditioned) {
      Tensor eps = rng.normal_like(frame);
      z.frames[size_t(idx)] = forward_jump(frame, t, eps, sched);
    }
  };
  if (cfg.ddim_steps == 0) {
    for (int t = cfg.T; t >= 1; --t) {
      overwrite(t);
      LatentClip eps = detail::guided_eps(den, z, t, y, cfg.guidance, stats);
      LatentClip noise = detail::noise_clip(rng, n, h, w, c);
      z = reverse_step(z, eps, t, noise, sched);
    }
  } else {
    std::vector<int> taus = ddim_timesteps(cfg.T, cfg.ddim_steps);
    for (int i = int(taus.size()) - 1; i >= 0; --i) {
      int tau = taus[size_t(i)];
      int tau_prev = (i == 0) ? 0 : taus[size_t(i) - 1];
      overwrite(tau);
      LatentClip eps = detail::guided_eps(den, z, tau, y, cfg.guidance, stats);
      z = ddim_step(z, eps, tau, tau_prev, sched);
    }
  }
  for (const auto& [idx, frame] : conditioned) z.frames[size_t(idx)] = frame;
  z.step = 0;
  return z;
}

// One full sampling pass of the repeat-and-slide generator: returns the new
// clean latent for the frame after the queue. Follows the listing order:
// optional inversion init, one noisy queue draw per step, U replace/denoise
// iterations with re-noising between them.
inline LatentFrame generate_next_frame(const Denoiser& den, const NoiseSchedule& sched,
                                       const FrameQueue& queue, const ConditionLabel& y,
                                       const GenerationConfig& cfg, Rng& rng,
                                       RunStats* stats = nullptr,
                                       const TraceSink& trace = nullptr) {
  cfg.validate();
  if (queue.k() != cfg.K) throw ConfigError("generate_next_frame: queue size != K");
  if (sched.T != cfg.T) throw ConfigError("generate_next_frame: schedule T does not match config");
  const Tensor& proto = queue.slot(0);
  const int h = proto.h, w = proto.w, c = proto.c;
  const int n = cfg.K + 1;

  LatentClip z(n, h, w, c, cfg.T);
  if (cfg.use_inversion) {
    // s_T per slot, plus an independent draw around the last slot for the
    // new frame's initialization.
    for (int i = 0; i < cfg.K; ++i) {
      Tensor eps = rng.normal_like(proto);
      z.frames[size_t(i)] = forward_jump(queue.slot(i), cfg.T, eps, sched);
    }
    Tensor eps = rng.normal_like(proto);
    z.frames[size_t(cfg.K)] = forward_jump(queue.slot(cfg.K - 1), cfg.T, eps, sched);
  } else {
    z = detail::noise_clip(rng, n, h, w, c);
    z.step = cfg.T;
  }

  auto replace = [&](int t, int u, const std::vector<Tensor>& s_t) {
    uint64_t sum = 0xcbf29ce484222325ULL;
    for (int i = 0; i < cfg.K; ++i) {
      z.frames[size_t(i)] = s_t[size_t(i)];
      uint64_t cs = checksum(s_t[size_t(i)]);
      sum = fnv1a(&cs, sizeof(cs), sum);
    }
    if (trace) trace(TraceEvent{t, u, sum});
  };
  auto draw_s = [&](int t) {
    std::vector<Tensor> s_t(size_t(cfg.K));
    for (int i = 0; i < cfg.K; ++i) {
      Tensor eps = rng.normal_like(proto);
      s_t[size_t(i)] = forward_jump(queue.slot(i), t, eps, sched);
    }
    return s_t;
  };

  if (cfg.ddim_steps == 0) {
    for (int t = cfg.T - 1; t >= 1; --t) {
      std::vector<Tensor> s_t = draw_s(t);  // drawn once, reused across resample iterations
      for (int u = 1; u <= cfg.resample_u; ++u) {
        replace(t, u, s_t);
        LatentClip eps = detail::guided_eps(den, z, t, y, cfg.guidance, stats);
        LatentClip noise = detail::noise_clip(rng, n, h, w, c);
        z = reverse_step(z, eps, t, noise, sched);
        if (u < cfg.resample_u && t > 1) {
          LatentClip renoise = detail::noise_clip(rng, n, h, w, c);
          z = forward_step(z, t, renoise, sched);
        }
      }
    }
  } else {
    std::vector<int> taus = ddim_timesteps(cfg.T, cfg.ddim_steps);
    for (int i = int(taus.size()) - 1; i >= 0; --i) {
      int tau = taus[size_t(i)];
      int tau_prev = (i == 0) ? 0 : taus[size_t(i) - 1];
      std::vector<Tensor> s_t = draw_s(tau);
      for (int u = 1; u <= cfg.resample_u; ++u) {
        replace(tau, u, s_t);
        LatentClip eps = detail::guided_eps(den, z, tau, y, cfg.guidance, stats);
        z = ddim_step(z, eps, tau, tau_prev, sched);
        if (u < cfg.resample_u && tau_prev > 0) {
          // re-noise between consecutive DDIM levels: effective variance
          // 1 - abar_tau/abar_prev
          double ratio = sched.alpha_bar(tau) / sched.alpha_bar(tau_prev);
          double a = std::sqrt(ratio), b = std::sqrt(1.0 - ratio);
          for (auto& f : z.frames) {
            Tensor eps2 = rng.normal_like(f);
            for (size_t j = 0; j < f.v.size(); ++j) f.v[j] = a * f.v[j] + b * eps2.v[j];
          }
          z.step = tau;
        }
      }
    }
  }
  return z.frames[size_t(cfg.K)];
}

// Full TI2V generation per the repeat-and-slide algorithm: frame 0 is the
// input image passed through untouched, frames 1..M are synthesized one
// sampling pass at a time with FIFO sliding.
inline PixelVideo ti2v_generate(const Denoiser& den, const NoiseSchedule& sched, int codec_factor,
                                const PixelFrame& x0, const ConditionLabel& y,
                                const GenerationConfig& cfg, Rng& rng, RunStats* stats = nullptr,
                                const TraceSink& trace = nullptr) {
  cfg.validate();
  LatentFrame z0 = encode(x0, codec_factor);
  FrameQueue queue = FrameQueue::repeat(z0, cfg.K);
  PixelVideo out;
  out.frames.reserve(size_t(cfg.M) + 1);
  out.frames.push_back(x0);
  for (int i = 1; i <= cfg.M; ++i) {
    LatentFrame next = generate_next_frame(den, sched, queue, y, cfg, rng, stats, trace);
    if (stats) stats->note_resident(queue.k() + 1);  // queue slots + pending latent
    out.frames.push_back(decode(next, codec_factor));
    queue.slide(std::move(next));
    if (stats) stats->note_resident(queue.k());
  }
  return out;
}

// Infilling: queue built from the given frames, then alternate one
// synthesized frame with the next given frame; given frames (not synthesized
// ones) are slid into the queue.
inline PixelVideo infill_generate(const Denoiser& den, const NoiseSchedule& sched,
                                  int codec_factor, const std::vector<PixelFrame>& given,
                                  const ConditionLabel& y, const GenerationConfig& cfg, Rng& rng,
                                  RunStats* stats = nullptr) {
  cfg.validate();
  if (given.empty()) throw ConfigError("infill_generate: need at least one given frame");
  std::vector<LatentFrame> latents;
  latents.reserve(given.size());
  for (const auto& f : given) latents.push_back(encode(f, codec_factor));
  // Queue always holds the most recent given frames, padded by repeating the
  // first; synthesized frames are emitted but never enter the queue.
  FrameQueue queue = FrameQueue::repeat(latents.front(), cfg.K);
  PixelVideo out;
  out.frames.push_back(given.front());
  size_t next_given = 1;
  while (next_given < given.size()) {
    LatentFrame synth = generate_next_frame(den, sched, queue, y, cfg, rng, stats);
    out.frames.push_back(decode(synth, codec_factor));
    queue.slide(latents[next_given]);
    out.frames.push_back(given[next_given]);
    ++next_given;
  }
  return out;
}

// Prediction: queue seeded with the n-frame prefix (padded by repeating the
// first frame), remaining M+1-n frames generated autoregressively.
inline PixelVideo predict_generate(const Denoiser& den, const NoiseSchedule& sched,
                                   int codec_factor, const std::vector<PixelFrame>& prefix,
                                   const ConditionLabel& y, const GenerationConfig& cfg, Rng& rng,
                                   RunStats* stats = nullptr) {
  cfg.validate();
  if (prefix.empty()) throw ConfigError("predict_generate: need at least one prefix frame");
  if (int(prefix.size()) > cfg.M + 1)
    throw ConfigError("predict_generate: prefix longer than output video (n > M+1)");
  std::vector<LatentFrame> latents;
  latents.reserve(prefix.size());
  for (const auto& f : prefix) latents.push_back(encode(f, codec_factor));
  FrameQueue queue = FrameQueue::from_frames(latents, cfg.K);
  PixelVideo out;
  out.frames = prefix;
  for (int i = int(prefix.size()); i <= cfg.M; ++i) {
    LatentFrame next = generate_next_frame(den, sched, queue, y, cfg, rng, stats);
    if (stats) stats->note_resident(queue.k() + 1);
    out.frames.push_back(decode(next, codec_factor));
    queue.slide(std::move(next));
  }
  return out;
}

}  // namespace frameslide
