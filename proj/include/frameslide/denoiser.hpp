#pragma once

#include <Eigen/Dense>
#include <optional>

#include "frameslide/core.hpp"
#include "frameslide/schedule.hpp"

namespace frameslide {

// Condition passed to a noise predictor: a discrete class id or the null
// label used for classifier-free guidance.
struct ConditionLabel {
  std::optional<int> id;

  static ConditionLabel null() { return ConditionLabel{}; }
  static ConditionLabel cls(int c) {
    if (c < 0) throw ConfigError("class label must be >= 0");
    return ConditionLabel{c};
  }
  bool is_null() const { return !id.has_value(); }
  bool operator==(const ConditionLabel&) const = default;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  // Predicted noise for a clip noised to step t, same shape as the input.
  virtual LatentClip predict(const LatentClip& z_t, int t, const ConditionLabel& y) const = 0;
  // False when the label has no effect (guidance then degenerates to g = 1).
  virtual bool conditioning_active() const { return true; }
  virtual std::string id() const = 0;
};

// Stationary AR(1) Gaussian world over the frame axis: each latent dimension
// follows an independent chain with lag-1 correlation rho, mean mu and
// variance sigma2. Covariance between frames i and j is sigma2 rho^|i-j|.
struct GaussianWorldSpec {
  int frame_dim = 4;
  double rho = 0.0;
  double sigma2 = 1.0;
  double mu = 0.0;

  void validate() const {
    if (frame_dim < 1) throw ConfigError("GaussianWorldSpec: frame_dim must be >= 1");
    if (!(std::abs(rho) < 1.0)) throw ConfigError("GaussianWorldSpec: |rho| must be < 1");
    if (!(sigma2 > 0.0)) throw ConfigError("GaussianWorldSpec: sigma2 must be > 0");
  }

  // Joint covariance over a clip of n frames (per latent dimension).
  Eigen::MatrixXd clip_covariance(int n) const {
    Eigen::MatrixXd S(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) S(i, j) = sigma2 * std::pow(rho, std::abs(i - j));
    return S;
  }
};

// Bayes-optimal noise predictor for the Gaussian world, in closed form.
// Works for any clip geometry: dimensions are independent, the AR(1)
// structure couples only the frame axis.
class AnalyticDenoiser final : public Denoiser {
 public:
  AnalyticDenoiser(GaussianWorldSpec world, NoiseSchedule sched)
      : world_(world), sched_(std::move(sched)) {
    world_.validate();
  }

  LatentClip predict(const LatentClip& z_t, int t, const ConditionLabel& /*y*/) const override {
    sched_.check_step(t);
    z_t.require_uniform();
    const int n = z_t.length();
    if (n < 1) throw ShapeError("analytic_denoise: empty clip");
    const double a = sched_.alpha_bar(t);
    const double sqrt_a = std::sqrt(a);
    const double sqrt_om = std::sqrt(1.0 - a);

    Eigen::MatrixXd S = world_.clip_covariance(n);
    Eigen::MatrixXd M = a * S + (1.0 - a) * Eigen::MatrixXd::Identity(n, n);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
      double cond = svd.singularValues()(0) / svd.singularValues()(n - 1);
      throw NumericError("analytic_denoise: singular posterior system, cond=" +
                         std::to_string(cond));
    }

    const size_t d = z_t.frames.front().size();
    // Solve for all latent dimensions at once: columns of X are frame-axis
    // vectors, one per dimension.
    Eigen::MatrixXd X(n, d);
    for (int f = 0; f < n; ++f)
      for (size_t i = 0; i < d; ++i) X(f, int(i)) = z_t.frames[f].v[i] - sqrt_a * world_.mu;
    Eigen::MatrixXd mpost = sqrt_a * (S * llt.solve(X));  // m_post - mu
    LatentClip eps;
    eps.step = t;
    eps.frames.assign(n, Tensor(z_t.frames.front().h, z_t.frames.front().w, z_t.frames.front().c));
    for (int f = 0; f < n; ++f)
      for (size_t i = 0; i < d; ++i) {
        double m = world_.mu + mpost(f, int(i));
        eps.frames[f].v[i] = (z_t.frames[f].v[i] - sqrt_a * m) / sqrt_om;
      }
    return eps;
  }

  bool conditioning_active() const override { return false; }
  std::string id() const override { return "analytic"; }

  const GaussianWorldSpec& world() const { return world_; }

 private:
  GaussianWorldSpec world_;
  NoiseSchedule sched_;
};

inline LatentClip analytic_denoise(const LatentClip& z_t, int t, const GaussianWorldSpec& world,
                                   const NoiseSchedule& sched) {
  return AnalyticDenoiser(world, sched).predict(z_t, t, ConditionLabel::null());
}

}  // namespace frameslide
