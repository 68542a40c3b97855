#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>

#include "doctest.h"
#include "frameslide/denoiser.hpp"
#include "frameslide/schedule.hpp"
#include "frameslide/toyworld.hpp"

using namespace frameslide;

TEST_CASE("world spec validation") {
  CHECK_THROWS_AS((GaussianWorldSpec{0, 0.5, 1.0, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((GaussianWorldSpec{4, 1.0, 1.0, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((GaussianWorldSpec{4, 0.5, 0.0, 0.0}.validate()), ConfigError);
  GaussianWorldSpec ok{4, -0.5, 1.0, 0.0};
  ok.validate();
  Eigen::MatrixXd S = ok.clip_covariance(3);
  CHECK(S(0, 0) == 1.0);
  CHECK(S(0, 1) == doctest::Approx(-0.5));
  CHECK(S(0, 2) == doctest::Approx(0.25));
}

TEST_CASE("rho = 0, sigma2 = 1: eps_hat = sqrt(1-abar) z closed form") {
  NoiseSchedule sched = make_linear_schedule(20, 0.01, 0.2);
  GaussianWorldSpec world{3, 0.0, 1.0, 0.0};
  Rng rng(1);
  LatentClip z(4, 1, 1, 3, 10);
  for (auto& f : z.frames) rng.fill_normal(f);
  LatentClip eps = analytic_denoise(z, 10, world, sched);
  double want = std::sqrt(1.0 - sched.alpha_bar(10));
  for (int f = 0; f < 4; ++f)
    for (size_t i = 0; i < 3; ++i)
      CHECK(eps.frames[size_t(f)].v[i] == doctest::Approx(want * z.frames[size_t(f)].v[i]).epsilon(1e-12));
}

TEST_CASE("affinity in z_t: superposition up to the mean offset") {
  NoiseSchedule sched = make_linear_schedule(20, 0.01, 0.2);
  GaussianWorldSpec world{2, 0.8, 1.5, 0.3};
  AnalyticDenoiser den(world, sched);
  Rng rng(2);
  LatentClip a(3, 1, 1, 2, 7), b(3, 1, 1, 2, 7), zero(3, 1, 1, 2, 7);
  for (auto& f : a.frames) rng.fill_normal(f);
  for (auto& f : b.frames) rng.fill_normal(f);
  auto mid = [&](const LatentClip& x, const LatentClip& y) {
    LatentClip out = x;
    for (size_t f = 0; f < out.frames.size(); ++f)
      for (size_t i = 0; i < out.frames[f].v.size(); ++i)
        out.frames[f].v[i] = 0.5 * (x.frames[f].v[i] + y.frames[f].v[i]);
    return out;
  };
  LatentClip ea = den.predict(a, 7, ConditionLabel::null());
  LatentClip eb = den.predict(b, 7, ConditionLabel::null());
  LatentClip em = den.predict(mid(a, b), 7, ConditionLabel::null());
  // affine map: f((a+b)/2) = (f(a)+f(b))/2
  for (size_t f = 0; f < em.frames.size(); ++f)
    for (size_t i = 0; i < em.frames[f].v.size(); ++i)
      CHECK(em.frames[f].v[i] ==
            doctest::Approx(0.5 * (ea.frames[f].v[i] + eb.frames[f].v[i])).epsilon(1e-10));
}

TEST_CASE("rho = 0 factorizes across frames") {
  NoiseSchedule sched = make_linear_schedule(20, 0.01, 0.2);
  GaussianWorldSpec world{2, 0.0, 0.7, -0.2};
  AnalyticDenoiser den(world, sched);
  Rng rng(3);
  LatentClip clip(4, 1, 1, 2, 9);
  for (auto& f : clip.frames) rng.fill_normal(f);
  LatentClip joint = den.predict(clip, 9, ConditionLabel::null());
  for (int f = 0; f < 4; ++f) {
    LatentClip single(1, 1, 1, 2, 9);
    single.frames[0] = clip.frames[size_t(f)];
    LatentClip eps = den.predict(single, 9, ConditionLabel::null());
    for (size_t i = 0; i < 2; ++i)
      CHECK(joint.frames[size_t(f)].v[i] == doctest::Approx(eps.frames[0].v[i]).epsilon(1e-12));
  }
}

TEST_CASE("rho = 0.9 posterior mean matches brute-force matrix inversion") {
  NoiseSchedule sched = make_linear_schedule(50, 1e-4, 0.02);
  GaussianWorldSpec world{1, 0.9, 1.2, 0.4};
  AnalyticDenoiser den(world, sched);
  const int n = 4, t = 25;
  Rng rng(4);
  LatentClip z(n, 1, 1, 1, t);
  for (auto& f : z.frames) rng.fill_normal(f);
  LatentClip eps = den.predict(z, t, ConditionLabel::null());

  // independent oracle: explicit inverse of (abar S + (1-abar) I)
  double a = sched.alpha_bar(t), sa = std::sqrt(a);
  Eigen::MatrixXd S = world.clip_covariance(n);
  Eigen::MatrixXd Minv = (a * S + (1.0 - a) * Eigen::MatrixXd::Identity(n, n)).inverse();
  Eigen::VectorXd zt(n);
  for (int f = 0; f < n; ++f) zt(f) = z.frames[size_t(f)].v[0];
  Eigen::VectorXd mpost = Eigen::VectorXd::Constant(n, world.mu) +
                          sa * S * Minv * (zt - sa * Eigen::VectorXd::Constant(n, world.mu));
  for (int f = 0; f < n; ++f) {
    // recover m_post from the returned epsilon and compare
    double got = (zt(f) - std::sqrt(1.0 - a) * eps.frames[size_t(f)].v[0]) / sa;
    CHECK(got == doctest::Approx(mpost(f)).epsilon(1e-10));
  }
}

TEST_CASE("small t: eps_hat finite and unbiased for the injected noise") {
  NoiseSchedule sched = make_linear_schedule(50, 1e-4, 0.02);
  GaussianWorldSpec world{1, 0.9, 1.0, 0.0};
  AnalyticDenoiser den(world, sched);
  const int N = 20000, t = 1;  // abar close to 1, the delicate regime
  Rng rng(5);
  double sum_err = 0, sumsq = 0;
  for (int i = 0; i < N; ++i) {
    LatentClip clean = sample_ar1_clip(world, 3, rng);
    LatentClip noise = rng.normal_like(clean);
    LatentClip z_t = forward_jump(clean, t, noise, sched);
    LatentClip eps = den.predict(z_t, t, ConditionLabel::null());
    for (int f = 0; f < 3; ++f) {
      double e = eps.frames[size_t(f)].v[0];
      CHECK(std::isfinite(e));
      double err = e - noise.frames[size_t(f)].v[0];
      sum_err += err;
      sumsq += err * err;
    }
  }
  double mean_err = sum_err / (3.0 * N);
  double sd = std::sqrt(std::max(sumsq / (3.0 * N) - mean_err * mean_err, 1e-12));
  CHECK(std::abs(mean_err) < 3 * sd / std::sqrt(3.0 * N) + 1e-3);
}

TEST_CASE("reverse chain recovers correlated prior moments with a steep schedule") {
  // beta_end large enough that alpha_bar(T) is nearly 0, so starting from
  // N(0, I) is consistent with the chain's own T-step marginal.
  NoiseSchedule sched = make_linear_schedule(50, 1e-4, 0.15);
  GaussianWorldSpec world{1, 0.5, 1.0, 0.0};
  AnalyticDenoiser den(world, sched);
  const int N = 10000, n = 2;
  Rng rng(6);
  double sum0 = 0, sumsq0 = 0, cross = 0;
  for (int i = 0; i < N; ++i) {
    LatentClip z(n, 1, 1, 1, sched.T);
    for (auto& f : z.frames) rng.fill_normal(f);
    for (int t = sched.T; t >= 1; --t) {
      LatentClip eps = den.predict(z, t, ConditionLabel::null());
      LatentClip noise(n, 1, 1, 1);
      for (auto& f : noise.frames) rng.fill_normal(f);
      z = reverse_step(z, eps, t, noise, sched);
    }
    double v0 = z.frames[0].v[0], v1 = z.frames[1].v[0];
    sum0 += v0;
    sumsq0 += v0 * v0;
    cross += v0 * v1;
  }
  double mean = sum0 / N;
  double var = sumsq0 / N - mean * mean;
  double cov = cross / N - mean * mean;
  CHECK(std::abs(mean) < 3 * std::sqrt(1.0 / N));
  // allow the small residual discretization bias on top of Monte-Carlo error
  CHECK(std::abs(var - 1.0) < 3 * std::sqrt(2.0 / N) + 0.025);
  CHECK(std::abs(cov - world.rho) < 3 * std::sqrt(2.0 / N) + 0.025);
}

TEST_CASE("step range is validated") {
  NoiseSchedule sched = make_linear_schedule(10, 0.01, 0.1);
  GaussianWorldSpec world{1, 0.0, 1.0, 0.0};
  AnalyticDenoiser den(world, sched);
  LatentClip z(2, 1, 1, 1, 11);
  CHECK_THROWS_AS(den.predict(z, 11, ConditionLabel::null()), RangeError);
  CHECK_THROWS_AS(den.predict(z, 0, ConditionLabel::null()), RangeError);
}

TEST_CASE("condition labels") {
  CHECK(ConditionLabel::null().is_null());
  CHECK(!ConditionLabel::cls(2).is_null());
  CHECK(ConditionLabel::cls(2) == ConditionLabel::cls(2));
  CHECK(!(ConditionLabel::cls(2) == ConditionLabel::null()));
  CHECK_THROWS_AS(ConditionLabel::cls(-1), ConfigError);
  NoiseSchedule sched = make_linear_schedule(10, 0.01, 0.1);
  AnalyticDenoiser den(GaussianWorldSpec{1, 0.0, 1.0, 0.0}, sched);
  CHECK(!den.conditioning_active());
  CHECK(den.id() == "analytic");
}
