#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <map>

#include "frameslide/core.hpp"
#include "frameslide/toyworld.hpp"

namespace frameslide {

// Gaussian fit of a feature distribution.
struct FeatureMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int count = 0;
};

inline constexpr int kFeatureDim = 15;

// Fixed hand-crafted video descriptor standing in for I3D features.
// Components: per-channel mean (3), per-channel variance (3), inter-frame
// difference energy mean/std (2), centroid position mean (2), signed
// centroid velocity mean (2), velocity std (2), mean speed (1).
// NOTE: absolute distances computed from these features are not comparable
// to I3D-based FVD numbers; only orderings carry over.
inline Eigen::VectorXd extract_features(const PixelVideo& video) {
  if (video.frames.empty()) throw ConfigError("extract_features: empty video");
  const int F = video.length();
  Eigen::VectorXd feat = Eigen::VectorXd::Zero(kFeatureDim);

  // channel statistics over all frames
  double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
  size_t per_channel = 0;
  for (const auto& f : video.frames) {
    per_channel += size_t(f.h) * f.w;
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          double v = f.at(y, x, ch);
          sum[ch] += v;
          sumsq[ch] += v * v;
        }
  }
  for (int ch = 0; ch < 3; ++ch) {
    double m = sum[ch] / double(per_channel);
    feat(ch) = m;
    feat(3 + ch) = sumsq[ch] / double(per_channel) - m * m;
  }

  // inter-frame difference energy
  if (F >= 2) {
    std::vector<double> energies;
    energies.reserve(size_t(F) - 1);
    for (int i = 1; i < F; ++i) {
      const Tensor& a = video.frames[size_t(i - 1)];
      const Tensor& b = video.frames[size_t(i)];
      a.require_same_shape(b);
      double e = 0;
      for (size_t j = 0; j < a.v.size(); ++j) {
        double d = a.v[j] - b.v[j];
        e += d * d;
      }
      energies.push_back(e / double(a.v.size()));
    }
    double me = 0;
    for (double e : energies) me += e;
    me /= double(energies.size());
    double ve = 0;
    for (double e : energies) ve += (e - me) * (e - me);
    feat(6) = me;
    feat(7) = std::sqrt(ve / double(energies.size()));
  }

  // centroid trajectory, normalized by frame size
  std::vector<double> cx(static_cast<size_t>(F)), cy(static_cast<size_t>(F));
  for (int i = 0; i < F; ++i) {
    auto [x, y] = frame_centroid(video.frames[size_t(i)]);
    cx[size_t(i)] = x / double(video.frames[size_t(i)].w);
    cy[size_t(i)] = y / double(video.frames[size_t(i)].h);
  }
  double mx = 0, my = 0;
  for (int i = 0; i < F; ++i) {
    mx += cx[size_t(i)];
    my += cy[size_t(i)];
  }
  feat(8) = mx / F;
  feat(9) = my / F;
  if (F >= 2) {
    double vx = 0, vy = 0, vvx = 0, vvy = 0, speed = 0;
    const int n = F - 1;
    for (int i = 1; i < F; ++i) {
      double dx = cx[size_t(i)] - cx[size_t(i - 1)];
      double dy = cy[size_t(i)] - cy[size_t(i - 1)];
      vx += dx;
      vy += dy;
      speed += std::sqrt(dx * dx + dy * dy);
    }
    vx /= n;
    vy /= n;
    for (int i = 1; i < F; ++i) {
      double dx = cx[size_t(i)] - cx[size_t(i - 1)];
      double dy = cy[size_t(i)] - cy[size_t(i - 1)];
      vvx += (dx - vx) * (dx - vx);
      vvy += (dy - vy) * (dy - vy);
    }
    feat(10) = vx;
    feat(11) = vy;
    feat(12) = std::sqrt(vvx / n);
    feat(13) = std::sqrt(vvy / n);
    feat(14) = speed / n;
  }
  return feat;
}

// Gaussian fit with the unbiased (n-1) covariance divisor.
inline FeatureMoments fit_moments(const std::vector<Eigen::VectorXd>& features) {
  if (features.size() < 2) throw ConfigError("fit_moments: need at least 2 feature vectors");
  const int d = int(features.front().size());
  FeatureMoments m;
  m.count = int(features.size());
  m.mean = Eigen::VectorXd::Zero(d);
  for (const auto& f : features) m.mean += f;
  m.mean /= double(m.count);
  m.cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : features) {
    Eigen::VectorXd c = f - m.mean;
    m.cov += c * c.transpose();
  }
  m.cov /= double(m.count - 1);
  return m;
}

namespace detail {
// PSD square root via symmetric eigendecomposition, negative eigenvalues
// clipped at zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}
}  // namespace detail

// Frechet distance between two Gaussian fits, using the symmetrized
// square-root form ||mu_a-mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
inline double frechet_distance(const FeatureMoments& a, const FeatureMoments& b) {
  if (a.mean.size() != b.mean.size())
    throw ShapeError("frechet_distance: feature dimension mismatch");
  Eigen::MatrixXd sa_half = detail::psd_sqrt(a.cov);
  Eigen::MatrixXd cross = detail::psd_sqrt(sa_half * b.cov * sa_half);
  double mean_term = (a.mean - b.mean).squaredNorm();
  double trace_term = a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  return mean_term + trace_term;
}

struct GroupedFvdResult {
  std::vector<std::pair<std::string, double>> rows;  // group name -> distance
  double mean = 0.0;
  double stddev = 0.0;  // population std across groups
};

inline GroupedFvdResult grouped_fvd(
    const std::map<std::string, std::pair<std::vector<PixelVideo>, std::vector<PixelVideo>>>&
        groups) {
  if (groups.empty()) throw ConfigError("grouped_fvd: no groups");
  GroupedFvdResult res;
  for (const auto& [name, sides] : groups) {
    const auto& [real, fake] = sides;
    if (real.size() < 2 || fake.size() < 2)
      throw ConfigError("grouped_fvd: group '" + name + "' needs >= 2 videos per side");
    std::vector<Eigen::VectorXd> fr, ff;
    fr.reserve(real.size());
    ff.reserve(fake.size());
    for (const auto& v : real) fr.push_back(extract_features(v));
    for (const auto& v : fake) ff.push_back(extract_features(v));
    res.rows.emplace_back(name, frechet_distance(fit_moments(fr), fit_moments(ff)));
  }
  for (const auto& [name, d] : res.rows) res.mean += d;
  res.mean /= double(res.rows.size());
  for (const auto& [name, d] : res.rows) res.stddev += (d - res.mean) * (d - res.mean);
  res.stddev = std::sqrt(res.stddev / double(res.rows.size()));
  return res;
}

// Mean over consecutive frame pairs of the per-pixel squared difference.
inline double temporal_roughness(const PixelVideo& video) {
  if (video.length() < 2) throw ConfigError("temporal_roughness: need at least 2 frames");
  double acc = 0;
  for (int i = 1; i < video.length(); ++i) {
    const Tensor& a = video.frames[size_t(i - 1)];
    const Tensor& b = video.frames[size_t(i)];
    a.require_same_shape(b);
    double e = 0;
    for (size_t j = 0; j < a.v.size(); ++j) {
      double d = a.v[j] - b.v[j];
      e += d * d;
    }
    acc += e / double(a.v.size());
  }
  return acc / double(video.length() - 1);
}

inline void write_fvd_csv(const GroupedFvdResult& res, std::ostream& os) {
  os << "group,distance\n";
  os.precision(12);
  for (const auto& [name, d] : res.rows) os << name << "," << d << "\n";
  os << "summary_mean," << res.mean << "\n";
  os << "summary_std," << res.stddev << "\n";
}

inline void write_fvd_csv(const GroupedFvdResult& res, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_fvd_csv(res, os);
}

}  // namespace frameslide
