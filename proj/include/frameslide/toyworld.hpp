#pragma once

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <fstream>

#include "frameslide/codec.hpp"
#include "frameslide/core.hpp"
#include "frameslide/denoiser.hpp"
#include "json.hpp"

namespace frameslide {

// Discrete motion classes for the moving-shapes corpus.
struct MotionClass {
  int id = 0;

  static constexpr int kCount = 4;
  static const std::array<const char*, kCount>& names() {
    static const std::array<const char*, kCount> n = {"right", "left", "up", "down"};
    return n;
  }
  static MotionClass from_id(int id) {
    if (id < 0 || id >= kCount) throw ConfigError("motion class id must be in 0..3");
    return MotionClass{id};
  }
  const char* name() const { return names()[size_t(id)]; }
  // Unit velocity direction (dx, dy) in pixel coordinates.
  std::pair<int, int> direction() const {
    switch (id) {
      case 0: return {1, 0};
      case 1: return {-1, 0};
      case 2: return {0, -1};
      default: return {0, 1};
    }
  }
};

// Stationary AR(1) clip: z^0 ~ N(mu, sigma2 I), then
// z^k = mu + rho (z^{k-1} - mu) + sqrt(1-rho^2) sigma eps_k.
inline LatentClip sample_ar1_clip(const GaussianWorldSpec& world, int length, Rng& rng) {
  world.validate();
  if (length < 1) throw ConfigError("sample_ar1_clip: length must be >= 1");
  const double sigma = std::sqrt(world.sigma2);
  const double innov = std::sqrt(1.0 - world.rho * world.rho) * sigma;
  LatentClip clip;
  clip.step = 0;
  clip.frames.reserve(size_t(length));
  Tensor frame(1, 1, world.frame_dim);
  for (int i = 0; i < world.frame_dim; ++i) frame.v[size_t(i)] = world.mu + sigma * rng.normal();
  clip.frames.push_back(frame);
  for (int k = 1; k < length; ++k) {
    Tensor next(1, 1, world.frame_dim);
    for (int i = 0; i < world.frame_dim; ++i)
      next.v[size_t(i)] =
          world.mu + world.rho * (frame.v[size_t(i)] - world.mu) + innov * rng.normal();
    clip.frames.push_back(next);
    frame = next;
  }
  return clip;
}

struct Ar1Conditional {
  Tensor mean;      // conditional mean of the next frame
  double variance;  // isotropic conditional variance per dimension
};

// Markov-path conditional of the next frame given observed frames: only the
// last observation matters under AR(1).
inline Ar1Conditional ar1_conditional(const GaussianWorldSpec& world,
                                      const std::vector<Tensor>& observed) {
  world.validate();
  if (observed.empty()) throw ConfigError("ar1_conditional: need at least one observed frame");
  const Tensor& last = observed.back();
  Ar1Conditional out;
  out.mean = Tensor(last.h, last.w, last.c);
  for (size_t i = 0; i < last.v.size(); ++i)
    out.mean.v[i] = world.mu + world.rho * (last.v[i] - world.mu);
  out.variance = (1.0 - world.rho * world.rho) * world.sigma2;
  return out;
}

// General joint-Gaussian conditional of frame m given frames 0..m-1, via a
// dense solve against the full clip covariance. Cross-checks the Markov path
// and answers non-Markov queries such as repeated observations.
inline Ar1Conditional ar1_conditional_dense(const GaussianWorldSpec& world,
                                            const std::vector<Tensor>& observed) {
  world.validate();
  if (observed.empty()) throw ConfigError("ar1_conditional_dense: need observed frames");
  const int m = int(observed.size());
  Eigen::MatrixXd S = world.clip_covariance(m + 1);
  Eigen::MatrixXd Soo = S.topLeftCorner(m, m);
  Eigen::VectorXd sno = S.row(m).head(m);
  Eigen::LLT<Eigen::MatrixXd> llt(Soo);
  if (llt.info() != Eigen::Success) throw NumericError("ar1_conditional_dense: singular covariance");
  Eigen::VectorXd wgt = llt.solve(sno);

  const Tensor& f0 = observed.front();
  Ar1Conditional out;
  out.mean = Tensor(f0.h, f0.w, f0.c);
  for (size_t i = 0; i < f0.v.size(); ++i) {
    double acc = world.mu;
    for (int k = 0; k < m; ++k) acc += wgt(k) * (observed[size_t(k)].v[i] - world.mu);
    out.mean.v[i] = acc;
  }
  out.variance = world.sigma2 - sno.dot(wgt);
  return out;
}

// Filled square bouncing off the walls, one motion class per clip.
inline PixelVideo gen_shape_video(MotionClass cls, uint64_t seed, int frames, int size) {
  if (size < 16) throw ConfigError("gen_shape_video: size must be >= 16");
  if (frames < 2) throw ConfigError("gen_shape_video: frames must be >= 2");
  Rng rng(seed);
  const int side = size / 4;
  const int speed = std::max(1, size / 16);
  auto [dx, dy] = cls.direction();
  int vx = dx * speed, vy = dy * speed;
  // start position of the square's top-left corner
  int px = int(rng.below(uint64_t(size - side)));
  int py = int(rng.below(uint64_t(size - side)));
  const double bg = 0.05;
  const double fg = 0.9;

  PixelVideo video;
  video.frames.reserve(size_t(frames));
  for (int f = 0; f < frames; ++f) {
    PixelFrame frame(size, size, 3);
    for (double& v : frame.v) v = bg;
    for (int y = py; y < py + side; ++y)
      for (int x = px; x < px + side; ++x)
        for (int ch = 0; ch < 3; ++ch) frame.at(y, x, ch) = fg;
    video.frames.push_back(std::move(frame));
    px += vx;
    py += vy;
    if (px < 0) { px = -px; vx = -vx; }
    if (py < 0) { py = -py; vy = -vy; }
    if (px > size - side) { px = 2 * (size - side) - px; vx = -vx; }
    if (py > size - side) { py = 2 * (size - side) - py; vy = -vy; }
  }
  return video;
}

// Intensity centroid of a frame, in pixel coordinates.
inline std::pair<double, double> frame_centroid(const PixelFrame& f) {
  double sx = 0, sy = 0, sw = 0;
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x) {
      double inten = (f.at(y, x, 0) + f.at(y, x, 1) + f.at(y, x, 2)) / 3.0;
      sx += inten * x;
      sy += inten * y;
      sw += inten;
    }
  if (sw <= 0.0) return {f.w / 2.0, f.h / 2.0};
  return {sx / sw, sy / sw};
}

// --- corpus on disk: one directory per clip, JSONL manifest ----------------

struct CorpusEntry {
  std::string path;  // clip directory, relative to the corpus root
  int label = 0;
  uint64_t seed = 0;
  std::string subject;  // grouping key for sFVD-style evaluation
};

inline void write_video_dir(const PixelVideo& video, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (int i = 0; i < video.length(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%04d.ppm", i);
    write_ppm(video.frames[size_t(i)], (dir / name).string());
  }
}

inline PixelVideo read_video_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".ppm") files.push_back(e.path());
  if (files.empty()) throw IoError("no PPM frames in " + dir.string());
  std::sort(files.begin(), files.end());
  PixelVideo video;
  for (const auto& f : files) video.frames.push_back(read_ppm(f.string()));
  return video;
}

inline void write_corpus_manifest(const std::vector<CorpusEntry>& entries,
                                  const std::filesystem::path& root) {
  std::ofstream os(root / "manifest.jsonl");
  if (!os) throw IoError("cannot write manifest in " + root.string());
  for (const auto& e : entries) {
    nlohmann::json j{{"clip", e.path}, {"label", e.label}, {"seed", e.seed}};
    if (!e.subject.empty()) j["subject"] = e.subject;
    os << j.dump() << "\n";
  }
}

inline std::vector<CorpusEntry> read_corpus_manifest(const std::filesystem::path& root) {
  std::ifstream is(root / "manifest.jsonl");
  if (!is) throw IoError("cannot read manifest in " + root.string());
  std::vector<CorpusEntry> entries;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    CorpusEntry e;
    e.path = j.at("clip").get<std::string>();
    e.label = j.value("label", 0);
    e.seed = j.value("seed", uint64_t(0));
    e.subject = j.value("subject", std::string());
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace frameslide
