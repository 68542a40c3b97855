#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace frameslide {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct RangeError : std::out_of_range {
  explicit RangeError(const std::string& msg) : std::out_of_range(msg) {}
};
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense H x W x C tensor, row-major, channel fastest.
struct Tensor {
  int h = 0, w = 0, c = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int h_, int w_, int c_) : h(h_), w(w_), c(c_), v(size_t(h_) * w_ * c_, 0.0) {}

  static Tensor zeros(int h, int w, int c) { return Tensor(h, w, c); }

  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }

  double& at(int y, int x, int ch) { return v[(size_t(y) * w + x) * c + ch]; }
  double at(int y, int x, int ch) const { return v[(size_t(y) * w + x) * c + ch]; }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o);
    for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o);
    for (size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& x : v) x *= s;
    return *this;
  }
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  void require_same_shape(const Tensor& o) const {
    if (!same_shape(o))
      throw ShapeError("tensor shape mismatch: " + shape_str() + " vs " + o.shape_str());
  }
  std::string shape_str() const {
    return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
  }
  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

using LatentFrame = Tensor;
using PixelFrame = Tensor;

// Ordered frame sequence plus the diffusion step it is noised to (0 = clean).
struct LatentClip {
  std::vector<LatentFrame> frames;
  int step = 0;

  LatentClip() = default;
  LatentClip(int n, int h, int w, int c, int step_ = 0)
      : frames(n, Tensor(h, w, c)), step(step_) {}

  int length() const { return int(frames.size()); }
  void require_uniform() const {
    for (const auto& f : frames) frames.front().require_same_shape(f);
  }
};

struct PixelVideo {
  std::vector<PixelFrame> frames;
  int length() const { return int(frames.size()); }
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic generator used for every random draw in the project.
// xoshiro256** core seeded through splitmix64; normals via Box-Muller on
// explicit 53-bit uniforms, so streams replay identically across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : base_(seed) {
    uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s++);
  }

  // Independent stream derived from this generator's base seed.
  Rng stream(uint64_t id) const { return Rng(splitmix64(base_ ^ (id * 0x9e3779b97f4a7c15ULL + 1))); }

  uint64_t next_u64() {
    uint64_t* s = state_;
    uint64_t result = rotl(s[1] * 5, 7) * 9;
    uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }

  // Uniform in [0,1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Integer in [0, n).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  void fill_normal(Tensor& t) {
    for (double& x : t.v) x = normal();
  }
  Tensor normal_like(const Tensor& t) {
    Tensor out(t.h, t.w, t.c);
    fill_normal(out);
    return out;
  }
  LatentClip normal_like(const LatentClip& clip) {
    LatentClip out;
    out.step = clip.step;
    out.frames.reserve(clip.frames.size());
    for (const auto& f : clip.frames) out.frames.push_back(normal_like(f));
    return out;
  }

  static constexpr const char* algorithm_name() { return "xoshiro256**/box-muller"; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t base_;
  uint64_t state_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a over raw bytes, used for trace checksums and manifest digests.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t seed = 0xcbf29ce484222325ULL) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t checksum(const Tensor& t) {
  uint64_t h = fnv1a(t.v.data(), t.v.size() * sizeof(double));
  int dims[3] = {t.h, t.w, t.c};
  return fnv1a(dims, sizeof(dims), h);
}

inline uint64_t checksum(const LatentClip& clip) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : clip.frames) {
    uint64_t c = checksum(f);
    h = fnv1a(&c, sizeof(c), h);
  }
  return h;
}

}  // namespace frameslide
