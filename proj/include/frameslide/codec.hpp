#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "frameslide/core.hpp"

namespace frameslide {

// Deterministic pixel <-> latent codec: block-mean pooling plus the affine
// map [0,1] -> [-1,1]. Exact inverse at factor 1, idempotent at any factor.

namespace detail {
// Pairwise block sum; exact for power-of-two block sizes, which keeps
// encode(decode(z)) bit-stable on constant blocks.
inline double pairwise_sum(const double* p, size_t n) {
  if (n == 1) return p[0];
  size_t half = n / 2;
  return pairwise_sum(p, half) + pairwise_sum(p + half, n - half);
}
}  // namespace detail

inline LatentFrame encode(const PixelFrame& x, int factor) {
  if (factor < 1) throw ConfigError("encode: factor must be >= 1");
  if (x.c != 3) throw ShapeError("encode: expected 3-channel pixel frame, got " + x.shape_str());
  if (x.h % factor != 0 || x.w % factor != 0)
    throw ShapeError("encode: dims " + x.shape_str() + " not divisible by factor " +
                     std::to_string(factor));
  int hz = x.h / factor, wz = x.w / factor;
  LatentFrame z(hz, wz, 3);
  std::vector<double> block(size_t(factor) * factor);
  const double inv_n = 1.0 / (double(factor) * factor);
  for (int y = 0; y < hz; ++y)
    for (int xx = 0; xx < wz; ++xx)
      for (int ch = 0; ch < 3; ++ch) {
        size_t k = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            block[k++] = x.at(y * factor + dy, xx * factor + dx, ch);
        double mean = detail::pairwise_sum(block.data(), block.size()) * inv_n;
        z.at(y, xx, ch) = 2.0 * mean - 1.0;
      }
  return z;
}

inline PixelFrame decode(const LatentFrame& z, int factor) {
  if (factor < 1) throw ConfigError("decode: factor must be >= 1");
  if (!z.all_finite()) throw NumericError("decode: non-finite latent values");
  PixelFrame x(z.h * factor, z.w * factor, z.c);
  for (int y = 0; y < z.h; ++y)
    for (int xx = 0; xx < z.w; ++xx)
      for (int ch = 0; ch < z.c; ++ch) {
        double p = std::clamp((z.at(y, xx, ch) + 1.0) / 2.0, 0.0, 1.0);
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) x.at(y * factor + dy, xx * factor + dx, ch) = p;
      }
  return x;
}

inline LatentClip encode_video(const PixelVideo& video, int factor) {
  LatentClip clip;
  clip.step = 0;
  clip.frames.reserve(video.frames.size());
  for (const auto& f : video.frames) clip.frames.push_back(encode(f, factor));
  return clip;
}

inline PixelVideo decode_clip(const LatentClip& clip, int factor) {
  PixelVideo video;
  video.frames.reserve(clip.frames.size());
  for (const auto& f : clip.frames) video.frames.push_back(decode(f, factor));
  return video;
}

// --- binary PPM (P6, maxval 255) ------------------------------------------

inline void write_ppm(const PixelFrame& x, const std::string& path) {
  if (x.c != 3) throw ShapeError("write_ppm: expected 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "P6\n" << x.w << " " << x.h << "\n255\n";
  std::vector<unsigned char> row(size_t(x.w) * 3);
  for (int y = 0; y < x.h; ++y) {
    for (int xx = 0; xx < x.w; ++xx)
      for (int ch = 0; ch < 3; ++ch) {
        double v = std::clamp(x.at(y, xx, ch), 0.0, 1.0);
        row[size_t(xx) * 3 + ch] = (unsigned char)std::lround(v * 255.0);
      }
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!os) throw IoError("write failed: " + path);
}

inline PixelFrame read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw IoError(path + ": not a P6 PPM");
  auto next_int = [&]() {
    int value;
    // skip whitespace and '#' comments
    for (;;) {
      int ch = is.peek();
      if (ch == '#') {
        std::string line;
        std::getline(is, line);
      } else if (std::isspace(ch)) {
        is.get();
      } else {
        break;
      }
    }
    if (!(is >> value)) throw IoError(path + ": truncated PPM header");
    return value;
  };
  int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw IoError(path + ": only maxval 255 supported");
  is.get();  // single whitespace after header
  PixelFrame x(h, w, 3);
  std::vector<unsigned char> row(size_t(w) * 3);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
    if (!is) throw IoError(path + ": truncated pixel data");
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < 3; ++ch) x.at(y, xx, ch) = row[size_t(xx) * 3 + ch] / 255.0;
  }
  return x;
}

// --- raw latent frames: 16-byte header (magic, H, W, C), f32 LE payload ----

inline constexpr char kLatentMagic[4] = {'F', 'S', 'L', '1'};

inline void write_latent(const LatentFrame& z, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kLatentMagic, 4);
  uint32_t dims[3] = {uint32_t(z.h), uint32_t(z.w), uint32_t(z.c)};
  os.write(reinterpret_cast<const char*>(dims), 12);
  std::vector<float> payload(z.v.begin(), z.v.end());
  os.write(reinterpret_cast<const char*>(payload.data()),
           std::streamsize(payload.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path);
}

inline LatentFrame read_latent(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kLatentMagic, 4) != 0) throw IoError(path + ": bad latent magic");
  uint32_t dims[3];
  is.read(reinterpret_cast<char*>(dims), 12);
  if (!is) throw IoError(path + ": truncated latent header");
  LatentFrame z{int(dims[0]), int(dims[1]), int(dims[2])};
  std::vector<float> payload(z.v.size());
  is.read(reinterpret_cast<char*>(payload.data()), std::streamsize(payload.size() * sizeof(float)));
  if (!is) throw IoError(path + ": truncated latent payload");
  std::copy(payload.begin(), payload.end(), z.v.begin());
  return z;
}

}  // namespace frameslide
