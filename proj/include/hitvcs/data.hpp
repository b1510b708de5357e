#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "hitvcs/frame.hpp"
#include "hitvcs/image_io.hpp"

namespace hitvcs {

/// BT.601 studio-swing luma of an 8-bit RGB triplet, scaled to [0, 1].
inline float rgb_to_y(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
  return static_cast<float>(y / 255.0);
}

/// Luma plane of an image. Gray images are taken as luma already.
inline FramePlane rgb_to_y(const Image8& img) {
  FramePlane f(img.height, img.width);
  const std::size_t n = f.size();
  if (img.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) f.values[i] = img.pixels[i] / 255.0f;
  } else if (img.channels == 3) {
    for (std::size_t i = 0; i < n; ++i) {
      f.values[i] = rgb_to_y(img.pixels[3 * i], img.pixels[3 * i + 1], img.pixels[3 * i + 2]);
    }
  } else {
    throw DataError("rgb_to_y: unsupported channel count " + std::to_string(img.channels));
  }
  return f;
}

/// Rounds [0, 1] values to an 8-bit gray image.
template <typename T>
Image8 to_image8(const Plane<T>& p) {
  Image8 img;
  img.height = p.height;
  img.width = p.width;
  img.channels = 1;
  img.pixels.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double v = std::clamp(static_cast<double>(p.values[i]), 0.0, 1.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

/// GOP i covers frames [i*G, (i+1)*G) and is bounded by frame (i+1)*G; a
/// trailing GOP without a following frame reuses its own keyframe.
template <typename T>
std::vector<GopSample<T>> partition_gops(const std::vector<Plane<T>>& frames, int gop) {
  if (gop < 1) throw DomainError("GOP size must be positive");
  if (static_cast<int>(frames.size()) < gop) {
    throw DomainError("need at least " + std::to_string(gop) + " frames for one GOP, got " +
                      std::to_string(frames.size()));
  }
  const std::size_t count = frames.size() / gop;
  std::vector<GopSample<T>> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].frames.assign(frames.begin() + i * gop, frames.begin() + (i + 1) * gop);
    const std::size_t next = (i + 1) * gop;
    out[i].next_keyframe = next < frames.size() ? frames[next] : frames[i * gop];
  }
  return out;
}

enum class Augmentation { identity, flip_horizontal, flip_vertical, rotate_180 };

template <typename T>
Plane<T> apply_augmentation(const Plane<T>& p, Augmentation a) {
  if (a == Augmentation::identity) return p;
  Plane<T> out(p.height, p.width);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      const int sy = (a == Augmentation::flip_vertical || a == Augmentation::rotate_180) ? p.height - 1 - y : y;
      const int sx = (a == Augmentation::flip_horizontal || a == Augmentation::rotate_180) ? p.width - 1 - x : x;
      out(y, x) = p(sy, sx);
    }
  }
  return out;
}

template <typename T>
GopSample<T> apply_augmentation(const GopSample<T>& gop, Augmentation a) {
  GopSample<T> out;
  for (const auto& f : gop.frames) out.frames.push_back(apply_augmentation(f, a));
  out.next_keyframe = apply_augmentation(gop.next_keyframe, a);
  return out;
}

inline Augmentation draw_augmentation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return static_cast<Augmentation>(std::uniform_int_distribution<int>(0, 3)(rng));
}

/// One geometric involution, drawn from the seed, applied to the whole GOP.
template <typename T>
GopSample<T> augment(const GopSample<T>& gop, std::uint64_t seed) {
  return apply_augmentation(gop, draw_augmentation(seed));
}

template <typename T>
Plane<T> crop_plane(const Plane<T>& p, int top, int left, int size) {
  Plane<T> out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) out(y, x) = p(top + y, left + x);
  return out;
}

/// Same size x size window from every frame of the GOP.
template <typename T>
GopSample<T> random_crop(const GopSample<T>& gop, int size, int block_size, int scales, std::uint64_t seed) {
  if (size <= 0 || size % block_size != 0 || size % (1 << (scales - 1)) != 0) {
    throw ConfigError("crop size " + std::to_string(size) + " must be divisible by B=" +
                      std::to_string(block_size) + " and 2^(S-1)=" + std::to_string(1 << (scales - 1)));
  }
  const auto& ref = gop.frames.at(0);
  if (size > ref.height || size > ref.width) {
    throw ConfigError("crop size " + std::to_string(size) + " exceeds frame " + ref.dims_string());
  }
  std::mt19937_64 rng(seed);
  const int top = std::uniform_int_distribution<int>(0, ref.height - size)(rng);
  const int left = std::uniform_int_distribution<int>(0, ref.width - size)(rng);
  GopSample<T> out;
  for (const auto& f : gop.frames) out.frames.push_back(crop_plane(f, top, left, size));
  out.next_keyframe = crop_plane(gop.next_keyframe, top, left, size);
  return out;
}

// ---------------------------------------------------------------------------
// Sequence sources

inline bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

inline FramePlane read_frame_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return rgb_to_y(ext == ".png" ? read_png(p.string()) : read_pnm(p.string()));
}

/// All PNG/PGM/PPM files of a directory in lexicographic order.
inline std::vector<FramePlane> read_image_dir(const std::string& dir, int max_frames = 0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no image frames in " + dir);
  if (max_frames > 0 && static_cast<int>(files.size()) > max_frames) files.resize(max_frames);
  std::vector<FramePlane> frames;
  for (const auto& f : files) {
    frames.push_back(read_frame_file(f));
    require_same_dims(frames.back(), frames.front(), "read_image_dir");
  }
  return frames;
}

/// Y planes of a raw planar 8-bit I420 file.
inline std::vector<FramePlane> read_yuv_i420(const std::string& path, int width, int height, int max_frames = 0) {
  if (width <= 0 || height <= 0 || width % 2 || height % 2) {
    throw DataError("I420 needs positive even dimensions");
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  const std::size_t luma = static_cast<std::size_t>(width) * height;
  const std::size_t chroma = 2 * (luma / 4);
  std::vector<std::uint8_t> buf(luma);
  std::vector<FramePlane> frames;
  while (max_frames <= 0 || static_cast<int>(frames.size()) < max_frames) {
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(luma))) break;
    FramePlane f(height, width);
    for (std::size_t i = 0; i < luma; ++i) f.values[i] = buf[i] / 255.0f;
    frames.push_back(std::move(f));
    is.seekg(static_cast<std::streamoff>(chroma), std::ios::cur);
  }
  if (frames.empty()) throw DataError("no complete frame in " + path);
  return frames;
}

/// Directory of images, or a .yuv file with explicit dimensions.
inline std::vector<FramePlane> load_sequence(const std::string& path, int width, int height, int max_frames = 0) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) return read_image_dir(path, max_frames);
  if (fs::is_regular_file(path) && fs::path(path).extension() == ".yuv") {
    return read_yuv_i420(path, width, height, max_frames);
  }
  throw DataError("no frame source at " + path);
}

inline void write_frame_png(const std::string& path, const FramePlane& f) { write_png(path, to_image8(f)); }

/// Writes frames as <dir>/frame_00000.png ... (8-bit gray).
inline void write_image_dir(const std::string& dir, const std::vector<FramePlane>& frames) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu.png", i);
    write_frame_png((std::filesystem::path(dir) / name).string(), frames[i]);
  }
}

// ---------------------------------------------------------------------------
// Procedural test sequence: a panning two-octave background with moving,
// striped elliptical objects. Used where no CIF material is available.

inline std::vector<FramePlane> synthetic_sequence(int frame_count, int height, int width, std::uint64_t seed) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i) waves.push_back({(u(rng) - 0.5) / 80.0, (u(rng) - 0.5) / 80.0, two_pi * u(rng), 0.08});
  for (int i = 0; i < 2; ++i) waves.push_back({(u(rng) - 0.5) / 12.0, (u(rng) - 0.5) / 12.0, two_pi * u(rng), 0.03});
  const double pan_x = 0.3 + 0.6 * u(rng), pan_y = 0.2 * (u(rng) - 0.5);

  struct Blob {
    double cx, cy, rx, ry, vx, vy, level, stripe_period, stripe_angle, stripe_amp;
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < 4; ++i) {
    Blob b;
    b.cx = width * u(rng);
    b.cy = height * u(rng);
    b.rx = 20 + 40 * u(rng);
    b.ry = 20 + 40 * u(rng);
    b.vx = (u(rng) - 0.5) * 4.0;
    b.vy = (u(rng) - 0.5) * 3.0;
    b.level = 0.15 + 0.7 * u(rng);
    b.stripe_period = 8 + 14 * u(rng);
    b.stripe_angle = std::numbers::pi * u(rng);
    b.stripe_amp = 0.04 + 0.06 * u(rng);
    blobs.push_back(b);
  }

  std::vector<FramePlane> frames;
  for (int t = 0; t < frame_count; ++t) {
    FramePlane f(height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double bx = x + pan_x * t, by = y + pan_y * t;
        double v = 0.5;
        for (const auto& w : waves) v += w.amp * std::sin(two_pi * (w.fx * bx + w.fy * by) + w.phase);
        for (const auto& b : blobs) {
          const double dx = (x - (b.cx + b.vx * t)) / b.rx;
          const double dy = (y - (b.cy + b.vy * t)) / b.ry;
          const double r = std::sqrt(dx * dx + dy * dy);
          const double edge = std::clamp((1.0 - r) * std::min(b.rx, b.ry) / 1.5, 0.0, 1.0);
          if (edge <= 0.0) continue;
          const double along = (x - b.vx * t) * std::cos(b.stripe_angle) + (y - b.vy * t) * std::sin(b.stripe_angle);
          const double inside = b.level + b.stripe_amp * std::sin(two_pi * along / b.stripe_period);
          v = v * (1.0 - edge) + inside * edge;
        }
        f(y, x) = static_cast<float>(std::round(std::clamp(v, 16.0 / 255.0, 235.0 / 255.0) * 255.0) / 255.0);
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace hitvcs
