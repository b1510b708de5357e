#pragma once

#include <cmath>
#include <functional>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "hitvcs/data.hpp"
#include "hitvcs/deep_recon.hpp"

namespace hitvcs {

inline constexpr double kPsnrCap = 100.0;

/// Peak 1.0; capped at 100 dB when MSE < 1e-10.
template <typename T>
double psnr(const Plane<T>& a, const Plane<T>& b) {
  require_same_dims(a, b, "psnr");
  if (a.size() == 0) throw ShapeError("psnr of empty frames");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a.values[i]) - double(b.values[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse < 1e-10) return kPsnrCap;
  return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  double sum = 0;
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-((i - c) * (i - c)) / (2 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable 'valid' filtering of a row-major image.
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over all valid window positions (Gaussian window, no border crop).
template <typename T>
double ssim(const Plane<T>& a, const Plane<T>& b, const SsimOptions& opt = {}) {
  require_same_dims(a, b, "ssim");
  if (a.height < opt.window || a.width < opt.window) {
    throw DomainError("ssim needs frames of at least " + std::to_string(opt.window) + "x" +
                      std::to_string(opt.window) + ", got " + a.dims_string());
  }
  const int h = a.height, w = a.width;
  const std::size_t n = a.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a.values[i];
    y[i] = b.values[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = detail::gaussian_kernel(opt.window, opt.sigma);
  const auto mx = detail::filter_valid(x, h, w, k);
  const auto my = detail::filter_valid(y, h, w, k);
  const auto sxx = detail::filter_valid(xx, h, w, k);
  const auto syy = detail::filter_valid(yy, h, w, k);
  const auto sxy = detail::filter_valid(xy, h, w, k);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2);
  const double c2 = std::pow(opt.k2 * opt.dynamic_range, 2);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

// ---------------------------------------------------------------------------
// Evaluation protocol

enum class FrameSelection { all, nonkey };

struct EvalProtocol {
  int gops = 2;  // first N GOPs of every sequence
  FrameSelection frames = FrameSelection::all;
};

struct FrameMetric {
  std::string sequence;
  int frame_index = 0;
  std::string frame_type;  // "key" / "nonkey"
  double psnr_db = 0;
  double ssim = 0;
  double initial_psnr_db = 0;
  double initial_ssim = 0;
};

struct MetricSummary {
  double psnr_db = 0;
  double ssim = 0;
  double initial_psnr_db = 0;
  double initial_ssim = 0;
  int frames = 0;
};

struct MetricReport {
  std::vector<FrameMetric> frames;                    // every reconstructed frame, keyframes included
  std::vector<std::pair<std::string, MetricSummary>> sequences;  // per sequence, protocol selection
  MetricSummary average;                              // over all selected frames
  MetricSummary nonkey_average;                       // non-keyframes only
  nlohmann::json metadata = nlohmann::json::object();
};

/// Reconstructs one GOP; returns initial and deep frames for frames[0..G-1]
/// followed by the bounding keyframe.
using GopReconstructor = std::function<GopReconstruction<float>(const GopSample<float>&)>;

namespace detail {
inline void accumulate(MetricSummary& s, const FrameMetric& f) {
  s.psnr_db += f.psnr_db;
  s.ssim += f.ssim;
  s.initial_psnr_db += f.initial_psnr_db;
  s.initial_ssim += f.initial_ssim;
  ++s.frames;
}
inline void finalize(MetricSummary& s) {
  if (s.frames == 0) return;
  s.psnr_db /= s.frames;
  s.ssim /= s.frames;
  s.initial_psnr_db /= s.frames;
  s.initial_ssim /= s.frames;
}
}  // namespace detail

/// Reconstructs the first protocol.gops GOPs of each sequence and scores the
/// deep (and initial) reconstruction of frames 0 .. gops*G-1. Bounding
/// keyframes past the last GOP are reconstructed but never scored.
inline MetricReport evaluate(const GopReconstructor& reconstruct,
                             const std::vector<std::pair<std::string, std::vector<FramePlane>>>& sequences,
                             int gop_size, const EvalProtocol& protocol = {}) {
  MetricReport report;
  for (const auto& [name, frames] : sequences) {
    const std::size_t needed = static_cast<std::size_t>(protocol.gops) * gop_size;
    if (frames.size() < needed) {
      throw DomainError("sequence " + name + " has " + std::to_string(frames.size()) + " frames, protocol needs " +
                        std::to_string(needed));
    }
    auto gops = partition_gops(frames, gop_size);
    MetricSummary seq;
    for (int g = 0; g < protocol.gops; ++g) {
      const auto rec = reconstruct(gops[g]);
      if (static_cast<int>(rec.deep.size()) != gop_size + 1 || rec.initial.size() != rec.deep.size()) {
        throw ShapeError("reconstructor returned " + std::to_string(rec.deep.size()) + " frames for a GOP of " +
                         std::to_string(gop_size));
      }
      for (int i = 0; i < gop_size; ++i) {
        FrameMetric fm;
        fm.sequence = name;
        fm.frame_index = g * gop_size + i;
        fm.frame_type = i == 0 ? "key" : "nonkey";
        const auto& truth = gops[g].frames[i];
        fm.psnr_db = psnr(rec.deep[i], truth);
        fm.ssim = ssim(rec.deep[i], truth);
        fm.initial_psnr_db = psnr(rec.initial[i], truth);
        fm.initial_ssim = ssim(rec.initial[i], truth);
        report.frames.push_back(fm);
        if (i != 0) detail::accumulate(report.nonkey_average, fm);
        if (protocol.frames == FrameSelection::all || i != 0) {
          detail::accumulate(seq, fm);
          detail::accumulate(report.average, fm);
        }
      }
    }
    detail::finalize(seq);
    report.sequences.emplace_back(name, seq);
  }
  detail::finalize(report.average);
  detail::finalize(report.nonkey_average);
  report.metadata["frames"] = protocol.frames == FrameSelection::all ? "all" : "nonkey";
  report.metadata["gops"] = protocol.gops;
  report.metadata["gop_size"] = gop_size;
  return report;
}

template <typename T>
MetricReport evaluate(const HitVcsNet<T>& model,
                      const std::vector<std::pair<std::string, std::vector<FramePlane>>>& sequences,
                      const EvalProtocol& protocol = {}) {
  auto rec = [&model](const GopSample<float>& gop) {
    if constexpr (std::is_same_v<T, float>) {
      return model.reconstruct_gop(gop);
    } else {
      GopSample<T> g;
      for (const auto& f : gop.frames) g.frames.push_back(f.template cast<T>());
      g.next_keyframe = gop.next_keyframe.template cast<T>();
      auto r = model.reconstruct_gop(g);
      GopReconstruction<float> out;
      for (const auto& p : r.initial) out.initial.push_back(p.template cast<float>());
      for (const auto& p : r.deep) out.deep.push_back(p.template cast<float>());
      return out;
    }
  };
  auto report = evaluate(rec, sequences, model.config().gop, protocol);
  report.metadata["alpha_k"] = model.config().alpha_k;
  report.metadata["alpha_n"] = model.config().alpha_n;
  report.metadata["use_hfim"] = model.config().use_hfim;
  report.metadata["use_hffm"] = model.config().use_hffm;
  report.metadata["parameters"] = model.parameter_count();
  return report;
}

/// Full-scale reference averages (PSNR dB / SSIM over six CIF sequences) for
/// context in reports. Not reachable at desk-scale training budgets.
inline nlohmann::json full_scale_reference(double alpha_n) {
  nlohmann::json j = nlohmann::json::object();
  if (std::abs(alpha_n - 0.1) < 1e-9) {
    j = {{"all_frames_psnr_db", 37.82}, {"all_frames_ssim", 0.9705}, {"nonkey_psnr_db", 36.56}};
  } else if (std::abs(alpha_n - 0.01) < 1e-9) {
    j = {{"all_frames_psnr_db", 35.21}, {"all_frames_ssim", 0.9245}, {"nonkey_psnr_db", 33.95}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Report files

/// sequence,frame_index,frame_type,psnr_db,ssim (deep reconstruction).
inline void write_frames_csv(const std::string& path, const MetricReport& r) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "sequence,frame_index,frame_type,psnr_db,ssim\n";
  os.precision(10);
  for (const auto& f : r.frames) {
    os << f.sequence << ',' << f.frame_index << ',' << f.frame_type << ',' << f.psnr_db << ',' << f.ssim << '\n';
  }
}

/// One row per sequence plus the average row.
inline void write_table_csv(const std::string& path, const MetricReport& r) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "sequence,psnr_db,ssim,initial_psnr_db,initial_ssim\n";
  os.precision(10);
  for (const auto& [name, s] : r.sequences) {
    os << name << ',' << s.psnr_db << ',' << s.ssim << ',' << s.initial_psnr_db << ',' << s.initial_ssim << '\n';
  }
  os << "Average," << r.average.psnr_db << ',' << r.average.ssim << ',' << r.average.initial_psnr_db << ','
     << r.average.initial_ssim << '\n';
}

inline nlohmann::json summary_json(const MetricSummary& s) {
  return {{"psnr_db", s.psnr_db},
          {"ssim", s.ssim},
          {"initial_psnr_db", s.initial_psnr_db},
          {"initial_ssim", s.initial_ssim},
          {"frames", s.frames}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["metadata"] = r.metadata;
  j["average"] = summary_json(r.average);
  j["nonkey_average"] = summary_json(r.nonkey_average);
  auto& seqs = j["sequences"] = nlohmann::json::array();
  for (const auto& [name, s] : r.sequences) {
    auto e = summary_json(s);
    e["sequence"] = name;
    seqs.push_back(e);
  }
  auto& frames = j["frames"] = nlohmann::json::array();
  for (const auto& f : r.frames) {
    frames.push_back({{"sequence", f.sequence},
                      {"frame_index", f.frame_index},
                      {"frame_type", f.frame_type},
                      {"psnr_db", f.psnr_db},
                      {"ssim", f.ssim},
                      {"initial_psnr_db", f.initial_psnr_db},
                      {"initial_ssim", f.initial_ssim}});
  }
  return j;
}

}  // namespace hitvcs
