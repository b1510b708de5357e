// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. Optional arguments select criteria by number.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include <Eigen/SVD>

#include "helpers.hpp"

using namespace hitvcs;
using namespace testing_util;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Outcome sampling_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> ratio(0.05, 1.0);
  std::uniform_int_distribution<int> grid(1, 4);
  const int sizes[] = {4, 8, 16, 32};
  float worst = 0;
  for (int k = 0; k < 50; ++k) {
    const int B = sizes[k % 4];
    auto op = init_sampling_operator<float>(ratio(rng), B, rng());
    auto frame = random_plane<float>(grid(rng) * B, grid(rng) * B, rng());
    auto a = sample_frame(frame, op), b = matrix_form_oracle(frame, op);
    for (std::size_t i = 0; i < a.values.size(); ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
  }
  const double t = seconds_since(t0);
  return {worst < 1e-5f && t < 10, "max |conv - matrix| " + fmt("%.3g", worst) + ", " + fmt("%.2f s", t)};
}

Outcome linearity() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::mt19937_64 rng(202);
  for (int B : {8, 16, 32}) {
    auto op = init_sampling_operator<double>(0.1 + 0.2 * (B / 8), B, rng());
    auto up = init_upsampling_operator(op, 1);
    up.weights = random_tensor<double>(up.weights.shape(), rng());
    auto up2 = init_upsampling_operator(op, 2);
    auto x1 = random_plane<double>(2 * B, 3 * B, rng()), x2 = random_plane<double>(2 * B, 3 * B, rng());
    const double c = -1.75;
    Plane<double> xs(2 * B, 3 * B), xc(2 * B, 3 * B), zero(2 * B, 3 * B);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs.values[i] = x1.values[i] + x2.values[i];
      xc.values[i] = c * x1.values[i];
    }
    auto y1 = sample_frame(x1, op), y2 = sample_frame(x2, op);
    auto ys = sample_frame(xs, op), yc = sample_frame(xc, op), y0 = sample_frame(zero, op);
    for (std::size_t i = 0; i < y1.values.size(); ++i) {
      worst = std::max({worst, std::abs(ys.values[i] - y1.values[i] - y2.values[i]),
                        std::abs(yc.values[i] - c * y1.values[i]), std::abs(y0.values[i])});
    }
    for (const auto* u : {&up, &up2}) {
      auto r1 = initial_reconstruct(y1, *u), r2 = initial_reconstruct(y2, *u);
      auto rs = initial_reconstruct(ys, *u), rc = initial_reconstruct(yc, *u), r0 = initial_reconstruct(y0, *u);
      for (std::size_t i = 0; i < r1.size(); ++i) {
        worst = std::max({worst, std::abs(rs.values[i] - r1.values[i] - r2.values[i]),
                          std::abs(rc.values[i] - c * r1.values[i]), std::abs(r0.values[i])});
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-6 && t < 10, "max deviation " + fmt("%.3g", worst) + ", " + fmt("%.2f s", t)};
}

Outcome hfim_formula() {
  std::mt19937_64 rng(303);
  std::vector<std::unique_ptr<ag::Parameter<double>>> store;
  auto param = [&](std::vector<int> shape, double scale) {
    store.push_back(std::make_unique<ag::Parameter<double>>("p", random_tensor<double>(shape, rng(), -scale, scale)));
    return store.back().get();
  };
  auto rb_of = [&](int C, bool identity) {
    ResidualBlock<double> rb;
    rb.conv1 = {param({C, C, 3, 3}, 0.3), param({C}, 0.1), 1, 1, false};
    rb.conv2 = {param({C, C, 3, 3}, 0.3), param({C}, 0.1), 1, 1, false};
    if (identity) {
      rb.conv2.weight->value.fill(0);
      rb.conv2.bias->value.fill(0);
    }
    return rb;
  };
  double worst = 0;
  bool degenerate_exact = true;
  for (int k = 0; k < 100; ++k) {
    const int C = 1 + k % 4, H = 3 + k % 6, W = 2 + k % 7;
    auto rb = rb_of(C, false);
    auto k1 = random_tensor<double>({C, H, W}, rng()), k2 = random_tensor<double>({C, H, W}, rng());
    auto n = random_tensor<double>({C, H, W}, rng());
    auto out = hfim_interact(ag::constant(k1), ag::constant(k2), ag::constant(n), rb)->value();
    // Direct evaluation: k1 + k2 + n + conv2(relu(conv1(n))).
    auto h = ag::relu(ag::conv2d(ag::constant(n), ag::constant(rb.conv1.weight->value),
                                 ag::constant(rb.conv1.bias->value), 1, 1));
    auto r = ag::conv2d(h, ag::constant(rb.conv2.weight->value), ag::constant(rb.conv2.bias->value), 1, 1)->value();
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out[i] - (k1[i] + k2[i] + n[i] + r[i])));

    Tensor<double> zero({C, H, W});
    auto z = hfim_interact(ag::constant(zero), ag::constant(zero), ag::constant(n), rb)->value();
    degenerate_exact = degenerate_exact && z.storage() == residual_block(rb, ag::constant(n))->value().storage();
    auto id = rb_of(C, true);
    auto s = hfim_interact(ag::constant(k1), ag::constant(k2), ag::constant(n), id)->value();
    for (std::size_t i = 0; i < s.size(); ++i) degenerate_exact = degenerate_exact && s[i] == (k1[i] + k2[i]) + n[i];
  }
  return {worst < 1e-6 && degenerate_exact,
          "max |hfim - direct sum| " + fmt("%.3g", worst) + ", degenerate cases " + (degenerate_exact ? "exact" : "inexact")};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  ModelConfig c = tiny_config();
  HitVcsNet<double> net(c);
  auto res = model_gradcheck(net, random_gop<float>(c.gop, 16, 16, 404));
  const double t = seconds_since(t0);
  return {res.norm_relative < 1e-5 && t < 120,
          "double precision, " + std::to_string(res.checked) + " entries, relative error " +
              fmt("%.3g", res.norm_relative) + " (worst single entry " + fmt("%.3g", res.worst_relative) + " at " +
              res.worst_name + "), " + fmt("%.1f s", t)};
}

Outcome round_trip() {
  float worst = 0;
  std::mt19937_64 rng(505);
  for (int B : {4, 8, 16, 32}) {
    auto op_d = init_sampling_operator<double>(1.0, B, rng());
    Eigen::BDCSVD<Eigen::MatrixXd> svd(op_d.matrix(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd inv = svd.singularValues();
    for (int i = 0; i < inv.size(); ++i) inv(i) = 1.0 / inv(i);
    const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    UpsamplingOperator<float> up;
    up.block_size_s = B;
    up.in_dim = B * B;
    up.weights = Tensor<float>({B * B, B * B, 1, 1});
    for (int r = 0; r < B * B; ++r)
      for (int k = 0; k < B * B; ++k) up.weights[static_cast<std::size_t>(r) * B * B + k] = static_cast<float>(pinv(r, k));
    auto op = init_sampling_operator<float>(1.0, B, 0);
    op.weights = op_d.weights.cast<float>();
    for (int t = 0; t < 5; ++t) {
      auto frame = random_plane<float>(B * (1 + t % 3), B * (1 + t % 2), rng());
      auto rec = initial_reconstruct(sample_frame(frame, op), up);
      for (std::size_t i = 0; i < frame.size(); ++i) worst = std::max(worst, std::abs(rec.values[i] - frame.values[i]));
    }
  }
  return {worst < 1e-4f, "m = B^2, pseudo-inverse up-sampling, max error " + fmt("%.3g", worst)};
}

Outcome ablation_isolation() {
  ModelConfig c = tiny_config();
  c.block_size = 16;
  c.scales = 3;
  c.channels = 8;
  c.res_blocks = 2;
  c.gop = 4;
  bool invariant_off = true, sensitive_on = true;
  for (bool hfim : {false, true}) {
    c.use_hfim = hfim;
    HitVcsNet<float> net(c);
    auto ys = sample_gop(random_gop<float>(c.gop, 32, 48, 606), net.sampling_operator(FrameMode::keyframe),
                         net.sampling_operator(FrameMode::nonkeyframe));
    auto base = net.reconstruct_gop(ys);
    for (int which : {0, 1}) {
      auto pert = ys;
      auto& key = pert[which == 0 ? 0 : c.gop];
      std::mt19937_64 rng(700 + which);
      std::normal_distribution<float> noise(0.0f, 0.2f);
      for (auto& v : key.values) v += noise(rng);
      auto moved = net.reconstruct_gop(pert);
      for (int i = 1; i < c.gop; ++i) {
        const bool same = moved.deep[i].values == base.deep[i].values;
        if (!hfim) invariant_off = invariant_off && same;
        else sensitive_on = sensitive_on && !same;
      }
    }
  }
  const ModelConfig full;
  const auto n_full = HitVcsNet<float>(full).parameter_count();
  const auto n_hffm = HitVcsNet<float>(ablation_config(full, AblationVariant::no_hffm)).parameter_count();
  const auto n_hfim = HitVcsNet<float>(ablation_config(full, AblationVariant::no_hfim)).parameter_count();
  const bool ordered = n_hffm < n_full && n_hfim < n_full;
  return {invariant_off && sensitive_on && ordered,
          std::string("hfim off invariant: ") + (invariant_off ? "yes" : "no") + ", hfim on sensitive: " +
              (sensitive_on ? "yes" : "no") + ", params no_hffm " + std::to_string(n_hffm) + " / no_hfim " +
              std::to_string(n_hfim) + " / full " + std::to_string(n_full)};
}

double ssim_direct(const Plane<double>& a, const Plane<double>& b) {
  double w[11][11], wsum = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) wsum += w[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int count = 0;
  for (int y = 0; y + 11 <= a.height; ++y)
    for (int x = 0; x + 11 <= a.width; ++x) {
      double mx = 0, my = 0, vx = 0, vy = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          mx += w[i][j] / wsum * a(y + i, x + j);
          my += w[i][j] / wsum * b(y + i, x + j);
        }
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double dx = a(y + i, x + j) - mx, dy = b(y + i, x + j) - my;
          vx += w[i][j] / wsum * dx * dx;
          vy += w[i][j] / wsum * dy * dy;
          cov += w[i][j] / wsum * dx * dy;
        }
      total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

Outcome metric_closed_forms() {
  auto a = random_plane<double>(48, 40, 808);
  auto b = a;
  for (auto& v : b.values) v += 0.1;
  const double p20 = psnr(a, b);
  const double s1 = ssim(a, a);
  double psnr_dev = 0, ssim_dev = 0;
  std::mt19937_64 rng(809);
  for (int t = 0; t < 10; ++t) {
    auto x = random_plane<double>(24 + t, 30, rng()), n = random_plane<double>(24 + t, 30, rng());
    auto y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y.values[i] = 0.8 * y.values[i] + 0.2 * n.values[i];
    long double se = 0;
    for (std::size_t i = 0; i < x.size(); ++i) se += (long double)(x.values[i] - y.values[i]) * (x.values[i] - y.values[i]);
    const double mse = static_cast<double>(se / x.size());
    psnr_dev = std::max(psnr_dev, std::abs(psnr(x, y) - 10 * std::log10(1 / mse)));
    ssim_dev = std::max(ssim_dev, std::abs(ssim(x, y) - ssim_direct(x, y)));
  }
  const bool ok = std::abs(p20 - 20.0) < 1e-9 && std::abs(s1 - 1.0) < 1e-12 && psnr_dev < 1e-9 && ssim_dev < 1e-6;
  return {ok, "psnr(delta 0.1) " + fmt("%.12f", p20) + " dB, ssim(a,a) " + fmt("%.12f", s1) + ", oracle deviations " +
                  fmt("%.2g dB", psnr_dev) + " / " + fmt("%.2g", ssim_dev)};
}

int run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" HITVCS_BIN "' " + args + " > cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome protocol_fidelity() {
  const auto dir = fs::temp_directory_path() / "hitvcs_acceptance_eval";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string args = "eval --checkpoint m.ckpt --output report";
  for (int s = 0; s < 6; ++s) {
    const std::string name = "seq" + std::to_string(s);
    write_image_dir((dir / name).string(), synthetic_sequence(17, 64, 64, 900 + s));
    args += " --data " + name;
  }
  bool ok = run_cli(dir, "init --checkpoint m.ckpt --block 32 --scales 3 --channels 8 --res-blocks 1") == 0 &&
            run_cli(dir, args) == 0;
  int rows = 0;
  bool average = false;
  if (ok) {
    std::ifstream is(dir / "report_table.csv");
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      if (line.rfind("Average,", 0) == 0) average = true;
      else ++rows;
    }
  }
  bool nonkey = false;
  int nonkey_frames = 0;
  if (ok) {
    std::ifstream js(dir / "report.json");
    auto j = nlohmann::json::parse(js);
    nonkey = j.contains("nonkey_average") && j["nonkey_average"].contains("psnr_db");
    nonkey_frames = j["nonkey_average"].value("frames", 0);
  }
  TrainConfig tc;
  const double lr[] = {lr_at_epoch(tc, 0), lr_at_epoch(tc, 30), lr_at_epoch(tc, 60), lr_at_epoch(tc, 90)};
  const bool schedule = lr[0] == 1e-4 && lr[1] == 5e-5 && lr[2] == 2.5e-5 && lr[3] == 1.25e-5;
  const bool pass = ok && rows == 6 && average && nonkey && nonkey_frames == 6 * 2 * 7 && schedule;
  fs::remove_all(dir);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d sequence rows + %s, non-key aggregate over %d frames, lr %g/%g/%g/%g", rows,
                average ? "Average" : "no Average", nonkey_frames, lr[0], lr[1], lr[2], lr[3]);
  return {pass, buf};
}

Outcome determinism() {
  ModelConfig mc = tiny_config();
  auto frames = synthetic_sequence(5, 32, 32, 1001);
  auto data = partition_gops(frames, mc.gop);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_gops = 1;
  tc.crop_size = 16;
  tc.lr0 = 1e-3;
  tc.seed = 17;
  HitVcsNet<float> a(mc), b(mc);
  auto ra = train(a, data, tc), rb = train(b, data, tc);
  bool same = ra.curve.size() == rb.curve.size();
  for (std::size_t i = 0; same && i < ra.curve.size(); ++i)
    same = ra.curve[i].loss.total == rb.curve[i].loss.total && ra.curve[i].mse == rb.curve[i].mse;
  for (std::size_t k = 0; same && k < a.parameters().size(); ++k)
    same = a.parameters()[k]->value.storage() == b.parameters()[k]->value.storage();
  const auto gop = partition_gops(synthetic_sequence(3, 32, 32, 1002), 2)[0];
  auto qa = a.reconstruct_gop(gop), qb = b.reconstruct_gop(gop);
  for (std::size_t i = 0; same && i < qa.deep.size(); ++i)
    same = qa.deep[i].values == qb.deep[i].values && qa.initial[i].values == qb.initial[i].values;
  return {same, std::to_string(ra.curve.size()) + " steps, curves/parameters/reconstructions " +
                    (same ? "bitwise identical" : "differ")};
}

// First sequence under HITVCS_DATA_ROOT at CIF size, else the synthetic CIF stand-in.
std::pair<std::string, std::vector<FramePlane>> overfit_sequence() {
  if (const char* root = std::getenv("HITVCS_DATA_ROOT"); root && fs::is_directory(root)) {
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(root))
      if (e.is_directory() || e.path().extension() == ".yuv") entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
      try {
        auto f = load_sequence(p.string(), 352, 288, 17);
        if (f.size() >= 17 && f[0].height == 288 && f[0].width == 352) return {p.filename().string(), f};
      } catch (const std::exception&) {
      }
    }
  }
  return {"synthetic", synthetic_sequence(17, 288, 352, 2024)};
}

Outcome tiny_overfit() {
  const auto t0 = Clock::now();
  auto [name, frames] = overfit_sequence();
  ModelConfig mc;
  mc.channels = 32;
  mc.res_blocks = 2;
  mc.alpha_n = 0.1;
  TrainConfig tc;
  tc.epochs = 1;
  tc.steps_per_epoch = 2000;
  tc.batch_gops = 1;
  tc.lr0 = 1e-4;
  tc.lr_half_every = 1000000;
  tc.crop_size = 32;
  HitVcsNet<float> net(mc);
  auto data = partition_gops(frames, mc.gop);
  TrainHooks hooks;
  hooks.on_step = [](const TrainStepLog& s) {
    if (s.step % 250 == 0) std::cerr << "  overfit step " << s.step << " loss " << s.loss.total << '\n';
  };
  train(net, data, tc, hooks);
  const double train_min = seconds_since(t0) / 60;
  auto report = evaluate(net, {{name, frames}});
  const double deep = report.average.psnr_db, init = report.average.initial_psnr_db;
  const double minutes = seconds_since(t0) / 60;
  const bool quality = deep >= init + 3 && deep >= 30;
  const bool in_budget = minutes <= 20;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%s, deep %.2f dB vs initial %.2f dB (+%.2f), non-key deep %.2f dB, %.1f min training / %.1f min total",
                name.c_str(), deep, init, deep - init, report.nonkey_average.psnr_db, train_min, minutes);
  return {quality && in_budget, std::string(buf) + (in_budget ? "" : ", over runtime budget")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
  };
  const Criterion criteria[] = {
      {1, "sampling equivalence", sampling_equivalence},
      {2, "linearity / zero", linearity},
      {3, "interaction formula", hfim_formula},
      {4, "gradient check", gradient_check},
      {5, "full-rate round trip", round_trip},
      {7, "ablation isolation", ablation_isolation},
      {8, "metric closed forms", metric_closed_forms},
      {9, "protocol fidelity", protocol_fidelity},
      {10, "determinism", determinism},
      {6, "tiny overfit", tiny_overfit},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed;
}
