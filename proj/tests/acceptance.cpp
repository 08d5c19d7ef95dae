// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <work_dir> [criterion ...]
//
// Criteria 3 to 5 share one trained pair of dehazers; the datasets and
// parameter files are written under work_dir.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "ap_oracle.hpp"
#include "pp/harness.hpp"
#include "pp/rng.hpp"
#include "pp/simd.hpp"

using namespace pp;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStandardSeed = 1;
constexpr std::uint64_t kExtraSeeds[] = {2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  const DatasetManifest& dataset(std::uint64_t seed) {
    auto it = datasets_.find(seed);
    if (it == datasets_.end()) {
      const fs::path dir = root_ / ("data-seed" + std::to_string(seed));
      fs::remove_all(dir);
      it = datasets_.emplace(seed, materialize_dataset(RunConfig{}, seed, dir)).first;
    }
    return it->second;
  }

  const DehazerParams& aod() {
    if (!aod_) {
      const auto start = std::chrono::steady_clock::now();
      aod_ = train_from_manifest(dataset(kStandardSeed), RunConfig{}, DehazerVariant::aod).params;
      aod_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      save_dehazer(*aod_, root_ / "aod.params");
    }
    return *aod_;
  }

  const DehazerParams& aodx() {
    if (!aodx_) {
      aodx_ = train_from_manifest(dataset(kStandardSeed), RunConfig{}, DehazerVariant::aodx).params;
      save_dehazer(*aodx_, root_ / "aodx.params");
    }
    return *aodx_;
  }

  double aod_seconds() {
    aod();
    return aod_seconds_;
  }

 private:
  fs::path root_;
  std::map<std::uint64_t, DatasetManifest> datasets_;
  std::optional<DehazerParams> aod_, aodx_;
  double aod_seconds_ = 0.0;
};

// 1. Metric oracle equivalence.
Outcome metric_oracles(Workspace&) {
  Image x(1, 2, 1), y(1, 2, 1);
  x.at(0, 0, 1) = 1.0;
  y.at(0, 0, 0) = 1.0;
  SsimParams global;
  global.window = SsimWindow::global;
  const double s = ssim(x, y, global);
  const bool ssim_ok = std::abs(s - (-0.99641)) <= 1e-5;

  const Image a(8, 8, 3, 100.0), b(8, 8, 3, 101.0);
  const double p = psnr(a, b, 255.0);
  const bool psnr_ok = std::abs(p - 48.1308) <= 1e-3;

  Rng rng(2024);
  double worst_identity = 0.0, worst_symmetry = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int h = 11 + rng.uniform_int(0, 21);
    const int w = 11 + rng.uniform_int(0, 21);
    Image u(h, w, 1), v(h, w, 1);
    for (double& t : u.values()) t = rng.uniform();
    for (double& t : v.values()) t = rng.uniform();
    for (const auto window : {SsimWindow::global, SsimWindow::gaussian11}) {
      SsimParams params;
      params.window = window;
      worst_identity = std::max(worst_identity, std::abs(ssim(u, u, params) - 1.0));
      worst_symmetry = std::max(worst_symmetry, std::abs(ssim(u, v, params) - ssim(v, u, params)));
    }
  }
  const bool pairs_ok = worst_identity <= 1e-9 && worst_symmetry <= 1e-9;
  return {ssim_ok && psnr_ok && pairs_ok, "ssim " + fmt("%.6f", s) + ", psnr " + fmt("%.5f", p) + " dB, |ssim(x,x)-1| " +
                                              fmt("%.1e", worst_identity) + ", asymmetry " + fmt("%.1e", worst_symmetry)};
}

// 2. AP against exhaustive matching.
Outcome ap_brute_force(Workspace&) {
  // Pairwise IoUs on this grid: 0.6, 1/3, 0.6 and 0 against the far box.
  const std::vector<Box> grid{{0, 0, 4, 4}, {1, 0, 5, 4}, {2, 0, 6, 4}, {8, 8, 12, 12}};
  long cases = 0, mismatches = 0;
  for (const double threshold : {0.5, 0.3}) {
    MatchConfig cfg;
    cfg.iou_threshold = threshold;
    cfg.per_class = false;
    test::for_each_configuration(grid, {"car"}, {0.9, 0.6, 0.3}, 4, 3, [&](const auto& dets, const auto& gts) {
      ++cases;
      if (average_precision(dets, gts, cfg) != test::brute_force_ap(dets, gts, threshold)) ++mismatches;
    });
  }
  const std::vector<GroundTruthBox> gts{{"car", {0, 0, 10, 10}}, {"car", {20, 0, 30, 10}}};
  const std::vector<Detection> dets{
      {"car", {0, 0, 10, 10}, 0.9}, {"car", {50, 50, 60, 60}, 0.8}, {"car", {20, 0, 30, 10}, 0.7}};
  const double hand = average_precision(dets, gts);
  const bool hand_ok = hand == 5.0 / 6.0;
  return {mismatches == 0 && hand_ok, std::to_string(cases) + " configurations, " + std::to_string(mismatches) +
                                          " mismatches, hand case " + fmt("%.17g", hand)};
}

// 3. Training improves on doing nothing.
Outcome training_works(Workspace& ws) {
  const auto& data = ws.dataset(kStandardSeed);
  const double seconds = ws.aod_seconds();
  const auto rows = run_dehaze_eval(data,
                                    {{"foggy", DehazeMethod::identity, {}, 0.0},
                                     {"aod", DehazeMethod::aod, ws.aod(), 0.0}},
                                    RunConfig{});
  const double ds = *rows[1].ssim_global - *rows[0].ssim_global;
  const double dp = *rows[1].psnr - *rows[0].psnr;
  const bool ok = ds >= 0.05 && dp >= 1.0 && seconds <= 600.0;
  return {ok, "ssim " + fmt("%.4f", *rows[0].ssim_global) + " -> " + fmt("%.4f", *rows[1].ssim_global) + " (+" +
                  fmt("%.4f", ds) + "), psnr " + fmt("%.3f", *rows[0].psnr) + " -> " + fmt("%.3f", *rows[1].psnr) +
                  " dB (+" + fmt("%.3f", dp) + "), training " + fmt("%.1f", seconds) + " s"};
}

// 4. Gaze pipeline versus detector alone.
Outcome pipeline_benefit(Workspace& ws) {
  const RunConfig cfg;
  const DetectorPair detectors = toy_detectors(cfg);
  bool ok = true;
  std::string detail;
  std::vector<std::uint64_t> seeds{kStandardSeed};
  seeds.insert(seeds.end(), std::begin(kExtraSeeds), std::end(kExtraSeeds));
  for (const std::uint64_t seed : seeds) {
    const auto& data = ws.dataset(seed);
    const double gaze = pipeline_map(data, Condition::foggy, PipelineMode::gaze_dehaze, ws.aod(), ws.aodx(),
                                     detectors, cfg);
    const double base = pipeline_map(data, Condition::foggy, PipelineMode::baseline_detect_only, ws.aod(), ws.aodx(),
                                     detectors, cfg);
    const double clear = pipeline_map(data, Condition::clear, PipelineMode::baseline_detect_only, ws.aod(), ws.aodx(),
                                      detectors, cfg);
    ok = ok && gaze >= base && clear >= 0.9;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": gaze " +
              fmt("%.4f", gaze) + " vs baseline " + fmt("%.4f", base) + ", clear baseline " + fmt("%.4f", clear);
  }
  return {ok, detail};
}

// 5. Attention concentrates the change inside ROIs.
Outcome attention_locality(Workspace& ws) {
  const RunConfig cfg;
  const auto& data = ws.dataset(kStandardSeed);
  int total = 0, good = 0;
  for (const ManifestRecord* rec : data.split(Split::test)) {
    const LoadedRecord loaded = load_record(data, *rec);
    const auto dets = boxes_as_detections(rec->gt_boxes);
    const RoiMask roi = rasterize_rois(dets, loaded.foggy.height(), loaded.foggy.width(), cfg.pipeline.roi_margin,
                                       cfg.pipeline.roi_feather);
    const Image out = forward_aodx(ws.aodx(), loaded.foggy, roi, 0.0);
    double in_sum = 0.0, out_sum = 0.0;
    long in_n = 0, out_n = 0;
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        double change = 0.0;
        for (int c = 0; c < out.channels(); ++c) change += std::abs(out.at(c, y, x) - loaded.foggy.at(c, y, x));
        if (roi.mask.at(0, y, x) >= 0.5) {
          in_sum += change;
          ++in_n;
        } else {
          out_sum += change;
          ++out_n;
        }
      }
    }
    if (in_n == 0) continue;
    ++total;
    const double inside = in_sum / in_n;
    const double outside = out_n == 0 ? 0.0 : out_sum / out_n;
    if (inside >= outside) ++good;
  }
  const double frac = total == 0 ? 0.0 : static_cast<double>(good) / total;
  return {frac >= 0.9, std::to_string(good) + "/" + std::to_string(total) + " images (" + fmt("%.1f", 100 * frac) + "%)"};
}

// 6. Haze index monotonicity and gate decisions.
Outcome haze_gate(Workspace&) {
  const RunConfig cfg;
  const int scenes = cfg.dataset.train + cfg.dataset.val + cfg.dataset.test;
  int monotone = 0, gate_right = 0;
  double worst_drop = 0.0;
  PipelineConfig pcfg = cfg.pipeline;
  pcfg.haze_threshold = 0.55;
  pcfg.gate_enabled = true;
  for (int i = 0; i < scenes; ++i) {
    const SceneSample s = synth_scene(mix_seed(kStandardSeed, static_cast<std::uint64_t>(i)), cfg.scene);
    double prev = -1.0;
    bool mono = true;
    Image heavy;
    for (const double beta : {0.0, 0.5, 1.0, 2.0}) {
      HazeParams haze = s.haze;
      haze.beta = beta;
      const Image img = apply_haze(s.clear, transmission_from_depth(s.depth, beta), haze);
      const double h = haze_index(img, pcfg.haze_index);
      if (h < prev - 1e-6) mono = false;
      worst_drop = std::max(worst_drop, prev - h);
      prev = h;
      if (beta == 2.0) heavy = img;
    }
    if (mono) ++monotone;
    if (should_dehaze(heavy, pcfg) && !should_dehaze(s.clear, pcfg)) ++gate_right;
  }
  const double frac = static_cast<double>(gate_right) / scenes;
  return {monotone == scenes && frac >= 0.95,
          "monotone on " + std::to_string(monotone) + "/" + std::to_string(scenes) + " scenes (largest step down " +
              fmt("%.2e", std::max(worst_drop, 0.0)) + "), gate correct on " + fmt("%.1f", 100 * frac) + "%"};
}

// 7. Reductions and inversions.
Outcome reductions(Workspace&) {
  Rng rng(77);
  int exact = 0;
  for (int i = 0; i < 20; ++i) {
    const int h = 4 + rng.uniform_int(0, 28);
    const int w = 4 + rng.uniform_int(0, 28);
    Image img(h, w, 3);
    for (double& v : img.values()) v = rng.uniform();
    RoiMask roi{Image(h, w, 1)};
    for (double& v : roi.mask.values()) v = rng.uniform();
    const DehazerParams p = init_dehazer(rng.next());
    if (forward_aodx(p, img, roi, 1.0) == dehaze_aod(p, img)) ++exact;
  }

  double worst = 0.0;
  long pixels = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneSample s = synth_scene(mix_seed(kStandardSeed, seed), SceneSpec{});
    const Image t = transmission_from_depth(s.depth, s.haze.beta);
    const Image foggy = apply_haze(s.clear, t, s.haze);
    const Image j = apply_k(ideal_k(foggy, t, s.haze, 1.0), foggy, 1.0);
    const Image ok = ideal_k_unguarded_mask(foggy);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < foggy.height(); ++y) {
        for (int x = 0; x < foggy.width(); ++x) {
          if (ok.at(0, y, x) == 0.0) continue;
          worst = std::max(worst, std::abs(j.at(c, y, x) - s.clear.at(c, y, x)));
          ++pixels;
        }
      }
    }
  }

  bool identity = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneSample s = synth_scene(mix_seed(kStandardSeed, seed), SceneSpec{});
    HazeParams haze = s.haze;
    haze.beta = 0.0;
    identity = identity && apply_haze(s.clear, transmission_from_depth(s.depth, 0.0), haze) == s.clear;
  }
  return {exact == 20 && worst <= 1e-6 && pixels > 0 && identity,
          "lambda=1 bit-exact on " + std::to_string(exact) + "/20, ideal-K max error " + fmt("%.2e", worst) + " over " +
              std::to_string(pixels) + " values, beta=0 identity " + (identity ? "exact" : "broken")};
}

// 8. Finite-difference gradient check.
Outcome gradient_check(Workspace&) {
  const SceneSample s = [] {
    SceneSpec spec;
    spec.width = 4;
    spec.height = 4;
    spec.object_size_min = 2;
    spec.object_size_max = 2;
    return synth_scene(8, spec);
  }();
  TrainingSample sample;
  sample.clear = s.clear;
  sample.foggy = apply_haze(s.clear, transmission_from_depth(s.depth, s.haze.beta), s.haze);
  sample.roi = rasterize_rois(boxes_as_detections(s.boxes), 4, 4, 0.1, 1.0);
  const LossOptions opts{true, 0.3, 0.5};
  DehazerParams p = init_dehazer(5);
  DehazerParams grad;
  training_loss(p, sample, opts, &grad);

  Rng pick(31);
  double worst = 0.0;
  int checked = 0;
  for (const bool attention : {false, true}) {
    auto& arrays = attention ? p.attn_weights : p.k_weights;
    const auto& garrays = attention ? grad.attn_weights : grad.k_weights;
    for (int trial = 0; trial < 25; ++trial) {
      const auto a = static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(arrays.size()) - 1));
      const auto i = static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(arrays[a].values.size()) - 1));
      double& w = arrays[a].values[i];
      const double keep = w;
      const double h = 1e-6;
      w = keep + h;
      const double up = training_loss(p, sample, opts);
      w = keep - h;
      const double down = training_loss(p, sample, opts);
      w = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = garrays[a].values[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
      worst = std::max(worst, rel);
      ++checked;
    }
  }
  return {worst <= 1e-3, std::to_string(checked) + " weights (25 K-estimator, 25 attention), max relative error " +
                             fmt("%.2e", worst)};
}

// 9. Two end-to-end CLI runs give byte-identical structured reports.
Outcome determinism(Workspace& ws) {
  const fs::path root = ws.root() / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "config.json");
    cfg << R"({"dataset": {"train": 12, "val": 4, "test": 8}, "train": {"epochs": 2, "seed": 3}})" << "\n";
  }
  const std::string cli = PP_CLI_PATH;
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / ("run" + std::to_string(run));
    const std::string common = " --seed 5 --config " + (root / "config.json").string();
    const std::string d = dir.string();
    const std::vector<std::string> steps{
        cli + " synth" + common + " --out " + d + "/data",
        cli + " train" + common + " --manifest " + d + "/data/manifest.jsonl --variant aod --out " + d + "/aod.params",
        cli + " train" + common + " --manifest " + d + "/data/manifest.jsonl --variant aodx --out " + d + "/aodx.params",
        cli + " eval" + common + " --manifest " + d + "/data/manifest.jsonl --aod " + d + "/aod.params --aodx " + d +
            "/aodx.params --out " + d + "/runs",
        cli + " report" + common + " --input " + d + "/runs/run-seed5/report.json --format structured --out " + d +
            "/report.json",
    };
    for (const auto& cmd : steps) {
      if (std::system((cmd + " > " + d + ".log 2>&1").c_str()) != 0) {
        return {false, "command failed: " + cmd};
      }
    }
    reports[run] = slurp(dir / "report.json");
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1];
  return {same, std::to_string(reports[0].size()) + " bytes, " + (same ? "identical" : "different")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "pp-acceptance";
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

  Workspace ws(work);
  const std::vector<std::pair<const char*, std::function<Outcome(Workspace&)>>> criteria{
      {"metric oracle equivalence", metric_oracles},
      {"AP brute-force equivalence", ap_brute_force},
      {"dehazer training improves SSIM and PSNR", training_works},
      {"gaze pipeline mAP >= baseline", pipeline_benefit},
      {"attention locality", attention_locality},
      {"haze gate", haze_gate},
      {"reductions and inversions", reductions},
      {"gradient check", gradient_check},
      {"end-to-end determinism", determinism},
  };

  std::cout << "kernels: " << simd::isa_name(simd::active_isa()) << "\n";
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second(ws);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("criterion %d %s  %s: %s  [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
