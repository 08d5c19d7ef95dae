#include "pp/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>

#include "pp/error.hpp"
#include "pp/rng.hpp"

namespace pp {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "unknown";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DomainError("unknown split '" + s + "'");
}

std::vector<const ManifestRecord*> DatasetManifest::split(Split s) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

std::string format_manifest_record(const ManifestRecord& rec) {
  ordered_json j;
  j["id"] = rec.id;
  j["split"] = split_name(rec.split);
  j["foggy_path"] = rec.foggy_path;
  if (rec.clear_path) j["clear_path"] = *rec.clear_path;
  if (rec.depth_path) j["depth_path"] = *rec.depth_path;
  if (rec.depth_offset) j["depth_offset"] = *rec.depth_offset;
  if (rec.depth_scale) j["depth_scale"] = *rec.depth_scale;
  if (rec.beta) j["beta"] = *rec.beta;
  if (rec.airlight) j["airlight"] = *rec.airlight;
  auto boxes = ordered_json::array();
  for (const auto& g : rec.gt_boxes) {
    boxes.push_back({{"cls", g.cls}, {"x0", g.box.x0}, {"y0", g.box.y0}, {"x1", g.box.x1}, {"y1", g.box.y1}});
  }
  j["gt_boxes"] = boxes;
  return j.dump();
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : manifest.records) out << format_manifest_record(r) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

ManifestRecord parse_manifest_record(const json& j) {
  static const std::set<std::string> kKeys{"id",           "split",       "foggy_path", "clear_path", "depth_path",
                                           "depth_offset", "depth_scale", "beta",       "airlight",   "gt_boxes"};
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw ParseError("unknown key '" + key + "'");
  }
  ManifestRecord r;
  r.id = j.at("id").get<std::string>();
  r.split = parse_split(j.at("split").get<std::string>());
  r.foggy_path = j.at("foggy_path").get<std::string>();
  if (j.contains("clear_path")) r.clear_path = j.at("clear_path").get<std::string>();
  if (j.contains("depth_path")) r.depth_path = j.at("depth_path").get<std::string>();
  if (j.contains("depth_offset")) r.depth_offset = j.at("depth_offset").get<double>();
  if (j.contains("depth_scale")) r.depth_scale = j.at("depth_scale").get<double>();
  if (j.contains("beta")) r.beta = j.at("beta").get<double>();
  if (j.contains("airlight")) r.airlight = j.at("airlight").get<std::array<double, 3>>();
  if (r.depth_path && (!r.depth_offset || !r.depth_scale)) throw ParseError("depth_path needs depth_offset and depth_scale");
  if (j.contains("gt_boxes")) {
    for (const auto& b : j.at("gt_boxes")) {
      GroundTruthBox g{b.at("cls").get<std::string>(),
                       Box{b.at("x0").get<double>(), b.at("y0").get<double>(), b.at("x1").get<double>(),
                           b.at("y1").get<double>()}};
      if (!(g.box.x0 < g.box.x1 && g.box.y0 < g.box.y1)) throw ParseError("ground-truth box with zero area");
      r.gt_boxes.push_back(std::move(g));
    }
  }
  return r;
}

fs::path resolve(const DatasetManifest& m, const std::string& p) { return m.root / p; }

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    ManifestRecord rec;
    try {
      rec = parse_manifest_record(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(where + e.what());
    } catch (const ParseError& e) {
      throw ParseError(where + e.what());
    } catch (const DomainError& e) {
      throw ParseError(where + e.what());
    }
    if (!ids.insert(rec.id).second) throw ParseError(where + "duplicate id '" + rec.id + "'");
    for (const std::string* p : {&rec.foggy_path, rec.clear_path ? &*rec.clear_path : nullptr,
                                 rec.depth_path ? &*rec.depth_path : nullptr}) {
      if (p != nullptr && !fs::exists(resolve(m, *p))) throw IoError(where + "missing file " + resolve(m, *p).string());
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

namespace {

// Depth maps are stored as 8-bit PNGs covering [depth_near, depth_far].
struct DepthCodec {
  double offset;
  double scale;

  Image encode(const DepthMap& d) const {
    Image img(d.height(), d.width(), 1);
    auto src = d.values();
    auto dst = img.plane(0);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp((src[i] - offset) / scale, 0.0, 1.0);
    return quantize_8bit(img);
  }

  DepthMap decode(const Image& img) const {
    DepthMap d(img.height(), img.width());
    auto src = img.plane(0);
    auto dst = d.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = offset + src[i] * scale;
    return d;
  }
};

}  // namespace

DatasetManifest materialize_dataset(const RunConfig& cfg, std::uint64_t seed, const fs::path& out_dir) {
  validate_config(cfg);
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  const DepthCodec codec{cfg.scene.depth_near,
                         cfg.scene.depth_far > cfg.scene.depth_near ? cfg.scene.depth_far - cfg.scene.depth_near : 1.0};
  DatasetManifest m;
  m.root = out_dir;
  const std::array<std::pair<Split, int>, 3> parts{
      {{Split::train, cfg.dataset.train}, {Split::val, cfg.dataset.val}, {Split::test, cfg.dataset.test}}};
  std::uint64_t index = 0;
  for (const auto& [split, count] : parts) {
    for (int i = 0; i < count; ++i, ++index) {
      SceneSample scene = synth_scene(mix_seed(seed, index), cfg.scene);
      if (cfg.haze.beta) scene.haze.beta = *cfg.haze.beta;
      if (cfg.haze.airlight) scene.haze.airlight = *cfg.haze.airlight;

      char id[32];
      std::snprintf(id, sizeof(id), "%s-%04d", split_name(split).c_str(), i);
      ManifestRecord rec;
      rec.id = id;
      rec.split = split;
      rec.clear_path = "images/" + rec.id + "_clear.png";
      rec.foggy_path = "images/" + rec.id + "_foggy.png";
      rec.depth_path = "images/" + rec.id + "_depth.png";
      rec.depth_offset = codec.offset;
      rec.depth_scale = codec.scale;
      rec.beta = scene.haze.beta;
      rec.airlight = scene.haze.airlight;
      rec.gt_boxes = scene.boxes;

      const Image clear = quantize_8bit(scene.clear);
      const Image depth_img = codec.encode(scene.depth);
      const Image t = transmission_from_depth(codec.decode(depth_img), scene.haze.beta);
      const Image foggy = apply_haze(clear, t, scene.haze);
      save_image(clear, out_dir / *rec.clear_path);
      save_image(depth_img, out_dir / *rec.depth_path);
      save_image(foggy, out_dir / rec.foggy_path);
      m.records.push_back(std::move(rec));
    }
  }
  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

LoadedRecord load_record(const DatasetManifest& manifest, const ManifestRecord& rec) {
  LoadedRecord out;
  out.record = &rec;
  out.foggy = load_image(resolve(manifest, rec.foggy_path));
  if (rec.clear_path) out.clear = load_image(resolve(manifest, *rec.clear_path));
  if (rec.depth_path) {
    const DepthCodec codec{*rec.depth_offset, *rec.depth_scale};
    out.depth = codec.decode(to_luma(load_image(resolve(manifest, *rec.depth_path))));
  }
  return out;
}

std::vector<TrainingSample> training_samples(const DatasetManifest& manifest, Split split, const RunConfig& cfg,
                                             bool with_roi) {
  std::vector<TrainingSample> out;
  Rng pick(mix_seed(cfg.train.seed, 0xC1EA));
  for (const ManifestRecord* rec : manifest.split(split)) {
    if (!rec->clear_path) continue;
    LoadedRecord loaded = load_record(manifest, *rec);
    TrainingSample s;
    s.clear = *loaded.clear;
    s.foggy = pick.uniform() < cfg.clear_pair_fraction ? s.clear : loaded.foggy;
    if (with_roi) {
      const auto dets = boxes_as_detections(rec->gt_boxes);
      s.roi = rasterize_rois(dets, s.foggy.height(), s.foggy.width(), cfg.pipeline.roi_margin, cfg.pipeline.roi_feather);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string variant_name(DehazerVariant v) { return v == DehazerVariant::aod ? "aod" : "aodx"; }

DehazerVariant parse_variant(const std::string& s) {
  if (s == "aod") return DehazerVariant::aod;
  if (s == "aodx") return DehazerVariant::aodx;
  throw DomainError("unknown dehazer variant '" + s + "' (expected aod or aodx)");
}

TrainResult train_from_manifest(const DatasetManifest& manifest, const RunConfig& cfg, DehazerVariant variant,
                                const std::function<void(const EpochLoss&)>& on_epoch) {
  const bool roi = variant == DehazerVariant::aodx;
  const auto train = training_samples(manifest, Split::train, cfg, roi);
  auto val_cfg = cfg;
  val_cfg.clear_pair_fraction = 0.0;
  const auto val = training_samples(manifest, Split::val, val_cfg, roi);
  TrainResult result = train_dehazer(train, val, cfg.train, on_epoch);
  result.params.version = variant_name(variant) + "-1";
  return result;
}

// ---------------------------------------------------------------------------

std::vector<ReportRow> run_dehaze_eval(const DatasetManifest& manifest, const std::vector<DehazeEvalVariant>& variants,
                                       const RunConfig& cfg, const EvalOptions& opts) {
  const auto test = manifest.split(Split::test);
  std::vector<LoadedRecord> loaded;
  loaded.reserve(test.size());
  for (const ManifestRecord* rec : test) loaded.push_back(load_record(manifest, *rec));

  SsimParams global = cfg.ssim;
  global.window = SsimWindow::global;
  SsimParams windowed = cfg.ssim;
  windowed.window = SsimWindow::gaussian11;

  std::vector<ReportRow> rows;
  for (const auto& v : variants) {
    ReportRow row;
    row.table = "dehaze";
    row.variant = v.name;
    row.condition = "test";
    double sg = 0.0, sw = 0.0, ps = 0.0;
    for (const auto& rec : loaded) {
      if (!rec.clear) {
        ++row.skipped;
        continue;
      }
      Image out;
      switch (v.method) {
        case DehazeMethod::identity:
          out = rec.foggy;
          break;
        case DehazeMethod::oracle: {
          const auto* r = rec.record;
          if (!rec.depth || !r->beta || !r->airlight) {
            ++row.skipped;
            continue;
          }
          const HazeParams haze{*r->beta, *r->airlight};
          const Image t = transmission_from_depth(*rec.depth, haze.beta);
          out = apply_k(ideal_k(rec.foggy, t, haze), rec.foggy, 1.0);
          break;
        }
        case DehazeMethod::aod:
          out = dehaze_aod(v.params, rec.foggy);
          break;
        case DehazeMethod::aodx: {
          const auto dets = boxes_as_detections(rec.record->gt_boxes);
          const RoiMask roi = rasterize_rois(dets, rec.foggy.height(), rec.foggy.width(), cfg.pipeline.roi_margin,
                                             cfg.pipeline.roi_feather);
          out = forward_aodx(v.params, rec.foggy, roi, v.lambda_min);
          break;
        }
      }
      const Image ref_luma = to_luma(*rec.clear);
      const Image out_luma = to_luma(out);
      sg += ssim(ref_luma, out_luma, global);
      sw += ssim(ref_luma, out_luma, windowed);
      if (opts.psnr_bytes) {
        Image a = quantize_8bit(*rec.clear);
        Image b = quantize_8bit(out);
        for (double& x : a.values()) x = std::round(x * 255.0);
        for (double& x : b.values()) x = std::round(x * 255.0);
        ps += psnr(a, b, 255.0);
      } else {
        ps += psnr(*rec.clear, out, 1.0);
      }
      ++row.images;
    }
    if (row.skipped > 0) {
      std::cerr << "warning: " << v.name << ": skipped " << row.skipped << " test image(s) lacking reference data\n";
    }
    if (row.images > 0) {
      row.ssim_global = sg / row.images;
      row.ssim_window = sw / row.images;
      row.psnr = ps / row.images;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

DetectorPair toy_detectors(const RunConfig& cfg) {
  const ToyDetectorConfig weak = detector_for(cfg, DetectorStrength::weak);
  const ToyDetectorConfig strong = detector_for(cfg, DetectorStrength::strong);
  return {[weak](const std::string&, const Image& img) { return toy_detect(img, weak); },
          [strong](const std::string&, const Image& img) { return toy_detect(img, strong); }};
}

KeyedDetector file_detector(const fs::path& dir) {
  return [dir](const std::string& image_id, const Image&) {
    const fs::path p = dir / (image_id + ".jsonl");
    if (!fs::exists(p)) return std::vector<Detection>{};
    DetectionFile f = load_detections(p);
    if (!f.detections.empty() && f.image_id != image_id) {
      throw ParseError(p.string() + ": records belong to image '" + f.image_id + "'");
    }
    return f.detections;
  };
}

double pipeline_map(const DatasetManifest& manifest, Condition condition, PipelineMode mode,
                    const DehazerParams& aod, const DehazerParams& aodx, const DetectorPair& detectors,
                    const RunConfig& cfg) {
  const auto test = manifest.split(Split::test);
  if (test.empty()) throw DomainError("detection eval: empty test split");
  PipelineConfig pcfg = cfg.pipeline;
  pcfg.mode = mode;
  const DehazerParams& params = mode == PipelineMode::global_dehaze ? aod : aodx;
  std::vector<ImageDetections> results;
  for (const ManifestRecord* rec : test) {
    const LoadedRecord loaded = load_record(manifest, *rec);
    if (condition == Condition::clear && !loaded.clear) continue;
    const Image& img = condition == Condition::clear ? *loaded.clear : loaded.foggy;
    const std::string& id = rec->id;
    DetectorFn pre = [&](const Image& x) { return detectors.preliminary(id, x); };
    DetectorFn fin = [&](const Image& x) { return detectors.final_detector(id, x); };
    const PipelineTrace trace = run_pipeline(img, params, pre, fin, pcfg);
    results.push_back({trace.final_detections, rec->gt_boxes});
  }
  const auto per_class = per_class_average_precision(results, cfg.match);
  if (per_class.empty()) throw DomainError("detection eval: the test split has no ground-truth boxes");
  return mean_ap(per_class);
}

std::vector<ReportRow> run_detect_eval(const DatasetManifest& manifest, const DehazerParams& aod,
                                       const DehazerParams& aodx, const DetectorPair& detectors, const RunConfig& cfg,
                                       const DatasetManifest* ood) {
  const int n = static_cast<int>(manifest.split(Split::test).size());
  std::vector<ReportRow> rows;
  for (PipelineMode mode : {PipelineMode::baseline_detect_only, PipelineMode::global_dehaze, PipelineMode::gaze_dehaze}) {
    for (Condition cond : {Condition::clear, Condition::foggy}) {
      ReportRow row;
      row.table = "detect";
      row.variant = mode_name(mode);
      row.condition = cond == Condition::clear ? "clear" : "foggy";
      row.map = pipeline_map(manifest, cond, mode, aod, aodx, detectors, cfg);
      row.images = n;
      rows.push_back(std::move(row));
    }
  }
  if (ood != nullptr) {
    const int m = static_cast<int>(ood->split(Split::test).size());
    for (PipelineMode mode :
         {PipelineMode::baseline_detect_only, PipelineMode::global_dehaze, PipelineMode::gaze_dehaze}) {
      ReportRow row;
      row.table = "ood";
      row.variant = mode_name(mode);
      row.condition = "foggy";
      row.map = pipeline_map(*ood, Condition::foggy, mode, aod, aodx, detectors, cfg);
      row.images = m;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace pp
