#include "pp/config.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "pp/error.hpp"

namespace pp {

namespace {

using nlohmann::json;

// Reads the keys of one section, rejecting any key no reader asked for.
class Section {
 public:
  Section(const json& root, const char* name) : name_(name) {
    if (root.contains(name)) {
      node_ = &root.at(name);
      if (!node_->is_object()) throw ParseError(std::string("config: section '") + name + "' must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    known_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return;
    try {
      out = node_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("config: ") + name_ + "." + key + ": " + e.what());
    }
  }

  const json* raw(const char* key) {
    known_.insert(key);
    if (node_ == nullptr || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

  void finish() const {
    if (node_ == nullptr) return;
    for (const auto& [key, value] : node_->items()) {
      if (!known_.count(key)) throw ParseError("config: unknown key '" + name_ + "." + key + "'");
    }
  }

 private:
  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> known_;
};

const std::set<std::string> kSections{"scene",    "haze",     "dataset", "train", "pipeline",
                                      "haze_index", "detector", "match",   "ssim",  "clear_pair_fraction"};

std::string window_name(SsimWindow w) { return w == SsimWindow::global ? "global" : "gaussian11"; }

SsimWindow parse_window(const std::string& s) {
  if (s == "global") return SsimWindow::global;
  if (s == "gaussian11") return SsimWindow::gaussian11;
  throw ParseError("config: ssim.window must be 'global' or 'gaussian11'");
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw ParseError("config: top level must be an object");
  for (const auto& [key, value] : root.items()) {
    if (!kSections.count(key)) throw ParseError("config: unknown section '" + key + "'");
  }

  RunConfig cfg;
  {
    Section s(root, "scene");
    auto& v = cfg.scene;
    s.read("width", v.width);
    s.read("height", v.height);
    s.read("min_objects", v.min_objects);
    s.read("max_objects", v.max_objects);
    s.read("object_size_min", v.object_size_min);
    s.read("object_size_max", v.object_size_max);
    s.read("beta_min", v.beta_min);
    s.read("beta_max", v.beta_max);
    s.read("airlight_min", v.airlight_min);
    s.read("airlight_max", v.airlight_max);
    s.read("depth_near", v.depth_near);
    s.read("depth_far", v.depth_far);
    s.finish();
  }
  {
    Section s(root, "haze");
    if (const json* beta = s.raw("beta"); beta && !beta->is_null()) cfg.haze.beta = beta->get<double>();
    if (const json* a = s.raw("airlight"); a && !a->is_null()) {
      if (a->is_number()) {
        const double g = a->get<double>();
        cfg.haze.airlight = std::array<double, 3>{g, g, g};
      } else {
        cfg.haze.airlight = a->get<std::array<double, 3>>();
      }
    }
    s.finish();
  }
  {
    Section s(root, "dataset");
    s.read("train", cfg.dataset.train);
    s.read("val", cfg.dataset.val);
    s.read("test", cfg.dataset.test);
    s.finish();
  }
  {
    Section s(root, "train");
    auto& v = cfg.train;
    s.read("epochs", v.epochs);
    s.read("batch_size", v.batch_size);
    s.read("learning_rate", v.learning_rate);
    s.read("seed", v.seed);
    s.read("loss", v.loss);
    s.read("lambda_min", v.lambda_min);
    s.read("focus_weight", v.focus_weight);
    s.finish();
  }
  {
    Section s(root, "pipeline");
    auto& v = cfg.pipeline;
    s.read("pre_conf_threshold", v.pre_conf_threshold);
    s.read("roi_margin", v.roi_margin);
    s.read("roi_feather", v.roi_feather);
    s.read("lambda_min", v.lambda_min);
    s.read("haze_threshold", v.haze_threshold);
    s.read("gate_enabled", v.gate_enabled);
    std::string mode = mode_name(v.mode);
    s.read("mode", mode);
    try {
      v.mode = parse_mode(mode);
    } catch (const DomainError& e) {
      throw ParseError(std::string("config: pipeline.mode: ") + e.what());
    }
    s.finish();
  }
  {
    Section s(root, "haze_index");
    auto& v = cfg.pipeline.haze_index;
    s.read("w_contrast", v.w_contrast);
    s.read("w_brightness", v.w_brightness);
    s.read("w_texture", v.w_texture);
    s.read("contrast_norm", v.contrast_norm);
    s.read("texture_norm", v.texture_norm);
    s.finish();
  }
  {
    Section s(root, "detector");
    auto& v = cfg.detector;
    s.read("luma_threshold", v.luma_threshold);
    s.read("min_area", v.min_area);
    s.read("weak_threshold_offset", v.weak_threshold_offset);
    s.read("weak_area_factor", v.weak_area_factor);
    s.finish();
  }
  {
    Section s(root, "match");
    s.read("iou_threshold", cfg.match.iou_threshold);
    s.read("per_class", cfg.match.per_class);
    s.finish();
  }
  {
    Section s(root, "ssim");
    s.read("k1", cfg.ssim.k1);
    s.read("k2", cfg.ssim.k2);
    s.read("dynamic_range", cfg.ssim.dynamic_range);
    std::string window = window_name(cfg.ssim.window);
    s.read("window", window);
    cfg.ssim.window = parse_window(window);
    s.finish();
  }
  if (root.contains("clear_pair_fraction")) cfg.clear_pair_fraction = root.at("clear_pair_fraction").get<double>();
  try {
    validate_config(cfg);
  } catch (const DomainError& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const RunConfig& cfg) {
  json root;
  const auto& sc = cfg.scene;
  root["scene"] = {{"width", sc.width},
                   {"height", sc.height},
                   {"min_objects", sc.min_objects},
                   {"max_objects", sc.max_objects},
                   {"object_size_min", sc.object_size_min},
                   {"object_size_max", sc.object_size_max},
                   {"beta_min", sc.beta_min},
                   {"beta_max", sc.beta_max},
                   {"airlight_min", sc.airlight_min},
                   {"airlight_max", sc.airlight_max},
                   {"depth_near", sc.depth_near},
                   {"depth_far", sc.depth_far}};
  root["haze"] = {{"beta", cfg.haze.beta ? json(*cfg.haze.beta) : json(nullptr)},
                  {"airlight", cfg.haze.airlight ? json(*cfg.haze.airlight) : json(nullptr)}};
  root["dataset"] = {{"train", cfg.dataset.train}, {"val", cfg.dataset.val}, {"test", cfg.dataset.test}};
  const auto& t = cfg.train;
  root["train"] = {{"epochs", t.epochs},         {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
                   {"seed", t.seed},             {"loss", t.loss},             {"lambda_min", t.lambda_min},
                   {"focus_weight", t.focus_weight}};
  const auto& p = cfg.pipeline;
  root["pipeline"] = {{"pre_conf_threshold", p.pre_conf_threshold},
                      {"roi_margin", p.roi_margin},
                      {"roi_feather", p.roi_feather},
                      {"lambda_min", p.lambda_min},
                      {"haze_threshold", p.haze_threshold},
                      {"gate_enabled", p.gate_enabled},
                      {"mode", mode_name(p.mode)}};
  const auto& h = p.haze_index;
  root["haze_index"] = {{"w_contrast", h.w_contrast},
                        {"w_brightness", h.w_brightness},
                        {"w_texture", h.w_texture},
                        {"contrast_norm", h.contrast_norm},
                        {"texture_norm", h.texture_norm}};
  const auto& d = cfg.detector;
  root["detector"] = {{"luma_threshold", d.luma_threshold},
                      {"min_area", d.min_area},
                      {"weak_threshold_offset", d.weak_threshold_offset},
                      {"weak_area_factor", d.weak_area_factor}};
  root["match"] = {{"iou_threshold", cfg.match.iou_threshold}, {"per_class", cfg.match.per_class}};
  root["ssim"] = {{"k1", cfg.ssim.k1},
                  {"k2", cfg.ssim.k2},
                  {"dynamic_range", cfg.ssim.dynamic_range},
                  {"window", window_name(cfg.ssim.window)}};
  root["clear_pair_fraction"] = cfg.clear_pair_fraction;
  return root.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config_to_json(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void validate_config(const RunConfig& cfg) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  const auto& sc = cfg.scene;
  if (sc.width < 1 || sc.height < 1) throw DomainError("scene: width and height must be >= 1");
  if (sc.min_objects < 0 || sc.max_objects < sc.min_objects) throw DomainError("scene: bad object count range");
  if (sc.object_size_min < 1 || sc.object_size_max < sc.object_size_min) throw DomainError("scene: bad object size range");
  if (!(sc.beta_min >= 0.0) || sc.beta_max < sc.beta_min) throw DomainError("scene: bad beta range");
  if (!unit(sc.airlight_min) || !unit(sc.airlight_max) || sc.airlight_max < sc.airlight_min) {
    throw DomainError("scene: bad airlight range");
  }
  if (!(sc.depth_near >= 0.0) || sc.depth_far < sc.depth_near) throw DomainError("scene: bad depth range");
  if (cfg.haze.beta && !(*cfg.haze.beta >= 0.0)) throw DomainError("haze: beta must be >= 0");
  if (cfg.haze.airlight) {
    for (double a : *cfg.haze.airlight) {
      if (!unit(a)) throw DomainError("haze: airlight components must lie in [0, 1]");
    }
  }
  if (cfg.dataset.train < 0 || cfg.dataset.val < 0 || cfg.dataset.test < 0) throw DomainError("dataset: negative count");
  if (cfg.train.epochs < 1 || cfg.train.batch_size < 1) throw DomainError("train: epochs and batch_size must be >= 1");
  if (!(cfg.train.learning_rate > 0.0)) throw DomainError("train: learning_rate must be positive");
  if (!unit(cfg.train.lambda_min)) throw DomainError("train: lambda_min must lie in [0, 1]");
  if (!(cfg.train.focus_weight >= 0.0)) throw DomainError("train: focus_weight must be >= 0");
  if (cfg.train.loss != "mse") throw DomainError("train: loss must be 'mse'");
  const auto& p = cfg.pipeline;
  if (!unit(p.pre_conf_threshold) || !unit(p.lambda_min) || !unit(p.haze_threshold)) {
    throw DomainError("pipeline: thresholds must lie in [0, 1]");
  }
  if (!(p.roi_margin >= 0.0) || !(p.roi_feather >= 0.0)) throw DomainError("pipeline: roi_margin/roi_feather must be >= 0");
  const auto& h = p.haze_index;
  if (!(h.contrast_norm > 0.0) || !(h.texture_norm > 0.0)) throw DomainError("haze_index: normalizers must be positive");
  if (h.w_contrast < 0.0 || h.w_brightness < 0.0 || h.w_texture < 0.0) throw DomainError("haze_index: negative weight");
  if (!unit(cfg.detector.luma_threshold) || cfg.detector.min_area < 1 || cfg.detector.weak_area_factor < 1 ||
      cfg.detector.weak_threshold_offset < 0.0) {
    throw DomainError("detector: bad thresholds");
  }
  if (!(cfg.match.iou_threshold > 0.0 && cfg.match.iou_threshold <= 1.0)) throw DomainError("match: iou_threshold must lie in (0, 1]");
  if (!(cfg.ssim.c1() > 0.0 && cfg.ssim.c2() > 0.0)) throw DomainError("ssim: k1, k2 and dynamic_range must be positive");
  if (!unit(cfg.clear_pair_fraction)) throw DomainError("clear_pair_fraction must lie in [0, 1]");
}

ToyDetectorConfig detector_for(const RunConfig& cfg, DetectorStrength strength) {
  ToyDetectorConfig d = cfg.detector;
  d.strength = strength;
  return d;
}

}  // namespace pp
