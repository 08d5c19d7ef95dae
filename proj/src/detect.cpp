#include "pp/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

#include "pp/error.hpp"
#include "pp/scatter.hpp"

namespace pp {

namespace {

struct Component {
  std::vector<int> pixels;  // linear indices
};

// 4-connected components of the pixels for which `inside` holds, in raster
// order of their first pixel.
template <typename Pred>
std::vector<Component> label_components(int h, int w, const std::vector<int>& candidates, Pred inside) {
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  std::vector<Component> out;
  std::vector<int> stack;
  for (int seed : candidates) {
    if (label[seed] != -1 || !inside(seed)) continue;
    const int id = static_cast<int>(out.size());
    out.emplace_back();
    label[seed] = id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      out[id].pixels.push_back(p);
      const int y = p / w;
      const int x = p % w;
      const int nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : nbrs) {
        if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
        const int q = n[0] * w + n[1];
        if (label[q] == -1 && inside(q)) {
          label[q] = id;
          stack.push_back(q);
        }
      }
    }
  }
  return out;
}

Detection describe(const Image& img, std::span<const double> luma, const std::vector<int>& pixels) {
  const int w = img.width();
  int x0 = w, y0 = img.height(), x1 = -1, y1 = -1;
  double sum_luma = 0.0;
  double rgb[3] = {0.0, 0.0, 0.0};
  for (int p : pixels) {
    const int y = p / w;
    const int x = p % w;
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
    sum_luma += luma[p];
    for (int c = 0; c < 3; ++c) rgb[c] += img.plane(img.channels() == 3 ? c : 0)[p];
  }
  const double n = static_cast<double>(pixels.size());
  Detection det;
  det.cls = classify_hue(rgb[0] / n, rgb[1] / n, rgb[2] / n);
  det.box = Box{double(x0), double(y0), double(x1 + 1), double(y1 + 1)};
  det.confidence = std::clamp(sum_luma / n, 0.0, 1.0);
  return det;
}

}  // namespace

std::string classify_hue(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  if (mx - mn <= 1e-12) return kSceneClasses[0];
  double hue = 0.0;
  if (mx == r) {
    hue = 60.0 * std::fmod((g - b) / (mx - mn), 6.0);
  } else if (mx == g) {
    hue = 60.0 * ((b - r) / (mx - mn) + 2.0);
  } else {
    hue = 60.0 * ((r - g) / (mx - mn) + 4.0);
  }
  if (hue < 0.0) hue += 360.0;
  // Buckets of 120 degrees centred on red, green and blue.
  if (hue >= 300.0 || hue < 60.0) return kSceneClasses[0];
  if (hue < 180.0) return kSceneClasses[1];
  return kSceneClasses[2];
}

std::vector<Detection> toy_detect(const Image& img, const ToyDetectorConfig& cfg) {
  require_valid_image(img, "toy_detect");
  const Image luma_img = to_luma(img);
  auto luma = luma_img.plane(0);
  const int h = img.height();
  const int w = img.width();

  std::vector<int> all(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const auto strong = label_components(h, w, all, [&](int p) { return luma[p] >= cfg.luma_threshold; });

  std::vector<Detection> dets;
  for (const Component& comp : strong) {
    if (static_cast<int>(comp.pixels.size()) < cfg.min_area) continue;
    if (cfg.strength == DetectorStrength::strong) {
      dets.push_back(describe(img, luma, comp.pixels));
      continue;
    }
    const double tau = cfg.luma_threshold + cfg.weak_threshold_offset;
    std::vector<int> core;
    for (int p : comp.pixels) {
      if (luma[p] >= tau) core.push_back(p);
    }
    if (static_cast<int>(core.size()) < cfg.min_area * cfg.weak_area_factor) continue;
    dets.push_back(describe(img, luma, core));
  }
  return dets;
}

std::string format_detection_record(const std::string& image_id, const Detection& det) {
  nlohmann::ordered_json rec;
  rec["image_id"] = image_id;
  rec["cls"] = det.cls;
  rec["x0"] = det.box.x0;
  rec["y0"] = det.box.y0;
  rec["x1"] = det.box.x1;
  rec["y1"] = det.box.y1;
  rec["confidence"] = det.confidence;
  return rec.dump();
}

void save_detections(const std::string& image_id, const std::vector<Detection>& dets,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Detection& d : dets) out << format_detection_record(image_id, d) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

DetectionFile load_detections(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  DetectionFile file;
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto rec = nlohmann::json::parse(line);
      const std::string image_id = rec.at("image_id").get<std::string>();
      Detection d;
      d.cls = rec.at("cls").get<std::string>();
      d.box = Box{rec.at("x0").get<double>(), rec.at("y0").get<double>(), rec.at("x1").get<double>(),
                  rec.at("y1").get<double>()};
      d.confidence = rec.at("confidence").get<double>();
      if (rec.size() != 7) throw ParseError("unexpected extra keys");
      if (!(d.box.x0 < d.box.x1 && d.box.y0 < d.box.y1)) throw ParseError("box must satisfy x0 < x1 and y0 < y1");
      if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw ParseError("confidence outside [0, 1]");
      if (first) {
        file.image_id = image_id;
        first = false;
      } else if (image_id != file.image_id) {
        throw ParseError("image_id '" + image_id + "' differs from '" + file.image_id + "'");
      }
      file.detections.push_back(std::move(d));
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return file;
}

}  // namespace pp
