#include "pp/scatter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pp/error.hpp"
#include "pp/rng.hpp"

namespace pp {

Image transmission_from_depth(const DepthMap& depth, double beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("transmission_from_depth: beta must be finite and >= 0");
  Image t(depth.height(), depth.width(), 1);
  auto src = depth.values();
  auto dst = t.plane(0);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::exp(-beta * src[i]);
  return t;
}

namespace {

void check_haze_inputs(const Image& img, const Image& transmission, const char* what) {
  if (transmission.channels() != 1 || !transmission.same_extent(img)) {
    throw DomainError(std::string(what) + ": transmission must be one channel with the image's extent");
  }
}

}  // namespace

Image apply_haze(const Image& clear, const Image& transmission, const HazeParams& haze) {
  check_haze_inputs(clear, transmission, "apply_haze");
  Image out(clear.height(), clear.width(), clear.channels());
  auto t = transmission.plane(0);
  for (int c = 0; c < clear.channels(); ++c) {
    const double a = haze.airlight[c];
    auto src = clear.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp(src[i] * t[i] + a * (1.0 - t[i]), 0.0, 1.0);
  }
  return out;
}

Image ideal_k(const Image& foggy, const Image& transmission, const HazeParams& haze, double b, double epsilon) {
  check_haze_inputs(foggy, transmission, "ideal_k");
  auto t = transmission.plane(0);
  if (std::any_of(t.begin(), t.end(), [](double v) { return !(v > 0.0); })) {
    throw DomainError("ideal_k: transmission must be strictly positive");
  }
  Image k(foggy.height(), foggy.width(), foggy.channels());
  for (int c = 0; c < foggy.channels(); ++c) {
    const double a = haze.airlight[c];
    auto src = foggy.plane(c);
    auto dst = k.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double denom = src[i] - 1.0;
      if (std::abs(denom) <= epsilon) denom = denom > 0.0 ? epsilon : -epsilon;
      dst[i] = ((src[i] - a) / t[i] + (a - b)) / denom;
    }
  }
  return k;
}

Image ideal_k_unguarded_mask(const Image& foggy, double epsilon) {
  Image mask(foggy.height(), foggy.width(), 1, 1.0);
  for (int c = 0; c < foggy.channels(); ++c) {
    auto src = foggy.plane(c);
    auto dst = mask.plane(0);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (std::abs(src[i] - 1.0) <= epsilon) dst[i] = 0.0;
    }
  }
  return mask;
}

std::array<double, 3> class_colour(const std::string& cls) {
  // Hues near 10, 115 and 220 degrees. Luma stays below the dimmest airlight
  // so fog never darkens an object's luma.
  if (cls == "car") return {0.95, 0.50, 0.40};
  if (cls == "person") return {0.55, 0.95, 0.50};
  if (cls == "sign") return {0.45, 0.60, 0.95};
  throw DomainError("unknown scene class '" + cls + "'");
}

ObjectShape class_shape(const std::string& cls) {
  return cls == "person" ? ObjectShape::ellipse : ObjectShape::rectangle;
}

namespace {

double ground_depth(const SceneSpec& spec, double row_center) {
  return spec.depth_far - (spec.depth_far - spec.depth_near) * row_center / spec.height;
}

bool covers(const SceneObject& obj, ObjectShape shape, int x, int y) {
  if (x < obj.x0 || x >= obj.x1 || y < obj.y0 || y >= obj.y1) return false;
  if (shape == ObjectShape::rectangle) return true;
  const double rx = 0.5 * (obj.x1 - obj.x0);
  const double ry = 0.5 * (obj.y1 - obj.y0);
  const double dx = (x + 0.5 - obj.x0 - rx) / rx;
  const double dy = (y + 0.5 - obj.y0 - ry) / ry;
  return dx * dx + dy * dy <= 1.0;
}

void check_spec(const SceneSpec& spec) {
  if (spec.width < 1 || spec.height < 1) throw DomainError("scene spec: image size must be positive");
  if (spec.min_objects < 0 || spec.max_objects < spec.min_objects) {
    throw DomainError("scene spec: object count range is empty");
  }
  if (spec.object_size_min < 1 || spec.object_size_max < spec.object_size_min) {
    throw DomainError("scene spec: object size range is empty");
  }
  if (!(spec.beta_min >= 0.0) || spec.beta_max < spec.beta_min) throw DomainError("scene spec: bad beta range");
  if (!(spec.airlight_min >= 0.0) || spec.airlight_max > 1.0 || spec.airlight_max < spec.airlight_min) {
    throw DomainError("scene spec: bad airlight range");
  }
  if (!(spec.depth_near >= 0.0) || spec.depth_far < spec.depth_near) throw DomainError("scene spec: bad depth range");
}

}  // namespace

SceneSample render_scene(const SceneSpec& spec, const std::vector<SceneObject>& objects, const HazeParams& haze,
                         std::uint64_t background_seed) {
  check_spec(spec);
  const int w = spec.width;
  const int h = spec.height;
  SceneSample sample;
  sample.haze = haze;
  sample.clear = Image(h, w, 3);
  sample.depth = DepthMap(h, w);

  Rng rng(background_seed);
  const double base = rng.uniform(0.08, 0.18);
  std::array<double, 3> tint{};
  for (double& v : tint) v = rng.uniform(-0.02, 0.02);
  const double slope = rng.uniform(-0.04, 0.04);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double level = base + slope * (x + 0.5) / w + rng.uniform(-0.04, 0.04);
      for (int c = 0; c < 3; ++c) sample.clear.at(c, y, x) = std::clamp(level + tint[c], 0.0, 1.0);
      sample.depth.at(y, x) = ground_depth(spec, y + 0.5);
    }
  }

  for (const SceneObject& obj : objects) {
    const auto colour = class_colour(obj.cls);
    const ObjectShape shape = class_shape(obj.cls);
    int bx0 = w, by0 = h, bx1 = -1, by1 = -1;
    for (int y = std::max(obj.y0, 0); y < std::min(obj.y1, h); ++y) {
      for (int x = std::max(obj.x0, 0); x < std::min(obj.x1, w); ++x) {
        if (!covers(obj, shape, x, y)) continue;
        for (int c = 0; c < 3; ++c) sample.clear.at(c, y, x) = std::clamp(colour[c] * obj.brightness, 0.0, 1.0);
        sample.depth.at(y, x) = obj.depth;
        bx0 = std::min(bx0, x);
        by0 = std::min(by0, y);
        bx1 = std::max(bx1, x);
        by1 = std::max(by1, y);
      }
    }
    if (bx1 < 0) continue;
    sample.boxes.push_back({obj.cls, Box{double(bx0), double(by0), double(bx1 + 1), double(by1 + 1)}});
  }
  return sample;
}

SceneSample synth_scene(std::uint64_t seed, const SceneSpec& spec) {
  check_spec(spec);
  Rng rng(seed);
  HazeParams haze;
  haze.beta = rng.uniform(spec.beta_min, spec.beta_max);
  const double grey = rng.uniform(spec.airlight_min, spec.airlight_max);
  for (double& a : haze.airlight) a = std::clamp(grey + rng.uniform(-0.015, 0.015), 0.0, 1.0);

  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  constexpr int kGap = 2;  // keeps connected components of neighbouring objects apart
  constexpr int kAttempts = 64;
  std::vector<SceneObject> objects;
  for (int i = 0; i < count; ++i) {
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      SceneObject obj;
      obj.cls = kSceneClasses[rng.uniform_int(0, static_cast<int>(kSceneClasses.size()) - 1)];
      const int ow = std::min(rng.uniform_int(spec.object_size_min, spec.object_size_max), spec.width);
      const int oh = std::min(rng.uniform_int(spec.object_size_min, spec.object_size_max), spec.height);
      obj.x0 = rng.uniform_int(0, spec.width - ow);
      obj.y0 = rng.uniform_int(0, spec.height - oh);
      obj.x1 = obj.x0 + ow;
      obj.y1 = obj.y0 + oh;
      obj.brightness = rng.uniform(0.9, 1.0);
      obj.depth = ground_depth(spec, obj.y1 - 0.5);
      const bool clash = std::any_of(objects.begin(), objects.end(), [&](const SceneObject& o) {
        return obj.x0 < o.x1 + kGap && o.x0 < obj.x1 + kGap && obj.y0 < o.y1 + kGap && o.y0 < obj.y1 + kGap;
      });
      if (!clash) {
        objects.push_back(obj);
        break;
      }
    }
  }

  SceneSample sample = render_scene(spec, objects, haze, rng.next());
  sample.id = "scene-" + std::to_string(seed);
  return sample;
}

HazeStatistics haze_statistics(const Image& img) {
  require_valid_image(img, "haze_index");
  const Image luma = to_luma(img);
  const int h = luma.height();
  const int w = luma.width();
  auto v = luma.plane(0);
  const double n = static_cast<double>(v.size());

  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= n;

  // 4-neighbour Laplacian with replicated borders.
  auto px = [&](int y, int x) { return luma.at(0, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };
  double lap_mean = 0.0;
  double lap_sq = 0.0;
  std::vector<double> lap(v.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double r = px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1) - 4.0 * px(y, x);
      lap[static_cast<std::size_t>(y) * w + x] = r;
      lap_mean += r;
    }
  }
  lap_mean /= n;
  for (double r : lap) lap_sq += (r - lap_mean) * (r - lap_mean);

  return {std::sqrt(var), mean, lap_sq / n};
}

double haze_index(const Image& img, const HazeIndexParams& params) {
  const HazeStatistics s = haze_statistics(img);
  const double flatness = 1.0 - std::min(s.contrast / params.contrast_norm, 1.0);
  const double smoothness = 1.0 - std::min(s.texture / params.texture_norm, 1.0);
  const double value = params.w_contrast * flatness + params.w_brightness * s.brightness + params.w_texture * smoothness;
  return std::clamp(value, 0.0, 1.0);
}

}  // namespace pp
