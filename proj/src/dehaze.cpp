#include "pp/dehaze.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dehaze_net.hpp"
#include "pp/error.hpp"
#include "pp/rng.hpp"

namespace pp {

namespace net {

namespace {

void check_layer(const std::vector<WeightArray>& arrays, std::size_t index, const LayerSpec& spec) {
  const std::string name = spec.name;
  if (arrays.size() <= 2 * index + 1 || arrays[2 * index].name != name + ".weight" ||
      arrays[2 * index + 1].name != name + ".bias" ||
      arrays[2 * index].values.size() != spec.shape.weight_count() ||
      arrays[2 * index + 1].values.size() != static_cast<std::size_t>(spec.shape.out_channels)) {
    throw DomainError("dehazer parameters: layer " + name + " is missing or has the wrong size");
  }
}

std::span<const double> weights(const std::vector<WeightArray>& arrays, std::size_t layer) {
  return arrays[2 * layer].values;
}

std::span<const double> biases(const std::vector<WeightArray>& arrays, std::size_t layer) {
  return arrays[2 * layer + 1].values;
}

Image conv_layer(const std::vector<WeightArray>& arrays, std::size_t layer, const ConvShape& shape,
                 const Image& in) {
  return conv2d(in, shape, weights(arrays, layer), biases(arrays, layer));
}

}  // namespace

void check_layout(const DehazerParams& params) {
  if (params.k_weights.size() != 2 * kKLayers.size() || params.attn_weights.size() != 2 * kAttnLayers.size()) {
    throw DomainError("dehazer parameters: unexpected number of weight arrays");
  }
  for (std::size_t i = 0; i < kKLayers.size(); ++i) check_layer(params.k_weights, i, kKLayers[i]);
  for (std::size_t i = 0; i < kAttnLayers.size(); ++i) check_layer(params.attn_weights, i, kAttnLayers[i]);
  if (!std::isfinite(params.b)) throw DomainError("dehazer parameters: b must be finite");
}

KCache forward_k(const DehazerParams& params, const Image& foggy) {
  const auto& w = params.k_weights;
  KCache c;
  c.a1 = conv_layer(w, 0, kKLayers[0].shape, foggy);
  relu_inplace(c.a1);
  c.a2 = conv_layer(w, 1, kKLayers[1].shape, c.a1);
  relu_inplace(c.a2);
  c.c1 = concat_channels({&c.a1, &c.a2});
  c.a3 = conv_layer(w, 2, kKLayers[2].shape, c.c1);
  relu_inplace(c.a3);
  c.c2 = concat_channels({&c.a2, &c.a3});
  c.a4 = conv_layer(w, 3, kKLayers[3].shape, c.c2);
  relu_inplace(c.a4);
  c.c3 = concat_channels({&c.a1, &c.a2, &c.a3, &c.a4});
  c.k = conv_layer(w, 4, kKLayers[4].shape, c.c3);
  return c;
}

AttnCache forward_attention(const DehazerParams& params, const Image& k, const Image& roi) {
  const auto& w = params.attn_weights;
  AttnCache c;
  c.input = concat_channels({&k, &roi});
  c.hidden = conv_layer(w, 0, kAttnLayers[0].shape, c.input);
  relu_inplace(c.hidden);
  c.logit = conv_layer(w, 1, kAttnLayers[1].shape, c.hidden);
  c.m = c.logit;
  for (double& v : c.m.values()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return c;
}

Image modulate_k(const Image& k, const Image& m, double lambda_min) {
  Image out(k.height(), k.width(), k.channels());
  auto mp = m.plane(0);
  for (int c = 0; c < k.channels(); ++c) {
    auto src = k.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const double floor_m = lambda_min + (1.0 - lambda_min) * mp[i];
      dst[i] = floor_m * src[i] + (1.0 - floor_m);
    }
  }
  return out;
}

Image reconstruct(const Image& k, const Image& foggy, double b) {
  Image out(foggy.height(), foggy.width(), foggy.channels());
  for (int c = 0; c < foggy.channels(); ++c) {
    auto kp = k.plane(k.channels() == 1 ? 0 : c);
    auto src = foggy.plane(c);
    auto dst = out.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = kp[i] * src[i] - kp[i] + b;
  }
  return out;
}

}  // namespace net

std::size_t DehazerParams::parameter_count() const {
  std::size_t n = 1;  // b
  for (const auto& a : k_weights) n += a.values.size();
  for (const auto& a : attn_weights) n += a.values.size();
  return n;
}

namespace {

template <std::size_t N>
std::vector<WeightArray> make_layers(const std::array<net::LayerSpec, N>& specs) {
  std::vector<WeightArray> out;
  for (const auto& s : specs) {
    const auto& sh = s.shape;
    out.push_back({std::string(s.name) + ".weight",
                   {sh.out_channels, sh.in_channels, sh.kernel, sh.kernel},
                   std::vector<double>(sh.weight_count(), 0.0)});
    out.push_back({std::string(s.name) + ".bias", {sh.out_channels}, std::vector<double>(sh.out_channels, 0.0)});
  }
  return out;
}

void fill_uniform(Rng& rng, std::vector<double>& values, double scale) {
  for (double& v : values) v = rng.uniform(-scale, scale);
}

}  // namespace

DehazerParams identity_dehazer() {
  DehazerParams p;
  p.k_weights = make_layers(net::kKLayers);
  p.attn_weights = make_layers(net::kAttnLayers);
  for (double& v : p.k_weights.back().values) v = 1.0;
  p.b = 1.0;
  return p;
}

DehazerParams init_dehazer(std::uint64_t seed) {
  DehazerParams p = identity_dehazer();
  Rng rng(seed);
  auto init_layers = [&](auto& arrays, const auto& specs, double last_scale) {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& sh = specs[i].shape;
      const double fan_in = static_cast<double>(sh.in_channels * sh.kernel * sh.kernel);
      const bool last = i + 1 == specs.size();
      fill_uniform(rng, arrays[2 * i].values, (last ? last_scale : 1.0) * std::sqrt(3.0 / fan_in));
    }
  };
  init_layers(p.k_weights, net::kKLayers, 0.1);
  init_layers(p.attn_weights, net::kAttnLayers, 0.5);
  return p;
}

Image estimate_k(const DehazerParams& params, const Image& foggy) {
  if (foggy.channels() != 3) throw DomainError("estimate_k: input must be an RGB image");
  net::check_layout(params);
  return net::forward_k(params, foggy).k;
}

Image apply_k(const Image& k, const Image& foggy, double b) {
  if (!k.same_extent(foggy) || (k.channels() != 1 && k.channels() != foggy.channels())) {
    throw DomainError("apply_k: K map does not match the image");
  }
  return clamp_unit(net::reconstruct(k, foggy, b));
}

Image dehaze_aod(const DehazerParams& params, const Image& foggy) {
  require_valid_image(foggy, "dehaze_aod");
  return apply_k(estimate_k(params, foggy), foggy, params.b);
}

namespace {

void gaussian_blur_inplace(Image& img, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += taps[i + radius];
  }
  for (double& t : taps) t /= total;
  const int h = img.height();
  const int w = img.width();
  Image tmp(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += taps[i + radius] * img.at(0, y, std::clamp(x + i, 0, w - 1));
      tmp.at(0, y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += taps[i + radius] * tmp.at(0, std::clamp(y + i, 0, h - 1), x);
      img.at(0, y, x) = acc;
    }
  }
}

}  // namespace

RoiMask rasterize_rois(std::span<const Detection> boxes, int height, int width, double margin, double feather) {
  if (!(margin >= 0.0) || !(feather >= 0.0)) throw DomainError("rasterize_rois: margin and feather must be >= 0");
  RoiMask roi{Image(height, width, 1, 0.0)};
  for (const Detection& d : boxes) {
    const double grow = margin * std::max(d.box.width(), d.box.height());
    const double x0 = std::max(0.0, d.box.x0 - grow);
    const double y0 = std::max(0.0, d.box.y0 - grow);
    const double x1 = std::min(static_cast<double>(width), d.box.x1 + grow);
    const double y1 = std::min(static_cast<double>(height), d.box.y1 + grow);
    if (!(x0 < x1 && y0 < y1)) continue;
    const double value = std::clamp(d.confidence, 0.0, 1.0);
    // Pixel (x, y) is covered when its centre lies in [x0, x1) x [y0, y1).
    const int px0 = static_cast<int>(std::ceil(x0 - 0.5));
    const int py0 = static_cast<int>(std::ceil(y0 - 0.5));
    const int px1 = static_cast<int>(std::ceil(x1 - 0.5));
    const int py1 = static_cast<int>(std::ceil(y1 - 0.5));
    for (int y = std::max(py0, 0); y < std::min(py1, height); ++y) {
      for (int x = std::max(px0, 0); x < std::min(px1, width); ++x) {
        double& m = roi.mask.at(0, y, x);
        m = std::max(m, value);
      }
    }
  }
  if (feather > 0.0) gaussian_blur_inplace(roi.mask, feather);
  roi.mask = clamp_unit(std::move(roi.mask));
  return roi;
}

std::vector<Detection> boxes_as_detections(std::span<const GroundTruthBox> boxes) {
  std::vector<Detection> out;
  out.reserve(boxes.size());
  for (const auto& g : boxes) out.push_back({g.cls, g.box, 1.0});
  return out;
}

AodxOutput forward_aodx_detailed(const DehazerParams& params, const Image& foggy, const RoiMask& roi,
                                 double lambda_min) {
  require_valid_image(foggy, "forward_aodx");
  if (foggy.channels() != 3) throw DomainError("forward_aodx: input must be an RGB image");
  if (roi.mask.channels() != 1 || !roi.mask.same_extent(foggy)) {
    throw DomainError("forward_aodx: ROI mask must be one channel with the image's extent");
  }
  if (!(lambda_min >= 0.0 && lambda_min <= 1.0)) throw DomainError("forward_aodx: lambda_min must be in [0, 1]");
  net::check_layout(params);
  AodxOutput out;
  out.k = net::forward_k(params, foggy).k;
  out.attention = net::forward_attention(params, out.k, roi.mask).m;
  out.dehazed = apply_k(net::modulate_k(out.k, out.attention, lambda_min), foggy, params.b);
  return out;
}

Image forward_aodx(const DehazerParams& params, const Image& foggy, const RoiMask& roi, double lambda_min) {
  return forward_aodx_detailed(params, foggy, roi, lambda_min).dehazed;
}

}  // namespace pp
