#include "pp/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "pp/error.hpp"

namespace pp {

double mse(const Image& ref, const Image& test) {
  if (!ref.same_shape(test) || ref.empty()) throw DomainError("mse: image shapes differ");
  auto a = ref.values();
  auto b = test.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

double psnr(const Image& ref, const Image& test, double max_value) {
  const double err = mse(ref, test);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / err);
}

namespace {

double ssim_formula(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
  return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

double ssim_global(std::span<const double> x, std::span<const double> y, const SsimParams& p) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cxy += dx * dy;
  }
  return ssim_formula(mx, my, vx / n, vy / n, cxy / n, p.c1(), p.c2());
}

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> taps{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    taps[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

// Separable Gaussian filter evaluated at every position where the window fits.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto taps = gaussian_taps();
  const int oh = h - kWindow + 1;
  const int ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

double ssim_gaussian(const Image& ref, const Image& test, const SsimParams& p) {
  const int h = ref.height();
  const int w = ref.width();
  if (h < kWindow || w < kWindow) throw DomainError("ssim: gaussian11 window needs images of at least 11x11");
  auto x = ref.plane(0);
  auto y = test.plane(0);
  std::vector<double> xs(x.begin(), x.end()), ys(y.begin(), y.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(xs, h, w);
  const auto my = filter_valid(ys, h, w);
  const auto exx = filter_valid(xx, h, w);
  const auto eyy = filter_valid(yy, h, w);
  const auto exy = filter_valid(xy, h, w);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = exx[i] - mx[i] * mx[i];
    const double vy = eyy[i] - my[i] * my[i];
    const double cxy = exy[i] - mx[i] * my[i];
    total += ssim_formula(mx[i], my[i], vx, vy, cxy, p.c1(), p.c2());
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace

double ssim(const Image& ref, const Image& test, const SsimParams& params) {
  if (!ref.same_shape(test) || ref.empty()) throw DomainError("ssim: image shapes differ");
  if (ref.channels() != 1) throw DomainError("ssim: expects single-channel images (convert with to_luma)");
  if (!(params.c1() > 0.0 && params.c2() > 0.0)) throw DomainError("ssim: c1 and c2 must be positive");
  if (params.window == SsimWindow::global) return ssim_global(ref.plane(0), test.plane(0), params);
  return ssim_gaussian(ref, test, params);
}

double iou(const Box& a, const Box& b) {
  if (!(a.area() > 0.0) || !(b.area() > 0.0)) throw DomainError("iou: boxes must have positive area");
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

double average_precision(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                         const MatchConfig& cfg) {
  ImageDetections one{{dets.begin(), dets.end()}, {gts.begin(), gts.end()}};
  return average_precision(std::span<const ImageDetections>(&one, 1), cfg);
}

double average_precision(std::span<const ImageDetections> images, const MatchConfig& cfg) {
  if (!(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0)) {
    throw DomainError("average_precision: IoU threshold must be in (0, 1]");
  }
  struct Ranked {
    std::size_t image;
    const Detection* det;
  };
  std::vector<Ranked> ranked;
  std::size_t total_gt = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    total_gt += images[i].ground_truth.size();
    for (const Detection& d : images[i].detections) ranked.push_back({i, &d});
  }
  if (total_gt == 0) return ranked.empty() ? 1.0 : 0.0;

  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.det->confidence > b.det->confidence; });

  std::vector<std::vector<bool>> taken(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) taken[i].assign(images[i].ground_truth.size(), false);

  // Extended precision keeps the result correctly rounded for small
  // rankings, e.g. (1 + 2/3) / 2 == 5/6.
  long double precision_sum = 0.0L;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const auto& gts = images[ranked[k].image].ground_truth;
    auto& used = taken[ranked[k].image];
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j]) continue;
      if (cfg.per_class && gts[j].cls != ranked[k].det->cls) continue;
      const double o = iou(ranked[k].det->box, gts[j].box);
      if (o >= cfg.iou_threshold && o > best) {
        best = o;
        best_j = j;
      }
    }
    if (best_j == gts.size()) continue;
    used[best_j] = true;
    ++hits;
    precision_sum += static_cast<long double>(hits) / static_cast<long double>(k + 1);
  }
  return static_cast<double>(precision_sum / static_cast<long double>(total_gt));
}

std::vector<ClassAp> per_class_average_precision(std::span<const ImageDetections> images, const MatchConfig& cfg) {
  if (!cfg.per_class) {
    bool any_gt = std::any_of(images.begin(), images.end(), [](const auto& im) { return !im.ground_truth.empty(); });
    if (!any_gt) return {};
    return {{"*", average_precision(images, cfg)}};
  }
  std::map<std::string, std::vector<ImageDetections>> by_class;
  for (const auto& im : images) {
    for (const auto& g : im.ground_truth) by_class.try_emplace(g.cls);
  }
  for (auto& [cls, parts] : by_class) {
    parts.resize(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      for (const auto& d : images[i].detections) {
        if (d.cls == cls) parts[i].detections.push_back(d);
      }
      for (const auto& g : images[i].ground_truth) {
        if (g.cls == cls) parts[i].ground_truth.push_back(g);
      }
    }
  }
  std::vector<ClassAp> out;
  for (const auto& [cls, parts] : by_class) out.push_back({cls, average_precision(parts, cfg)});
  return out;
}

double mean_ap(std::span<const ClassAp> per_class) {
  if (per_class.empty()) throw DomainError("mean_ap: no classes with ground truth");
  double total = 0.0;
  for (const auto& c : per_class) total += c.ap;
  return total / static_cast<double>(per_class.size());
}

double dataset_map(std::span<const ImageDetections> images, const MatchConfig& cfg) {
  const auto per_class = per_class_average_precision(images, cfg);
  return mean_ap(per_class);
}

}  // namespace pp
