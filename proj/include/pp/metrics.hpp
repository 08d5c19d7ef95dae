#pragma once

#include <span>
#include <string>
#include <vector>

#include "pp/box.hpp"
#include "pp/image.hpp"

namespace pp {

// ---------------------------------------------------------------------------
// Pixel fidelity

/// Mean over all pixels and channels of (ref - test)^2.
double mse(const Image& ref, const Image& test);

/// 10 log10(max_value^2 / MSE) in dB; +infinity when the images are identical.
double psnr(const Image& ref, const Image& test, double max_value = 1.0);

enum class SsimWindow { global, gaussian11 };

struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;  // L: 1 for [0, 1] pixels, 255 for bytes
  SsimWindow window = SsimWindow::gaussian11;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Structural similarity of two single-channel images.
///
/// global: one evaluation over whole-image statistics (population variance
/// and covariance). gaussian11: per-position statistics under an 11x11
/// Gaussian window with sigma 1.5, averaged over every position where the
/// window fits inside the image; needs both sides >= 11.
double ssim(const Image& ref, const Image& test, const SsimParams& params = {});

// ---------------------------------------------------------------------------
// Detection

/// Intersection over union; throws DomainError for a zero-area box.
double iou(const Box& a, const Box& b);

struct MatchConfig {
  double iou_threshold = 0.5;
  bool per_class = true;
};

/// Detections and annotations of one image.
struct ImageDetections {
  std::vector<Detection> detections;
  std::vector<GroundTruthBox> ground_truth;
};

/// Average precision of a ranked detection list for a single class.
///
/// Detections are ranked by confidence (descending, ties keep input order).
/// Walking down the ranking, each detection claims the unmatched ground truth
/// it overlaps most, provided IoU >= threshold (ties go to the earlier ground
/// truth). AP = sum_k P(k) rel(k) / |ground truth|. With no ground truth AP
/// is 1 if there are also no detections and 0 otherwise. With per_class on
/// a detection may only claim ground truth of its own class.
double average_precision(std::span<const Detection> dets, std::span<const GroundTruthBox> gts,
                         const MatchConfig& cfg = {});

/// Dataset form: one ranking across all images, matching within each image.
double average_precision(std::span<const ImageDetections> images, const MatchConfig& cfg = {});

struct ClassAp {
  std::string cls;
  double ap = 0.0;
};

/// AP per class, for every class that has at least one ground truth box in
/// the dataset, sorted by class name. With per_class off a single
/// class-agnostic entry named "*" is returned.
std::vector<ClassAp> per_class_average_precision(std::span<const ImageDetections> images,
                                                 const MatchConfig& cfg = {});

/// Unweighted mean of the per-class APs; throws DomainError when empty.
double mean_ap(std::span<const ClassAp> per_class);

/// mean_ap(per_class_average_precision(images, cfg)).
double dataset_map(std::span<const ImageDetections> images, const MatchConfig& cfg = {});

}  // namespace pp
