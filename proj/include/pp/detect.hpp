#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pp/box.hpp"
#include "pp/image.hpp"

namespace pp {

/// Pipeline slot a detector fills: the cheap ROI proposer or the accurate final stage.
enum class DetectorRole { preliminary, final };

enum class DetectorStrength { weak, strong };

/// Threshold-and-label detector for bright objects on a dark background.
///
/// The strong tier keeps every 4-connected component of luma >= luma_threshold
/// whose area is at least min_area. The weak tier refines each strong
/// component by a stricter threshold (luma_threshold + weak_threshold_offset)
/// and area (min_area * weak_area_factor), so every weak detection descends
/// from a distinct strong component and the weak tier never reports more.
struct ToyDetectorConfig {
  double luma_threshold = 0.5;
  int min_area = 12;
  DetectorStrength strength = DetectorStrength::strong;
  double weak_threshold_offset = 0.1;
  int weak_area_factor = 2;
};

using DetectorFn = std::function<std::vector<Detection>(const Image&)>;

/// Confidence is the component's mean luma; the class comes from the
/// component's mean hue bucketed over the scene vocabulary.
std::vector<Detection> toy_detect(const Image& img, const ToyDetectorConfig& cfg);

/// Hue bucket -> class name. Achromatic colours fall into the first bucket.
std::string classify_hue(double r, double g, double b);

/// One image's detections as stored in the exchange format.
struct DetectionFile {
  std::string image_id;
  std::vector<Detection> detections;
};

/// Newline-delimited JSON records, one per detection, with keys in the order
/// image_id, cls, x0, y0, x1, y1, confidence.
std::string format_detection_record(const std::string& image_id, const Detection& det);
void save_detections(const std::string& image_id, const std::vector<Detection>& dets,
                     const std::filesystem::path& path);

/// Throws ParseError naming the line for malformed records or mixed image ids.
DetectionFile load_detections(const std::filesystem::path& path);

}  // namespace pp
