#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pp/dehaze.hpp"
#include "pp/detect.hpp"
#include "pp/scatter.hpp"

namespace pp {

enum class PipelineMode { baseline_detect_only, global_dehaze, gaze_dehaze };

std::string mode_name(PipelineMode mode);
PipelineMode parse_mode(const std::string& name);

struct PipelineConfig {
  double pre_conf_threshold = 0.25;
  double roi_margin = 0.1;
  double roi_feather = 1.5;
  double lambda_min = 0.3;
  double haze_threshold = 0.55;
  bool gate_enabled = true;
  PipelineMode mode = PipelineMode::gaze_dehaze;
  HazeIndexParams haze_index;
};

/// Raised when a detector throws; names the stage that failed.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

/// Intermediates of one run. Optional members are set iff their stage ran.
struct PipelineTrace {
  PipelineMode mode = PipelineMode::gaze_dehaze;
  std::optional<std::vector<Detection>> preliminary;
  std::optional<RoiMask> roi;
  std::optional<double> haze_index;
  std::optional<bool> gate_passed;
  std::optional<Image> dehazed;
  std::vector<Detection> final_detections;
  std::vector<StageTiming> timings;
  double total_seconds = 0.0;
};

/// gate_enabled && haze_index(img) >= haze_threshold.
bool should_dehaze(const Image& img, const PipelineConfig& cfg);

/// baseline_detect_only: final detector on the input.
/// global_dehaze: dehaze_aod, then the final detector.
/// gaze_dehaze: preliminary detector, drop detections below
/// pre_conf_threshold, rasterize ROIs, forward_aodx unless the enabled haze
/// gate rejects the image, then the final detector on whatever came out.
PipelineTrace run_pipeline(const Image& img, const DehazerParams& dehazer, const DetectorFn& preliminary,
                           const DetectorFn& final_detector, const PipelineConfig& cfg);

/// One JSON line describing a trace (detections, gate, timings), keyed by image_id.
std::string format_trace_record(const std::string& image_id, const PipelineTrace& trace);

}  // namespace pp
