#include "pp/pipeline.hpp"

#include <chrono>
#include <json.hpp>

#include "pp/error.hpp"

namespace pp {

std::string mode_name(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::baseline_detect_only:
      return "baseline_detect_only";
    case PipelineMode::global_dehaze:
      return "global_dehaze";
    case PipelineMode::gaze_dehaze:
      return "gaze_dehaze";
  }
  return "unknown";
}

PipelineMode parse_mode(const std::string& name) {
  if (name == "baseline_detect_only") return PipelineMode::baseline_detect_only;
  if (name == "global_dehaze") return PipelineMode::global_dehaze;
  if (name == "gaze_dehaze") return PipelineMode::gaze_dehaze;
  throw DomainError("unknown pipeline mode '" + name + "'");
}

bool should_dehaze(const Image& img, const PipelineConfig& cfg) {
  return cfg.gate_enabled && haze_index(img, cfg.haze_index) >= cfg.haze_threshold;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Detection> run_detector(const DetectorFn& fn, const Image& img, const char* stage) {
  if (!fn) throw StageError(stage, "no detector configured");
  try {
    return fn(img);
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void check_config(const PipelineConfig& cfg) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(cfg.pre_conf_threshold) || !unit(cfg.lambda_min) || !unit(cfg.haze_threshold)) {
    throw DomainError("pipeline config: thresholds must lie in [0, 1]");
  }
  if (!(cfg.roi_feather >= 0.0) || !(cfg.roi_margin >= 0.0)) {
    throw DomainError("pipeline config: roi_margin and roi_feather must be >= 0");
  }
}

}  // namespace

PipelineTrace run_pipeline(const Image& img, const DehazerParams& dehazer, const DetectorFn& preliminary,
                           const DetectorFn& final_detector, const PipelineConfig& cfg) {
  require_valid_image(img, "run_pipeline");
  check_config(cfg);
  const auto run_start = Clock::now();
  PipelineTrace trace;
  trace.mode = cfg.mode;
  const Image* final_input = &img;

  auto timed = [&](const char* stage, auto&& body) {
    const auto start = Clock::now();
    body();
    trace.timings.push_back({stage, seconds_since(start)});
  };

  switch (cfg.mode) {
    case PipelineMode::baseline_detect_only:
      break;
    case PipelineMode::global_dehaze:
      timed("dehaze", [&] { trace.dehazed = dehaze_aod(dehazer, img); });
      final_input = &*trace.dehazed;
      break;
    case PipelineMode::gaze_dehaze: {
      timed("preliminary", [&] {
        auto dets = run_detector(preliminary, img, "preliminary");
        std::erase_if(dets, [&](const Detection& d) { return d.confidence < cfg.pre_conf_threshold; });
        trace.preliminary = std::move(dets);
      });
      timed("roi", [&] {
        trace.roi = rasterize_rois(*trace.preliminary, img.height(), img.width(), cfg.roi_margin, cfg.roi_feather);
      });
      bool run_dehaze = true;
      if (cfg.gate_enabled) {
        timed("gate", [&] {
          trace.haze_index = haze_index(img, cfg.haze_index);
          trace.gate_passed = *trace.haze_index >= cfg.haze_threshold;
        });
        run_dehaze = *trace.gate_passed;
      }
      if (run_dehaze) {
        timed("dehaze", [&] { trace.dehazed = forward_aodx(dehazer, img, *trace.roi, cfg.lambda_min); });
        final_input = &*trace.dehazed;
      }
      break;
    }
  }

  timed("final", [&] { trace.final_detections = run_detector(final_detector, *final_input, "final"); });
  trace.total_seconds = seconds_since(run_start);
  return trace;
}

namespace {

nlohmann::ordered_json detections_json(const std::vector<Detection>& dets) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : dets) {
    arr.push_back({{"cls", d.cls}, {"x0", d.box.x0}, {"y0", d.box.y0}, {"x1", d.box.x1}, {"y1", d.box.y1},
                   {"confidence", d.confidence}});
  }
  return arr;
}

}  // namespace

std::string format_trace_record(const std::string& image_id, const PipelineTrace& trace) {
  nlohmann::ordered_json rec;
  rec["image_id"] = image_id;
  rec["mode"] = mode_name(trace.mode);
  if (trace.preliminary) rec["preliminary"] = detections_json(*trace.preliminary);
  if (trace.roi) {
    double covered = 0.0;
    for (double v : trace.roi->mask.values()) covered += v;
    rec["roi_mean"] = covered / static_cast<double>(trace.roi->mask.size());
  }
  if (trace.haze_index) rec["haze_index"] = *trace.haze_index;
  if (trace.gate_passed) rec["gate_passed"] = *trace.gate_passed;
  rec["dehazed"] = trace.dehazed.has_value();
  rec["final"] = detections_json(trace.final_detections);
  auto timings = nlohmann::ordered_json::object();
  for (const auto& t : trace.timings) timings[t.stage] = t.seconds;
  rec["timings"] = timings;
  rec["total_seconds"] = trace.total_seconds;
  return rec.dump();
}

}  // namespace pp
