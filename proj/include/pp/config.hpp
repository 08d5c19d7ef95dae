#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pp/dehaze.hpp"
#include "pp/detect.hpp"
#include "pp/metrics.hpp"
#include "pp/pipeline.hpp"
#include "pp/scatter.hpp"

namespace pp {

struct DatasetCounts {
  int train = 200;
  int val = 50;
  int test = 50;
};

/// Fixed haze parameters; unset members are sampled per scene from SceneSpec.
struct HazeOverride {
  std::optional<double> beta;
  std::optional<std::array<double, 3>> airlight;
};

/// Everything one run reads from its config file. Sections and keys mirror
/// the structs; unknown keys are rejected and missing keys keep defaults.
///
///   { "scene": SceneSpec, "haze": HazeOverride, "dataset": DatasetCounts,
///     "train": TrainConfig, "pipeline": PipelineConfig,
///     "haze_index": HazeIndexParams, "detector": ToyDetectorConfig,
///     "match": MatchConfig, "ssim": SsimParams }
struct RunConfig {
  SceneSpec scene;
  HazeOverride haze;
  DatasetCounts dataset;
  TrainConfig train;
  PipelineConfig pipeline;
  ToyDetectorConfig detector;
  MatchConfig match;
  SsimParams ssim;
  /// Fraction of training pairs replaced by (clear, clear), exposing the
  /// dehazer to haze-free inputs. 0 disables.
  double clear_pair_fraction = 0.0;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical JSON with every field spelled out (sorted keys, two-space indent).
std::string config_to_json(const RunConfig& cfg);

/// 16 hex digits of FNV-1a over config_to_json(cfg).
std::string config_hash(const RunConfig& cfg);

/// Throws DomainError if any field violates its invariant.
void validate_config(const RunConfig& cfg);

/// The toy detector with the given tier, using the shared thresholds.
ToyDetectorConfig detector_for(const RunConfig& cfg, DetectorStrength strength);

}  // namespace pp
