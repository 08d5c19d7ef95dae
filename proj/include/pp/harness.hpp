#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pp/config.hpp"

namespace pp {

// ---------------------------------------------------------------------------
// Dataset manifest: newline-delimited JSON, one record per image. Paths are
// relative to the manifest's directory.

enum class Split { train, val, test };

std::string split_name(Split s);
Split parse_split(const std::string& s);

struct ManifestRecord {
  std::string id;
  Split split = Split::train;
  std::string foggy_path;
  std::optional<std::string> clear_path;
  std::optional<std::string> depth_path;
  /// depth = depth_offset + (byte / 255) * depth_scale
  std::optional<double> depth_offset;
  std::optional<double> depth_scale;
  std::optional<double> beta;
  std::optional<std::array<double, 3>> airlight;
  std::vector<GroundTruthBox> gt_boxes;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory the relative paths resolve against
  std::vector<ManifestRecord> records;

  std::vector<const ManifestRecord*> split(Split s) const;
};

std::string format_manifest_record(const ManifestRecord& rec);

/// Writes <path>; records keep their order.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Parses and validates: ids unique, referenced files present. ParseError
/// names the line of a malformed record.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Renders cfg.dataset.{train,val,test} scenes into out_dir (images/ and
/// manifest.jsonl). Scene i uses seed mix_seed(seed, i). Clear and depth
/// images are quantized to 8 bits before fog is applied, so every foggy PNG
/// is exactly apply_haze of the stored clear image and stored depth.
DatasetManifest materialize_dataset(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);

struct LoadedRecord {
  const ManifestRecord* record = nullptr;
  Image foggy;
  std::optional<Image> clear;
  std::optional<DepthMap> depth;
};

LoadedRecord load_record(const DatasetManifest& manifest, const ManifestRecord& rec);

/// Training pairs for one split. With ROIs, masks come from the ground-truth
/// boxes rasterized with the pipeline's margin and feather. A deterministic
/// cfg.clear_pair_fraction of the pairs use the clear image as input.
std::vector<TrainingSample> training_samples(const DatasetManifest& manifest, Split split, const RunConfig& cfg,
                                             bool with_roi);

enum class DehazerVariant { aod, aodx };

std::string variant_name(DehazerVariant v);
DehazerVariant parse_variant(const std::string& s);

/// Trains on the train split, validating on the val split.
TrainResult train_from_manifest(const DatasetManifest& manifest, const RunConfig& cfg, DehazerVariant variant,
                                const std::function<void(const EpochLoss&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Reports

/// One row of a results table. Unused metrics stay empty.
struct ReportRow {
  std::string table;  // "dehaze", "detect" or "ood"
  std::string variant;
  std::string condition;
  std::optional<double> ssim_global;
  std::optional<double> ssim_window;
  std::optional<double> psnr;
  std::optional<double> map;
  int images = 0;
  int skipped = 0;
  bool operator==(const ReportRow&) const = default;
};

struct MetricReport {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string kernel_isa;
  std::vector<ReportRow> rows;
  bool operator==(const MetricReport&) const = default;
};

enum class ReportFormat { text_table, structured };

std::string emit_report(const MetricReport& report, ReportFormat format);
MetricReport parse_report(const std::string& structured);

// ---------------------------------------------------------------------------
// Evaluation

enum class DehazeMethod { identity, oracle, aod, aodx };

struct DehazeEvalVariant {
  std::string name;
  DehazeMethod method = DehazeMethod::identity;
  DehazerParams params;
  double lambda_min = 0.3;
};

struct EvalOptions {
  /// Report PSNR against MAX = 255 after quantizing the output to bytes.
  bool psnr_bytes = false;
};

/// Mean SSIM (global and windowed, on luma) and PSNR (RGB) of each variant's
/// output against the clear image over the test split. aodx uses ROIs from
/// the ground-truth boxes. Records without the data a variant needs are
/// skipped and counted.
std::vector<ReportRow> run_dehaze_eval(const DatasetManifest& manifest, const std::vector<DehazeEvalVariant>& variants,
                                       const RunConfig& cfg, const EvalOptions& opts = {});

/// Detector that may depend on the image id (for file-backed external detectors).
using KeyedDetector = std::function<std::vector<Detection>(const std::string& image_id, const Image&)>;

struct DetectorPair {
  KeyedDetector preliminary;
  KeyedDetector final_detector;
};

/// The built-in toy detectors: weak tier preliminary, strong tier final.
DetectorPair toy_detectors(const RunConfig& cfg);

/// Looks up <dir>/<image_id>.jsonl in the detection exchange format; a missing file means no detections.
KeyedDetector file_detector(const std::filesystem::path& dir);

/// Test-split images of a manifest with the given condition's pixels.
enum class Condition { clear, foggy };

/// mAP of one pipeline mode on one condition of the test split.
double pipeline_map(const DatasetManifest& manifest, Condition condition, PipelineMode mode,
                    const DehazerParams& aod, const DehazerParams& aodx, const DetectorPair& detectors,
                    const RunConfig& cfg);

/// Rows for every mode x condition on the test split (table "detect"); when
/// ood is given, foggy-condition rows on its test split (table "ood").
std::vector<ReportRow> run_detect_eval(const DatasetManifest& manifest, const DehazerParams& aod,
                                       const DehazerParams& aodx, const DetectorPair& detectors, const RunConfig& cfg,
                                       const DatasetManifest* ood = nullptr);

// ---------------------------------------------------------------------------
// External dataset ingestion

enum class AnnotationLayout { cityscapes_polygons, voc_xml };

/// Converts a split list into a manifest. Each non-empty list line reads
///   <split> <id> <foggy_path> <annotation_path> [<clear_path>]
/// with paths relative to the list file. Cityscapes polygon JSON becomes the
/// polygon extents; VOC XML bndbox (1-based, inclusive) becomes [xmin-1, xmax).
DatasetManifest ingest_split_list(const std::filesystem::path& list_path, AnnotationLayout layout);

}  // namespace pp
