#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pp/box.hpp"
#include "pp/image.hpp"

// Trainable single-image dehazer in the K formulation, J = K * I - K + b.
//
// K-estimator: five same-padded convolutions (1x1, 3x3, 5x5, 7x7, 3x3; three
// filters each) with concatenation skips,
//   a1 = relu(conv1(I)), a2 = relu(conv2(a1)), a3 = relu(conv3([a1 a2])),
//   a4 = relu(conv4([a2 a3])), K = conv5([a1 a2 a3 a4]).
//
// Attention head (gaze-directed variant): two 3x3 convolutions over [K roi]
// ending in a sigmoid, M = sigmoid(conv_b(relu(conv_a([K roi])))), floored to
// M' = lambda_min + (1 - lambda_min) M. M' scales K's departure from the
// identity value K = 1, K' = M' K + (1 - M'), so attention 1 applies the full
// estimate and attention 0 leaves a pixel untouched.

namespace pp {

struct WeightArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
  bool operator==(const WeightArray&) const = default;
};

struct DehazerParams {
  std::vector<WeightArray> k_weights;     // conv{1..5}.weight / conv{1..5}.bias
  std::vector<WeightArray> attn_weights;  // attn{1,2}.weight / attn{1,2}.bias
  double b = 1.0;
  std::string version = "aodx-1";

  std::size_t parameter_count() const;
  bool operator==(const DehazerParams&) const = default;
};

/// Per-pixel region-of-interest weight in [0, 1], one channel.
struct RoiMask {
  Image mask;
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 4;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  std::string loss = "mse";
  double lambda_min = 0.3;
  /// Weight of the attention-vs-ROI cross-entropy, added to the loss when the
  /// attention head is trained.
  double focus_weight = 0.5;
};

/// Small random weights from the seed; K-estimator output bias starts at 1 so
/// an untrained dehazer is close to the identity. b = 1.
DehazerParams init_dehazer(std::uint64_t seed);

/// Identity dehazer: K == 1, b = 1 (all weights zero, output bias 1).
DehazerParams identity_dehazer();

/// K map with the input's extent and three channels. Input must be RGB.
Image estimate_k(const DehazerParams& params, const Image& foggy);

/// J = K * I - K + b, clamped to [0, 1]. K has one channel or I's channel count.
Image apply_k(const Image& k, const Image& foggy, double b);

Image dehaze_aod(const DehazerParams& params, const Image& foggy);

/// Expands each box by margin * max(w, h) per side, clips it to the image and
/// fills it with its confidence (overlaps keep the maximum), then applies a
/// Gaussian blur of the given sigma (0 disables) and clamps to [0, 1].
RoiMask rasterize_rois(std::span<const Detection> boxes, int height, int width, double margin, double feather);

/// Ground-truth boxes as confidence-1 detections.
std::vector<Detection> boxes_as_detections(std::span<const GroundTruthBox> boxes);

struct AodxOutput {
  Image dehazed;
  Image k;          // unmodulated K
  Image attention;  // M, before the floor
};

AodxOutput forward_aodx_detailed(const DehazerParams& params, const Image& foggy, const RoiMask& roi,
                                 double lambda_min);

Image forward_aodx(const DehazerParams& params, const Image& foggy, const RoiMask& roi, double lambda_min);

// ---------------------------------------------------------------------------
// Training

struct TrainingSample {
  Image foggy;
  Image clear;
  std::optional<RoiMask> roi;  // present when training the attention variant
};

struct LossOptions {
  bool use_attention = false;
  double lambda_min = 0.3;
  double focus_weight = 0.5;
  bool freeze_k = false;  // leave the K-estimator gradients at zero
};

/// Training objective on one sample: mean squared error of the unclamped
/// reconstruction, plus with attention focus_weight times the mean binary
/// cross-entropy of M against the ROI mask.
/// When grad is non-null it receives dL/dparams in the params' layout
/// (overwritten). The bias b is held fixed and gets no gradient.
double training_loss(const DehazerParams& params, const TrainingSample& sample, const LossOptions& opts,
                     DehazerParams* grad = nullptr);

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool attention = false;  // epoch of the attention stage
};

struct TrainHistory {
  double initial_val_loss = 0.0;
  std::vector<EpochLoss> epochs;
};

struct TrainResult {
  DehazerParams params;
  TrainHistory history;
};

/// Mini-batch Adam over the training objective, cfg.epochs per stage. The
/// K-estimator is trained alone first. If the samples carry ROI masks (all of
/// them must), a second stage trains only the attention head with K frozen.
/// Deterministic in cfg.seed.
TrainResult train_dehazer(std::span<const TrainingSample> train, std::span<const TrainingSample> val,
                          const TrainConfig& cfg, const std::function<void(const EpochLoss&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Serialization (format described in docs/dehazer_params.md)

void save_dehazer(const DehazerParams& params, const std::filesystem::path& path);
std::string format_dehazer(const DehazerParams& params);
DehazerParams load_dehazer(const std::filesystem::path& path);
DehazerParams parse_dehazer(const std::string& text);

}  // namespace pp
