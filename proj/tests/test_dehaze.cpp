#include <doctest.h>

#include <cmath>
#include <fstream>
#include <optional>

#include "pp/dehaze.hpp"
#include "pp/error.hpp"
#include "pp/scatter.hpp"
#include "test_util.hpp"

using namespace pp;

namespace {

bool all_finite(const Image& img) {
  for (double v : img.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

TrainingSample hazy_sample(std::uint64_t seed, int size, bool with_roi) {
  SceneSpec spec;
  spec.width = size;
  spec.height = size;
  spec.object_size_min = std::min(spec.object_size_min, size / 2);
  spec.object_size_max = std::min(spec.object_size_max, size / 2);
  const SceneSample s = synth_scene(seed, spec);
  TrainingSample t;
  t.clear = s.clear;
  t.foggy = apply_haze(s.clear, transmission_from_depth(s.depth, s.haze.beta), s.haze);
  if (with_roi) {
    const auto dets = boxes_as_detections(s.boxes);
    t.roi = rasterize_rois(dets, size, size, 0.1, 1.0);
  }
  return t;
}

// J = K I - K + b without the clamp.
Image unclamped_reconstruction(const Image& k, const Image& foggy, double b) {
  Image j(foggy.height(), foggy.width(), foggy.channels());
  for (std::size_t i = 0; i < j.size(); ++i) {
    j.values()[i] = k.values()[i] * foggy.values()[i] - k.values()[i] + b;
  }
  return j;
}

std::vector<double>& array_values(DehazerParams& p, bool attention, std::size_t index) {
  return (attention ? p.attn_weights : p.k_weights)[index].values;
}

}  // namespace

TEST_CASE("init is deterministic per seed") {
  CHECK(init_dehazer(3) == init_dehazer(3));
  CHECK_FALSE(init_dehazer(3) == init_dehazer(4));
  const DehazerParams p = init_dehazer(3);
  CHECK(p.b == 1.0);
  CHECK(p.k_weights.size() == 10);
  CHECK(p.attn_weights.size() == 4);
  CHECK(p.parameter_count() > 1);
}

TEST_CASE("forward passes after init are finite and keep the extent") {
  Rng rng(1);
  const DehazerParams p = init_dehazer(9);
  for (const Image& img : {test::random_image(rng, 7, 9, 3), Image(5, 5, 3, 0.0), Image(4, 6, 3, 1.0)}) {
    const Image k = estimate_k(p, img);
    CHECK(k.height() == img.height());
    CHECK(k.width() == img.width());
    CHECK(all_finite(k));
    CHECK(estimate_k(p, img) == k);
    const Image j = dehaze_aod(p, img);
    CHECK(is_valid_image(j));
  }
  CHECK_THROWS_AS(estimate_k(p, Image(4, 4, 1)), DomainError);
}

TEST_CASE("identity dehazer leaves the image unchanged") {
  Rng rng(2);
  const Image img = test::random_image(rng, 8, 8, 3);
  const Image k = estimate_k(identity_dehazer(), img);
  for (double v : k.values()) CHECK(v == 1.0);
  const Image j = dehaze_aod(identity_dehazer(), img);
  for (std::size_t i = 0; i < j.size(); ++i) CHECK(j.values()[i] == doctest::Approx(img.values()[i]).epsilon(1e-15));
}

TEST_CASE("ideal K inverts the fog model") {
  const SceneSample s = synth_scene(12, SceneSpec{});
  const Image t = transmission_from_depth(s.depth, s.haze.beta);
  const Image foggy = apply_haze(s.clear, t, s.haze);
  const Image k = ideal_k(foggy, t, s.haze, 1.0);
  const Image j = apply_k(k, foggy, 1.0);
  const Image ok = ideal_k_unguarded_mask(foggy);
  int checked = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < foggy.height(); ++y) {
      for (int x = 0; x < foggy.width(); ++x) {
        if (ok.at(0, y, x) == 0.0) continue;
        CHECK(std::abs(j.at(c, y, x) - s.clear.at(c, y, x)) <= 1e-6);
        ++checked;
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("apply_k clamps to the unit range") {
  const Image img(2, 2, 3, 0.2);
  const Image big = apply_k(Image(2, 2, 1, -5.0), img, 1.0);
  for (double v : big.values()) CHECK(v == 1.0);
  const Image small = apply_k(Image(2, 2, 1, 5.0), img, 1.0);
  for (double v : small.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(apply_k(Image(2, 3, 1), img, 1.0), DomainError);
}

TEST_CASE("roi rasterization") {
  CHECK(rasterize_rois({}, 6, 8, 0.1, 1.5).mask == Image(6, 8, 1, 0.0));

  const std::vector<Detection> full{{"car", {0, 0, 8, 6}, 1.0}};
  CHECK(rasterize_rois(full, 6, 8, 0.0, 0.0).mask == Image(6, 8, 1, 1.0));
  // Blurring an all-ones mask with replicated borders keeps it at one.
  const Image blurred = rasterize_rois(full, 6, 8, 0.0, 2.0).mask;
  for (double v : blurred.values()) CHECK(v == doctest::Approx(1.0));

  const std::vector<Detection> one{{"car", {5, 5, 15, 15}, 0.8}};
  const Image m = rasterize_rois(one, 20, 20, 0.0, 0.0).mask;
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      const bool inside = x >= 5 && x < 15 && y >= 5 && y < 15;
      CHECK(m.at(0, y, x) == (inside ? 0.8 : 0.0));
    }
  }

  // Margin grows by a fraction of the longer side; overlaps take the max.
  const std::vector<Detection> two{{"car", {4, 4, 8, 8}, 0.5}, {"car", {6, 6, 10, 10}, 0.9}};
  const Image m2 = rasterize_rois(two, 12, 12, 0.25, 0.0).mask;
  CHECK(m2.at(0, 3, 3) == 0.5);
  CHECK(m2.at(0, 2, 2) == 0.0);
  CHECK(m2.at(0, 6, 6) == 0.9);
  CHECK(m2.at(0, 10, 10) == 0.9);

  const Image feathered = rasterize_rois(one, 20, 20, 0.0, 1.5).mask;
  CHECK(feathered.at(0, 10, 10) > feathered.at(0, 5, 5));
  CHECK(feathered.at(0, 4, 10) > 0.0);
  CHECK(is_valid_image(feathered));
  CHECK_THROWS_AS(rasterize_rois(one, 20, 20, -0.1, 0.0), DomainError);
}

TEST_CASE("attention with lambda one reduces to the plain dehazer") {
  Rng rng(14);
  const DehazerParams p = init_dehazer(5);
  for (int i = 0; i < 5; ++i) {
    const Image img = test::random_image(rng, 10, 12, 3);
    const RoiMask roi{test::random_image(rng, 10, 12, 1)};
    CHECK(forward_aodx(p, img, roi, 1.0) == dehaze_aod(p, img));
  }
}

TEST_CASE("attention map lies strictly inside (0,1)") {
  Rng rng(15);
  const DehazerParams p = init_dehazer(6);
  const Image img = test::random_image(rng, 9, 9, 3);
  const RoiMask roi{test::random_image(rng, 9, 9, 1)};
  const AodxOutput out = forward_aodx_detailed(p, img, roi, 0.3);
  for (double v : out.attention.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(is_valid_image(out.dehazed));
  CHECK_THROWS_AS(forward_aodx(p, img, roi, 1.5), DomainError);
  CHECK_THROWS_AS(forward_aodx(p, img, RoiMask{Image(9, 8, 1)}, 0.3), DomainError);
}

TEST_CASE("zero attention with zero floor leaves the image untouched") {
  // attn2 bias far negative drives M to ~0, so K' ~ 1 and J ~ I.
  DehazerParams p = init_dehazer(8);
  p.attn_weights[3].values[0] = -60.0;
  Rng rng(3);
  const Image img = test::random_image(rng, 6, 6, 3);
  const Image j = forward_aodx(p, img, RoiMask{Image(6, 6, 1, 0.0)}, 0.0);
  for (std::size_t i = 0; i < j.size(); ++i) CHECK(j.values()[i] == doctest::Approx(img.values()[i]).epsilon(1e-9));
}

TEST_CASE("training loss value") {
  const TrainingSample sample = hazy_sample(12, 8, true);
  const DehazerParams p = init_dehazer(3);
  const LossOptions opts{true, 0.3, 0.5};
  const AodxOutput o = forward_aodx_detailed(p, sample.foggy, *sample.roi, opts.lambda_min);

  // Unclamped reconstruction from the modulated K, computed here from the parts.
  double mse = 0.0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const double mp = 0.3 + 0.7 * o.attention.at(0, y, x);
        const double k = mp * o.k.at(c, y, x) + (1.0 - mp);
        const double i = sample.foggy.at(c, y, x);
        const double d = k * i - k + p.b - sample.clear.at(c, y, x);
        mse += d * d;
      }
    }
  }
  mse /= 3 * 64;
  double bce = 0.0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const double m = o.attention.at(0, y, x);
      const double r = sample.roi->mask.at(0, y, x);
      bce -= r * std::log(m) + (1.0 - r) * std::log(1.0 - m);
    }
  }
  CHECK(training_loss(p, sample, opts) == doctest::Approx(mse + 0.5 * bce / 64).epsilon(1e-12));

  const LossOptions plain{false, 0.3, 0.5};
  const Image j = unclamped_reconstruction(estimate_k(p, sample.foggy), sample.foggy, p.b);
  double plain_mse = 0.0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const double d = j.values()[i] - sample.clear.values()[i];
    plain_mse += d * d;
  }
  CHECK(training_loss(p, TrainingSample{sample.foggy, sample.clear, std::nullopt}, plain) ==
        doctest::Approx(plain_mse / static_cast<double>(j.size())).epsilon(1e-12));
}

TEST_CASE("training loss gradients match central differences") {
  for (const bool attention : {false, true}) {
    CAPTURE(attention);
    const TrainingSample sample = hazy_sample(31, 4, attention);
    const LossOptions opts{attention, 0.3, 0.5};
    DehazerParams p = init_dehazer(77);
    DehazerParams grad;
    training_loss(p, sample, opts, &grad);

    Rng pick(5);
    const std::size_t arrays = attention ? p.attn_weights.size() : p.k_weights.size();
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t a = static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(arrays) - 1));
      auto& values = array_values(p, attention, a);
      const std::size_t i = static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(values.size()) - 1));
      const double keep = values[i];
      const double h = 1e-6;
      values[i] = keep + h;
      const double up = training_loss(p, sample, opts);
      values[i] = keep - h;
      const double down = training_loss(p, sample, opts);
      values[i] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = array_values(grad, attention, a)[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
      CHECK(rel <= 1e-3);
    }
  }
}

TEST_CASE("training smoke and determinism") {
  std::vector<TrainingSample> one{hazy_sample(1, 16, false)};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  const TrainResult r = train_dehazer(one, one, cfg);
  REQUIRE(r.history.epochs.size() == 1);
  CHECK(std::isfinite(r.history.epochs[0].train_loss));
  CHECK(std::isfinite(r.history.epochs[0].val_loss));

  std::vector<TrainingSample> set;
  for (std::uint64_t s = 0; s < 6; ++s) set.push_back(hazy_sample(100 + s, 16, false));
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 4;
  const TrainResult a = train_dehazer(set, set, cfg);
  const TrainResult b = train_dehazer(set, set, cfg);
  CHECK(a.params == b.params);
  CHECK(a.history.epochs.back().val_loss < a.history.initial_val_loss);
  cfg.seed = 5;
  CHECK_FALSE(train_dehazer(set, set, cfg).params == a.params);
}

TEST_CASE("training argument checks") {
  std::vector<TrainingSample> set{hazy_sample(1, 16, false)};
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train_dehazer(set, set, cfg), DomainError);
  cfg = TrainConfig{};
  cfg.loss = "l1";
  CHECK_THROWS_AS(train_dehazer(set, set, cfg), DomainError);
  CHECK_THROWS_AS(train_dehazer({}, set, TrainConfig{}), DomainError);
  std::vector<TrainingSample> mixed{hazy_sample(1, 16, true), hazy_sample(2, 16, false)};
  CHECK_THROWS_AS(train_dehazer(mixed, mixed, TrainConfig{}), DomainError);
}

TEST_CASE("diverging training raises TrainingError") {
  std::vector<TrainingSample> set{hazy_sample(1, 16, false)};
  DehazerParams p = init_dehazer(0);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e300;
  CHECK_THROWS_AS(train_dehazer(set, set, cfg), TrainingError);
}

TEST_CASE("parameter files round trip exactly") {
  const auto dir = test::scratch_dir("dehaze-io");
  DehazerParams p = init_dehazer(123);
  p.attn_weights[0].values[0] = 1.0 / 3.0;
  save_dehazer(p, dir / "p.params");
  CHECK(load_dehazer(dir / "p.params") == p);
  CHECK(parse_dehazer(format_dehazer(p)) == p);
  CHECK(format_dehazer(parse_dehazer(format_dehazer(p))) == format_dehazer(p));
}

TEST_CASE("malformed parameter files are rejected") {
  const std::string good = format_dehazer(init_dehazer(1));
  CHECK_THROWS_AS(parse_dehazer(""), ParseError);
  CHECK_THROWS_AS(parse_dehazer("aodx-params 2\n" + good.substr(good.find('\n') + 1)), ParseError);
  CHECK_THROWS_AS(parse_dehazer(good.substr(0, good.size() / 2)), ParseError);
  std::string bad_number = good;
  bad_number.replace(bad_number.find("b 1"), 3, "b x");
  CHECK_THROWS_AS(parse_dehazer(bad_number), ParseError);
  std::string wrong_shape = good;
  wrong_shape.replace(wrong_shape.find("conv1.weight 4 3 3 1 1"), 22, "conv1.weight 4 3 3 1 2");
  CHECK_THROWS(parse_dehazer(wrong_shape));
  CHECK_THROWS_AS(load_dehazer("/nonexistent/p.params"), IoError);
}
