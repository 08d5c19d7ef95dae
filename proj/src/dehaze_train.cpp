#include <cmath>
#include <numeric>
#include <sstream>

#include "dehaze_net.hpp"
#include "pp/dehaze.hpp"
#include "pp/error.hpp"
#include "pp/rng.hpp"

namespace pp {

namespace {

DehazerParams zeros_like(const DehazerParams& p) {
  DehazerParams z = p;
  for (auto& a : z.k_weights) std::fill(a.values.begin(), a.values.end(), 0.0);
  for (auto& a : z.attn_weights) std::fill(a.values.begin(), a.values.end(), 0.0);
  z.b = 0.0;
  return z;
}

void backward_layer(const std::vector<WeightArray>& params, std::vector<WeightArray>& grads, std::size_t layer,
                    const ConvShape& shape, const Image& in, const Image& grad_out, Image* grad_in) {
  conv2d_backward(in, shape, params[2 * layer].values, grad_out, grad_in, grads[2 * layer].values,
                  grads[2 * layer + 1].values);
}

Image channel_slice(const Image& src, int first, int count) {
  Image out(src.height(), src.width(), count);
  add_channel_slice(src, first, out);
  return out;
}

void accumulate(Image& dst, const Image& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Backpropagates dL/dK through the K-estimator into grad->k_weights.
void backward_k(const DehazerParams& params, const net::KCache& c, const Image& foggy, const Image& grad_k,
                DehazerParams& grad) {
  const auto& L = net::kKLayers;
  const auto& w = params.k_weights;
  auto& g = grad.k_weights;

  Image g_c3;
  backward_layer(w, g, 4, L[4].shape, c.c3, grad_k, &g_c3);
  Image g_a1 = channel_slice(g_c3, 0, 3);
  Image g_a2 = channel_slice(g_c3, 3, 3);
  Image g_a3 = channel_slice(g_c3, 6, 3);
  Image g_a4 = channel_slice(g_c3, 9, 3);

  relu_backward_inplace(c.a4, g_a4);
  Image g_c2;
  backward_layer(w, g, 3, L[3].shape, c.c2, g_a4, &g_c2);
  add_channel_slice(g_c2, 0, g_a2);
  add_channel_slice(g_c2, 3, g_a3);

  relu_backward_inplace(c.a3, g_a3);
  Image g_c1;
  backward_layer(w, g, 2, L[2].shape, c.c1, g_a3, &g_c1);
  add_channel_slice(g_c1, 0, g_a1);
  add_channel_slice(g_c1, 3, g_a2);

  relu_backward_inplace(c.a2, g_a2);
  Image g_from_a2;
  backward_layer(w, g, 1, L[1].shape, c.a1, g_a2, &g_from_a2);
  accumulate(g_a1, g_from_a2);

  relu_backward_inplace(c.a1, g_a1);
  backward_layer(w, g, 0, L[0].shape, foggy, g_a1, nullptr);
}

}  // namespace

double training_loss(const DehazerParams& params, const TrainingSample& sample, const LossOptions& opts,
                     DehazerParams* grad) {
  net::check_layout(params);
  const Image& foggy = sample.foggy;
  const Image& clear = sample.clear;
  if (foggy.channels() != 3 || !foggy.same_shape(clear)) {
    throw DomainError("training_loss: foggy and clear must be RGB images of the same shape");
  }
  if (opts.use_attention && (!sample.roi || !sample.roi->mask.same_extent(foggy) || sample.roi->mask.channels() != 1)) {
    throw DomainError("training_loss: attention training needs a one-channel ROI mask per sample");
  }

  const net::KCache kc = net::forward_k(params, foggy);
  net::AttnCache ac;
  Image k_used = kc.k;
  if (opts.use_attention) {
    ac = net::forward_attention(params, kc.k, sample.roi->mask);
    k_used = net::modulate_k(kc.k, ac.m, opts.lambda_min);
  }
  const Image out = net::reconstruct(k_used, foggy, params.b);

  const double n = static_cast<double>(out.size());
  const double npix = static_cast<double>(out.plane_size());
  double loss = 0.0;
  auto o = out.values();
  auto y = clear.values();
  for (std::size_t i = 0; i < o.size(); ++i) loss += (o[i] - y[i]) * (o[i] - y[i]);
  loss /= n;
  if (opts.use_attention) {
    auto r = sample.roi->mask.plane(0);
    // Cross-entropy of M against the ROI mask, from the logit:
    // -r log(M) - (1 - r) log(1 - M) = softplus(z) - r z.
    auto z = ac.logit.plane(0);
    double bce = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      bce += std::max(z[i], 0.0) + std::log1p(std::exp(-std::abs(z[i]))) - r[i] * z[i];
    }
    loss += opts.focus_weight * bce / npix;
  }
  if (grad == nullptr) return loss;

  // Zero in place when the layout already matches so callers may hold views into *grad.
  auto same_layout = [](const std::vector<WeightArray>& a, const std::vector<WeightArray>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].values.size() != b[i].values.size()) return false;
    }
    return true;
  };
  if (same_layout(grad->k_weights, params.k_weights) && same_layout(grad->attn_weights, params.attn_weights)) {
    for (auto& a : grad->k_weights) std::fill(a.values.begin(), a.values.end(), 0.0);
    for (auto& a : grad->attn_weights) std::fill(a.values.begin(), a.values.end(), 0.0);
    grad->b = 0.0;
  } else {
    *grad = zeros_like(params);
  }

  // dL/dK' = dL/dJ * (I - 1)
  Image g_kused(foggy.height(), foggy.width(), 3);
  for (int c = 0; c < 3; ++c) {
    auto oc = out.plane(c);
    auto yc = clear.plane(c);
    auto ic = foggy.plane(c);
    auto gc = g_kused.plane(c);
    for (std::size_t i = 0; i < gc.size(); ++i) gc[i] = 2.0 * (oc[i] - yc[i]) / n * (ic[i] - 1.0);
  }

  Image g_k = g_kused;
  if (opts.use_attention) {
    const double lam = opts.lambda_min;
    auto m = ac.m.plane(0);
    auto r = sample.roi->mask.plane(0);
    Image g_z(foggy.height(), foggy.width(), 1);
    auto gz = g_z.plane(0);
    for (std::size_t i = 0; i < gz.size(); ++i) {
      const double floor_m = lam + (1.0 - lam) * m[i];
      double g_floor = 0.0;
      for (int c = 0; c < 3; ++c) {
        g_floor += g_kused.plane(c)[i] * (kc.k.plane(c)[i] - 1.0);
        g_k.plane(c)[i] = g_kused.plane(c)[i] * floor_m;
      }
      gz[i] = g_floor * (1.0 - lam) * m[i] * (1.0 - m[i]) + opts.focus_weight * (m[i] - r[i]) / npix;
    }
    const auto& L = net::kAttnLayers;
    Image g_hidden;
    backward_layer(params.attn_weights, grad->attn_weights, 1, L[1].shape, ac.hidden, g_z, &g_hidden);
    relu_backward_inplace(ac.hidden, g_hidden);
    Image g_input;
    backward_layer(params.attn_weights, grad->attn_weights, 0, L[0].shape, ac.input, g_hidden, &g_input);
    add_channel_slice(g_input, 0, g_k);  // the ROI channel is data, its gradient is dropped
  }
  if (opts.freeze_k) return loss;

  backward_k(params, kc, foggy, g_k, *grad);
  return loss;
}

namespace {

class Adam {
 public:
  Adam(const std::vector<std::vector<double>*>& params, double lr) : lr_(lr) {
    for (const auto* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  void step(const std::vector<std::vector<double>*>& params, const std::vector<std::vector<double>*>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t a = 0; a < params.size(); ++a) {
      auto& p = *params[a];
      const auto& g = *grads[a];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m_[a][i] = kBeta1 * m_[a][i] + (1.0 - kBeta1) * g[i];
        v_[a][i] = kBeta2 * v_[a][i] + (1.0 - kBeta2) * g[i] * g[i];
        p[i] -= lr_ * (m_[a][i] / c1) / (std::sqrt(v_[a][i] / c2) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  int t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

double mean_loss(const DehazerParams& params, std::span<const TrainingSample> set, const LossOptions& opts) {
  if (set.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : set) total += training_loss(params, s, opts);
  return total / static_cast<double>(set.size());
}

}  // namespace

namespace {

// One optimisation stage: cfg.epochs of shuffled mini-batch Adam over the
// arrays in `view`, appending to result.history.
void run_stage(TrainResult& result, std::span<const TrainingSample> train, std::span<const TrainingSample> val,
               const TrainConfig& cfg, const LossOptions& opts, bool attention_arrays, Rng& rng,
               const std::function<void(const EpochLoss&)>& on_epoch) {
  DehazerParams grad = zeros_like(result.params);
  DehazerParams batch_grad = zeros_like(result.params);
  auto pick = [&](DehazerParams& p) {
    std::vector<std::vector<double>*> out;
    for (auto& a : attention_arrays ? p.attn_weights : p.k_weights) out.push_back(&a.values);
    return out;
  };
  auto params_view = pick(result.params);
  auto grad_view = pick(grad);
  auto batch_view = pick(batch_grad);
  Adam adam(params_view, cfg.learning_rate);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const int first = static_cast<int>(result.history.epochs.size()) + 1;

  for (int epoch = first; epoch < first + cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (auto* g : batch_view) std::fill(g->begin(), g->end(), 0.0);
      for (std::size_t j = start; j < end; ++j) {
        const double loss = training_loss(result.params, train[order[j]], opts, &grad);
        if (!std::isfinite(loss)) {
          std::ostringstream msg;
          msg << "train_dehazer: non-finite loss at epoch " << epoch << ", sample " << order[j];
          throw TrainingError(msg.str());
        }
        epoch_loss += loss;
        for (std::size_t a = 0; a < batch_view.size(); ++a) {
          auto& dst = *batch_view[a];
          const auto& src = *grad_view[a];
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (auto* g : batch_view) {
        for (double& v : *g) v *= scale;
      }
      adam.step(params_view, batch_view);
    }
    EpochLoss rec{epoch, epoch_loss / static_cast<double>(train.size()), mean_loss(result.params, val, opts),
                  attention_arrays};
    if (!std::isfinite(rec.val_loss)) {
      throw TrainingError("train_dehazer: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
}

}  // namespace

TrainResult train_dehazer(std::span<const TrainingSample> train, std::span<const TrainingSample> val,
                          const TrainConfig& cfg, const std::function<void(const EpochLoss&)>& on_epoch) {
  if (train.empty()) throw DomainError("train_dehazer: empty training set");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw DomainError("train_dehazer: epochs and batch size must be >= 1");
  if (!(cfg.lambda_min >= 0.0 && cfg.lambda_min <= 1.0)) throw DomainError("train_dehazer: lambda_min outside [0, 1]");
  if (!(cfg.learning_rate > 0.0)) throw DomainError("train_dehazer: learning rate must be positive");
  if (cfg.loss != "mse") throw DomainError("train_dehazer: unsupported loss '" + cfg.loss + "' (expected mse)");
  const bool attention = train.front().roi.has_value();
  auto consistent = [&](std::span<const TrainingSample> set) {
    for (const auto& s : set) {
      if (s.roi.has_value() != attention) return false;
      if (!s.foggy.same_shape(s.clear)) throw DomainError("train_dehazer: foggy/clear shape mismatch");
    }
    return true;
  };
  if (!consistent(train) || !consistent(val)) {
    throw DomainError("train_dehazer: ROI masks must be given for all samples or none");
  }

  const LossOptions plain{false, cfg.lambda_min, cfg.focus_weight};
  const LossOptions full{attention, cfg.lambda_min, cfg.focus_weight, true};
  TrainResult result;
  result.params = init_dehazer(cfg.seed);
  result.history.initial_val_loss = mean_loss(result.params, val, attention ? full : plain);

  // The K-estimator is trained first on its own; the attention head then
  // learns on top of the frozen estimate.
  Rng rng(mix_seed(cfg.seed, 1));
  run_stage(result, train, val, cfg, plain, false, rng, on_epoch);
  if (attention) run_stage(result, train, val, cfg, full, true, rng, on_epoch);
  return result;
}

}  // namespace pp
