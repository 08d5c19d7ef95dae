#include "pp/conv.hpp"

#include <string>
#include <vector>

#include "pp/error.hpp"
#include "pp/simd.hpp"

namespace pp {

namespace {

void check_shape(const Image& in, const ConvShape& shape, std::size_t weights) {
  if (shape.kernel < 1 || shape.kernel % 2 == 0) throw DomainError("conv2d: kernel size must be odd");
  if (in.channels() != shape.in_channels) {
    throw DomainError("conv2d: expected " + std::to_string(shape.in_channels) + " input channels, got " +
                      std::to_string(in.channels()));
  }
  if (weights != shape.weight_count()) throw DomainError("conv2d: weight count does not match shape");
}

// Zero-padded copy of every input plane, (H + 2p) x (W + 2p) each.
std::vector<double> pad_planes(const Image& in, int pad) {
  const int wp = in.width() + 2 * pad;
  const int hp = in.height() + 2 * pad;
  std::vector<double> out(static_cast<std::size_t>(in.channels()) * hp * wp, 0.0);
  for (int c = 0; c < in.channels(); ++c) {
    double* plane = out.data() + static_cast<std::size_t>(c) * hp * wp;
    for (int y = 0; y < in.height(); ++y) {
      const double* src = in.plane(c).data() + static_cast<std::size_t>(y) * in.width();
      std::copy(src, src + in.width(), plane + static_cast<std::size_t>(y + pad) * wp + pad);
    }
  }
  return out;
}

}  // namespace

Image conv2d(const Image& in, const ConvShape& shape, std::span<const double> weight, std::span<const double> bias) {
  check_shape(in, shape, weight.size());
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(shape.out_channels)) {
    throw DomainError("conv2d: bias count does not match shape");
  }
  const auto& k = simd::active();
  const int pad = shape.kernel / 2;
  const int h = in.height();
  const int w = in.width();
  const int wp = w + 2 * pad;
  const std::size_t plane_p = static_cast<std::size_t>(h + 2 * pad) * wp;
  const std::vector<double> padded = pad_planes(in, pad);

  Image out(h, w, shape.out_channels);
  for (int co = 0; co < shape.out_channels; ++co) {
    auto dst = out.plane(co);
    std::fill(dst.begin(), dst.end(), bias.empty() ? 0.0 : bias[co]);
    for (int ci = 0; ci < shape.in_channels; ++ci) {
      const double* src = padded.data() + ci * plane_p;
      for (int ky = 0; ky < shape.kernel; ++ky) {
        for (int kx = 0; kx < shape.kernel; ++kx) {
          const double wv =
              weight[((static_cast<std::size_t>(co) * shape.in_channels + ci) * shape.kernel + ky) * shape.kernel + kx];
          if (wv == 0.0) continue;
          for (int y = 0; y < h; ++y) {
            k.axpy(w, wv, src + static_cast<std::size_t>(y + ky) * wp + kx, dst.data() + static_cast<std::size_t>(y) * w);
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Image& in, const ConvShape& shape, std::span<const double> weight, const Image& grad_out,
                     Image* grad_in, std::span<double> grad_weight, std::span<double> grad_bias) {
  check_shape(in, shape, weight.size());
  if (grad_out.channels() != shape.out_channels || !grad_out.same_extent(in)) {
    throw DomainError("conv2d_backward: gradient shape does not match the layer output");
  }
  if (grad_weight.size() != weight.size() || grad_bias.size() != static_cast<std::size_t>(shape.out_channels)) {
    throw DomainError("conv2d_backward: gradient buffers have the wrong size");
  }
  const auto& k = simd::active();
  const int pad = shape.kernel / 2;
  const int h = in.height();
  const int w = in.width();
  const int wp = w + 2 * pad;
  const std::size_t plane_p = static_cast<std::size_t>(h + 2 * pad) * wp;
  const std::vector<double> padded = pad_planes(in, pad);
  std::vector<double> grad_padded;
  if (grad_in != nullptr) grad_padded.assign(padded.size(), 0.0);

  for (int co = 0; co < shape.out_channels; ++co) {
    auto g = grad_out.plane(co);
    grad_bias[co] += k.sum(g.size(), g.data());
    for (int ci = 0; ci < shape.in_channels; ++ci) {
      const double* src = padded.data() + ci * plane_p;
      for (int ky = 0; ky < shape.kernel; ++ky) {
        for (int kx = 0; kx < shape.kernel; ++kx) {
          const std::size_t wi =
              ((static_cast<std::size_t>(co) * shape.in_channels + ci) * shape.kernel + ky) * shape.kernel + kx;
          double acc = 0.0;
          for (int y = 0; y < h; ++y) {
            acc += k.dot(w, g.data() + static_cast<std::size_t>(y) * w, src + static_cast<std::size_t>(y + ky) * wp + kx);
          }
          grad_weight[wi] += acc;
          if (grad_in != nullptr && weight[wi] != 0.0) {
            double* dst = grad_padded.data() + ci * plane_p;
            for (int y = 0; y < h; ++y) {
              k.axpy(w, weight[wi], g.data() + static_cast<std::size_t>(y) * w,
                     dst + static_cast<std::size_t>(y + ky) * wp + kx);
            }
          }
        }
      }
    }
  }

  if (grad_in != nullptr) {
    *grad_in = Image(h, w, shape.in_channels);
    for (int ci = 0; ci < shape.in_channels; ++ci) {
      const double* src = grad_padded.data() + ci * plane_p;
      auto dst = grad_in->plane(ci);
      for (int y = 0; y < h; ++y) {
        const double* row = src + static_cast<std::size_t>(y + pad) * wp + pad;
        std::copy(row, row + w, dst.data() + static_cast<std::size_t>(y) * w);
      }
    }
  }
}

Image concat_channels(std::initializer_list<const Image*> parts) {
  if (parts.size() == 0) throw DomainError("concat_channels: nothing to concatenate");
  const Image& first = **parts.begin();
  int channels = 0;
  for (const Image* p : parts) {
    if (!p->same_extent(first)) throw DomainError("concat_channels: extent mismatch");
    channels += p->channels();
  }
  Image out(first.height(), first.width(), channels);
  int c = 0;
  for (const Image* p : parts) {
    for (int pc = 0; pc < p->channels(); ++pc, ++c) {
      auto src = p->plane(pc);
      std::copy(src.begin(), src.end(), out.plane(c).begin());
    }
  }
  return out;
}

void add_channel_slice(const Image& src, int first, Image& dst) {
  if (!src.same_extent(dst) || first < 0 || first + dst.channels() > src.channels()) {
    throw DomainError("add_channel_slice: slice out of range");
  }
  for (int c = 0; c < dst.channels(); ++c) {
    auto s = src.plane(first + c);
    auto d = dst.plane(c);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
  }
}

void relu_inplace(Image& x) {
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(const Image& activation, Image& grad) {
  auto a = activation.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(a[i] > 0.0)) g[i] = 0.0;
  }
}

}  // namespace pp
