#pragma once

// Layer table and cached forward passes shared by inference and training.

#include <array>

#include "pp/conv.hpp"
#include "pp/dehaze.hpp"

namespace pp::net {

struct LayerSpec {
  const char* name;
  ConvShape shape;
};

inline constexpr std::array<LayerSpec, 5> kKLayers{{
    {"conv1", {3, 3, 1}},
    {"conv2", {3, 3, 3}},
    {"conv3", {6, 3, 5}},
    {"conv4", {6, 3, 7}},
    {"conv5", {12, 3, 3}},
}};

inline constexpr std::array<LayerSpec, 2> kAttnLayers{{
    {"attn1", {4, 4, 3}},
    {"attn2", {4, 1, 3}},
}};

struct KCache {
  Image a1, a2, c1, a3, c2, a4, c3, k;
};

struct AttnCache {
  Image input;   // [K roi]
  Image hidden;  // relu(attn1)
  Image logit;   // attn2
  Image m;       // sigmoid(attn2)
};

/// Throws DomainError if params do not have the expected layer layout.
void check_layout(const DehazerParams& params);

KCache forward_k(const DehazerParams& params, const Image& foggy);
AttnCache forward_attention(const DehazerParams& params, const Image& k, const Image& roi);

/// K' = M' K + (1 - M'), M' = lambda + (1 - lambda) M broadcast over channels.
Image modulate_k(const Image& k, const Image& m, double lambda_min);

/// Unclamped J = K I - K + b.
Image reconstruct(const Image& k, const Image& foggy, double b);

}  // namespace pp::net
