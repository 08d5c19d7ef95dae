#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pp/box.hpp"
#include "pp/image.hpp"

// Atmospheric-scattering fog synthesis: I = J * t + A * (1 - t) with
// t = exp(-beta * d), the ideal K map that inverts it, seeded synthetic
// scenes with exact annotations, and a no-reference haze index.

namespace pp {

struct HazeParams {
  double beta = 0.0;
  std::array<double, 3> airlight{1.0, 1.0, 1.0};
};

/// Object vocabulary shared by the scene renderer and the toy detector.
/// Each class has its own shape and hue.
inline constexpr std::array<const char*, 3> kSceneClasses{"car", "person", "sign"};

enum class ObjectShape { rectangle, ellipse };

struct SceneSpec {
  int width = 64;
  int height = 64;
  int min_objects = 1;
  int max_objects = 4;
  int object_size_min = 8;
  int object_size_max = 20;
  double beta_min = 0.3;
  double beta_max = 1.5;
  double airlight_min = 0.8;
  double airlight_max = 0.95;
  double depth_near = 0.5;
  double depth_far = 2.0;
};

/// A placed object before rendering. Rectangles fill [x0, x1) x [y0, y1);
/// ellipses are inscribed in that rectangle.
struct SceneObject {
  std::string cls;
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  double brightness = 1.0;  // scales the class colour, in (0, 1]
  double depth = 0.0;
};

struct SceneSample {
  std::string id;
  Image clear;
  DepthMap depth;
  HazeParams haze;
  std::vector<GroundTruthBox> boxes;
};

struct HazeIndexParams {
  double w_contrast = 0.4;
  double w_brightness = 0.2;
  double w_texture = 0.4;
  double contrast_norm = 0.2;
  double texture_norm = 0.005;
};

/// Denominator guard for ideal_k: pixels with |I - 1| <= this are guarded.
inline constexpr double kIdealKEpsilon = 1e-3;

/// t(x) = exp(-beta * d(x)), one channel. Throws DomainError for beta < 0.
Image transmission_from_depth(const DepthMap& depth, double beta);

/// I = J * t + A * (1 - t) per pixel and channel, clamped to [0, 1].
/// t may be 0 here. Throws DomainError on shape mismatch.
Image apply_haze(const Image& clear, const Image& transmission, const HazeParams& haze);

/// K such that K * I - K + b reproduces the haze-free image:
/// K = ((I - A) / t + (A - b)) / (I - 1), with |I - 1| guarded to at least epsilon.
Image ideal_k(const Image& foggy, const Image& transmission, const HazeParams& haze, double b = 1.0,
              double epsilon = kIdealKEpsilon);

/// Mask (1 channel) of pixels where the ideal_k denominator guard was not needed.
Image ideal_k_unguarded_mask(const Image& foggy, double epsilon = kIdealKEpsilon);

/// RGB colour of a class at full brightness.
std::array<double, 3> class_colour(const std::string& cls);
ObjectShape class_shape(const std::string& cls);

/// Renders objects over a textured dark background. The background is a pure
/// function of background_seed; boxes are the exact extents of the rendered
/// object pixels, and depth is the planar ground gradient with each object at
/// its own constant depth.
SceneSample render_scene(const SceneSpec& spec, const std::vector<SceneObject>& objects, const HazeParams& haze,
                         std::uint64_t background_seed);

/// Samples object placement, haze parameters and background from the seed and
/// renders the scene. Same (seed, spec) gives a bit-identical sample.
SceneSample synth_scene(std::uint64_t seed, const SceneSpec& spec);

/// Luma statistics behind the haze index.
struct HazeStatistics {
  double contrast = 0.0;    // standard deviation
  double brightness = 0.0;  // mean
  double texture = 0.0;     // variance of the 3x3 Laplacian response
};

HazeStatistics haze_statistics(const Image& img);

/// Scalar in [0, 1]; larger means hazier (flat, bright, texture-poor).
double haze_index(const Image& img, const HazeIndexParams& params = {});

}  // namespace pp
