#pragma once

#include <string>

namespace pp {

/// Axis-aligned box in pixel coordinates, half-open: a pixel (x, y) is
/// covered when x0 <= x + 0.5 < x1 and likewise for y.
struct Box {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool operator==(const Box&) const = default;
};

/// Annotated object: one of the "relevant documents" when scoring a detector.
struct GroundTruthBox {
  std::string cls;
  Box box;
  bool operator==(const GroundTruthBox&) const = default;
};

/// One detector output.
struct Detection {
  std::string cls;
  Box box;
  double confidence = 0.0;
  bool operator==(const Detection&) const = default;
};

}  // namespace pp
