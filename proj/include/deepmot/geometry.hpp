#pragma once

#include <vector>

#include "deepmot/graph.hpp"

namespace deepmot {

// Axis-aligned pixel box, MOTChallenge encoding (left, top, width, height).
struct Box {
  double left = 0.0;
  double top = 0.0;
  double width = 0.0;
  double height = 0.0;

  double right() const { return left + width; }
  double bottom() const { return top + height; }
  double center_x() const { return left + width / 2.0; }
  double center_y() const { return top + height / 2.0; }
  double area() const { return width * height; }

  bool operator==(const Box&) const = default;
};

struct FrameDims {
  double width = 0.0;
  double height = 0.0;
};

// Intersection-over-union in [0, 1]; 0 when the union area is 0.
double iou(const Box& a, const Box& b);

// Average of the frame-normalized Euclidean center distance and the Jaccard
// distance 1 - IoU; lies in [0, 1].
double pair_distance(const Box& b, const Box& o, const FrameDims& dims);

// N x M matrix of pair_distance between every track/object pair.
// Both lists must be non-empty.
Tensor distance_matrix(const std::vector<Box>& tracks,
                       const std::vector<Box>& objects, const FrameDims& dims);

// Differentiable counterpart operating on graph tensors. Boxes are rows of
// an N x 4 (l, t, w, h) tensor. Matches distance_matrix up to 1e-12 for
// positive-size boxes (the graph path guards the IoU denominator with 1e-12
// and the center distance with the sqrt epsilon).
NodeId distance_matrix_node(Graph& g, NodeId tracks, NodeId objects,
                            const FrameDims& dims);

// Boxes list <-> N x 4 tensor.
Tensor boxes_to_tensor(const std::vector<Box>& boxes);
std::vector<Box> tensor_to_boxes(const Tensor& t);

}  // namespace deepmot
