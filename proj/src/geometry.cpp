#include "deepmot/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "deepmot/common.hpp"

namespace deepmot {

namespace {
void check_box(const Box& b, const char* what) {
  detail::check(b.width >= 0.0 && b.height >= 0.0, what);
}
}  // namespace

double iou(const Box& a, const Box& b) {
  check_box(a, "iou: negative box extent");
  check_box(b, "iou: negative box extent");
  // Areas come from the same rounded corners as the intersection, so
  // identical boxes land on exactly 1.
  const double ra = a.right(), rb = b.right(), ba = a.bottom(), bb = b.bottom();
  const double ix = std::max(0.0, std::min(ra, rb) - std::max(a.left, b.left));
  const double iy = std::max(0.0, std::min(ba, bb) - std::max(a.top, b.top));
  const double inter = ix * iy;
  const double area_a = (ra - a.left) * (ba - a.top);
  const double area_b = (rb - b.left) * (bb - b.top);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double pair_distance(const Box& b, const Box& o, const FrameDims& dims) {
  detail::check(dims.width > 0.0 && dims.height > 0.0,
                "pair_distance: frame dims must be positive");
  const double dx = b.center_x() - o.center_x();
  const double dy = b.center_y() - o.center_y();
  const double norm = std::sqrt(dims.width * dims.width + dims.height * dims.height);
  const double f = std::sqrt(dx * dx + dy * dy) / norm;
  const double jaccard = 1.0 - iou(b, o);
  return std::clamp((f + jaccard) / 2.0, 0.0, 1.0);
}

Tensor distance_matrix(const std::vector<Box>& tracks,
                       const std::vector<Box>& objects, const FrameDims& dims) {
  detail::check(!tracks.empty() && !objects.empty(),
                "distance_matrix: empty track or object list");
  Tensor d(tracks.size(), objects.size());
  for (std::size_t n = 0; n < tracks.size(); ++n)
    for (std::size_t m = 0; m < objects.size(); ++m)
      d.at(n, m) = pair_distance(tracks[n], objects[m], dims);
  return d;
}

namespace {

struct BroadcastBoxes {
  NodeId l, t, r, b, cx, cy, area;
};

// Expands one coordinate column to N x M.
BroadcastBoxes broadcast_rows(Graph& g, NodeId boxes, std::size_t n, std::size_t m) {
  NodeId ones = g.constant(Tensor::full(1, m, 1.0));
  auto col = [&](std::size_t c) {
    return g.matmul(g.slice(boxes, 0, n, c, c + 1), ones);  // N x M
  };
  BroadcastBoxes out{};
  out.l = col(0);
  out.t = col(1);
  NodeId w = col(2);
  NodeId h = col(3);
  out.r = g.add(out.l, w);
  out.b = g.add(out.t, h);
  out.cx = g.add(out.l, g.affine(w, 0.5, 0.0));
  out.cy = g.add(out.t, g.affine(h, 0.5, 0.0));
  // Area from the rounded corners, matching the plain iou().
  out.area = g.mul(g.sub(out.r, out.l), g.sub(out.b, out.t));
  return out;
}

BroadcastBoxes broadcast_cols(Graph& g, NodeId boxes, std::size_t n, std::size_t m) {
  NodeId ones = g.constant(Tensor::full(n, 1, 1.0));
  auto row = [&](std::size_t c) {
    return g.matmul(ones, g.transpose(g.slice(boxes, 0, m, c, c + 1)));  // N x M
  };
  BroadcastBoxes out{};
  out.l = row(0);
  out.t = row(1);
  NodeId w = row(2);
  NodeId h = row(3);
  out.r = g.add(out.l, w);
  out.b = g.add(out.t, h);
  out.cx = g.add(out.l, g.affine(w, 0.5, 0.0));
  out.cy = g.add(out.t, g.affine(h, 0.5, 0.0));
  out.area = g.mul(g.sub(out.r, out.l), g.sub(out.b, out.t));
  return out;
}

}  // namespace

NodeId distance_matrix_node(Graph& g, NodeId tracks, NodeId objects,
                            const FrameDims& dims) {
  const Tensor& tv = g.value(tracks);
  const Tensor& ov = g.value(objects);
  detail::check(tv.cols() == 4 && ov.cols() == 4,
                "distance_matrix_node: boxes must be N x 4");
  detail::check(tv.rows() >= 1 && ov.rows() >= 1,
                "distance_matrix_node: empty track or object list");
  detail::check(dims.width > 0.0 && dims.height > 0.0,
                "distance_matrix_node: frame dims must be positive");
  const std::size_t n = tv.rows(), m = ov.rows();
  BroadcastBoxes a = broadcast_rows(g, tracks, n, m);
  BroadcastBoxes b = broadcast_cols(g, objects, n, m);

  NodeId zeros = g.constant(Tensor(n, m));
  NodeId ix = g.max_ew(g.sub(g.min_ew(a.r, b.r), g.max_ew(a.l, b.l)), zeros);
  NodeId iy = g.max_ew(g.sub(g.min_ew(a.b, b.b), g.max_ew(a.t, b.t)), zeros);
  NodeId inter = g.mul(ix, iy);
  NodeId uni = g.sub(g.add(a.area, b.area), inter);
  NodeId safe_uni = g.max_ew(uni, g.constant(Tensor::full(n, m, 1e-12)));
  NodeId jaccard = g.affine(g.div(inter, safe_uni), -1.0, 1.0);

  NodeId dx = g.sub(a.cx, b.cx);
  NodeId dy = g.sub(a.cy, b.cy);
  NodeId center = g.sqrt(g.add(g.mul(dx, dx), g.mul(dy, dy)));
  const double norm =
      std::sqrt(dims.width * dims.width + dims.height * dims.height);
  NodeId f = g.affine(center, 1.0 / norm, 0.0);
  NodeId d = g.affine(g.add(f, jaccard), 0.5, 0.0);
  NodeId ones = g.constant(Tensor::full(n, m, 1.0));
  return g.max_ew(g.min_ew(d, ones), zeros);
}

Tensor boxes_to_tensor(const std::vector<Box>& boxes) {
  Tensor t(boxes.size(), 4);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    t.at(i, 0) = boxes[i].left;
    t.at(i, 1) = boxes[i].top;
    t.at(i, 2) = boxes[i].width;
    t.at(i, 3) = boxes[i].height;
  }
  return t;
}

std::vector<Box> tensor_to_boxes(const Tensor& t) {
  detail::check(t.cols() == 4, "tensor_to_boxes: expected N x 4");
  std::vector<Box> boxes(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i)
    boxes[i] = {t.at(i, 0), t.at(i, 1), t.at(i, 2), t.at(i, 3)};
  return boxes;
}

}  // namespace deepmot
