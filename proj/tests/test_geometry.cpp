#include <stdexcept>
#include <limits>
#include <cmath>

#include "deepmot/geometry.hpp"
#include "deepmot/rng.hpp"
#include "doctest.h"

using namespace deepmot;

namespace {

Box random_box(Rng& rng, const FrameDims& dims) {
  const double w = rng.uniform(5.0, 50.0);
  const double h = rng.uniform(5.0, 50.0);
  return {rng.uniform(0.0, dims.width - w), rng.uniform(0.0, dims.height - h), w, h};
}

}  // namespace

TEST_CASE("iou basics") {
  Box a{0, 0, 2, 2};
  CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(iou(a, {10, 10, 2, 2}) == 0.0);
  CHECK(iou(a, {1, 0, 2, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Two degenerate boxes: zero union means zero overlap by convention.
  CHECK(iou({1, 1, 0, 0}, {1, 1, 0, 0}) == 0.0);
}

TEST_CASE("pair_distance hand cases") {
  FrameDims dims{100, 100};
  Box a{0, 0, 2, 2};
  CHECK(pair_distance(a, a, dims) == doctest::Approx(0.0).epsilon(1e-15));

  const double expected = (1.0 / std::sqrt(20000.0) + 2.0 / 3.0) / 2.0;
  CHECK(pair_distance(a, {1, 0, 2, 2}, dims) == doctest::Approx(expected).epsilon(1e-12));

  // Point-like boxes at opposite frame corners approach distance 1.
  Box tiny_a{0, 0, 1e-9, 1e-9};
  Box tiny_b{100 - 1e-9, 100 - 1e-9, 1e-9, 1e-9};
  CHECK(pair_distance(tiny_a, tiny_b, dims) > 0.999);
  CHECK(pair_distance(tiny_a, tiny_b, dims) <= 1.0);
}

TEST_CASE("pair_distance is symmetric and bounded") {
  Rng rng(101);
  FrameDims dims{640, 480};
  for (int i = 0; i < 200; ++i) {
    Box a = random_box(rng, dims), b = random_box(rng, dims);
    const double d1 = pair_distance(a, b, dims);
    const double d2 = pair_distance(b, a, dims);
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-15));
    CHECK(d1 >= 0.0);
    CHECK(d1 <= 1.0);
  }
}

TEST_CASE("distance_matrix basics and per-pair agreement") {
  FrameDims dims{640, 480};
  Box a{10, 10, 20, 20};
  Tensor single = distance_matrix({a}, {a}, dims);
  CHECK(single.at(0, 0) == 0.0);

  Rng rng(103);
  std::vector<Box> tracks, objects;
  for (int i = 0; i < 3; ++i) tracks.push_back(random_box(rng, dims));
  for (int i = 0; i < 4; ++i) objects.push_back(random_box(rng, dims));
  Tensor d = distance_matrix(tracks, objects, dims);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t m = 0; m < 4; ++m)
      CHECK(d.at(n, m) == doctest::Approx(pair_distance(tracks[n], objects[m], dims))
                              .epsilon(1e-15));

  // Same list on both sides has a zero diagonal.
  Tensor dd = distance_matrix(objects, objects, dims);
  for (std::size_t i = 0; i < 4; ++i) CHECK(dd.at(i, i) == 0.0);

  CHECK_THROWS_AS(distance_matrix({}, objects, dims), std::invalid_argument);
}

TEST_CASE("graph distance matrix agrees with the plain computation") {
  Rng rng(107);
  FrameDims dims{640, 480};
  std::vector<Box> tracks, objects;
  for (int i = 0; i < 3; ++i) tracks.push_back(random_box(rng, dims));
  for (int i = 0; i < 4; ++i) objects.push_back(random_box(rng, dims));
  Tensor expected = distance_matrix(tracks, objects, dims);

  Graph g;
  NodeId node = distance_matrix_node(g, g.constant(boxes_to_tensor(tracks)),
                                     g.constant(boxes_to_tensor(objects)), dims);
  const Tensor& got = g.value(node);
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("distance gradient matches finite differences at generic positions") {
  Rng rng(109);
  FrameDims dims{640, 480};
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Box> tracks = {random_box(rng, dims), random_box(rng, dims)};
    std::vector<Box> objects = {random_box(rng, dims), random_box(rng, dims),
                                random_box(rng, dims)};
    Tensor w(2, 3);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
    double err = finite_diff_check(
        [&](Graph& g, NodeId t) {
          NodeId objs = g.constant(boxes_to_tensor(objects));
          return g.sum(g.mul_mask(distance_matrix_node(g, t, objs, dims), w));
        },
        boxes_to_tensor(tracks), 1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("distance gradient vanishes at exact coincidence") {
  FrameDims dims{640, 480};
  Box b{100, 120, 40, 60};
  Graph g;
  NodeId track = g.leaf(boxes_to_tensor({b}));
  NodeId obj = g.constant(boxes_to_tensor({b}));
  NodeId d = distance_matrix_node(g, track, obj, dims);
  g.backward(g.sum(d));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::fabs(g.grad(track)[i]) < 1e-6);
}
