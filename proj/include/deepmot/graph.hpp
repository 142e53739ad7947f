#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "deepmot/tensor.hpp"

namespace deepmot {

using NodeId = std::uint32_t;

// Reverse-mode autodiff over dense rank-2 tensors. A Graph is the recorded
// computation: nodes are appended in evaluation order, so every operand
// precedes its consumers and the trace is acyclic by construction. Forward
// values are computed eagerly; backward() replays the trace in reverse.
//
// Every operation validates shapes and rejects non-finite results
// (std::runtime_error), so NaN/Inf never propagate silently.
class Graph {
 public:
  explicit Graph(Precision precision = Precision::f64);

  Precision precision() const { return precision_; }

  // Differentiable input. backward() reports a gradient for every leaf.
  NodeId leaf(Tensor value);
  // Non-differentiable input; no gradient is tracked through it.
  NodeId constant(Tensor value);
  NodeId constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  // --- primitives -------------------------------------------------------
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  // scale * x + shift, elementwise with scalar constants
  NodeId affine(NodeId a, double scale, double shift);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  // Half-open row/column ranges.
  NodeId slice(NodeId a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, std::size_t rows, std::size_t cols);
  // out.row(i) = in.row(perm[i])
  NodeId permute_rows(NodeId a, std::vector<std::uint32_t> perm);
  NodeId sum(NodeId a);  // -> 1x1
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId log(NodeId a);
  // sqrt(x + 1e-30); the epsilon keeps the gradient finite when a chained
  // squared term sits exactly at zero (coincident box centers).
  NodeId sqrt(NodeId a);
  NodeId pow_const(NodeId a, double p);
  NodeId softmax_rows(NodeId a);
  NodeId softmax_cols(NodeId a);
  // Elementwise min/max; exact ties route half the gradient to each side.
  NodeId min_ew(NodeId a, NodeId b);
  NodeId max_ew(NodeId a, NodeId b);
  // Elementwise product with a constant mask.
  NodeId mul_mask(NodeId a, Tensor mask);
  // L1 norm of the masked matrix: sum |a .* mask| -> 1x1.
  NodeId masked_l1(NodeId a, Tensor mask);
  // Broadcast adds: v is 1xC added to every row / Rx1 added to every column.
  NodeId add_rowvec(NodeId a, NodeId v);
  NodeId add_colvec(NodeId a, NodeId v);
  // 1D convolution support: input is channels x length.
  // im2col with odd kernel k and zero 'same' padding -> (channels*k) x length.
  NodeId im2col1d(NodeId a, std::size_t k);
  // Stride-2 average pooling along length, ceil semantics.
  NodeId avgpool1d2(NodeId a);
  // Nearest-neighbour 2x upsampling along length, cropped to target_len.
  NodeId upsample1d(NodeId a, std::size_t target_len);

  // --- inspection / backward -------------------------------------------
  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  std::size_t node_count() const { return nodes_.size(); }
  bool is_leaf(NodeId id) const { return nodes_[id].leaf; }

  // Reverse pass from a scalar output. Gradients accumulate for every node
  // that (transitively) depends on a leaf; query them with grad().
  void backward(NodeId output);
  // Gradient of the last backward() output w.r.t. this node. Zero tensor of
  // the node's shape if the node does not influence the output.
  const Tensor& grad(NodeId id) const;

 private:
  enum class Op : std::uint8_t {
    kLeaf, kConst, kMatmul, kAdd, kSub, kMul, kDiv, kAffine, kConcatRows,
    kConcatCols, kSlice, kTranspose, kReshape, kPermuteRows, kSum, kSigmoid,
    kTanh, kLog, kSqrt, kPowConst, kSoftmaxRows, kSoftmaxCols, kMin, kMax,
    kMulMask, kMaskedL1, kAddRowvec, kAddColvec, kIm2col1d, kAvgPool2,
    kUpsample
  };

  struct Node {
    Op op;
    bool leaf = false;
    bool needs_grad = false;
    Tensor value;
    Tensor grad;
    std::vector<NodeId> in;
    double p0 = 0.0, p1 = 0.0;
    Tensor aux;                        // constant mask
    std::vector<std::uint32_t> ip;     // slice bounds / permutation / sizes
  };

  NodeId push(Node node);
  void accumulate(NodeId id, const Tensor& g);
  void backward_node(NodeId id);
  const Tensor& val(NodeId id) const { return nodes_[id].value; }

  Precision precision_;
  std::vector<Node> nodes_;
  mutable Tensor zero_like_;  // scratch for grad() on untouched nodes
};

// Central-difference gradient oracle for a scalar-valued map built on a
// single leaf. `build` must construct the same computation for any value of
// the leaf. Returns the worst per-coordinate relative error
// |analytic - fd| / max(|fd|, 1e-8). eps must be > 0.
double finite_diff_check(const std::function<NodeId(Graph&, NodeId)>& build,
                         const Tensor& x, double eps);

// Multi-leaf variant used to check full parameter gradients. For each leaf,
// at most `max_coords` coordinates are probed (0 = all), chosen by `rng_seed`
// when subsampling. Returns the worst relative error over probed coordinates.
double finite_diff_check_multi(
    const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& build,
    const std::vector<Tensor>& leaves, double eps, std::size_t max_coords = 0,
    std::uint64_t rng_seed = 0);

}  // namespace deepmot
