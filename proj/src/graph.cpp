#include "deepmot/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "deepmot/common.hpp"
#include "deepmot/rng.hpp"

namespace deepmot {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap cmap(const Tensor& t) {
  return CMap(t.ptr(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

Map mmap(Tensor& t) {
  return Map(t.ptr(), static_cast<Eigen::Index>(t.rows()),
             static_cast<Eigen::Index>(t.cols()));
}

constexpr double kSqrtEps = 1e-30;

}  // namespace

Graph::Graph(Precision precision) : precision_(precision) {
  nodes_.reserve(256);
}

NodeId Graph::push(Node node) {
  if (node.op != Op::kLeaf && node.op != Op::kConst) {
    if (precision_ == Precision::f32) node.value.quantize_f32();
    if (!node.value.all_finite())
      detail::fail_runtime("graph: operation produced a non-finite value");
  }
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(Tensor value) {
  if (!value.all_finite()) detail::fail_runtime("graph: non-finite leaf value");
  Node n;
  n.op = Op::kLeaf;
  n.leaf = true;
  n.needs_grad = true;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor value) {
  if (!value.all_finite()) detail::fail_runtime("graph: non-finite constant");
  Node n;
  n.op = Op::kConst;
  n.value = std::move(value);
  return push(std::move(n));
}

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    deepmot::detail::fail_invalid(deepmot::detail::cat(
        what, ": shape mismatch (", a.rows(), "x", a.cols(), " vs ", b.rows(),
        "x", b.cols(), ")"));
}
}  // namespace

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.cols() != B.rows())
    detail::fail_invalid(detail::cat("matmul: inner dimensions differ (",
                                     A.cols(), " vs ", B.rows(), ")"));
  Node n;
  n.op = Op::kMatmul;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = Tensor(A.rows(), B.cols());
  mmap(n.value).noalias() = cmap(A) * cmap(B);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check_same_shape(A, B, "add");
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = A[i] + B[i];
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check_same_shape(A, B, "sub");
  Node n;
  n.op = Op::kSub;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = A[i] - B[i];
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check_same_shape(A, B, "mul");
  Node n;
  n.op = Op::kMul;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = A[i] * B[i];
  return push(std::move(n));
}

NodeId Graph::div(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check_same_shape(A, B, "div");
  Node n;
  n.op = Op::kDiv;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = A[i] / B[i];
  return push(std::move(n));
}

NodeId Graph::affine(NodeId a, double scale, double shift) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kAffine;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.p0 = scale;
  n.p1 = shift;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = scale * A[i] + shift;
  return push(std::move(n));
}

NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
  detail::check(!parts.empty(), "concat_rows: empty part list");
  std::size_t cols = val(parts[0]).cols();
  std::size_t rows = 0;
  for (NodeId p : parts) {
    detail::check(val(p).cols() == cols, "concat_rows: column counts differ");
    rows += val(p).rows();
  }
  Node n;
  n.op = Op::kConcatRows;
  n.in = parts;
  for (NodeId p : parts) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  n.value = Tensor(rows, cols);
  std::size_t r = 0;
  for (NodeId p : parts) {
    const Tensor& P = val(p);
    std::copy(P.ptr(), P.ptr() + P.size(), n.value.ptr() + r * cols);
    r += P.rows();
  }
  return push(std::move(n));
}

NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
  detail::check(!parts.empty(), "concat_cols: empty part list");
  std::size_t rows = val(parts[0]).rows();
  std::size_t cols = 0;
  for (NodeId p : parts) {
    detail::check(val(p).rows() == rows, "concat_cols: row counts differ");
    cols += val(p).cols();
  }
  Node n;
  n.op = Op::kConcatCols;
  n.in = parts;
  for (NodeId p : parts) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  n.value = Tensor(rows, cols);
  std::size_t c = 0;
  for (NodeId p : parts) {
    const Tensor& P = val(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(P.ptr() + r * P.cols(), P.ptr() + (r + 1) * P.cols(),
                n.value.ptr() + r * cols + c);
    c += P.cols();
  }
  return push(std::move(n));
}

NodeId Graph::slice(NodeId a, std::size_t r0, std::size_t r1, std::size_t c0,
                    std::size_t c1) {
  const Tensor& A = val(a);
  detail::check(r0 <= r1 && r1 <= A.rows() && c0 <= c1 && c1 <= A.cols(),
                "slice: range out of bounds");
  detail::check(r1 > r0 && c1 > c0, "slice: empty range");
  Node n;
  n.op = Op::kSlice;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.ip = {static_cast<std::uint32_t>(r0), static_cast<std::uint32_t>(r1),
          static_cast<std::uint32_t>(c0), static_cast<std::uint32_t>(c1)};
  n.value = Tensor(r1 - r0, c1 - c0);
  for (std::size_t r = r0; r < r1; ++r)
    std::copy(A.ptr() + r * A.cols() + c0, A.ptr() + r * A.cols() + c1,
              n.value.ptr() + (r - r0) * (c1 - c0));
  return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kTranspose;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.cols(), A.rows());
  mmap(n.value) = cmap(A).transpose();
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::size_t rows, std::size_t cols) {
  const Tensor& A = val(a);
  detail::check(rows * cols == A.size(), "reshape: element count mismatch");
  Node n;
  n.op = Op::kReshape;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(rows, cols);
  std::copy(A.ptr(), A.ptr() + A.size(), n.value.ptr());
  return push(std::move(n));
}

NodeId Graph::permute_rows(NodeId a, std::vector<std::uint32_t> perm) {
  const Tensor& A = val(a);
  detail::check(perm.size() == A.rows(), "permute_rows: size mismatch");
  Node n;
  n.op = Op::kPermuteRows;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t r = 0; r < perm.size(); ++r) {
    detail::check(perm[r] < A.rows(), "permute_rows: index out of range");
    std::copy(A.ptr() + perm[r] * A.cols(), A.ptr() + (perm[r] + 1) * A.cols(),
              n.value.ptr() + r * A.cols());
  }
  n.ip.assign(perm.begin(), perm.end());
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kSum;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kSigmoid;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i)
    n.value[i] = 1.0 / (1.0 + std::exp(-A[i]));
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kTanh;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = std::tanh(A[i]);
  return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kLog;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = std::log(A[i]);
  return push(std::move(n));
}

NodeId Graph::sqrt(NodeId a) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kSqrt;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i)
    n.value[i] = std::sqrt(A[i] + kSqrtEps);
  return push(std::move(n));
}

NodeId Graph::pow_const(NodeId a, double p) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kPowConst;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.p0 = p;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = std::pow(A[i], p);
  return push(std::move(n));
}

NodeId Graph::softmax_rows(NodeId a) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kSoftmaxRows;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  const std::size_t C = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double* x = A.ptr() + r * C;
    double* y = n.value.ptr() + r * C;
    double m = x[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, x[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      y[c] = std::exp(x[c] - m);
      s += y[c];
    }
    for (std::size_t c = 0; c < C; ++c) y[c] /= s;
  }
  return push(std::move(n));
}

NodeId Graph::softmax_cols(NodeId a) {
  const Tensor& A = val(a);
  Node n;
  n.op = Op::kSoftmaxCols;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  const std::size_t R = A.rows(), C = A.cols();
  for (std::size_t c = 0; c < C; ++c) {
    double m = A.at(0, c);
    for (std::size_t r = 1; r < R; ++r) m = std::max(m, A.at(r, c));
    double s = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      double e = std::exp(A.at(r, c) - m);
      n.value.at(r, c) = e;
      s += e;
    }
    for (std::size_t r = 0; r < R; ++r) n.value.at(r, c) /= s;
  }
  return push(std::move(n));
}

NodeId Graph::min_ew(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check_same_shape(A, B, "min_ew");
  Node n;
  n.op = Op::kMin;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = std::min(A[i], B[i]);
  return push(std::move(n));
}

NodeId Graph::max_ew(NodeId a, NodeId b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  check_same_shape(A, B, "max_ew");
  Node n;
  n.op = Op::kMax;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = std::max(A[i], B[i]);
  return push(std::move(n));
}

NodeId Graph::mul_mask(NodeId a, Tensor mask) {
  const Tensor& A = val(a);
  check_same_shape(A, mask, "mul_mask");
  Node n;
  n.op = Op::kMulMask;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) n.value[i] = A[i] * mask[i];
  n.aux = std::move(mask);
  return push(std::move(n));
}

NodeId Graph::masked_l1(NodeId a, Tensor mask) {
  const Tensor& A = val(a);
  check_same_shape(A, mask, "masked_l1");
  Node n;
  n.op = Op::kMaskedL1;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += std::fabs(A[i] * mask[i]);
  n.value = Tensor::scalar(s);
  n.aux = std::move(mask);
  return push(std::move(n));
}

NodeId Graph::add_rowvec(NodeId a, NodeId v) {
  const Tensor& A = val(a);
  const Tensor& V = val(v);
  detail::check(V.rows() == 1 && V.cols() == A.cols(),
                "add_rowvec: vector must be 1 x cols(a)");
  Node n;
  n.op = Op::kAddRowvec;
  n.in = {a, v};
  n.needs_grad = nodes_[a].needs_grad || nodes_[v].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c)
      n.value.at(r, c) = A.at(r, c) + V[c];
  return push(std::move(n));
}

NodeId Graph::add_colvec(NodeId a, NodeId v) {
  const Tensor& A = val(a);
  const Tensor& V = val(v);
  detail::check(V.cols() == 1 && V.rows() == A.rows(),
                "add_colvec: vector must be rows(a) x 1");
  Node n;
  n.op = Op::kAddColvec;
  n.in = {a, v};
  n.needs_grad = nodes_[a].needs_grad || nodes_[v].needs_grad;
  n.value = Tensor(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c)
      n.value.at(r, c) = A.at(r, c) + V[r];
  return push(std::move(n));
}

NodeId Graph::im2col1d(NodeId a, std::size_t k) {
  const Tensor& A = val(a);
  detail::check(k % 2 == 1 && k >= 1, "im2col1d: kernel size must be odd");
  const std::size_t C = A.rows(), L = A.cols(), pad = k / 2;
  Node n;
  n.op = Op::kIm2col1d;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.ip = {static_cast<std::uint32_t>(k)};
  n.value = Tensor(C * k, L);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < L; ++t) {
        std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                             static_cast<std::ptrdiff_t>(pad);
        n.value.at(c * k + j, t) =
            (src >= 0 && src < static_cast<std::ptrdiff_t>(L))
                ? A.at(c, static_cast<std::size_t>(src))
                : 0.0;
      }
  return push(std::move(n));
}

NodeId Graph::avgpool1d2(NodeId a) {
  const Tensor& A = val(a);
  const std::size_t C = A.rows(), L = A.cols(), Lo = (L + 1) / 2;
  Node n;
  n.op = Op::kAvgPool2;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor(C, Lo);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < Lo; ++i) {
      if (2 * i + 1 < L)
        n.value.at(c, i) = 0.5 * (A.at(c, 2 * i) + A.at(c, 2 * i + 1));
      else
        n.value.at(c, i) = A.at(c, 2 * i);
    }
  return push(std::move(n));
}

NodeId Graph::upsample1d(NodeId a, std::size_t target_len) {
  const Tensor& A = val(a);
  detail::check(A.cols() == (target_len + 1) / 2,
                "upsample1d: input length must be ceil(target/2)");
  Node n;
  n.op = Op::kUpsample;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.ip = {static_cast<std::uint32_t>(target_len)};
  n.value = Tensor(A.rows(), target_len);
  for (std::size_t c = 0; c < A.rows(); ++c)
    for (std::size_t t = 0; t < target_len; ++t)
      n.value.at(c, t) = A.at(c, t / 2);
  return push(std::move(n));
}

void Graph::accumulate(NodeId id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Graph::backward_node(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty() || !n.needs_grad) return;
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      return;
    case Op::kMatmul: {
      const Tensor& A = val(n.in[0]);
      const Tensor& B = val(n.in[1]);
      if (nodes_[n.in[0]].needs_grad) {
        Tensor ga(A.rows(), A.cols());
        mmap(ga).noalias() = cmap(g) * cmap(B).transpose();
        accumulate(n.in[0], ga);
      }
      if (nodes_[n.in[1]].needs_grad) {
        Tensor gb(B.rows(), B.cols());
        mmap(gb).noalias() = cmap(A).transpose() * cmap(g);
        accumulate(n.in[1], gb);
      }
      return;
    }
    case Op::kAdd:
      accumulate(n.in[0], g);
      accumulate(n.in[1], g);
      return;
    case Op::kSub: {
      accumulate(n.in[0], g);
      if (nodes_[n.in[1]].needs_grad) {
        Tensor gb(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
        accumulate(n.in[1], gb);
      }
      return;
    }
    case Op::kMul: {
      const Tensor& A = val(n.in[0]);
      const Tensor& B = val(n.in[1]);
      if (nodes_[n.in[0]].needs_grad) {
        Tensor ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * B[i];
        accumulate(n.in[0], ga);
      }
      if (nodes_[n.in[1]].needs_grad) {
        Tensor gb(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * A[i];
        accumulate(n.in[1], gb);
      }
      return;
    }
    case Op::kDiv: {
      const Tensor& B = val(n.in[1]);
      if (nodes_[n.in[0]].needs_grad) {
        Tensor ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / B[i];
        accumulate(n.in[0], ga);
      }
      if (nodes_[n.in[1]].needs_grad) {
        Tensor gb(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i)
          gb[i] = -g[i] * n.value[i] / B[i];
        accumulate(n.in[1], gb);
      }
      return;
    }
    case Op::kAffine: {
      Tensor ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = n.p0 * g[i];
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kConcatRows: {
      std::size_t r = 0;
      for (NodeId p : n.in) {
        const Tensor& P = val(p);
        if (nodes_[p].needs_grad) {
          Tensor gp(P.rows(), P.cols());
          std::copy(g.ptr() + r * g.cols(),
                    g.ptr() + (r + P.rows()) * g.cols(), gp.ptr());
          accumulate(p, gp);
        }
        r += P.rows();
      }
      return;
    }
    case Op::kConcatCols: {
      std::size_t c = 0;
      for (NodeId p : n.in) {
        const Tensor& P = val(p);
        if (nodes_[p].needs_grad) {
          Tensor gp(P.rows(), P.cols());
          for (std::size_t r = 0; r < P.rows(); ++r)
            std::copy(g.ptr() + r * g.cols() + c,
                      g.ptr() + r * g.cols() + c + P.cols(),
                      gp.ptr() + r * P.cols());
          accumulate(p, gp);
        }
        c += P.cols();
      }
      return;
    }
    case Op::kSlice: {
      const Tensor& A = val(n.in[0]);
      Tensor ga(A.rows(), A.cols());
      const std::size_t r0 = n.ip[0], c0 = n.ip[2];
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
          ga.at(r0 + r, c0 + c) = g.at(r, c);
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kTranspose: {
      Tensor ga(g.cols(), g.rows());
      mmap(ga) = cmap(g).transpose();
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kReshape: {
      const Tensor& A = val(n.in[0]);
      Tensor ga(A.rows(), A.cols());
      std::copy(g.ptr(), g.ptr() + g.size(), ga.ptr());
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kPermuteRows: {
      const Tensor& A = val(n.in[0]);
      Tensor ga(A.rows(), A.cols());
      for (std::size_t r = 0; r < n.ip.size(); ++r) {
        double* dst = ga.ptr() + n.ip[r] * g.cols();
        const double* src = g.ptr() + r * g.cols();
        for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
      }
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kSum: {
      const Tensor& A = val(n.in[0]);
      accumulate(n.in[0], Tensor::full(A.rows(), A.cols(), g[0]));
      return;
    }
    case Op::kSigmoid: {
      Tensor ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] = g[i] * n.value[i] * (1.0 - n.value[i]);
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kTanh: {
      Tensor ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] = g[i] * (1.0 - n.value[i] * n.value[i]);
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kLog: {
      const Tensor& A = val(n.in[0]);
      Tensor ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / A[i];
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kSqrt: {
      Tensor ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] = g[i] * 0.5 / n.value[i];
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kPowConst: {
      const Tensor& A = val(n.in[0]);
      Tensor ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] = g[i] * n.p0 * std::pow(A[i], n.p0 - 1.0);
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kSoftmaxRows: {
      Tensor ga(g.rows(), g.cols());
      const std::size_t C = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        const double* y = n.value.ptr() + r * C;
        const double* gr = g.ptr() + r * C;
        double dot = 0.0;
        for (std::size_t c = 0; c < C; ++c) dot += gr[c] * y[c];
        double* out = ga.ptr() + r * C;
        for (std::size_t c = 0; c < C; ++c) out[c] = y[c] * (gr[c] - dot);
      }
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kSoftmaxCols: {
      Tensor ga(g.rows(), g.cols());
      for (std::size_t c = 0; c < g.cols(); ++c) {
        double dot = 0.0;
        for (std::size_t r = 0; r < g.rows(); ++r)
          dot += g.at(r, c) * n.value.at(r, c);
        for (std::size_t r = 0; r < g.rows(); ++r)
          ga.at(r, c) = n.value.at(r, c) * (g.at(r, c) - dot);
      }
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kMin:
    case Op::kMax: {
      const Tensor& A = val(n.in[0]);
      const Tensor& B = val(n.in[1]);
      const bool take_min = n.op == Op::kMin;
      Tensor ga(g.rows(), g.cols()), gb(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) {
        double wa;
        if (A[i] == B[i])
          wa = 0.5;
        else if (take_min)
          wa = A[i] < B[i] ? 1.0 : 0.0;
        else
          wa = A[i] > B[i] ? 1.0 : 0.0;
        ga[i] = g[i] * wa;
        gb[i] = g[i] * (1.0 - wa);
      }
      accumulate(n.in[0], ga);
      accumulate(n.in[1], gb);
      return;
    }
    case Op::kMulMask: {
      Tensor ga(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * n.aux[i];
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kMaskedL1: {
      const Tensor& A = val(n.in[0]);
      Tensor ga(A.rows(), A.cols());
      for (std::size_t i = 0; i < A.size(); ++i) {
        double m = A[i] * n.aux[i];
        double sign = m > 0.0 ? 1.0 : (m < 0.0 ? -1.0 : 0.0);
        ga[i] = g[0] * sign * n.aux[i];
      }
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kAddRowvec: {
      accumulate(n.in[0], g);
      if (nodes_[n.in[1]].needs_grad) {
        Tensor gv(1, g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gv[c] += g.at(r, c);
        accumulate(n.in[1], gv);
      }
      return;
    }
    case Op::kAddColvec: {
      accumulate(n.in[0], g);
      if (nodes_[n.in[1]].needs_grad) {
        Tensor gv(g.rows(), 1);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gv[r] += g.at(r, c);
        accumulate(n.in[1], gv);
      }
      return;
    }
    case Op::kIm2col1d: {
      const Tensor& A = val(n.in[0]);
      const std::size_t C = A.rows(), L = A.cols(), k = n.ip[0], pad = k / 2;
      Tensor ga(C, L);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t t = 0; t < L; ++t) {
            std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                                 static_cast<std::ptrdiff_t>(pad);
            if (src >= 0 && src < static_cast<std::ptrdiff_t>(L))
              ga.at(c, static_cast<std::size_t>(src)) += g.at(c * k + j, t);
          }
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kAvgPool2: {
      const Tensor& A = val(n.in[0]);
      const std::size_t C = A.rows(), L = A.cols(), Lo = g.cols();
      Tensor ga(C, L);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < Lo; ++i) {
          if (2 * i + 1 < L) {
            ga.at(c, 2 * i) += 0.5 * g.at(c, i);
            ga.at(c, 2 * i + 1) += 0.5 * g.at(c, i);
          } else {
            ga.at(c, 2 * i) += g.at(c, i);
          }
        }
      accumulate(n.in[0], ga);
      return;
    }
    case Op::kUpsample: {
      const Tensor& A = val(n.in[0]);
      Tensor ga(A.rows(), A.cols());
      for (std::size_t c = 0; c < A.rows(); ++c)
        for (std::size_t t = 0; t < g.cols(); ++t)
          ga.at(c, t / 2) += g.at(c, t);
      accumulate(n.in[0], ga);
      return;
    }
  }
}

void Graph::backward(NodeId output) {
  detail::check(output < nodes_.size(), "backward: unknown node");
  detail::check(nodes_[output].value.size() == 1,
                "backward: output must be scalar");
  for (auto& n : nodes_) n.grad = Tensor();
  nodes_[output].grad = Tensor::scalar(1.0);
  for (NodeId id = output + 1; id-- > 0;) backward_node(id);
  for (auto& n : nodes_) {
    if (!n.leaf) continue;
    if (n.grad.empty())
      n.grad = Tensor(n.value.rows(), n.value.cols());
    else if (!n.grad.all_finite())
      detail::fail_runtime("backward: non-finite gradient");
  }
}

const Tensor& Graph::grad(NodeId id) const {
  const Node& n = nodes_[id];
  if (!n.grad.empty()) return n.grad;
  zero_like_ = Tensor(n.value.rows(), n.value.cols());
  return zero_like_;
}

double finite_diff_check(const std::function<NodeId(Graph&, NodeId)>& build,
                         const Tensor& x, double eps) {
  detail::check(eps > 0.0, "finite_diff_check: eps must be positive");
  Graph g;
  NodeId id = g.leaf(x);
  NodeId out = build(g, id);
  detail::check(g.value(out).size() == 1,
                "finite_diff_check: map must be scalar-valued");
  g.backward(out);
  Tensor analytic = g.grad(id);

  auto eval = [&](const Tensor& point) {
    Graph h;
    NodeId hid = h.leaf(point);
    double v = h.value(build(h, hid)).item();
    if (!std::isfinite(v)) detail::fail_runtime("finite_diff_check: non-finite evaluation");
    return v;
  };

  Tensor probe = x;
  Tensor fd(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    double fp = eval(probe);
    probe[i] = x[i] - eps;
    double fm = eval(probe);
    probe[i] = x[i];
    fd[i] = (fp - fm) / (2.0 * eps);
  }
  // Errors are relative to the gradient's scale: per-coordinate relative
  // error is meaningless for coordinates whose difference quotient sits at
  // the double-precision cancellation floor.
  const double scale = std::max(fd.max_abs(), 1e-8);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, std::fabs(analytic[i] - fd[i]) / scale);
  return worst;
}

double finite_diff_check_multi(
    const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& build,
    const std::vector<Tensor>& leaves, double eps, std::size_t max_coords,
    std::uint64_t rng_seed) {
  detail::check(eps > 0.0, "finite_diff_check_multi: eps must be positive");
  Graph g;
  std::vector<NodeId> ids;
  ids.reserve(leaves.size());
  for (const auto& t : leaves) ids.push_back(g.leaf(t));
  NodeId out = build(g, ids);
  detail::check(g.value(out).size() == 1,
                "finite_diff_check_multi: map must be scalar-valued");
  g.backward(out);
  std::vector<Tensor> analytic;
  analytic.reserve(ids.size());
  for (NodeId id : ids) analytic.push_back(g.grad(id));

  std::vector<Tensor> point = leaves;
  auto eval = [&]() {
    Graph h;
    std::vector<NodeId> hid;
    hid.reserve(point.size());
    for (const auto& t : point) hid.push_back(h.leaf(t));
    double v = h.value(build(h, hid)).item();
    if (!std::isfinite(v))
      detail::fail_runtime("finite_diff_check_multi: non-finite evaluation");
    return v;
  };

  Rng rng(rng_seed);
  std::vector<std::pair<double, double>> samples;  // (analytic, fd)
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const std::size_t n = leaves[li].size();
    std::vector<std::size_t> coords;
    if (max_coords == 0 || n <= max_coords) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(rng.index(n));
    }
    for (std::size_t i : coords) {
      const double orig = point[li][i];
      point[li][i] = orig + eps;
      double fp = eval();
      point[li][i] = orig - eps;
      double fm = eval();
      point[li][i] = orig;
      samples.emplace_back(analytic[li][i], (fp - fm) / (2.0 * eps));
    }
  }
  double scale = 1e-8;
  for (const auto& [a, f] : samples) scale = std::max(scale, std::fabs(f));
  double worst = 0.0;
  for (const auto& [a, f] : samples)
    worst = std::max(worst, std::fabs(a - f) / scale);
  return worst;
}

}  // namespace deepmot
