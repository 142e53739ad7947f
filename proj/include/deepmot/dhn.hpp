#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "deepmot/datasets.hpp"
#include "deepmot/graph.hpp"
#include "deepmot/tensor.hpp"

namespace deepmot {

enum class DhnVariant { seq_gru, seq_lstm, paral_gru, paral_lstm, conv1d };

std::string variant_name(DhnVariant v);
DhnVariant variant_from_name(const std::string& name);

struct DhnConfig {
  DhnVariant variant = DhnVariant::seq_gru;
  std::size_t hidden = 64;
  // Output-head widths after the 2h input; must end in 1. The sequential
  // variants use all entries (three FC layers by default); the parallel
  // variant uses {first, 1}. Ignored by conv1d (kernel shapes are fixed).
  std::vector<std::size_t> head_widths = {64, 32, 1};
};

// Named parameter tensors in a fixed construction order (the checkpoint
// layout). The two Bi-RNN stages have the same hidden size but separate
// weights.
struct DhnParams {
  DhnConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
};

DhnParams init_dhn(const DhnConfig& cfg, std::uint64_t seed);

// NTF1 checkpoint I/O (values stored as float32).
void save_dhn(const DhnParams& params, const std::string& path);
DhnParams load_dhn(const std::string& path);

// Builds the forward network on an existing graph. d_node must be N x M with
// N, M >= 1 (conv1d additionally needs N*M >= 2). When trainable, parameter
// nodes are leaves listed in params.tensors order; otherwise constants.
struct DhnGraph {
  NodeId output;
  std::vector<NodeId> param_nodes;
};
DhnGraph dhn_forward_node(Graph& g, NodeId d_node, const DhnParams& params,
                          bool trainable);

// Same forward wired onto parameter nodes that already live in the graph;
// `named` must cover every tensor init_dhn would create for this config.
NodeId dhn_forward_with_nodes(Graph& g, NodeId d_node, const DhnConfig& cfg,
                              const std::vector<std::pair<std::string, NodeId>>& named);

// Single-matrix forward through a fresh graph.
Tensor dhn_forward(const Tensor& d, const DhnParams& params,
                   Precision precision = Precision::f64);

// Batched inference; all matrices must share one shape. The sequential
// variants run a dedicated Eigen path that matches the taped forward to
// machine precision; other variants evaluate per matrix.
std::vector<Tensor> dhn_infer_batch(const std::vector<const Tensor*>& ds,
                                    const DhnParams& params);

// Focal loss of a soft assignment against a binary label, mean over entries:
//   -w_c (1 - p_t)^gamma log(max(p_t, 1e-12)),
// with per-matrix class weights w_0 = n1/(n0+n1), w_1 = 1 - w_0.
NodeId focal_loss_node(Graph& g, NodeId pred, const Tensor& a_star, double gamma);
double focal_loss(const Tensor& pred, const Tensor& a_star, double gamma = 2.0);

enum class DiscretizeMode { row, column };

// Per row (resp. column) sets the largest entry to 1 iff it exceeds 0.5;
// ties break toward the smallest index.
Tensor discretize(const Tensor& soft, DiscretizeMode mode);

struct DhnEvalResult {
  double wa = 0.0;
  double ma_pct = 0.0;  // missing assignments, % of scanned lines
  double sa_pct = 0.0;  // several assignments, % of scanned lines
};

// Accumulates WA / MA / SA counts over (discretized prediction, label) pairs.
// WA weights come from the accumulated dataset class counts; MA/SA scan the
// axis opposite to the discretization mode.
class DhnEvalCounts {
 public:
  void add(const Tensor& pred_soft, const Tensor& label, DiscretizeMode mode);
  DhnEvalResult result() const;

 private:
  double n1_ = 0.0, n0_ = 0.0, n1_correct_ = 0.0, n0_correct_ = 0.0;
  std::size_t ma_ = 0, sa_ = 0, lines_ = 0;
};

DhnEvalResult eval_dhn(const DhnParams& params, const std::vector<MatrixPair>& data,
                       DiscretizeMode mode, std::size_t threads = 1);

struct TrainConfig {
  double lr = 3e-4;
  double decay_factor = 0.95;      // per decay_every iterations
  std::size_t decay_every = 20000; // iterations count matrices (batch size 1)
  std::size_t epochs = 20;
  std::uint64_t seed = 7;
  double focal_gamma = 2.0;
  // Freeze early once row-wise test WA reaches this value (0 disables).
  double wa_stop = 0.0;
  Precision precision = Precision::f64;
};

struct TrainCurves {
  std::vector<double> train_loss;  // per epoch mean
  std::vector<double> test_wa;     // per epoch, row-wise maximum
  std::size_t iterations = 0;
  bool aborted_non_finite = false;
};

using TrainLogger = std::function<void(std::size_t epoch, double loss, double wa)>;

// RMSprop training, batch size 1, seeded shuffle; deterministic for a fixed
// seed. Non-finite losses abort with the parameters of the last completed
// epoch. Learning rate at iteration i is lr * decay_factor^floor(i / decay_every).
DhnParams train_dhn(const std::vector<MatrixPair>& train,
                    const std::vector<MatrixPair>& test, const DhnConfig& cfg,
                    const TrainConfig& tcfg, TrainCurves* curves = nullptr,
                    const TrainLogger& log = nullptr);

struct SizeStudyRow {
  std::size_t size = 0;
  double wa = 0.0;
};

// For each square size in [min_size, max_size]: per_size uniform [0,1)
// matrices, labels from the exact solver, row-wise WA of the model.
// Deterministic for a fixed seed regardless of thread count.
std::vector<SizeStudyRow> size_study(const DhnParams& params, std::size_t min_size,
                                     std::size_t max_size, std::size_t per_size,
                                     std::uint64_t seed, std::size_t threads = 1,
                                     const std::function<void(std::size_t)>& progress = nullptr);

void write_size_study_csv(const std::string& path, const std::vector<SizeStudyRow>& rows);

}  // namespace deepmot
