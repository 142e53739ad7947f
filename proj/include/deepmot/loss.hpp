#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepmot/dhn.hpp"
#include "deepmot/graph.hpp"
#include "deepmot/track_file.hpp"

namespace deepmot {

struct LossConfig {
  double delta = 0.5;   // fill value of the appended softmax column/row
  double lambda = 5.0;  // dMOTP balance in the combined loss
  double gamma = 2.0;   // soft-IDS penalty inside dMOTA
  double sharpen = 1.0; // softmax logit scale s (>= 1); 1 reproduces the plain form
  double tau_tp = 0.5;  // TP-mask matching threshold
};

// Binary true-positive mask with the identity labels of its rows (tracks)
// and columns (ground-truth objects). At most one 1 per row and column.
struct TpMask {
  Tensor mask;
  std::vector<std::int64_t> track_ids;
  std::vector<std::int64_t> gt_ids;
};

struct SoftCountNodes {
  NodeId fp;  // 1x1
  NodeId fn;  // 1x1
  NodeId cr;  // N x (M+1), rows sum to 1
  NodeId cc;  // (N+1) x M, columns sum to 1
};

// Cr = row softmax of s*[A | delta*1]; Cc = column softmax of s*[A ; delta*1^T];
// fp = sum of Cr's appended column, fn = sum of Cc's appended row.
SoftCountNodes soft_counts_node(Graph& g, NodeId a_soft, const LossConfig& cfg);

struct SoftCounts {
  double fp_soft = 0.0;
  double fn_soft = 0.0;
  Tensor cr;
  Tensor cc;
};
SoftCounts soft_counts(const Tensor& a_soft, const LossConfig& cfg);

// Thresholded exact matching on D; the mask is a constant in differentiation.
TpMask tp_mask(const Tensor& d, std::vector<std::int64_t> track_ids,
               std::vector<std::int64_t> gt_ids, const LossConfig& cfg);

// Aligns the previous-frame mask to the current frame's rows/columns:
// pairs whose track and object ids both existed at the previous frame copy
// from prev; rows/columns with a new identity copy from curr (new objects
// never register as switches). Duplicate identity labels are rejected.
TpMask pad_prev_mask(const TpMask& prev, const TpMask& curr);

// ||Cc_interior .* complement(B_prev_padded)||_1 where the interior drops the
// appended row.
NodeId soft_ids_node(Graph& g, NodeId cc, const Tensor& b_prev_padded);
double soft_ids(const Tensor& cc, const Tensor& b_prev_padded);

// 1 - (fp + fn + gamma*ids)/M. M must be >= 1.
NodeId dmota_node(Graph& g, NodeId fp, NodeId fn, NodeId ids, std::size_t gt_count,
                  const LossConfig& cfg);
double dmota(const SoftCounts& counts, double ids_soft, std::size_t gt_count,
             const LossConfig& cfg);

// 1 - ||D .* B||_1 / ||B||_0; when B has no matches, the constant 1 with zero
// gradient (frames without TPs neither reward nor punish precision).
NodeId dmotp_node(Graph& g, NodeId d, const Tensor& b);
double dmotp(const Tensor& d, const Tensor& b);

struct FrameLossNodes {
  NodeId loss;
  NodeId dmota;
  NodeId dmotp;
  NodeId ids;
  SoftCountNodes counts;
};

// (1 - dMOTA) + lambda * (1 - dMOTP) for one frame.
FrameLossNodes deepmot_frame_loss_node(Graph& g, NodeId d, NodeId a_soft,
                                       const TpMask& b_curr,
                                       const Tensor& b_prev_padded,
                                       std::size_t gt_count, const LossConfig& cfg);
double deepmot_loss(const Tensor& d, const Tensor& a_soft, const TpMask& b_curr,
                    const Tensor& b_prev_padded, std::size_t gt_count,
                    const LossConfig& cfg);

struct BoxGradient {
  std::size_t frame = 0;
  std::int64_t track_id = 0;
  Box box;
  // Negative gradient of the frame loss w.r.t. (left, top, width, height).
  double g_left = 0.0, g_top = 0.0, g_width = 0.0, g_height = 0.0;
};

// Chains geometry -> frozen DHN -> DeepMOT loss per frame and extracts the
// negative loss gradient for every predicted box. Frames without predictions
// or objects contribute nothing. The previous-frame TP mask is carried along
// the sequence.
std::vector<BoxGradient> loss_grad_wrt_boxes(const TrackFile& pred,
                                             const TrackFile& gt,
                                             const DhnParams& dhn,
                                             const LossConfig& cfg);

// CSV columns: frame,track_id,left,top,width,height,g_left,g_top,g_width,g_height.
void write_gradfield_csv(const std::string& path, const std::vector<BoxGradient>& rows);

}  // namespace deepmot
