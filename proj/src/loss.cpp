#include "deepmot/loss.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "deepmot/common.hpp"
#include "deepmot/hungarian.hpp"

namespace deepmot {

namespace {

void check_cfg(const LossConfig& cfg) {
  detail::check(cfg.delta > 0.0 && cfg.delta < 1.0, "loss: delta must be in (0,1)");
  detail::check(cfg.lambda >= 0.0 && cfg.gamma >= 0.0, "loss: negative balance factor");
  detail::check(cfg.sharpen >= 1.0, "loss: sharpening must be >= 1");
  detail::check(cfg.tau_tp > 0.0, "loss: tau_tp must be positive");
}

}  // namespace

SoftCountNodes soft_counts_node(Graph& g, NodeId a_soft, const LossConfig& cfg) {
  check_cfg(cfg);
  const Tensor& a = g.value(a_soft);
  detail::check(a.rows() >= 1 && a.cols() >= 1, "soft_counts: empty matrix");
  const std::size_t n = a.rows(), m = a.cols();
  SoftCountNodes out;
  NodeId col_fill = g.constant(Tensor::full(n, 1, cfg.delta));
  NodeId row_fill = g.constant(Tensor::full(1, m, cfg.delta));
  NodeId row_aug = g.concat_cols({a_soft, col_fill});
  NodeId col_aug = g.concat_rows({a_soft, row_fill});
  if (cfg.sharpen != 1.0) {
    row_aug = g.affine(row_aug, cfg.sharpen, 0.0);
    col_aug = g.affine(col_aug, cfg.sharpen, 0.0);
  }
  out.cr = g.softmax_rows(row_aug);
  out.cc = g.softmax_cols(col_aug);
  out.fp = g.sum(g.slice(out.cr, 0, n, m, m + 1));
  out.fn = g.sum(g.slice(out.cc, n, n + 1, 0, m));
  return out;
}

SoftCounts soft_counts(const Tensor& a_soft, const LossConfig& cfg) {
  Graph g;
  SoftCountNodes nodes = soft_counts_node(g, g.constant(a_soft), cfg);
  SoftCounts out;
  out.fp_soft = g.value(nodes.fp).item();
  out.fn_soft = g.value(nodes.fn).item();
  out.cr = g.value(nodes.cr);
  out.cc = g.value(nodes.cc);
  return out;
}

TpMask tp_mask(const Tensor& d, std::vector<std::int64_t> track_ids,
               std::vector<std::int64_t> gt_ids, const LossConfig& cfg) {
  check_cfg(cfg);
  detail::check(track_ids.size() == d.rows() && gt_ids.size() == d.cols(),
                "tp_mask: identity label counts must match the matrix");
  TpMask out;
  out.mask = solve_thresholded(d, cfg.tau_tp).matrix();
  out.track_ids = std::move(track_ids);
  out.gt_ids = std::move(gt_ids);
  return out;
}

namespace {

// id -> position, rejecting duplicates.
std::vector<std::ptrdiff_t> index_of(const std::vector<std::int64_t>& ids,
                                     const std::vector<std::int64_t>& into) {
  std::set<std::int64_t> seen(into.begin(), into.end());
  detail::check(seen.size() == into.size(), "pad_prev_mask: duplicate identity labels");
  std::vector<std::ptrdiff_t> out(ids.size(), -1);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < into.size(); ++j)
      if (ids[i] == into[j]) {
        out[i] = static_cast<std::ptrdiff_t>(j);
        break;
      }
  return out;
}

}  // namespace

TpMask pad_prev_mask(const TpMask& prev, const TpMask& curr) {
  {
    std::set<std::int64_t> t(curr.track_ids.begin(), curr.track_ids.end());
    std::set<std::int64_t> o(curr.gt_ids.begin(), curr.gt_ids.end());
    detail::check(t.size() == curr.track_ids.size() && o.size() == curr.gt_ids.size(),
                  "pad_prev_mask: duplicate identity labels");
  }
  const auto prev_row = index_of(curr.track_ids, prev.track_ids);
  const auto prev_col = index_of(curr.gt_ids, prev.gt_ids);
  TpMask out;
  out.track_ids = curr.track_ids;
  out.gt_ids = curr.gt_ids;
  out.mask = Tensor(curr.mask.rows(), curr.mask.cols());
  for (std::size_t i = 0; i < curr.mask.rows(); ++i)
    for (std::size_t j = 0; j < curr.mask.cols(); ++j) {
      if (prev_row[i] >= 0 && prev_col[j] >= 0)
        out.mask.at(i, j) = prev.mask.at(static_cast<std::size_t>(prev_row[i]),
                                         static_cast<std::size_t>(prev_col[j]));
      else
        out.mask.at(i, j) = curr.mask.at(i, j);  // new identity, no switch
    }
  return out;
}

NodeId soft_ids_node(Graph& g, NodeId cc, const Tensor& b_prev_padded) {
  const Tensor& c = g.value(cc);
  detail::check(c.rows() == b_prev_padded.rows() + 1 && c.cols() == b_prev_padded.cols(),
                "soft_ids: shape mismatch");
  Tensor complement(b_prev_padded.rows(), b_prev_padded.cols());
  for (std::size_t i = 0; i < complement.size(); ++i)
    complement[i] = 1.0 - b_prev_padded[i];
  NodeId interior = g.slice(cc, 0, b_prev_padded.rows(), 0, b_prev_padded.cols());
  return g.masked_l1(interior, complement);
}

double soft_ids(const Tensor& cc, const Tensor& b_prev_padded) {
  Graph g;
  return g.value(soft_ids_node(g, g.constant(cc), b_prev_padded)).item();
}

NodeId dmota_node(Graph& g, NodeId fp, NodeId fn, NodeId ids, std::size_t gt_count,
                  const LossConfig& cfg) {
  detail::check(gt_count >= 1, "dmota: gt count must be >= 1");
  NodeId errors = g.add(g.add(fp, fn), g.affine(ids, cfg.gamma, 0.0));
  return g.affine(errors, -1.0 / static_cast<double>(gt_count), 1.0);
}

double dmota(const SoftCounts& counts, double ids_soft, std::size_t gt_count,
             const LossConfig& cfg) {
  detail::check(gt_count >= 1, "dmota: gt count must be >= 1");
  return 1.0 - (counts.fp_soft + counts.fn_soft + cfg.gamma * ids_soft) /
                   static_cast<double>(gt_count);
}

NodeId dmotp_node(Graph& g, NodeId d, const Tensor& b) {
  const Tensor& dv = g.value(d);
  detail::check(dv.rows() == b.rows() && dv.cols() == b.cols(),
                "dmotp: shape mismatch");
  double matches = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) matches += b[i] != 0.0 ? 1.0 : 0.0;
  if (matches == 0.0) return g.constant_scalar(1.0);
  return g.affine(g.masked_l1(d, b), -1.0 / matches, 1.0);
}

double dmotp(const Tensor& d, const Tensor& b) {
  Graph g;
  return g.value(dmotp_node(g, g.constant(d), b)).item();
}

FrameLossNodes deepmot_frame_loss_node(Graph& g, NodeId d, NodeId a_soft,
                                       const TpMask& b_curr,
                                       const Tensor& b_prev_padded,
                                       std::size_t gt_count, const LossConfig& cfg) {
  const Tensor& a = g.value(a_soft);
  detail::check(g.value(d).rows() == a.rows() && g.value(d).cols() == a.cols(),
                "deepmot_loss: D and soft assignment shapes differ");
  detail::check(b_curr.mask.rows() == a.rows() && b_curr.mask.cols() == a.cols() &&
                    b_prev_padded.rows() == a.rows() && b_prev_padded.cols() == a.cols(),
                "deepmot_loss: mask shapes differ");
  FrameLossNodes out;
  out.counts = soft_counts_node(g, a_soft, cfg);
  out.ids = soft_ids_node(g, out.counts.cc, b_prev_padded);
  out.dmota = dmota_node(g, out.counts.fp, out.counts.fn, out.ids, gt_count, cfg);
  out.dmotp = dmotp_node(g, d, b_curr.mask);
  NodeId acc = g.affine(out.dmota, -1.0, 1.0);
  NodeId prc = g.affine(out.dmotp, -cfg.lambda, cfg.lambda);
  out.loss = g.add(acc, prc);
  return out;
}

double deepmot_loss(const Tensor& d, const Tensor& a_soft, const TpMask& b_curr,
                    const Tensor& b_prev_padded, std::size_t gt_count,
                    const LossConfig& cfg) {
  Graph g;
  return g
      .value(deepmot_frame_loss_node(g, g.constant(d), g.constant(a_soft), b_curr,
                                     b_prev_padded, gt_count, cfg)
                 .loss)
      .item();
}

std::vector<BoxGradient> loss_grad_wrt_boxes(const TrackFile& pred,
                                             const TrackFile& gt,
                                             const DhnParams& dhn,
                                             const LossConfig& cfg) {
  check_cfg(cfg);
  std::vector<BoxGradient> out;
  const std::size_t frames = std::max(pred.frame_count(), gt.frame_count());
  TpMask prev_mask;  // empty: first frame treats everything as new
  for (std::size_t f = 1; f <= frames; ++f) {
    const auto& preds = f <= pred.frame_count() ? pred.frame(f) : std::vector<TrackedBox>{};
    const auto& gts = f <= gt.frame_count() ? gt.frame(f) : std::vector<TrackedBox>{};
    if (preds.empty() || gts.empty()) {
      prev_mask = TpMask{};
      continue;
    }
    std::vector<Box> track_boxes, gt_boxes;
    std::vector<std::int64_t> track_ids, gt_ids;
    for (const auto& tb : preds) {
      track_boxes.push_back(tb.box);
      track_ids.push_back(tb.id);
    }
    for (const auto& tb : gts) {
      gt_boxes.push_back(tb.box);
      gt_ids.push_back(tb.id);
    }

    Graph g;
    NodeId tracks = g.leaf(boxes_to_tensor(track_boxes));
    NodeId objects = g.constant(boxes_to_tensor(gt_boxes));
    NodeId d = distance_matrix_node(g, tracks, objects, gt.dims);
    NodeId a_soft = dhn_forward_node(g, d, dhn, false).output;
    TpMask curr = tp_mask(g.value(d), track_ids, gt_ids, cfg);
    TpMask padded = prev_mask.track_ids.empty() ? curr : pad_prev_mask(prev_mask, curr);
    FrameLossNodes loss = deepmot_frame_loss_node(g, d, a_soft, curr, padded.mask,
                                                  gts.size(), cfg);
    g.backward(loss.loss);
    const Tensor& grad = g.grad(tracks);
    if (!grad.all_finite()) detail::fail_runtime("loss_grad_wrt_boxes: non-finite gradient");
    for (std::size_t i = 0; i < track_boxes.size(); ++i) {
      BoxGradient row;
      row.frame = f;
      row.track_id = track_ids[i];
      row.box = track_boxes[i];
      row.g_left = -grad.at(i, 0);
      row.g_top = -grad.at(i, 1);
      row.g_width = -grad.at(i, 2);
      row.g_height = -grad.at(i, 3);
      out.push_back(row);
    }
    prev_mask = curr;
  }
  return out;
}

void write_gradfield_csv(const std::string& path, const std::vector<BoxGradient>& rows) {
  std::ofstream os(path);
  if (!os) detail::fail_runtime(detail::cat("cannot open ", path, " for writing"));
  os << "frame,track_id,left,top,width,height,g_left,g_top,g_width,g_height\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  r.frame, static_cast<long long>(r.track_id), r.box.left, r.box.top,
                  r.box.width, r.box.height, r.g_left, r.g_top, r.g_width, r.g_height);
    os << buf;
  }
  if (!os) detail::fail_runtime(detail::cat("write failed for ", path));
}

}  // namespace deepmot
