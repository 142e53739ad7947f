#include "deepmot/dhn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "deepmot/checkpoint.hpp"
#include "deepmot/common.hpp"
#include "deepmot/hungarian.hpp"
#include "deepmot/optim.hpp"
#include "deepmot/rng.hpp"
#include "deepmot/rnn.hpp"

namespace deepmot {

std::string variant_name(DhnVariant v) {
  switch (v) {
    case DhnVariant::seq_gru: return "seq_gru";
    case DhnVariant::seq_lstm: return "seq_lstm";
    case DhnVariant::paral_gru: return "paral_gru";
    case DhnVariant::paral_lstm: return "paral_lstm";
    case DhnVariant::conv1d: return "conv1d";
  }
  detail::fail_invalid("unknown variant");
}

DhnVariant variant_from_name(const std::string& name) {
  if (name == "seq_gru") return DhnVariant::seq_gru;
  if (name == "seq_lstm") return DhnVariant::seq_lstm;
  if (name == "paral_gru") return DhnVariant::paral_gru;
  if (name == "paral_lstm") return DhnVariant::paral_lstm;
  if (name == "conv1d") return DhnVariant::conv1d;
  detail::fail_invalid(detail::cat("unknown DHN variant '", name, "'"));
}

const Tensor& DhnParams::at(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  detail::fail_invalid(detail::cat("dhn: missing parameter '", name,
                                   "' for variant ", variant_name(config.variant)));
}

Tensor& DhnParams::at(const std::string& name) {
  for (auto& [n, t] : tensors)
    if (n == name) return t;
  detail::fail_invalid(detail::cat("dhn: missing parameter '", name, "'"));
}

namespace {

constexpr double kLogFloor = 1e-12;

// conv1d kernel shapes, [in channels, out channels, kernel size] per layer.
constexpr std::size_t kConvEnc1Out = 24, kConvEnc1K = 15;
constexpr std::size_t kConvEnc2Out = 48, kConvEnc2K = 15;
constexpr std::size_t kConvDec1Out = 48, kConvDec1K = 5;  // in 96 = 48 + 48
constexpr std::size_t kConvDec2Out = 24, kConvDec2K = 5;  // in 72 = 48 + 24

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

void append_gru(std::vector<std::pair<std::string, Tensor>>& out,
                const std::string& prefix, std::size_t in, std::size_t h, Rng& rng) {
  const double bw = 1.0 / std::sqrt(static_cast<double>(in));
  const double bu = 1.0 / std::sqrt(static_cast<double>(h));
  const char* gates = "zrn";
  for (int i = 0; i < 3; ++i)
    out.emplace_back(detail::cat(prefix, ".w_", gates[i]), uniform_tensor(h, in, bw, rng));
  for (int i = 0; i < 3; ++i)
    out.emplace_back(detail::cat(prefix, ".u_", gates[i]), uniform_tensor(h, h, bu, rng));
  for (int i = 0; i < 3; ++i)
    out.emplace_back(detail::cat(prefix, ".b_", gates[i]), uniform_tensor(h, 1, bu, rng));
}

void append_lstm(std::vector<std::pair<std::string, Tensor>>& out,
                 const std::string& prefix, std::size_t in, std::size_t h, Rng& rng) {
  const double bw = 1.0 / std::sqrt(static_cast<double>(in));
  const double bu = 1.0 / std::sqrt(static_cast<double>(h));
  const char* gates = "ifog";
  for (int i = 0; i < 4; ++i)
    out.emplace_back(detail::cat(prefix, ".w_", gates[i]), uniform_tensor(h, in, bw, rng));
  for (int i = 0; i < 4; ++i)
    out.emplace_back(detail::cat(prefix, ".u_", gates[i]), uniform_tensor(h, h, bu, rng));
  for (int i = 0; i < 4; ++i)
    out.emplace_back(detail::cat(prefix, ".b_", gates[i]), uniform_tensor(h, 1, bu, rng));
}

void append_fc(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& prefix, std::size_t in, std::size_t width, Rng& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(in));
  out.emplace_back(detail::cat(prefix, ".w"), uniform_tensor(width, in, b, rng));
  out.emplace_back(detail::cat(prefix, ".b"), uniform_tensor(width, 1, b, rng));
}

void append_conv(std::vector<std::pair<std::string, Tensor>>& out,
                 const std::string& prefix, std::size_t in_ch, std::size_t out_ch,
                 std::size_t k, Rng& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(in_ch * k));
  out.emplace_back(detail::cat(prefix, ".k"), uniform_tensor(out_ch, in_ch * k, b, rng));
  out.emplace_back(detail::cat(prefix, ".b"), uniform_tensor(out_ch, 1, b, rng));
}

bool is_seq(DhnVariant v) {
  return v == DhnVariant::seq_gru || v == DhnVariant::seq_lstm;
}
bool is_paral(DhnVariant v) {
  return v == DhnVariant::paral_gru || v == DhnVariant::paral_lstm;
}
bool uses_gru(DhnVariant v) {
  return v == DhnVariant::seq_gru || v == DhnVariant::paral_gru;
}

// Row-major index of the i-th element in column-major enumeration.
std::vector<std::uint32_t> colmajor_perm(std::size_t n, std::size_t m) {
  std::vector<std::uint32_t> perm;
  perm.reserve(n * m);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t r = 0; r < n; ++r)
      perm.push_back(static_cast<std::uint32_t>(r * m + c));
  return perm;
}

std::vector<std::uint32_t> invert_perm(const std::vector<std::uint32_t>& perm) {
  std::vector<std::uint32_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i)
    inv[perm[i]] = static_cast<std::uint32_t>(i);
  return inv;
}

std::string head_widths_string(const std::vector<std::size_t>& widths) {
  std::ostringstream os;
  for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
  return os.str();
}

std::vector<std::size_t> head_widths_from_string(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(std::stoul(item));
  return out;
}

}  // namespace

DhnParams init_dhn(const DhnConfig& cfg, std::uint64_t seed) {
  detail::check(cfg.hidden >= 1, "dhn: hidden size must be >= 1");
  detail::check(!cfg.head_widths.empty() && cfg.head_widths.back() == 1,
                "dhn: head widths must end in 1");
  Rng rng(seed);
  DhnParams p;
  p.config = cfg;
  const std::size_t h = cfg.hidden;
  auto append_cell = [&](const std::string& prefix, std::size_t in) {
    if (uses_gru(cfg.variant))
      append_gru(p.tensors, prefix, in, h, rng);
    else
      append_lstm(p.tensors, prefix, in, h, rng);
  };
  switch (cfg.variant) {
    case DhnVariant::seq_gru:
    case DhnVariant::seq_lstm: {
      append_cell("s1.fwd", 1);
      append_cell("s1.bwd", 1);
      append_cell("s2.fwd", 2 * h);
      append_cell("s2.bwd", 2 * h);
      std::size_t in = 2 * h;
      for (std::size_t i = 0; i < cfg.head_widths.size(); ++i) {
        append_fc(p.tensors, detail::cat("head.", i), in, cfg.head_widths[i], rng);
        in = cfg.head_widths[i];
      }
      break;
    }
    case DhnVariant::paral_gru:
    case DhnVariant::paral_lstm: {
      append_cell("row.fwd", 1);
      append_cell("row.bwd", 1);
      append_cell("col.fwd", 1);
      append_cell("col.bwd", 1);
      append_fc(p.tensors, "reduce_row", 2 * h, h, rng);
      append_fc(p.tensors, "reduce_col", 2 * h, h, rng);
      append_fc(p.tensors, "head.0", 2 * h, cfg.head_widths.front(), rng);
      append_fc(p.tensors, "head.1", cfg.head_widths.front(), 1, rng);
      break;
    }
    case DhnVariant::conv1d: {
      append_conv(p.tensors, "enc1", 1, kConvEnc1Out, kConvEnc1K, rng);
      append_conv(p.tensors, "enc2", kConvEnc1Out, kConvEnc2Out, kConvEnc2K, rng);
      append_conv(p.tensors, "dec1", kConvEnc2Out + kConvEnc2Out, kConvDec1Out,
                  kConvDec1K, rng);
      append_conv(p.tensors, "dec2", kConvDec1Out + kConvEnc1Out, kConvDec2Out,
                  kConvDec2K, rng);
      append_conv(p.tensors, "out", kConvDec2Out, 1, 1, rng);
      break;
    }
  }
  return p;
}

void save_dhn(const DhnParams& params, const std::string& path) {
  NamedTensors bundle;
  bundle.config = detail::cat("kind=dhn;variant=", variant_name(params.config.variant),
                              ";hidden=", params.config.hidden,
                              ";head=", head_widths_string(params.config.head_widths));
  bundle.tensors = params.tensors;
  save_ntf1(path, bundle);
}

DhnParams load_dhn(const std::string& path) {
  NamedTensors bundle = load_ntf1(path);
  auto kv = parse_kv(bundle.config);
  if (kv_get(kv, "kind") != "dhn")
    detail::fail_runtime(detail::cat(path, ": not a DHN checkpoint"));
  DhnParams p;
  p.config.variant = variant_from_name(kv_get(kv, "variant"));
  p.config.hidden = std::stoul(kv_get(kv, "hidden"));
  p.config.head_widths = head_widths_from_string(kv_get(kv, "head"));
  p.tensors = std::move(bundle.tensors);
  return p;
}

namespace {

struct ParamNodes {
  std::map<std::string, NodeId> ids;
  std::vector<NodeId> ordered;

  NodeId at(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end())
      detail::fail_invalid(detail::cat("dhn: missing parameter '", name, "'"));
    return it->second;
  }
};

ParamNodes insert_params(Graph& g, const DhnParams& params, bool trainable) {
  ParamNodes out;
  for (const auto& [name, t] : params.tensors) {
    NodeId id = trainable ? g.leaf(t) : g.constant(t);
    out.ids.emplace(name, id);
    out.ordered.push_back(id);
  }
  return out;
}

GruCellNodes cell_gru(Graph& g, const ParamNodes& p, const std::string& prefix) {
  GruNodeRefs r;
  r.w_z = p.at(prefix + ".w_z");
  r.w_r = p.at(prefix + ".w_r");
  r.w_n = p.at(prefix + ".w_n");
  r.u_z = p.at(prefix + ".u_z");
  r.u_r = p.at(prefix + ".u_r");
  r.u_n = p.at(prefix + ".u_n");
  r.b_z = p.at(prefix + ".b_z");
  r.b_r = p.at(prefix + ".b_r");
  r.b_n = p.at(prefix + ".b_n");
  return assemble_gru(g, r);
}

LstmCellNodes cell_lstm(Graph& g, const ParamNodes& p, const std::string& prefix) {
  LstmNodeRefs r;
  r.w_i = p.at(prefix + ".w_i");
  r.w_f = p.at(prefix + ".w_f");
  r.w_o = p.at(prefix + ".w_o");
  r.w_g = p.at(prefix + ".w_g");
  r.u_i = p.at(prefix + ".u_i");
  r.u_f = p.at(prefix + ".u_f");
  r.u_o = p.at(prefix + ".u_o");
  r.u_g = p.at(prefix + ".u_g");
  r.b_i = p.at(prefix + ".b_i");
  r.b_f = p.at(prefix + ".b_f");
  r.b_o = p.at(prefix + ".b_o");
  r.b_g = p.at(prefix + ".b_g");
  return assemble_lstm(g, r);
}

NodeId bidir(Graph& g, NodeId x, DhnVariant v, const ParamNodes& p,
             const std::string& prefix) {
  if (uses_gru(v))
    return bidirectional_gru(g, x, cell_gru(g, p, prefix + ".fwd"),
                             cell_gru(g, p, prefix + ".bwd"));
  return bidirectional_lstm(g, x, cell_lstm(g, p, prefix + ".fwd"),
                            cell_lstm(g, p, prefix + ".bwd"));
}

// x: L x in, weights named prefix.w (out x in) / prefix.b (out x 1).
NodeId fc(Graph& g, NodeId x, const ParamNodes& p, const std::string& prefix) {
  NodeId y = g.matmul(x, g.transpose(p.at(prefix + ".w")));
  return g.add_rowvec(y, g.transpose(p.at(prefix + ".b")));
}

// x: channels x L; returns out_channels x L.
NodeId conv_layer(Graph& g, NodeId x, const ParamNodes& p, const std::string& prefix,
                  std::size_t k) {
  NodeId cols = k == 1 ? x : g.im2col1d(x, k);
  return g.add_colvec(g.matmul(p.at(prefix + ".k"), cols), p.at(prefix + ".b"));
}

NodeId seq_forward(Graph& g, NodeId d_node, const DhnConfig& cfg,
                   const ParamNodes& p) {
  const std::size_t n = g.value(d_node).rows(), m = g.value(d_node).cols();
  const std::size_t len = n * m;
  const auto perm = colmajor_perm(n, m);
  const auto inv = invert_perm(perm);
  const DhnVariant v = cfg.variant;

  NodeId x_row = g.reshape(d_node, len, 1);
  NodeId h1 = bidir(g, x_row, v, p, "s1");            // L x 2h, row-major order
  NodeId h1_cm = len == 1 ? h1 : g.permute_rows(h1, perm);
  NodeId h2 = bidir(g, h1_cm, v, p, "s2");            // L x 2h, column-major order
  NodeId y = h2;
  const std::size_t layers = cfg.head_widths.size();
  for (std::size_t i = 0; i < layers; ++i) {
    y = fc(g, y, p, detail::cat("head.", i));
    if (i + 1 < layers) y = g.tanh(y);
  }
  NodeId y_rm = len == 1 ? y : g.permute_rows(y, inv);  // back to row-major
  return g.sigmoid(g.reshape(y_rm, n, m));
}

NodeId paral_forward(Graph& g, NodeId d_node, const DhnConfig& cfg,
                     const ParamNodes& p) {
  const std::size_t n = g.value(d_node).rows(), m = g.value(d_node).cols();
  const std::size_t len = n * m;
  const auto perm = colmajor_perm(n, m);
  const auto inv = invert_perm(perm);
  const DhnVariant v = cfg.variant;

  NodeId x_row = g.reshape(d_node, len, 1);
  NodeId x_col = len == 1 ? x_row : g.permute_rows(x_row, perm);
  NodeId hr = bidir(g, x_row, v, p, "row");
  NodeId hc_cm = bidir(g, x_col, v, p, "col");
  NodeId hc = len == 1 ? hc_cm : g.permute_rows(hc_cm, inv);
  NodeId rr = g.tanh(fc(g, hr, p, "reduce_row"));
  NodeId rc = g.tanh(fc(g, hc, p, "reduce_col"));
  NodeId cat = g.concat_cols({rr, rc});
  NodeId y = g.tanh(fc(g, cat, p, "head.0"));
  y = fc(g, y, p, "head.1");
  return g.sigmoid(g.reshape(y, n, m));
}

NodeId conv_forward(Graph& g, NodeId d_node, const ParamNodes& p) {
  const std::size_t n = g.value(d_node).rows(), m = g.value(d_node).cols();
  const std::size_t len = n * m;
  detail::check(len >= 2, "dhn conv1d: needs at least 2 elements");
  NodeId x = g.reshape(d_node, 1, len);
  NodeId e1 = g.tanh(conv_layer(g, x, p, "enc1", kConvEnc1K));  // 24 x L
  NodeId p1 = g.avgpool1d2(e1);
  NodeId e2 = g.tanh(conv_layer(g, p1, p, "enc2", kConvEnc2K));  // 48 x L2
  const std::size_t l2 = g.value(e2).cols();
  NodeId p2 = g.avgpool1d2(e2);
  NodeId u1 = g.upsample1d(p2, l2);
  NodeId d1 = g.tanh(conv_layer(g, g.concat_rows({u1, e2}), p, "dec1", kConvDec1K));
  NodeId u2 = g.upsample1d(d1, len);
  NodeId d2 = g.tanh(conv_layer(g, g.concat_rows({u2, e1}), p, "dec2", kConvDec2K));
  NodeId y = conv_layer(g, d2, p, "out", 1);  // 1 x L
  return g.sigmoid(g.reshape(y, n, m));
}

}  // namespace

namespace {

NodeId dispatch_forward(Graph& g, NodeId d_node, const DhnConfig& cfg,
                        const ParamNodes& p) {
  const Tensor& d = g.value(d_node);
  detail::check(d.rows() >= 1 && d.cols() >= 1, "dhn: empty matrix");
  if (is_seq(cfg.variant)) return seq_forward(g, d_node, cfg, p);
  if (is_paral(cfg.variant)) return paral_forward(g, d_node, cfg, p);
  return conv_forward(g, d_node, p);
}

}  // namespace

DhnGraph dhn_forward_node(Graph& g, NodeId d_node, const DhnParams& params,
                          bool trainable) {
  ParamNodes p = insert_params(g, params, trainable);
  DhnGraph out;
  out.param_nodes = p.ordered;
  out.output = dispatch_forward(g, d_node, params.config, p);
  return out;
}

NodeId dhn_forward_with_nodes(Graph& g, NodeId d_node, const DhnConfig& cfg,
                              const std::vector<std::pair<std::string, NodeId>>& named) {
  ParamNodes p;
  for (const auto& [name, id] : named) {
    p.ids.emplace(name, id);
    p.ordered.push_back(id);
  }
  return dispatch_forward(g, d_node, cfg, p);
}

Tensor dhn_forward(const Tensor& d, const DhnParams& params, Precision precision) {
  Graph g(precision);
  NodeId input = g.constant(d);
  return g.value(dhn_forward_node(g, input, params, false).output);
}

// ---------------------------------------------------------------------------
// Batched inference for the sequential variants.

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

EMat to_emat(const Tensor& t) {
  return Eigen::Map<const EMat>(t.ptr(), static_cast<Eigen::Index>(t.rows()),
                                static_cast<Eigen::Index>(t.cols()));
}

struct SeqCellW {
  EMat w_all_t;   // in x 3h (gru) or in x 4h (lstm)
  EMat u_zr_t;    // gru: h x 2h
  EMat u_cand_t;  // gru: h x h
  EMat u_all_t;   // lstm: h x 4h
  Eigen::RowVectorXd bias;
  std::size_t h = 0;
  bool gru = true;
};

SeqCellW load_cell(const DhnParams& params, const std::string& prefix, bool gru) {
  SeqCellW c;
  c.gru = gru;
  if (gru) {
    EMat wz = to_emat(params.at(prefix + ".w_z"));
    EMat wr = to_emat(params.at(prefix + ".w_r"));
    EMat wn = to_emat(params.at(prefix + ".w_n"));
    c.h = static_cast<std::size_t>(wz.rows());
    EMat wcat(3 * c.h, wz.cols());
    wcat << wz, wr, wn;
    c.w_all_t = wcat.transpose();
    EMat uz = to_emat(params.at(prefix + ".u_z"));
    EMat ur = to_emat(params.at(prefix + ".u_r"));
    EMat uzr(2 * c.h, c.h);
    uzr << uz, ur;
    c.u_zr_t = uzr.transpose();
    c.u_cand_t = to_emat(params.at(prefix + ".u_n")).transpose();
    Eigen::VectorXd b(3 * c.h);
    b << to_emat(params.at(prefix + ".b_z")), to_emat(params.at(prefix + ".b_r")),
        to_emat(params.at(prefix + ".b_n"));
    c.bias = b.transpose();
  } else {
    EMat wi = to_emat(params.at(prefix + ".w_i"));
    EMat wf = to_emat(params.at(prefix + ".w_f"));
    EMat wo = to_emat(params.at(prefix + ".w_o"));
    EMat wg = to_emat(params.at(prefix + ".w_g"));
    c.h = static_cast<std::size_t>(wi.rows());
    EMat wcat(4 * c.h, wi.cols());
    wcat << wi, wf, wo, wg;
    c.w_all_t = wcat.transpose();
    EMat ucat(4 * c.h, c.h);
    ucat << to_emat(params.at(prefix + ".u_i")), to_emat(params.at(prefix + ".u_f")),
        to_emat(params.at(prefix + ".u_o")), to_emat(params.at(prefix + ".u_g"));
    c.u_all_t = ucat.transpose();
    Eigen::VectorXd b(4 * c.h);
    b << to_emat(params.at(prefix + ".b_i")), to_emat(params.at(prefix + ".b_f")),
        to_emat(params.at(prefix + ".b_o")), to_emat(params.at(prefix + ".b_g"));
    c.bias = b.transpose();
  }
  return c;
}

// One batched cell update; state rows are per-batch hidden vectors.
void cell_step(const SeqCellW& c, const EMat& px, EMat& h_state, EMat& c_state) {
  const auto hh = static_cast<Eigen::Index>(c.h);
  if (c.gru) {
    EMat zr = h_state * c.u_zr_t;
    EMat z_pre = px.leftCols(hh) + zr.leftCols(hh) +
                 c.bias.leftCols(hh).replicate(px.rows(), 1);
    EMat z = (1.0 / (1.0 + (-z_pre.array()).exp())).matrix();
    EMat r_pre = px.middleCols(hh, hh) + zr.rightCols(hh) +
                 c.bias.middleCols(hh, hh).replicate(px.rows(), 1);
    EMat r = (1.0 / (1.0 + (-r_pre.array()).exp())).matrix();
    EMat cand = ((px.rightCols(hh) + (r.array() * h_state.array()).matrix() * c.u_cand_t +
                  c.bias.rightCols(hh).replicate(px.rows(), 1))
                     .array()
                     .tanh())
                    .matrix();
    h_state = ((1.0 - z.array()) * h_state.array() + z.array() * cand.array()).matrix();
  } else {
    EMat lin = px + h_state * c.u_all_t + c.bias.replicate(px.rows(), 1);
    auto sig = [](const EMat& x) {
      return (1.0 / (1.0 + (-x.array()).exp())).matrix();
    };
    EMat i = sig(lin.leftCols(hh));
    EMat f = sig(lin.middleCols(hh, hh));
    EMat o = sig(lin.middleCols(2 * hh, hh));
    EMat cand = lin.rightCols(hh).array().tanh().matrix();
    c_state = (f.array() * c_state.array() + i.array() * cand.array()).matrix();
    h_state = (o.array() * c_state.array().tanh()).matrix();
  }
}

// Runs one Bi-RNN stage over a batch. input(t) returns the B x in inputs of
// element t; the result per element is B x 2h.
std::vector<EMat> run_stage_batch(const SeqCellW& fwd, const SeqCellW& bwd,
                                  std::size_t len, std::size_t batch,
                                  const std::function<EMat(std::size_t)>& input) {
  const auto b = static_cast<Eigen::Index>(batch);
  const auto hh = static_cast<Eigen::Index>(fwd.h);
  std::vector<EMat> out(len, EMat::Zero(b, 2 * hh));
  for (int dir = 0; dir < 2; ++dir) {
    const SeqCellW& cell = dir == 0 ? fwd : bwd;
    EMat h_state = EMat::Zero(b, hh);
    EMat c_state = EMat::Zero(b, hh);
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t t = dir == 0 ? i : len - 1 - i;
      EMat px = input(t) * cell.w_all_t;
      cell_step(cell, px, h_state, c_state);
      out[t].middleCols(dir * hh, hh) = h_state;
    }
  }
  return out;
}

std::vector<Tensor> infer_batch_seq(const std::vector<const Tensor*>& ds,
                                    const DhnParams& params) {
  const bool gru = uses_gru(params.config.variant);
  const std::size_t n = ds[0]->rows(), m = ds[0]->cols();
  const std::size_t len = n * m, batch = ds.size();
  const auto perm = colmajor_perm(n, m);

  SeqCellW s1f = load_cell(params, "s1.fwd", gru);
  SeqCellW s1b = load_cell(params, "s1.bwd", gru);
  SeqCellW s2f = load_cell(params, "s2.fwd", gru);
  SeqCellW s2b = load_cell(params, "s2.bwd", gru);

  EMat x(batch, len);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    detail::check(ds[bi]->rows() == n && ds[bi]->cols() == m,
                  "dhn_infer_batch: mixed shapes in one batch");
    for (std::size_t e = 0; e < len; ++e) x(static_cast<Eigen::Index>(bi), static_cast<Eigen::Index>(e)) = (*ds[bi])[e];
  }

  auto in1 = [&](std::size_t t) -> EMat { return x.col(static_cast<Eigen::Index>(t)); };
  std::vector<EMat> h1 = run_stage_batch(s1f, s1b, len, batch, in1);
  auto in2 = [&](std::size_t t) -> EMat { return h1[perm[t]]; };
  std::vector<EMat> h2 = run_stage_batch(s2f, s2b, len, batch, in2);

  // Head over all elements at once; rows grouped by column-major position.
  const std::size_t two_h = 2 * params.config.hidden;
  EMat acts(batch * len, static_cast<Eigen::Index>(two_h));
  for (std::size_t i = 0; i < len; ++i)
    acts.middleRows(static_cast<Eigen::Index>(i * batch), static_cast<Eigen::Index>(batch)) = h2[i];
  const std::size_t layers = params.config.head_widths.size();
  for (std::size_t i = 0; i < layers; ++i) {
    EMat w = to_emat(params.at(detail::cat("head.", i, ".w")));
    EMat bvec = to_emat(params.at(detail::cat("head.", i, ".b")));
    acts = (acts * w.transpose()).eval();
    acts.rowwise() += bvec.transpose().row(0);
    if (i + 1 < layers) acts = acts.array().tanh().matrix();
  }

  std::vector<Tensor> out(batch, Tensor(n, m));
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const double v = acts(static_cast<Eigen::Index>(i * batch + bi), 0);
      out[bi][perm[i]] = 1.0 / (1.0 + std::exp(-v));
    }
  return out;
}

}  // namespace

std::vector<Tensor> dhn_infer_batch(const std::vector<const Tensor*>& ds,
                                    const DhnParams& params) {
  detail::check(!ds.empty(), "dhn_infer_batch: empty batch");
  if (is_seq(params.config.variant)) return infer_batch_seq(ds, params);
  std::vector<Tensor> out;
  out.reserve(ds.size());
  for (const Tensor* d : ds) out.push_back(dhn_forward(*d, params));
  return out;
}

// ---------------------------------------------------------------------------

NodeId focal_loss_node(Graph& g, NodeId pred, const Tensor& a_star, double gamma) {
  // Copy the dimensions up front: node references do not survive later
  // insertions into the graph.
  const std::size_t rows = g.value(pred).rows();
  const std::size_t cols = g.value(pred).cols();
  detail::check(rows == a_star.rows() && cols == a_star.cols(),
                "focal_loss: shape mismatch");
  detail::check(is_valid_assignment(a_star),
                "focal_loss: label violates assignment invariants");
  double n1 = 0.0;
  for (std::size_t i = 0; i < a_star.size(); ++i) n1 += a_star[i];
  const double total = static_cast<double>(a_star.size());
  const double w0 = n1 / total;
  const double w1 = 1.0 - w0;

  Tensor complement(a_star.rows(), a_star.cols());
  Tensor weights(a_star.rows(), a_star.cols());
  for (std::size_t i = 0; i < a_star.size(); ++i) {
    complement[i] = 1.0 - a_star[i];
    weights[i] = a_star[i] == 1.0 ? w1 : w0;
  }
  // p_t: predicted probability of the true class.
  NodeId pt = g.add(g.mul_mask(pred, a_star),
                    g.mul_mask(g.affine(pred, -1.0, 1.0), complement));
  NodeId modulate = g.pow_const(g.affine(pt, -1.0, 1.0), gamma);
  NodeId logp = g.log(g.max_ew(pt, g.constant(Tensor::full(rows, cols, kLogFloor))));
  NodeId weighted = g.mul_mask(g.mul(modulate, logp), weights);
  return g.affine(g.sum(weighted), -1.0 / total, 0.0);
}

double focal_loss(const Tensor& pred, const Tensor& a_star, double gamma) {
  Graph g;
  return g.value(focal_loss_node(g, g.constant(pred), a_star, gamma)).item();
}

Tensor discretize(const Tensor& soft, DiscretizeMode mode) {
  Tensor out(soft.rows(), soft.cols());
  if (mode == DiscretizeMode::row) {
    for (std::size_t r = 0; r < soft.rows(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < soft.cols(); ++c)
        if (soft.at(r, c) > soft.at(r, best)) best = c;
      if (soft.at(r, best) > 0.5) out.at(r, best) = 1.0;
    }
  } else {
    for (std::size_t c = 0; c < soft.cols(); ++c) {
      std::size_t best = 0;
      for (std::size_t r = 1; r < soft.rows(); ++r)
        if (soft.at(r, c) > soft.at(best, c)) best = r;
      if (soft.at(best, c) > 0.5) out.at(best, c) = 1.0;
    }
  }
  return out;
}

void DhnEvalCounts::add(const Tensor& pred_soft, const Tensor& label,
                        DiscretizeMode mode) {
  detail::check(pred_soft.rows() == label.rows() && pred_soft.cols() == label.cols(),
                "eval: shape mismatch");
  Tensor pred = discretize(pred_soft, mode);
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] == 1.0) {
      n1_ += 1.0;
      if (pred[i] == 1.0) n1_correct_ += 1.0;
    } else {
      n0_ += 1.0;
      if (pred[i] == 0.0) n0_correct_ += 1.0;
    }
  }
  // Validity scan over the axis the discretization does not constrain.
  if (mode == DiscretizeMode::row) {
    for (std::size_t c = 0; c < label.cols(); ++c) {
      std::size_t pred_ones = 0, label_ones = 0;
      for (std::size_t r = 0; r < label.rows(); ++r) {
        pred_ones += pred.at(r, c) == 1.0;
        label_ones += label.at(r, c) == 1.0;
      }
      ++lines_;
      if (pred_ones > 1) ++sa_;
      if ((pred_ones > 0) != (label_ones > 0)) ++ma_;
    }
  } else {
    for (std::size_t r = 0; r < label.rows(); ++r) {
      std::size_t pred_ones = 0, label_ones = 0;
      for (std::size_t c = 0; c < label.cols(); ++c) {
        pred_ones += pred.at(r, c) == 1.0;
        label_ones += label.at(r, c) == 1.0;
      }
      ++lines_;
      if (pred_ones > 1) ++sa_;
      if ((pred_ones > 0) != (label_ones > 0)) ++ma_;
    }
  }
}

DhnEvalResult DhnEvalCounts::result() const {
  detail::check(lines_ > 0, "eval: empty dataset");
  DhnEvalResult r;
  const double total = n0_ + n1_;
  const double w0 = total > 0.0 ? n1_ / total : 0.0;
  const double w1 = 1.0 - w0;
  const double denom = w1 * n1_ + w0 * n0_;
  r.wa = denom > 0.0 ? (w1 * n1_correct_ + w0 * n0_correct_) / denom : 1.0;
  r.ma_pct = 100.0 * static_cast<double>(ma_) / static_cast<double>(lines_);
  r.sa_pct = 100.0 * static_cast<double>(sa_) / static_cast<double>(lines_);
  return r;
}

namespace {

// Groups dataset indices by matrix shape, preserving order inside a group.
std::vector<std::vector<std::size_t>> group_by_shape(
    const std::vector<MatrixPair>& data, std::size_t cap) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i)
    groups[{data[i].d.rows(), data[i].d.cols()}].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [shape, idx] : groups) {
    for (std::size_t start = 0; start < idx.size(); start += cap) {
      std::vector<std::size_t> chunk(
          idx.begin() + static_cast<std::ptrdiff_t>(start),
          idx.begin() + static_cast<std::ptrdiff_t>(std::min(start + cap, idx.size())));
      out.push_back(std::move(chunk));
    }
  }
  return out;
}

}  // namespace

DhnEvalResult eval_dhn(const DhnParams& params, const std::vector<MatrixPair>& data,
                       DiscretizeMode mode, std::size_t threads) {
  detail::check(!data.empty(), "eval_dhn: empty dataset");
  auto groups = group_by_shape(data, 64);
  std::vector<std::vector<Tensor>> preds(groups.size());
  std::size_t workers = std::max<std::size_t>(1, std::min(threads, groups.size()));
  std::vector<std::thread> pool;
  std::size_t next = 0;
  std::mutex mtx;
  auto work = [&]() {
    while (true) {
      std::size_t gi;
      {
        std::lock_guard<std::mutex> lock(mtx);
        if (next >= groups.size()) return;
        gi = next++;
      }
      std::vector<const Tensor*> ds;
      ds.reserve(groups[gi].size());
      for (std::size_t i : groups[gi]) ds.push_back(&data[i].d);
      preds[gi] = dhn_infer_batch(ds, params);
    }
  };
  if (workers == 1) {
    work();
  } else {
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  DhnEvalCounts counts;
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (std::size_t k = 0; k < groups[gi].size(); ++k)
      counts.add(preds[gi][k], data[groups[gi][k]].a_star, mode);
  return counts.result();
}

DhnParams train_dhn(const std::vector<MatrixPair>& train,
                    const std::vector<MatrixPair>& test, const DhnConfig& cfg,
                    const TrainConfig& tcfg, TrainCurves* curves,
                    const TrainLogger& log) {
  detail::check(!train.empty(), "train_dhn: empty dataset");
  detail::check(tcfg.lr > 0.0, "train_dhn: learning rate must be positive");
  detail::check(tcfg.decay_factor > 0.0 && tcfg.decay_factor <= 1.0,
                "train_dhn: decay factor must be in (0,1]");
  detail::check(tcfg.decay_every >= 1, "train_dhn: decay interval must be >= 1");
  DhnParams params = init_dhn(cfg, tcfg.seed);
  RmsProp opt;
  Rng shuffle_rng(tcfg.seed ^ 0xD1B54A32D192ED03ULL);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  DhnParams checkpoint = params;  // last completed epoch
  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    // Fisher-Yates with the documented index() draw.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    double loss_sum = 0.0;
    bool aborted = false;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const MatrixPair& sample = train[order[k]];
      try {
        Graph g(tcfg.precision);
        NodeId input = g.constant(sample.d);
        DhnGraph net = dhn_forward_node(g, input, params, true);
        NodeId loss = focal_loss_node(g, net.output, sample.a_star, tcfg.focal_gamma);
        const double loss_value = g.value(loss).item();
        g.backward(loss);
        loss_sum += loss_value;
        const double lr =
            tcfg.lr * std::pow(tcfg.decay_factor,
                               std::floor(static_cast<double>(iter) /
                                          static_cast<double>(tcfg.decay_every)));
        std::vector<Tensor*> ps;
        std::vector<const Tensor*> gs;
        ps.reserve(params.tensors.size());
        gs.reserve(params.tensors.size());
        for (std::size_t pi = 0; pi < params.tensors.size(); ++pi) {
          ps.push_back(&params.tensors[pi].second);
          gs.push_back(&g.grad(net.param_nodes[pi]));
        }
        opt.step(lr, ps, gs, tcfg.precision);
      } catch (const std::runtime_error&) {
        // Divergence: restore the last finished epoch and stop.
        params = checkpoint;
        if (curves) curves->aborted_non_finite = true;
        aborted = true;
        break;
      }
      ++iter;
    }
    if (aborted) break;
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    double wa = 0.0;
    if (!test.empty())
      wa = eval_dhn(params, test, DiscretizeMode::row).wa;
    if (curves) {
      curves->train_loss.push_back(mean_loss);
      curves->test_wa.push_back(wa);
      curves->iterations = iter;
    }
    if (log) log(epoch + 1, mean_loss, wa);
    checkpoint = params;
    if (tcfg.wa_stop > 0.0 && wa >= tcfg.wa_stop) break;
  }
  return params;
}

std::vector<SizeStudyRow> size_study(const DhnParams& params, std::size_t min_size,
                                     std::size_t max_size, std::size_t per_size,
                                     std::uint64_t seed, std::size_t threads,
                                     const std::function<void(std::size_t)>& progress) {
  detail::check(min_size >= 1 && min_size <= max_size && per_size >= 1,
                "size_study: bad range");
  const std::size_t count = max_size - min_size + 1;
  std::vector<SizeStudyRow> rows(count);
  std::size_t next = 0;
  std::mutex mtx;
  auto work = [&]() {
    while (true) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(mtx);
        if (next >= count) return;
        idx = next++;
      }
      const std::size_t s = min_size + idx;
      // Independent per-size stream so the study is thread-order invariant.
      Rng rng(seed ^ (static_cast<std::uint64_t>(s) * 0x9E3779B97F4A7C15ULL));
      std::vector<MatrixPair> pairs(per_size);
      for (auto& p : pairs) {
        p.d = Tensor(s, s);
        for (std::size_t i = 0; i < p.d.size(); ++i) p.d[i] = rng.uniform();
        p.a_star = solve(p.d).matrix();
      }
      std::vector<const Tensor*> ds;
      for (const auto& p : pairs) ds.push_back(&p.d);
      auto preds = dhn_infer_batch(ds, params);
      DhnEvalCounts counts;
      for (std::size_t i = 0; i < pairs.size(); ++i)
        counts.add(preds[i], pairs[i].a_star, DiscretizeMode::row);
      rows[idx] = {s, counts.result().wa};
      if (progress) progress(s);
    }
  };
  std::size_t workers = std::max<std::size_t>(1, std::min(threads, count));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return rows;
}

void write_size_study_csv(const std::string& path,
                          const std::vector<SizeStudyRow>& rows) {
  std::ofstream os(path);
  if (!os) detail::fail_runtime(detail::cat("cannot open ", path, " for writing"));
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", r.size, r.wa);
    os << buf;
  }
  if (!os) detail::fail_runtime(detail::cat("write failed for ", path));
}

}  // namespace deepmot
