#include "deepmot/rnn.hpp"

#include <cmath>

#include "deepmot/common.hpp"

namespace deepmot {

namespace {

Tensor uniform_init(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

NodeId insert(Graph& g, const Tensor& t, bool trainable) {
  return trainable ? g.leaf(t) : g.constant(t);
}

}  // namespace

GruCellParams GruCellParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  const double bw = 1.0 / std::sqrt(static_cast<double>(input));
  const double bu = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruCellParams p;
  p.w_update = uniform_init(hidden, input, bw, rng);
  p.w_reset = uniform_init(hidden, input, bw, rng);
  p.w_cand = uniform_init(hidden, input, bw, rng);
  p.u_update = uniform_init(hidden, hidden, bu, rng);
  p.u_reset = uniform_init(hidden, hidden, bu, rng);
  p.u_cand = uniform_init(hidden, hidden, bu, rng);
  p.b_update = uniform_init(hidden, 1, bu, rng);
  p.b_reset = uniform_init(hidden, 1, bu, rng);
  p.b_cand = uniform_init(hidden, 1, bu, rng);
  return p;
}

LstmCellParams LstmCellParams::init(std::size_t input, std::size_t hidden, Rng& rng) {
  const double bw = 1.0 / std::sqrt(static_cast<double>(input));
  const double bu = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmCellParams p;
  p.w_input = uniform_init(hidden, input, bw, rng);
  p.w_forget = uniform_init(hidden, input, bw, rng);
  p.w_output = uniform_init(hidden, input, bw, rng);
  p.w_cand = uniform_init(hidden, input, bw, rng);
  p.u_input = uniform_init(hidden, hidden, bu, rng);
  p.u_forget = uniform_init(hidden, hidden, bu, rng);
  p.u_output = uniform_init(hidden, hidden, bu, rng);
  p.u_cand = uniform_init(hidden, hidden, bu, rng);
  p.b_input = uniform_init(hidden, 1, bu, rng);
  p.b_forget = uniform_init(hidden, 1, bu, rng);
  p.b_output = uniform_init(hidden, 1, bu, rng);
  p.b_cand = uniform_init(hidden, 1, bu, rng);
  return p;
}

GruCellNodes assemble_gru(Graph& g, const GruNodeRefs& r) {
  GruCellNodes cell;
  cell.hidden = g.value(r.w_z).rows();
  cell.input = g.value(r.w_z).cols();
  detail::check(g.value(r.u_z).rows() == cell.hidden &&
                    g.value(r.u_z).cols() == cell.hidden &&
                    g.value(r.b_z).rows() == cell.hidden,
                "gru: inconsistent parameter shapes");
  cell.w_all_t = g.transpose(g.concat_rows({r.w_z, r.w_r, r.w_n}));
  cell.u_zr_t = g.transpose(g.concat_rows({r.u_z, r.u_r}));
  cell.u_cand_t = g.transpose(r.u_n);
  cell.b_all = g.transpose(g.concat_rows({r.b_z, r.b_r, r.b_n}));
  return cell;
}

GruCellNodes prepare_gru(Graph& g, const GruCellParams& p, bool trainable) {
  GruNodeRefs r;
  r.w_z = insert(g, p.w_update, trainable);
  r.w_r = insert(g, p.w_reset, trainable);
  r.w_n = insert(g, p.w_cand, trainable);
  r.u_z = insert(g, p.u_update, trainable);
  r.u_r = insert(g, p.u_reset, trainable);
  r.u_n = insert(g, p.u_cand, trainable);
  r.b_z = insert(g, p.b_update, trainable);
  r.b_r = insert(g, p.b_reset, trainable);
  r.b_n = insert(g, p.b_cand, trainable);
  return assemble_gru(g, r);
}

LstmCellNodes assemble_lstm(Graph& g, const LstmNodeRefs& r) {
  LstmCellNodes cell;
  cell.hidden = g.value(r.w_i).rows();
  cell.input = g.value(r.w_i).cols();
  detail::check(g.value(r.u_i).rows() == cell.hidden &&
                    g.value(r.u_i).cols() == cell.hidden &&
                    g.value(r.b_i).rows() == cell.hidden,
                "lstm: inconsistent parameter shapes");
  cell.w_all_t = g.transpose(g.concat_rows({r.w_i, r.w_f, r.w_o, r.w_g}));
  cell.u_all_t = g.transpose(g.concat_rows({r.u_i, r.u_f, r.u_o, r.u_g}));
  cell.b_all = g.transpose(g.concat_rows({r.b_i, r.b_f, r.b_o, r.b_g}));
  return cell;
}

LstmCellNodes prepare_lstm(Graph& g, const LstmCellParams& p, bool trainable) {
  LstmNodeRefs r;
  r.w_i = insert(g, p.w_input, trainable);
  r.w_f = insert(g, p.w_forget, trainable);
  r.w_o = insert(g, p.w_output, trainable);
  r.w_g = insert(g, p.w_cand, trainable);
  r.u_i = insert(g, p.u_input, trainable);
  r.u_f = insert(g, p.u_forget, trainable);
  r.u_o = insert(g, p.u_output, trainable);
  r.u_g = insert(g, p.u_cand, trainable);
  r.b_i = insert(g, p.b_input, trainable);
  r.b_f = insert(g, p.b_forget, trainable);
  r.b_o = insert(g, p.b_output, trainable);
  r.b_g = insert(g, p.b_cand, trainable);
  return assemble_lstm(g, r);
}

NodeId gru_cell(Graph& g, NodeId x, NodeId h_prev, const GruCellNodes& cell) {
  return gru_cell_pre(g, g.matmul(x, cell.w_all_t), h_prev, cell);
}

NodeId gru_cell_pre(Graph& g, NodeId px, NodeId h_prev, const GruCellNodes& cell) {
  const std::size_t h = cell.hidden;
  detail::check(g.value(px).cols() == 3 * h && g.value(h_prev).cols() == h,
                "gru_cell: size mismatch");
  NodeId lin = g.add(px, cell.b_all);               // 1 x 3h
  NodeId zr_rec = g.matmul(h_prev, cell.u_zr_t);    // 1 x 2h
  NodeId z = g.sigmoid(g.add(g.slice(lin, 0, 1, 0, h), g.slice(zr_rec, 0, 1, 0, h)));
  NodeId r = g.sigmoid(
      g.add(g.slice(lin, 0, 1, h, 2 * h), g.slice(zr_rec, 0, 1, h, 2 * h)));
  NodeId gated = g.mul(r, h_prev);
  NodeId cand = g.tanh(
      g.add(g.slice(lin, 0, 1, 2 * h, 3 * h), g.matmul(gated, cell.u_cand_t)));
  // (1 - z) .* h_prev + z .* cand
  return g.add(g.mul(g.affine(z, -1.0, 1.0), h_prev), g.mul(z, cand));
}

LstmState lstm_cell(Graph& g, NodeId x, const LstmState& prev, const LstmCellNodes& cell) {
  return lstm_cell_pre(g, g.matmul(x, cell.w_all_t), prev, cell);
}

LstmState lstm_cell_pre(Graph& g, NodeId px, const LstmState& prev,
                        const LstmCellNodes& cell) {
  const std::size_t h = cell.hidden;
  detail::check(g.value(px).cols() == 4 * h, "lstm_cell: size mismatch");
  NodeId lin = g.add(g.add(px, g.matmul(prev.h, cell.u_all_t)), cell.b_all);
  NodeId i = g.sigmoid(g.slice(lin, 0, 1, 0, h));
  NodeId f = g.sigmoid(g.slice(lin, 0, 1, h, 2 * h));
  NodeId o = g.sigmoid(g.slice(lin, 0, 1, 2 * h, 3 * h));
  NodeId cand = g.tanh(g.slice(lin, 0, 1, 3 * h, 4 * h));
  NodeId c = g.add(g.mul(f, prev.c), g.mul(i, cand));
  return {g.mul(o, g.tanh(c)), c};
}

namespace {

template <typename StepFn>
NodeId run_sequence(Graph& g, NodeId x_seq, std::size_t hidden, bool reverse,
                    std::size_t proj_cols, NodeId w_all_t, StepFn step) {
  const std::size_t len = g.value(x_seq).rows();
  detail::check(len >= 1, "rnn sequence: empty sequence");
  NodeId proj = g.matmul(x_seq, w_all_t);  // L x proj_cols
  std::vector<NodeId> states(len);
  NodeId state_h = g.constant(Tensor(1, hidden));
  NodeId state_c = g.constant(Tensor(1, hidden));
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t t = reverse ? len - 1 - i : i;
    NodeId px = g.slice(proj, t, t + 1, 0, proj_cols);
    step(px, state_h, state_c);
    states[t] = state_h;
  }
  if (len == 1) return g.reshape(states[0], 1, hidden);
  return g.concat_rows(states);
}

}  // namespace

NodeId gru_sequence(Graph& g, NodeId x_seq, const GruCellNodes& cell, bool reverse) {
  return run_sequence(g, x_seq, cell.hidden, reverse, 3 * cell.hidden,
                      cell.w_all_t, [&](NodeId px, NodeId& h, NodeId&) {
                        h = gru_cell_pre(g, px, h, cell);
                      });
}

NodeId lstm_sequence(Graph& g, NodeId x_seq, const LstmCellNodes& cell, bool reverse) {
  return run_sequence(g, x_seq, cell.hidden, reverse, 4 * cell.hidden,
                      cell.w_all_t, [&](NodeId px, NodeId& h, NodeId& c) {
                        LstmState s = lstm_cell_pre(g, px, {h, c}, cell);
                        h = s.h;
                        c = s.c;
                      });
}

NodeId bidirectional_gru(Graph& g, NodeId x_seq, const GruCellNodes& fwd,
                         const GruCellNodes& bwd) {
  detail::check(fwd.hidden == bwd.hidden, "bidirectional: hidden sizes differ");
  return g.concat_cols(
      {gru_sequence(g, x_seq, fwd, false), gru_sequence(g, x_seq, bwd, true)});
}

NodeId bidirectional_lstm(Graph& g, NodeId x_seq, const LstmCellNodes& fwd,
                          const LstmCellNodes& bwd) {
  detail::check(fwd.hidden == bwd.hidden, "bidirectional: hidden sizes differ");
  return g.concat_cols(
      {lstm_sequence(g, x_seq, fwd, false), lstm_sequence(g, x_seq, bwd, true)});
}

}  // namespace deepmot
