#pragma once

#include "deepmot/graph.hpp"
#include "deepmot/rng.hpp"

namespace deepmot {

// GRU cell parameters. Convention: the reset gate multiplies the previous
// hidden state before the recurrent product,
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r .* h) + bn)
//   h' = (1 - z) .* h + z .* n
// Shapes: W* are h x in, U* are h x h, b* are h x 1.
struct GruCellParams {
  Tensor w_update, w_reset, w_cand;
  Tensor u_update, u_reset, u_cand;
  Tensor b_update, b_reset, b_cand;

  std::size_t hidden_size() const { return w_update.rows(); }
  std::size_t input_size() const { return w_update.cols(); }

  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init; draw order is the field
  // order above, each tensor filled row-major.
  static GruCellParams init(std::size_t input, std::size_t hidden, Rng& rng);
};

// Standard LSTM cell (gates input/forget/output, cell candidate):
//   i,f,o = sigmoid(W x + U h + b),  g = tanh(Wg x + Ug h + bg)
//   c' = f .* c + i .* g,  h' = o .* tanh(c')
struct LstmCellParams {
  Tensor w_input, w_forget, w_output, w_cand;
  Tensor u_input, u_forget, u_output, u_cand;
  Tensor b_input, b_forget, b_output, b_cand;

  std::size_t hidden_size() const { return w_input.rows(); }
  std::size_t input_size() const { return w_input.cols(); }

  static LstmCellParams init(std::size_t input, std::size_t hidden, Rng& rng);
};

// Cell weights inserted into a graph once and shared across timesteps.
// Weights are stored transposed so states can stay row vectors.
struct GruCellNodes {
  NodeId w_all_t;   // in x 3h, transpose of [Wz; Wr; Wn]
  NodeId u_zr_t;    // h x 2h,  transpose of [Uz; Ur]
  NodeId u_cand_t;  // h x h
  NodeId b_all;     // 1 x 3h
  std::size_t hidden = 0;
  std::size_t input = 0;
};

struct LstmCellNodes {
  NodeId w_all_t;  // in x 4h, transpose of [Wi; Wf; Wo; Wg]
  NodeId u_all_t;  // h x 4h
  NodeId b_all;    // 1 x 4h
  std::size_t hidden = 0;
  std::size_t input = 0;
};

GruCellNodes prepare_gru(Graph& g, const GruCellParams& p, bool trainable);
LstmCellNodes prepare_lstm(Graph& g, const LstmCellParams& p, bool trainable);

// Assemble cells from parameter nodes already present in the graph
// (used when the caller tracks the leaf ids, e.g. for optimizer updates).
struct GruNodeRefs {
  NodeId w_z, w_r, w_n, u_z, u_r, u_n, b_z, b_r, b_n;
};
struct LstmNodeRefs {
  NodeId w_i, w_f, w_o, w_g, u_i, u_f, u_o, u_g, b_i, b_f, b_o, b_g;
};
GruCellNodes assemble_gru(Graph& g, const GruNodeRefs& refs);
LstmCellNodes assemble_lstm(Graph& g, const LstmNodeRefs& refs);

// One GRU update. x is 1 x in, h_prev is 1 x h; returns 1 x h.
NodeId gru_cell(Graph& g, NodeId x, NodeId h_prev, const GruCellNodes& cell);
// Same with the input projection x * w_all_t (1 x 3h) already computed.
NodeId gru_cell_pre(Graph& g, NodeId px, NodeId h_prev, const GruCellNodes& cell);

struct LstmState {
  NodeId h;
  NodeId c;
};
LstmState lstm_cell(Graph& g, NodeId x, const LstmState& prev, const LstmCellNodes& cell);
LstmState lstm_cell_pre(Graph& g, NodeId px, const LstmState& prev, const LstmCellNodes& cell);

// Runs the cell over the rows of X (L x in), forward or reversed, starting
// from a zero state. Returns the L x h hidden states in input row order.
NodeId gru_sequence(Graph& g, NodeId x_seq, const GruCellNodes& cell, bool reverse);
NodeId lstm_sequence(Graph& g, NodeId x_seq, const LstmCellNodes& cell, bool reverse);

// Element t of the result is [forward state after rows 0..t || backward
// state after rows L-1..t]; shape L x 2h. Rejects empty sequences.
NodeId bidirectional_gru(Graph& g, NodeId x_seq, const GruCellNodes& fwd,
                         const GruCellNodes& bwd);
NodeId bidirectional_lstm(Graph& g, NodeId x_seq, const LstmCellNodes& fwd,
                          const LstmCellNodes& bwd);

}  // namespace deepmot
