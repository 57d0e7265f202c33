#pragma once

#include <string>

#include "orgtrl/autodiff.hpp"

namespace orgtrl::ad {

// Standard LSTM cell (sigmoid input/forget/output gates, tanh candidate),
// no peepholes. Weights live in a ParameterStore under `prefix`.
struct LstmGateNames {
  std::string x_weight;
  std::string h_weight;
  std::string bias;
};

inline LstmGateNames lstm_gate_names(const std::string& prefix, const std::string& gate) {
  return {prefix + "." + gate + "_x", prefix + "." + gate + "_h", prefix + "." + gate + "_b"};
}

template <typename S>
void lstm_init(ParameterStore<S>& store, const std::string& prefix, Eigen::Index input_size,
               Eigen::Index hidden_size, Rng& rng) {
  for (const char* gate : {"input_gate", "forget_gate", "output_gate", "cell_gate"}) {
    const auto names = lstm_gate_names(prefix, gate);
    store.add(names.x_weight, glorot_init<S>(input_size, hidden_size, rng));
    store.add(names.h_weight, glorot_init<S>(hidden_size, hidden_size, rng));
    Mat<S> b = Mat<S>::Zero(1, hidden_size);
    if (std::string(gate) == "forget_gate") b.setConstant(S(1));
    store.add(names.bias, std::move(b));
  }
}

template <typename S>
struct LstmVars {
  Var wx[4], wh[4], b[4];  // input, forget, output, cell
  Eigen::Index hidden = 0;
};

template <typename S>
LstmVars<S> lstm_vars(Tape<S>& tape, ParameterStore<S>& store, const std::string& prefix) {
  LstmVars<S> v;
  const char* gates[4] = {"input_gate", "forget_gate", "output_gate", "cell_gate"};
  for (int g = 0; g < 4; ++g) {
    const auto names = lstm_gate_names(prefix, gates[g]);
    v.wx[g] = tape.param(store, names.x_weight);
    v.wh[g] = tape.param(store, names.h_weight);
    v.b[g] = tape.param(store, names.bias);
  }
  v.hidden = tape.val(v.b[0]).cols();
  return v;
}

struct LstmStateVar {
  Var h;
  Var c;
};

template <typename S>
LstmStateVar lstm_zero_state(Tape<S>& tape, Eigen::Index hidden) {
  return {tape.constant(Mat<S>::Zero(1, hidden)), tape.constant(Mat<S>::Zero(1, hidden))};
}

template <typename S>
LstmStateVar lstm_step(Tape<S>& tape, const LstmVars<S>& w, Var x, const LstmStateVar& state) {
  if (tape.val(x).rows() != 1) throw ShapeError("lstm_step: x must be a row vector");
  auto pre = [&](int g) {
    return tape.add(tape.add(tape.matmul(x, w.wx[g]), tape.matmul(state.h, w.wh[g])), w.b[g]);
  };
  Var i = tape.sigmoid(pre(0));
  Var f = tape.sigmoid(pre(1));
  Var o = tape.sigmoid(pre(2));
  Var g = tape.tanh(pre(3));
  Var c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
  Var h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

}  // namespace orgtrl::ad
