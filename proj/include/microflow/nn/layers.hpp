#pragma once

#include <string>
#include <utility>

#include "microflow/nn/autodiff.hpp"
#include "microflow/nn/params.hpp"

namespace microflow::nn {

enum class Activation { Identity, Relu, Tanh, Sigmoid, Softplus };

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Softplus: return softplus(x);
    case Activation::Identity: break;
  }
  return x;
}

// y = x W + b, with W (in x out) Xavier-initialized and b zero.
struct Linear {
  ParamId weight = 0;
  ParamId bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;
  bool has_bias = true;

  static Linear create(ModelParams& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true) {
    Linear l;
    l.in = in;
    l.out = out;
    l.has_bias = with_bias;
    l.weight = params.add(name + ".weight", xavier_uniform(in, out, rng));
    if (with_bias) l.bias = params.add(name + ".bias", Tensor(1, out));
    return l;
  }

  static Linear bind(const ModelParams& params, const std::string& name, bool with_bias = true) {
    Linear l;
    l.weight = params.id(name + ".weight");
    l.in = params.value(l.weight).rows();
    l.out = params.value(l.weight).cols();
    l.has_bias = with_bias;
    if (with_bias) l.bias = params.id(name + ".bias");
    return l;
  }

  Var operator()(Tape& t, Var x) const {
    Var y = matmul(x, t.param(weight));
    return has_bias ? add(y, t.param(bias)) : y;
  }
};

// One-hidden-layer perceptron: out_act(act(x W1 + b1) W2 + b2).
struct Mlp {
  Linear hidden;
  Linear output;
  Activation hidden_act = Activation::Relu;
  Activation output_act = Activation::Identity;

  static Mlp create(ModelParams& params, const std::string& name, std::size_t in, std::size_t hidden,
                    std::size_t out, Rng& rng, Activation hidden_act = Activation::Relu,
                    Activation output_act = Activation::Identity, bool with_bias = true) {
    Mlp m;
    m.hidden = Linear::create(params, name + ".hidden", in, hidden, rng, with_bias);
    m.output = Linear::create(params, name + ".output", hidden, out, rng, with_bias);
    m.hidden_act = hidden_act;
    m.output_act = output_act;
    return m;
  }

  static Mlp bind(const ModelParams& params, const std::string& name, Activation hidden_act = Activation::Relu,
                  Activation output_act = Activation::Identity, bool with_bias = true) {
    Mlp m;
    m.hidden = Linear::bind(params, name + ".hidden", with_bias);
    m.output = Linear::bind(params, name + ".output", with_bias);
    m.hidden_act = hidden_act;
    m.output_act = output_act;
    return m;
  }

  Var operator()(Tape& t, Var x) const {
    return activate(output(t, activate(hidden(t, x), hidden_act)), output_act);
  }
};

// Standard LSTM cell, gate order (input, forget, candidate, output):
//   z = x Wx + h Wh + b
//   i = sigmoid(z_i), f = sigmoid(z_f), g = tanh(z_g), o = sigmoid(z_o)
//   c' = f * c + i * g,  h' = o * tanh(c')
struct LstmCell {
  ParamId w_input = 0;
  ParamId w_hidden = 0;
  ParamId bias = 0;
  std::size_t in = 0;
  std::size_t hidden = 0;

  struct State {
    Var h;
    Var c;
  };

  static LstmCell create(ModelParams& params, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng) {
    LstmCell cell;
    cell.in = in;
    cell.hidden = hidden;
    cell.w_input = params.add(name + ".w_input", xavier_uniform(in, 4 * hidden, rng));
    cell.w_hidden = params.add(name + ".w_hidden", xavier_uniform(hidden, 4 * hidden, rng));
    cell.bias = params.add(name + ".bias", Tensor(1, 4 * hidden));
    return cell;
  }

  static LstmCell bind(const ModelParams& params, const std::string& name) {
    LstmCell cell;
    cell.w_input = params.id(name + ".w_input");
    cell.w_hidden = params.id(name + ".w_hidden");
    cell.bias = params.id(name + ".bias");
    cell.in = params.value(cell.w_input).rows();
    cell.hidden = params.value(cell.w_hidden).rows();
    return cell;
  }

  State zero_state(Tape& t, std::size_t batch) const {
    return State{t.constant(Tensor(batch, hidden)), t.constant(Tensor(batch, hidden))};
  }

  // Parameter handles placed on the tape once and reused across steps.
  struct Bound {
    Var w_input;
    Var w_hidden;
    Var bias;
  };

  Bound bind_tape(Tape& t) const { return Bound{t.param(w_input), t.param(w_hidden), t.param(bias)}; }

  State step(const Bound& p, Var x, const State& s) const {
    Var z = add(add(matmul(x, p.w_input), matmul(s.h, p.w_hidden)), p.bias);
    Var i = sigmoid(slice_cols(z, 0, hidden));
    Var f = sigmoid(slice_cols(z, hidden, hidden));
    Var g = tanh(slice_cols(z, 2 * hidden, hidden));
    Var o = sigmoid(slice_cols(z, 3 * hidden, hidden));
    Var c = add(mul(f, s.c), mul(i, g));
    Var h = mul(o, tanh(c));
    return State{h, c};
  }

  State step(Tape& t, Var x, const State& s) const { return step(bind_tape(t), x, s); }
};

}  // namespace microflow::nn
