#include "dmatch/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace dmatch {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "softplus") return Activation::softplus;
  if (s == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::softplus: return "softplus";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

MlpSpec make_mlp_spec(int in_dim, int hidden, int out_dim, int layers, Activation act,
                      double init_scale) {
  if (layers < 1) throw std::invalid_argument("make_mlp_spec: layers must be >= 1");
  MlpSpec spec;
  spec.widths.push_back(in_dim);
  for (int i = 0; i < layers - 1; ++i) spec.widths.push_back(hidden);
  spec.widths.push_back(out_dim);
  spec.act = act;
  spec.init_scale = init_scale;
  return spec;
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  if (spec_.widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  for (int w : spec_.widths)
    if (w <= 0) throw std::invalid_argument("Mlp: widths must be positive");
  if (spec_.init_scale < 0) throw std::invalid_argument("Mlp: negative init_scale");
  for (size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
    const int fan_in = spec_.widths[l];
    const int fan_out = spec_.widths[l + 1];
    const double s = spec_.init_scale / std::sqrt(static_cast<double>(fan_in));
    weights_.push_back(rng.uniform_tensor(fan_in, fan_out, -s, s));
    biases_.push_back(Tensor(1, fan_out));
  }
}

int Mlp::input_dim() const { return spec_.widths.front(); }
int Mlp::output_dim() const { return spec_.widths.back(); }

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Tensor*> Mlp::parameters() const {
  std::vector<const Tensor*> out;
  for (size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<std::string> Mlp::parameter_names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(prefix + ".w" + std::to_string(l));
    out.push_back(prefix + ".b" + std::to_string(l));
  }
  return out;
}

BoundMlp Mlp::bind(Tape& tape, bool trainable) const {
  BoundMlp bound;
  bound.act_ = spec_.act;
  for (size_t l = 0; l < weights_.size(); ++l) {
    bound.param_vars_.push_back(tape.leaf(weights_[l], trainable));
    bound.param_vars_.push_back(tape.leaf(biases_[l], trainable));
  }
  return bound;
}

namespace {

Var apply_activation(Var h, Activation act) {
  switch (act) {
    case Activation::relu: return relu(h);
    case Activation::softplus: return softplus(h);
    case Activation::tanh: return tanh(h);
  }
  throw std::logic_error("apply_activation: bad enum");
}

}  // namespace

Var BoundMlp::forward(Var x) const {
  if (param_vars_.empty()) throw std::logic_error("BoundMlp::forward: unbound");
  Var h = x;
  const size_t layers = param_vars_.size() / 2;
  for (size_t l = 0; l < layers; ++l) {
    h = add(matmul(h, param_vars_[2 * l]), param_vars_[2 * l + 1]);
    if (l + 1 < layers) h = apply_activation(h, act_);
  }
  return h;
}

Tensor Mlp::forward_value(const Tensor& x) const {
  Tape scratch;
  BoundMlp bound = bind(scratch, false);
  return bound.forward(scratch.constant(x)).value();
}

}  // namespace dmatch
