#pragma once

#include <string>
#include <vector>

#include "dmatch/autodiff.hpp"
#include "dmatch/rng.hpp"

namespace dmatch {

enum class Activation { relu, softplus, tanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct MlpSpec {
  std::vector<int> widths;  // input, hidden..., output; at least 2 entries
  Activation act = Activation::relu;
  double init_scale = 1.0;
};

// widths {in, hidden x (layers-1), out}; "layers" counts linear maps.
MlpSpec make_mlp_spec(int in_dim, int hidden, int out_dim, int layers,
                      Activation act = Activation::relu, double init_scale = 1.0);

class BoundMlp;

// Plain fully connected net. Weights are drawn uniform(-s, s) with
// s = init_scale / sqrt(fan_in); biases start at zero. The activation is
// applied between layers, never on the output.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  const MlpSpec& spec() const { return spec_; }

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;

  BoundMlp bind(Tape& tape, bool trainable) const;

  // Tape-free forward for plain evaluation paths.
  Tensor forward_value(const Tensor& x) const;

 private:
  MlpSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Per-tape view of an Mlp: one leaf Var per parameter, created once per bind
// so repeated forward calls on the same tape accumulate into the same leaves.
class BoundMlp {
 public:
  Var forward(Var x) const;
  const std::vector<Var>& param_vars() const { return param_vars_; }

 private:
  friend class Mlp;
  Activation act_;
  std::vector<Var> param_vars_;  // w0, b0, w1, b1, ...
};

}  // namespace dmatch
