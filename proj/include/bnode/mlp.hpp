#ifndef BNODE_MLP_HPP
#define BNODE_MLP_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "bnode/common.hpp"
#include "bnode/tape.hpp"

namespace bnode {

enum class Activation { Tanh, Relu, Identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/** Dense feed-forward architecture: widths (input, hidden..., output). */
struct MlpSpec {
  std::vector<Index> layer_widths;
  std::vector<Activation> hidden_activations;  // one per hidden layer
  Activation output_activation = Activation::Identity;

  MlpSpec() = default;
  MlpSpec(std::vector<Index> widths, Activation hidden = Activation::Tanh,
          Activation output = Activation::Identity);

  Index input_dim() const { return layer_widths.front(); }
  Index output_dim() const { return layer_widths.back(); }
  std::size_t n_layers() const { return layer_widths.size() - 1; }
  Index param_count() const;
  /** Offset of layer l's weight block (row-major, out x in) and of its bias. */
  Index weight_offset(std::size_t layer) const;
  Index bias_offset(std::size_t layer) const;
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

/** Flat weights and biases, layer by layer: W_l (row-major) then b_l. */
struct ParamVec {
  Vector values;
  MlpSpec spec;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;
};

/** Glorot-uniform weights, zero biases. */
ParamVec init_params(const MlpSpec& spec, std::uint64_t seed);

std::vector<DenseLayer> unflatten(const ParamVec& params);
ParamVec flatten(const std::vector<DenseLayer>& layers, const MlpSpec& spec);

Vector mlp_forward(const MlpSpec& spec, const Vector& params, const Vector& x);
inline Vector mlp_forward(const ParamVec& params, const Vector& x) {
  return mlp_forward(params.spec, params.values, x);
}

/** Activations after every layer (hidden layers first, output last). */
std::vector<Vector> mlp_forward_trace(const MlpSpec& spec, const Vector& params, const Vector& x);

/** Tape version; `params` may be any node of length spec.param_count(). */
ad::Var mlp_forward(const MlpSpec& spec, const ad::Var& params, const ad::Var& x);

}  // namespace bnode

#endif  // BNODE_MLP_HPP
