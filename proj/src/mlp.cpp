#include "bnode/mlp.hpp"

#include <cmath>
#include <random>

namespace bnode {

namespace {

Vector activate(Activation a, const Vector& x) {
  switch (a) {
    case Activation::Tanh:
      return x.array().tanh();
    case Activation::Relu:
      return x.cwiseMax(0.0);
    case Activation::Identity:
      break;
  }
  return x;
}

ad::Var activate(Activation a, const ad::Var& x) {
  switch (a) {
    case Activation::Tanh:
      return x.tape().tanh(x);
    case Activation::Relu:
      return x.tape().relu(x);
    case Activation::Identity:
      break;
  }
  return x;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::Identity:
      break;
  }
  return "identity";
}

MlpSpec::MlpSpec(std::vector<Index> widths, Activation hidden, Activation output)
    : layer_widths(std::move(widths)), output_activation(output) {
  if (layer_widths.size() >= 2) hidden_activations.assign(layer_widths.size() - 2, hidden);
  validate();
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) throw ConfigError("MLP needs at least input and output widths");
  for (Index w : layer_widths)
    if (w < 1) throw ConfigError("MLP widths must be >= 1");
  if (hidden_activations.size() != layer_widths.size() - 2)
    throw ConfigError("MLP needs one activation per hidden layer");
}

Index MlpSpec::param_count() const {
  Index n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
    n += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
  return n;
}

Index MlpSpec::weight_offset(std::size_t layer) const {
  Index n = 0;
  for (std::size_t l = 0; l < layer; ++l)
    n += layer_widths[l] * layer_widths[l + 1] + layer_widths[l + 1];
  return n;
}

Index MlpSpec::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + layer_widths[layer] * layer_widths[layer + 1];
}

ParamVec init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParamVec p{Vector::Zero(spec.param_count()), spec};
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const Index in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    const Index off = spec.weight_offset(l);
    for (Index k = 0; k < in * out; ++k) p.values[off + k] = dist(rng);
  }
  return p;
}

std::vector<DenseLayer> unflatten(const ParamVec& params) {
  const MlpSpec& spec = params.spec;
  if (params.values.size() != spec.param_count())
    throw DimMismatch("parameter vector length does not match the MLP spec");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const Index in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
    DenseLayer layer;
    layer.weight = Eigen::Map<const RowMajor>(params.values.data() + spec.weight_offset(l), out, in);
    layer.bias = params.values.segment(spec.bias_offset(l), out);
    layers.push_back(std::move(layer));
  }
  return layers;
}

ParamVec flatten(const std::vector<DenseLayer>& layers, const MlpSpec& spec) {
  if (layers.size() != spec.n_layers()) throw DimMismatch("layer count does not match the MLP spec");
  ParamVec p{Vector::Zero(spec.param_count()), spec};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Index in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
    if (layers[l].weight.rows() != out || layers[l].weight.cols() != in || layers[l].bias.size() != out)
      throw DimMismatch("layer shape does not match the MLP spec");
    Eigen::Map<RowMajor>(p.values.data() + spec.weight_offset(l), out, in) = layers[l].weight;
    p.values.segment(spec.bias_offset(l), out) = layers[l].bias;
  }
  return p;
}

std::vector<Vector> mlp_forward_trace(const MlpSpec& spec, const Vector& params, const Vector& x) {
  if (params.size() != spec.param_count()) throw DimMismatch("parameter vector length mismatch");
  if (x.size() != spec.input_dim())
    throw DimMismatch("MLP input has length " + std::to_string(x.size()) + ", expected " +
                      std::to_string(spec.input_dim()));
  std::vector<Vector> trace;
  Vector h = x;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const Index in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
    Eigen::Map<const RowMajor> w(params.data() + spec.weight_offset(l), out, in);
    Vector z = w * h + params.segment(spec.bias_offset(l), out);
    const bool last = l + 1 == spec.n_layers();
    h = activate(last ? spec.output_activation : spec.hidden_activations[l], z);
    trace.push_back(h);
  }
  return trace;
}

Vector mlp_forward(const MlpSpec& spec, const Vector& params, const Vector& x) {
  if (params.size() != spec.param_count()) throw DimMismatch("parameter vector length mismatch");
  if (x.size() != spec.input_dim())
    throw DimMismatch("MLP input has length " + std::to_string(x.size()) + ", expected " +
                      std::to_string(spec.input_dim()));
  Vector h = x;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const Index in = spec.layer_widths[l], out = spec.layer_widths[l + 1];
    Eigen::Map<const RowMajor> w(params.data() + spec.weight_offset(l), out, in);
    Vector z = w * h + params.segment(spec.bias_offset(l), out);
    const bool last = l + 1 == spec.n_layers();
    h = activate(last ? spec.output_activation : spec.hidden_activations[l], z);
  }
  return h;
}

ad::Var mlp_forward(const MlpSpec& spec, const ad::Var& params, const ad::Var& x) {
  if (params.size() != spec.param_count()) throw DimMismatch("parameter node length mismatch");
  if (x.size() != spec.input_dim()) throw DimMismatch("MLP input length mismatch");
  ad::Tape& tape = x.tape();
  ad::Var h = x;
  for (std::size_t l = 0; l < spec.n_layers(); ++l) {
    const Index out = spec.layer_widths[l + 1];
    ad::Var z = tape.affine(params, spec.weight_offset(l), spec.bias_offset(l), out, h);
    const bool last = l + 1 == spec.n_layers();
    h = activate(last ? spec.output_activation : spec.hidden_activations[l], z);
  }
  return h;
}

}  // namespace bnode
