#ifndef ORIENT_GEO_MLP_H_
#define ORIENT_GEO_MLP_H_

// Small fully connected networks with hand-written backpropagation. Batches
// are stored column-wise: one sample per column.

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace orient_geo {

enum class Activation { kRelu, kPiTanh, kL2Normalize, kSoftmax, kLinear };

std::string to_string(Activation act);
Activation parse_activation(std::string_view name);

struct Layer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
  Activation act = Activation::kLinear;
};

struct MlpGradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;

  void set_zero();
  MlpGradients& operator+=(const MlpGradients& other);
};

// Activations recorded during a forward pass, consumed by backward.
struct Tape {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // affine output of each layer
  Eigen::MatrixXd output;
};

class Mlp {
 public:
  Mlp() = default;
  // Throws DimensionMismatch if shapes do not chain, InvalidArgument on
  // non-finite weights.
  explicit Mlp(std::vector<Layer> layers);

  int input_dim() const;
  int output_dim() const;
  std::vector<int> sizes() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }
  std::size_t parameter_count() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& f) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;

  // Accumulates parameter gradients into grads (which must be shaped by
  // zero_gradients) and returns the gradient with respect to the input.
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& grad_output,
                           MlpGradients* grads) const;

  MlpGradients zero_gradients() const;

 private:
  std::vector<Layer> layers_;
};

// Applies the activation columnwise.
Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& pre);

// Fan-in scaled uniform initialization: bound sqrt(6/fan_in) for layers that
// feed a relu, sqrt(3/fan_in) otherwise; zero biases. Hidden layers use relu,
// the last layer uses head.
Mlp init_pose_network(const std::vector<int>& sizes, std::uint64_t seed,
                      Activation head = Activation::kLinear);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(const Mlp& net, AdamOptions options = {});
  void step(Mlp& net, const MlpGradients& grads, double lr);
  void reset();
  long steps() const { return t_; }

 private:
  AdamOptions options_;
  MlpGradients m_, v_;
  long t_ = 0;
};

// Checkpoint: one JSON header line, then one line per tensor (weights
// row-major, then bias) in hexadecimal floating point so values roundtrip
// exactly.
using NamedNetworks = std::vector<std::pair<std::string, Mlp>>;

void write_checkpoint(std::ostream& os, const nlohmann::json& meta,
                      const NamedNetworks& nets);
NamedNetworks read_checkpoint(std::istream& is, nlohmann::json* meta = nullptr);

}  // namespace orient_geo

#endif  // ORIENT_GEO_MLP_H_
