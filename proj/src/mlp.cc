#include "orient_geo/mlp.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "orient_geo/errors.h"
#include "orient_geo/so3.h"

namespace orient_geo {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "orient_geo.checkpoint";

}  // namespace

std::string to_string(Activation act) {
  switch (act) {
    case Activation::kRelu: return "relu";
    case Activation::kPiTanh: return "pi_tanh";
    case Activation::kL2Normalize: return "l2_normalize";
    case Activation::kSoftmax: return "softmax";
    case Activation::kLinear: return "linear";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  for (Activation a : {Activation::kRelu, Activation::kPiTanh, Activation::kL2Normalize,
                       Activation::kSoftmax, Activation::kLinear}) {
    if (name == to_string(a)) return a;
  }
  throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

void MlpGradients::set_zero() {
  for (auto& w : dw) w.setZero();
  for (auto& b : db) b.setZero();
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  if (other.dw.size() != dw.size()) throw DimensionMismatch("gradient layer count differs");
  for (std::size_t i = 0; i < dw.size(); ++i) {
    dw[i] += other.dw[i];
    db[i] += other.db[i];
  }
  return *this;
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.b.size() != l.w.rows()) {
      throw DimensionMismatch("layer " + std::to_string(i) + ": bias does not match weights");
    }
    if (i > 0 && l.w.cols() != layers_[i - 1].w.rows()) {
      throw DimensionMismatch("layer " + std::to_string(i) + ": input size does not chain");
    }
    if (!l.w.allFinite() || !l.b.allFinite()) {
      throw InvalidArgument("layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

int Mlp::input_dim() const { return static_cast<int>(layers_.front().w.cols()); }
int Mlp::output_dim() const { return static_cast<int>(layers_.back().w.rows()); }

std::vector<int> Mlp::sizes() const {
  std::vector<int> s{input_dim()};
  for (const Layer& l : layers_) s.push_back(static_cast<int>(l.w.rows()));
  return s;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

Eigen::MatrixXd activate(Activation act, const Eigen::MatrixXd& pre) {
  switch (act) {
    case Activation::kRelu:
      return pre.cwiseMax(0.0);
    case Activation::kPiTanh:
      return kPi * pre.array().tanh().matrix();
    case Activation::kL2Normalize: {
      Eigen::MatrixXd out(pre.rows(), pre.cols());
      for (Eigen::Index j = 0; j < pre.cols(); ++j) {
        const double n = pre.col(j).norm();
        if (!(n > 0.0)) throw ZeroSum("cannot normalize a zero vector");
        out.col(j) = pre.col(j) / n;
      }
      return out;
    }
    case Activation::kSoftmax: {
      Eigen::MatrixXd out(pre.rows(), pre.cols());
      for (Eigen::Index j = 0; j < pre.cols(); ++j) {
        const Eigen::ArrayXd e = (pre.col(j).array() - pre.col(j).maxCoeff()).exp();
        out.col(j) = (e / e.sum()).matrix();
      }
      return out;
    }
    case Activation::kLinear:
      return pre;
  }
  return pre;
}

namespace {

// Gradient with respect to the pre-activation given the gradient with
// respect to the activation output.
Eigen::MatrixXd activation_backward(Activation act, const Eigen::MatrixXd& pre,
                                    const Eigen::MatrixXd& out, const Eigen::MatrixXd& g) {
  switch (act) {
    case Activation::kRelu:
      return (pre.array() > 0.0).select(g, 0.0);
    case Activation::kPiTanh: {
      const Eigen::ArrayXXd t = pre.array().tanh();
      return (g.array() * kPi * (1.0 - t * t)).matrix();
    }
    case Activation::kL2Normalize: {
      Eigen::MatrixXd d(g.rows(), g.cols());
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        const double n = pre.col(j).norm();
        const auto y = out.col(j);
        d.col(j) = (g.col(j) - y * y.dot(g.col(j))) / n;
      }
      return d;
    }
    case Activation::kSoftmax: {
      Eigen::MatrixXd d(g.rows(), g.cols());
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        const auto s = out.col(j);
        d.col(j) = s.cwiseProduct(g.col(j)) - s * s.dot(g.col(j));
      }
      return d;
    }
    case Activation::kLinear:
      return g;
  }
  return g;
}

}  // namespace

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& f) const {
  return forward_batch(f).col(0);
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x, Tape* tape) const {
  if (x.rows() != input_dim()) {
    std::ostringstream os;
    os << "network expects input of size " << input_dim() << ", got " << x.rows();
    throw DimensionMismatch(os.str());
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Eigen::MatrixXd h = x;
  for (const Layer& l : layers_) {
    Eigen::MatrixXd pre = l.w * h;
    pre.colwise() += l.b;
    Eigen::MatrixXd out = activate(l.act, pre);
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(std::move(pre));
    }
    h = std::move(out);
  }
  if (tape) tape->output = h;
  return h;
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const Layer& l : layers_) {
    g.dw.push_back(Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols()));
    g.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return g;
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& grad_output,
                              MlpGradients* grads) const {
  if (tape.pre.size() != layers_.size()) throw InvalidArgument("tape does not match network");
  if (grad_output.rows() != output_dim() || grad_output.cols() != tape.output.cols()) {
    throw DimensionMismatch("output gradient has the wrong shape");
  }
  Eigen::MatrixXd g = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Layer& l = layers_[i];
    const Eigen::MatrixXd& out = i + 1 < layers_.size() ? tape.inputs[i + 1] : tape.output;
    const Eigen::MatrixXd d = activation_backward(l.act, tape.pre[i], out, g);
    if (grads) {
      grads->dw[i].noalias() += d * tape.inputs[i].transpose();
      grads->db[i] += d.rowwise().sum();
    }
    g = l.w.transpose() * d;
  }
  return g;
}

Mlp init_pose_network(const std::vector<int>& sizes, std::uint64_t seed, Activation head) {
  if (sizes.size() < 2) throw InvalidArgument("network sizes need an input and an output");
  for (int s : sizes) {
    if (s <= 0) throw InvalidArgument("layer sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const bool last = i + 2 == sizes.size();
    const Activation act = last ? head : Activation::kRelu;
    const double fan_in = sizes[i];
    const double bound = std::sqrt((act == Activation::kRelu ? 6.0 : 3.0) / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer l;
    l.w.resize(sizes[i + 1], sizes[i]);
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) l.w(r, c) = u(rng);
    }
    l.b = Eigen::VectorXd::Zero(sizes[i + 1]);
    l.act = act;
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

Adam::Adam(const Mlp& net, AdamOptions options)
    : options_(options), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

void Adam::reset() {
  m_.set_zero();
  v_.set_zero();
  t_ = 0;
}

void Adam::step(Mlp& net, const MlpGradients& grads, double lr) {
  auto& layers = net.mutable_layers();
  if (grads.dw.size() != layers.size() || m_.dw.size() != layers.size()) {
    throw DimensionMismatch("optimizer state does not match network");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const double b1 = options_.beta1, b2 = options_.beta2, eps = options_.epsilon;
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].w, m_.dw[i], v_.dw[i], grads.dw[i]);
    update(layers[i].b, m_.db[i], v_.db[i], grads.db[i]);
  }
}

namespace {

void write_tensor(std::ostream& os, const double* data, Eigen::Index n) {
  char buf[64];
  for (Eigen::Index i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%a", data[i]);
    if (i > 0) os << ' ';
    os << buf;
  }
  os << '\n';
}

std::vector<double> read_tensor(std::istream& is, Eigen::Index expected) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("checkpoint ended early");
  std::istringstream ls(line);
  std::vector<double> values;
  std::string token;
  while (ls >> token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
      throw ParseError("bad number in checkpoint: '" + token + "'");
    }
    values.push_back(v);
  }
  if (static_cast<Eigen::Index>(values.size()) != expected) {
    std::ostringstream os;
    os << "checkpoint tensor has " << values.size() << " values, expected " << expected;
    throw ParseError(os.str());
  }
  return values;
}

}  // namespace

void write_checkpoint(std::ostream& os, const nlohmann::json& meta, const NamedNetworks& nets) {
  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["version"] = kCheckpointVersion;
  header["meta"] = meta;
  header["networks"] = nlohmann::json::array();
  for (const auto& [name, net] : nets) {
    nlohmann::json acts = nlohmann::json::array();
    for (const Layer& l : net.layers()) acts.push_back(to_string(l.act));
    header["networks"].push_back({{"name", name}, {"sizes", net.sizes()}, {"activations", acts}});
  }
  os << header.dump() << '\n';
  for (const auto& [name, net] : nets) {
    for (const Layer& l : net.layers()) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = l.w;
      write_tensor(os, w.data(), w.size());
      write_tensor(os, l.b.data(), l.b.size());
    }
  }
}

NamedNetworks read_checkpoint(std::istream& is, nlohmann::json* meta) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty checkpoint");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) throw ParseError("not a checkpoint");
  if (header.value("version", 0) != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version");
  }
  if (meta) *meta = header.value("meta", nlohmann::json::object());
  NamedNetworks nets;
  try {
    for (const auto& entry : header.at("networks")) {
      const auto sizes = entry.at("sizes").get<std::vector<int>>();
      const auto acts = entry.at("activations").get<std::vector<std::string>>();
      if (sizes.size() != acts.size() + 1) throw ParseError("network sizes and activations disagree");
      std::vector<Layer> layers;
      for (std::size_t i = 0; i < acts.size(); ++i) {
        Layer l;
        const auto w = read_tensor(is, static_cast<Eigen::Index>(sizes[i + 1]) * sizes[i]);
        l.w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            w.data(), sizes[i + 1], sizes[i]);
        const auto b = read_tensor(is, sizes[i + 1]);
        l.b = Eigen::Map<const Eigen::VectorXd>(b.data(), sizes[i + 1]);
        l.act = parse_activation(acts[i]);
        layers.push_back(std::move(l));
      }
      nets.emplace_back(entry.at("name").get<std::string>(), Mlp(std::move(layers)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what());
  }
  return nets;
}

}  // namespace orient_geo
