#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dp2vae/errors.hpp"
#include "dp2vae/numerics.hpp"

namespace dp2vae {

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1, kSigmoid = 2 };

namespace detail {
inline std::uint64_t next_net_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Dense feed-forward network whose parameters live in one flat vector.
///
/// Layer l owns a column-major (out x in) weight block followed by its bias,
/// in layer order. That flat vector is the FlatParams view used for clipping,
/// noising and Adam, so flatten/unflatten are plain copies.
///
/// Every instance carries a stamp that changes on copy and on any mutable
/// parameter access; tapes record it so backward can reject stale tapes.
template <typename Scalar>
class DenseNet {
 public:
  using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Layer {
    Eigen::Index in = 0;
    Eigen::Index out = 0;
    Activation activation = Activation::kIdentity;
    Eigen::Index offset = 0;  // start of the weight block in params()

    Eigen::Index weight_count() const { return in * out; }
    Eigen::Index param_count() const { return in * out + out; }
    bool operator==(const Layer&) const = default;
  };

  DenseNet() : stamp_(detail::next_net_stamp()) {}

  /// dims = {input, hidden..., output}; one activation per layer. Zero-initialized.
  DenseNet(const std::vector<Eigen::Index>& dims, const std::vector<Activation>& activations)
      : stamp_(detail::next_net_stamp()) {
    if (dims.size() < 2 || activations.size() != dims.size() - 1) {
      throw ShapeError("DenseNet: need dims.size() == activations.size() + 1 >= 2");
    }
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      if (dims[l] <= 0 || dims[l + 1] <= 0) throw ShapeError("DenseNet: layer sizes must be positive");
      layers_.push_back(Layer{dims[l], dims[l + 1], activations[l], offset});
      offset += layers_.back().param_count();
    }
    params_ = VectorS::Zero(offset);
  }

  DenseNet(const DenseNet& other)
      : layers_(other.layers_), params_(other.params_), stamp_(detail::next_net_stamp()) {}
  DenseNet& operator=(const DenseNet& other) {
    if (this != &other) {
      layers_ = other.layers_;
      params_ = other.params_;
      stamp_ = detail::next_net_stamp();
    }
    return *this;
  }
  DenseNet(DenseNet&&) noexcept = default;
  DenseNet& operator=(DenseNet&&) noexcept = default;

  Eigen::Index input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  Eigen::Index output_dim() const { return layers_.empty() ? 0 : layers_.back().out; }
  Eigen::Index num_params() const { return params_.size(); }
  std::size_t num_layers() const { return layers_.size(); }
  const Layer& layer(std::size_t l) const { return layers_.at(l); }
  const std::vector<Layer>& layers() const { return layers_; }

  Eigen::Map<const MatrixS> weight(std::size_t l) const {
    const Layer& L = layers_.at(l);
    return Eigen::Map<const MatrixS>(params_.data() + L.offset, L.out, L.in);
  }
  Eigen::Map<const VectorS> bias(std::size_t l) const {
    const Layer& L = layers_.at(l);
    return Eigen::Map<const VectorS>(params_.data() + L.offset + L.weight_count(), L.out);
  }
  Eigen::Map<MatrixS> mutable_weight(std::size_t l) {
    const Layer& L = layers_.at(l);
    stamp_ = detail::next_net_stamp();
    return Eigen::Map<MatrixS>(params_.data() + L.offset, L.out, L.in);
  }
  Eigen::Map<VectorS> mutable_bias(std::size_t l) {
    const Layer& L = layers_.at(l);
    stamp_ = detail::next_net_stamp();
    return Eigen::Map<VectorS>(params_.data() + L.offset + L.weight_count(), L.out);
  }

  const VectorS& params() const { return params_; }
  VectorS& mutable_params() {
    stamp_ = detail::next_net_stamp();
    return params_;
  }
  void set_params(const VectorS& flat) {
    if (flat.size() != params_.size()) {
      throw ShapeError("DenseNet: expected " + std::to_string(params_.size()) +
                       " parameters, got " + std::to_string(flat.size()));
    }
    params_ = flat;
    stamp_ = detail::next_net_stamp();
  }

  bool same_architecture(const DenseNet& other) const { return layers_ == other.layers_; }
  std::uint64_t stamp() const { return stamp_; }

 private:
  std::vector<Layer> layers_;
  VectorS params_;
  std::uint64_t stamp_;
};

using Net = DenseNet<double>;

/// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
template <typename Scalar>
DenseNet<Scalar> glorot_uniform(const std::vector<Eigen::Index>& dims,
                                const std::vector<Activation>& activations, RngStream& rng) {
  DenseNet<Scalar> net(dims, activations);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& L = net.layer(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    auto w = net.mutable_weight(l);
    // Column-major fill order, same as the flat layout.
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = static_cast<Scalar>(limit * (2.0 * rng.next_uniform() - 1.0));
  }
  return net;
}

template <typename Scalar>
typename DenseNet<Scalar>::VectorS flatten(const DenseNet<Scalar>& net) {
  return net.params();
}

template <typename Scalar>
DenseNet<Scalar> unflatten(const DenseNet<Scalar>& architecture,
                           const typename DenseNet<Scalar>::VectorS& flat) {
  DenseNet<Scalar> out = architecture;
  out.set_params(flat);
  return out;
}

/// Activation record of one forward pass. Columns are samples.
template <typename Scalar>
struct Tape {
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  MatrixS input;
  std::vector<MatrixS> pre;   // W a + b per layer
  std::vector<MatrixS> post;  // activation(pre) per layer
  std::uint64_t net_stamp = 0;
};

template <typename Scalar>
struct ForwardResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> output;
  Tape<Scalar> tape;
};

template <typename Scalar>
struct BackwardResult {
  /// Summed over the columns of the batch, in FlatParams order.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> param_grad;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> input_grad;
};

namespace detail {

template <typename Scalar>
void apply_activation(Activation act,
                      const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& z,
                      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a) {
  switch (act) {
    case Activation::kIdentity:
      a = z;
      break;
    case Activation::kRelu:
      a = z.cwiseMax(Scalar(0));
      break;
    case Activation::kSigmoid:
      a = z.unaryExpr([](Scalar v) {
        // Split on sign so exp never overflows.
        if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (Scalar(1) + e);
      });
      break;
  }
}

// grad <- grad * activation'(z), with a = activation(z).
template <typename Scalar>
void scale_by_activation_derivative(Activation act,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& z,
                                    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a,
                                    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& grad) {
  switch (act) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      grad = (z.array() > Scalar(0)).select(grad, Scalar(0));
      break;
    case Activation::kSigmoid:
      grad.array() *= a.array() * (Scalar(1) - a.array());
      break;
  }
}

}  // namespace detail

template <typename Scalar, typename Derived>
ForwardResult<Scalar> forward(const DenseNet<Scalar>& net, const Eigen::MatrixBase<Derived>& input) {
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (net.num_layers() == 0) throw ShapeError("forward: empty network");
  if (input.rows() != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(input.rows()) + " rows, network expects " +
                     std::to_string(net.input_dim()));
  }
  ForwardResult<Scalar> r;
  r.tape.input = input;
  r.tape.net_stamp = net.stamp();
  r.tape.pre.resize(net.num_layers());
  r.tape.post.resize(net.num_layers());
  const MatrixS* a = &r.tape.input;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    MatrixS& z = r.tape.pre[l];
    z.noalias() = net.weight(l) * (*a);
    z.colwise() += net.bias(l);
    detail::apply_activation(net.layer(l).activation, z, r.tape.post[l]);
    a = &r.tape.post[l];
  }
  r.output = r.tape.post.back();
  return r;
}

/// Reverse-mode pass. `output_grad` is d(scalar)/d(output), one column per sample.
template <typename Scalar, typename Derived>
BackwardResult<Scalar> backward(const DenseNet<Scalar>& net, const Tape<Scalar>& tape,
                                const Eigen::MatrixBase<Derived>& output_grad) {
  using MatrixS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (tape.net_stamp != net.stamp() || tape.pre.size() != net.num_layers()) {
    throw InvalidState("backward: tape does not belong to this network state");
  }
  if (output_grad.rows() != net.output_dim() || output_grad.cols() != tape.input.cols()) {
    throw ShapeError("backward: output_grad shape does not match the forward output");
  }
  BackwardResult<Scalar> r;
  r.param_grad = VectorS::Zero(net.num_params());
  MatrixS delta = output_grad;
  for (std::size_t li = net.num_layers(); li-- > 0;) {
    const auto& L = net.layer(li);
    detail::scale_by_activation_derivative(L.activation, tape.pre[li], tape.post[li], delta);
    const MatrixS& prev = li == 0 ? tape.input : tape.post[li - 1];
    Eigen::Map<MatrixS> gw(r.param_grad.data() + L.offset, L.out, L.in);
    Eigen::Map<VectorS> gb(r.param_grad.data() + L.offset + L.weight_count(), L.out);
    gw.noalias() = delta * prev.transpose();
    gb = delta.rowwise().sum();
    MatrixS next = net.weight(li).transpose() * delta;
    delta = std::move(next);
  }
  r.input_grad = std::move(delta);
  return r;
}

template <typename Scalar>
struct AdamState {
  using VectorS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  VectorS m;
  VectorS v;
  std::int64_t t = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar epsilon = Scalar(1e-8);

  static AdamState zeros(Eigen::Index n) {
    AdamState s;
    s.m = VectorS::Zero(n);
    s.v = VectorS::Zero(n);
    return s;
  }
};

using Adam = AdamState<double>;

/// In-place Adam update with bias correction.
template <typename Scalar, typename DerivedP, typename DerivedG>
void adam_update(Eigen::MatrixBase<DerivedP>& params, const Eigen::MatrixBase<DerivedG>& grad,
                 AdamState<Scalar>& state, Scalar lr) {
  if (params.size() != grad.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam: params, grad and state lengths differ");
  }
  if (!(lr >= 0)) throw InvalidParameter("adam: learning rate must be >= 0");
  state.t += 1;
  state.m = state.beta1 * state.m + (Scalar(1) - state.beta1) * grad;
  state.v = state.beta2 * state.v + (Scalar(1) - state.beta2) * grad.cwiseAbs2();
  const Scalar bc1 = Scalar(1) - std::pow(state.beta1, static_cast<Scalar>(state.t));
  const Scalar bc2 = Scalar(1) - std::pow(state.beta2, static_cast<Scalar>(state.t));
  params.derived().array() -=
      lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + state.epsilon);
}

/// Value-semantics wrapper around adam_update.
template <typename Scalar>
std::pair<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>, AdamState<Scalar>> adam_step(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& params,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grad, const AdamState<Scalar>& state, Scalar lr) {
  auto out = std::make_pair(params, state);
  adam_update(out.first, grad, out.second, lr);
  return out;
}

}  // namespace dp2vae
