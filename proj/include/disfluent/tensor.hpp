#pragma once

#include "disfluent/error.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace disfluent {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

enum class Mode { Train, Eval };

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
class Graph;

namespace detail {

std::uint64_t next_tensor_id();

template <typename Scalar>
struct TensorStorage {
  std::uint64_t id = next_tensor_id();
  Shape shape;
  VectorX<Scalar> data;
  VectorX<Scalar> grad;
  bool requires_grad = false;
  bool is_leaf = true;
};

}  // namespace detail

/// Row-major N-d array that can take part in a recorded autodiff graph.
///
/// Copies are shallow: two copies of a Tensor share storage and gradient,
/// the way parameters are shared between a model and its optimizer.
/// Use `clone()` for an independent deep copy.
template <typename Scalar>
class Tensor {
 public:
  using Vector = VectorX<Scalar>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Vector data, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  /// Values are unspecified; for outputs that are overwritten in full.
  static Tensor uninitialized(Shape shape);
  static Tensor full(Shape shape, Scalar value);
  static Tensor from_values(Shape shape, std::initializer_list<Scalar> values);

  bool defined() const { return static_cast<bool>(s_); }
  std::uint64_t id() const { return s_->id; }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  Index dim(std::size_t axis) const { return s_->shape.at(axis); }
  Index size() const { return s_->data.size(); }

  const Vector& data() const { return s_->data; }
  Vector& data() { return s_->data; }
  Scalar* raw() { return s_->data.data(); }
  const Scalar* raw() const { return s_->data.data(); }
  Scalar item() const;

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return s_->is_leaf; }

  bool has_grad() const { return s_->grad.size() == s_->data.size() && s_->data.size() > 0; }
  const Vector& grad() const { return s_->grad; }
  Vector& grad() { return s_->grad; }
  void zero_grad() { s_->grad.setZero(s_->data.size()); }

  /// Deep copy of values; the copy is a fresh leaf without gradient.
  Tensor clone() const;
  /// Deep copy with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

 private:
  friend class Graph<Scalar>;
  std::shared_ptr<detail::TensorStorage<Scalar>> s_;
};

enum class OpKind {
  Conv2d,
  BatchNorm,
  Relu,
  Add,
  Mul,
  Sum,
  Linear,
  LstmStep,
  BiLstm,
  Dropout,
  SoftmaxCrossEntropy,
  SliceLast,
  FeatureMapToSequence,
  SequenceEndpoints,
};

std::string_view to_string(OpKind kind);

/// Tape of recorded operations. Nodes are appended as ops execute, so the
/// tape is topologically ordered by construction and `backward` simply
/// walks it in reverse.
///
/// A disabled graph records nothing; ops run forward only. Each training
/// step should use a fresh graph.
template <typename Scalar>
class Graph {
 public:
  using Vector = VectorX<Scalar>;
  using BackwardFn = std::function<void(const Vector& grad_output, Graph& graph)>;

  struct Node {
    OpKind kind;
    std::vector<std::uint64_t> inputs;
    std::uint64_t output;
  };

  explicit Graph(bool enabled = true) : enabled_(enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool enabled() const { return enabled_; }

  /// True when an op over these inputs has to be recorded.
  bool tracks(std::initializer_list<const Tensor<Scalar>*> inputs) const;

  /// Appends a node. Undefined tensors in `inputs` are ignored. `output`
  /// becomes a non-leaf that requires grad. Whatever the closure captures
  /// stays alive until the node is back-propagated, so capture only what
  /// the gradient needs.
  void record(OpKind kind, std::initializer_list<const Tensor<Scalar>*> inputs, Tensor<Scalar>& output,
              BackwardFn backward);

  /// Inside a backward closure: does this tensor take a gradient?
  bool wants_grad(const Tensor<Scalar>& t) const;
  /// Inside a backward closure: zero-initialised accumulator for `t`.
  Vector& grad_slot(const Tensor<Scalar>& t);

  /// Populates `.grad()` of every leaf reached from `loss` with
  /// d(loss)/d(leaf); leaves in the graph that `loss` does not depend on
  /// get zero gradient. Releases saved activations as it goes, so a graph
  /// can be back-propagated once.
  void backward(const Tensor<Scalar>& loss);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  bool enabled_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::vector<BackwardFn> closures_;
  std::unordered_map<std::uint64_t, Index> intermediate_sizes_;
  std::unordered_map<std::uint64_t, std::shared_ptr<detail::TensorStorage<Scalar>>> leaves_;
  std::unordered_map<std::uint64_t, Vector> grads_;
};

/// Convenience: back-propagate and zero the gradients of `params` that the
/// loss does not reach (including ones never seen by the graph).
template <typename Scalar>
void backward(Graph<Scalar>& graph, const Tensor<Scalar>& loss, std::vector<Tensor<Scalar>> params = {});

namespace detail {

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, std::string_view op);

}  // namespace detail

}  // namespace disfluent
