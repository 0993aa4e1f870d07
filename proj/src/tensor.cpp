#include "disfluent/tensor.hpp"

#include <atomic>
#include <sstream>

namespace disfluent {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw Error(Errc::ShapeMismatch, "negative dimension in " + shape_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Conv2d: return "conv2d";
    case OpKind::BatchNorm: return "batch_norm";
    case OpKind::Relu: return "relu";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Sum: return "sum";
    case OpKind::Linear: return "linear";
    case OpKind::LstmStep: return "lstm_step";
    case OpKind::BiLstm: return "bilstm";
    case OpKind::Dropout: return "dropout";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::SliceLast: return "slice_last";
    case OpKind::FeatureMapToSequence: return "feature_map_to_sequence";
    case OpKind::SequenceEndpoints: return "sequence_endpoints";
  }
  return "unknown";
}

namespace detail {

std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, std::string_view op) {
  if (!t.data().allFinite()) {
    throw Error(Errc::NumericalError, "non-finite value produced by " + std::string(op));
  }
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, bool requires_grad) : s_(std::make_shared<detail::TensorStorage<Scalar>>()) {
  s_->data = Vector::Zero(shape_size(shape));
  s_->shape = std::move(shape);
  s_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Vector data, bool requires_grad)
    : s_(std::make_shared<detail::TensorStorage<Scalar>>()) {
  if (shape_size(shape) != data.size()) {
    throw Error(Errc::ShapeMismatch, "shape " + shape_string(shape) + " does not hold " +
                                         std::to_string(data.size()) + " values");
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
  s_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::uninitialized(Shape shape) {
  const Index n = shape_size(shape);
  return Tensor(std::move(shape), Vector(n));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value) {
  Tensor t(std::move(shape));
  t.data().setConstant(value);
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_values(Shape shape, std::initializer_list<Scalar> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar x : values) v[i++] = x;
  return Tensor(std::move(shape), std::move(v));
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) throw Error(Errc::ShapeMismatch, "item() on tensor of shape " + shape_string(shape()));
  return s_->data[0];
}

template <typename Scalar>
Tensor<Scalar>& Tensor<Scalar>::set_requires_grad(bool flag) {
  s_->requires_grad = flag;
  return *this;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::clone() const {
  return Tensor(shape(), data(), false);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape new_shape) const {
  return Tensor(std::move(new_shape), data(), false);
}

template <typename Scalar>
bool Graph<Scalar>::tracks(std::initializer_list<const Tensor<Scalar>*> inputs) const {
  if (!enabled_) return false;
  for (const auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename Scalar>
void Graph<Scalar>::record(OpKind kind, std::initializer_list<const Tensor<Scalar>*> inputs,
                           Tensor<Scalar>& output, BackwardFn backward) {
  if (consumed_) throw Error(Errc::InvalidConfig, "graph already back-propagated");
  Node node{kind, {}, output.id()};
  for (const auto* t : inputs) {
    if (!t || !t->defined()) continue;
    node.inputs.push_back(t->id());
    if (t->requires_grad() && t->is_leaf()) leaves_.emplace(t->id(), t->s_);
  }
  output.s_->requires_grad = true;
  output.s_->is_leaf = false;
  intermediate_sizes_[output.id()] = output.size();
  nodes_.push_back(std::move(node));
  closures_.push_back(std::move(backward));
}

template <typename Scalar>
bool Graph<Scalar>::wants_grad(const Tensor<Scalar>& t) const {
  if (!t.defined()) return false;
  return intermediate_sizes_.contains(t.id()) || leaves_.contains(t.id());
}

template <typename Scalar>
typename Graph<Scalar>::Vector& Graph<Scalar>::grad_slot(const Tensor<Scalar>& t) {
  if (auto leaf = leaves_.find(t.id()); leaf != leaves_.end()) {
    auto& g = leaf->second->grad;
    if (g.size() != leaf->second->data.size()) g.setZero(leaf->second->data.size());
    return g;
  }
  auto it = grads_.find(t.id());
  if (it == grads_.end()) {
    const auto size = intermediate_sizes_.at(t.id());
    it = grads_.emplace(t.id(), Vector::Zero(size)).first;
  }
  return it->second;
}

template <typename Scalar>
void Graph<Scalar>::backward(const Tensor<Scalar>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw Error(Errc::NonScalarLoss, "backward needs a scalar loss, got shape " +
                                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  if (consumed_) throw Error(Errc::InvalidConfig, "graph already back-propagated");
  consumed_ = true;

  for (auto& [id, storage] : leaves_) storage->grad.setZero(storage->data.size());

  if (loss.is_leaf()) {
    if (loss.requires_grad()) {
      auto* storage = loss.s_.get();
      storage->grad.setOnes(1);
    }
    return;
  }

  grads_.clear();
  grads_.emplace(loss.id(), Vector::Ones(1));
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto it = grads_.find(nodes_[i].output);
    if (it == grads_.end()) {
      closures_[i] = nullptr;
      continue;
    }
    Vector grad_output = std::move(it->second);
    grads_.erase(it);
    if (!grad_output.allFinite()) {
      throw Error(Errc::NumericalError,
                  "non-finite gradient flowing into " + std::string(to_string(nodes_[i].kind)));
    }
    closures_[i](grad_output, *this);
    closures_[i] = nullptr;
  }
  grads_.clear();

  for (auto& [id, storage] : leaves_) {
    if (!storage->grad.allFinite()) throw Error(Errc::NumericalError, "non-finite parameter gradient");
  }
}

template <typename Scalar>
void backward(Graph<Scalar>& graph, const Tensor<Scalar>& loss, std::vector<Tensor<Scalar>> params) {
  for (auto& p : params) p.zero_grad();
  graph.backward(loss);
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template void backward(Graph<float>&, const Tensor<float>&, std::vector<Tensor<float>>);
template void backward(Graph<double>&, const Tensor<double>&, std::vector<Tensor<double>>);
template void detail::require_finite(const Tensor<float>&, std::string_view);
template void detail::require_finite(const Tensor<double>&, std::string_view);

}  // namespace disfluent
