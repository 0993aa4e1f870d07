#include "disfluent/ops.hpp"

#include <cmath>
#include <random>

namespace disfluent {
namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw Error(Errc::ShapeMismatch, std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                                         " differ");
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> relu(Graph<Scalar>& graph, const Tensor<Scalar>& input) {
  Tensor<Scalar> out(input.shape(), input.data().cwiseMax(Scalar(0)));
  detail::require_finite(out, "relu");
  if (graph.tracks({&input})) {
    // The output doubles as the mask: gradient passes where it is positive.
    graph.record(OpKind::Relu, {&input}, out, [input, out](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
      gr.grad_slot(input).array() += (out.data().array() > Scalar(0)).select(g.array(), Scalar(0));
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> add(Graph<Scalar>& graph, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.data() + b.data());
  detail::require_finite(out, "add");
  if (graph.tracks({&a, &b})) {
    graph.record(OpKind::Add, {&a, &b}, out, [a, b](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
      if (gr.wants_grad(a)) gr.grad_slot(a) += g;
      if (gr.wants_grad(b)) gr.grad_slot(b) += g;
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul(Graph<Scalar>& graph, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), a.data().cwiseProduct(b.data()));
  detail::require_finite(out, "mul");
  if (graph.tracks({&a, &b})) {
    graph.record(OpKind::Mul, {&a, &b}, out, [a, b](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
      if (gr.wants_grad(a)) gr.grad_slot(a) += g.cwiseProduct(b.data());
      if (gr.wants_grad(b)) gr.grad_slot(b) += g.cwiseProduct(a.data());
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sum(Graph<Scalar>& graph, const Tensor<Scalar>& input) {
  Tensor<Scalar> out = Tensor<Scalar>::full({1}, input.data().sum());
  detail::require_finite(out, "sum");
  if (graph.tracks({&input})) {
    graph.record(OpKind::Sum, {&input}, out, [input](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
      gr.grad_slot(input).array() += g[0];
    });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> linear(Graph<Scalar>& graph, const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1)) {
    throw Error(Errc::ShapeMismatch, "linear: input " + shape_string(input.shape()) + " vs weight " +
                                         shape_string(weight.shape()));
  }
  const Index n = input.dim(0), d = input.dim(1), o = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw Error(Errc::ShapeMismatch, "linear: bias must have " + std::to_string(o) + " entries");
  }
  using CMap = Eigen::Map<const RowMatrixX<Scalar>>;
  using Map = Eigen::Map<RowMatrixX<Scalar>>;
  Tensor<Scalar> out({n, o});
  Map y(out.raw(), n, o);
  y.noalias() = CMap(input.raw(), n, d) * CMap(weight.raw(), o, d).transpose();
  if (bias.defined()) y.rowwise() += bias.data().transpose();
  detail::require_finite(out, "linear");

  if (graph.tracks({&input, &weight, &bias})) {
    graph.record(OpKind::Linear, {&input, &weight, &bias}, out,
                 [input, weight, bias, n, d, o](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
                   const CMap dy(g.data(), n, o);
                   if (gr.wants_grad(input)) {
                     Map(gr.grad_slot(input).data(), n, d).noalias() += dy * CMap(weight.raw(), o, d);
                   }
                   if (gr.wants_grad(weight)) {
                     Map(gr.grad_slot(weight).data(), o, d).noalias() += dy.transpose() * CMap(input.raw(), n, d);
                   }
                   if (gr.wants_grad(bias)) gr.grad_slot(bias) += dy.colwise().sum().transpose();
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> dropout(Graph<Scalar>& graph, const Tensor<Scalar>& input, double rate, Mode mode,
                       std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(Errc::InvalidRate, "dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::Eval || rate == 0.0) return input;

  std::mt19937_64 rng(seed);
  const auto keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  VectorX<Scalar> mask(input.size());
  for (Index i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u >= rate ? keep_scale : Scalar(0);
  }
  Tensor<Scalar> out(input.shape(), input.data().cwiseProduct(mask));
  detail::require_finite(out, "dropout");
  if (graph.tracks({&input})) {
    graph.record(OpKind::Dropout, {&input}, out,
                 [input, mask = std::move(mask)](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
                   gr.grad_slot(input) += g.cwiseProduct(mask);
                 });
  }
  return out;
}

template <typename Scalar>
RowMatrixX<Scalar> softmax(const Tensor<Scalar>& logits) {
  if (logits.rank() != 2) throw Error(Errc::ShapeMismatch, "softmax expects (N,K) logits");
  const Index n = logits.dim(0), k = logits.dim(1);
  Eigen::Map<const RowMatrixX<Scalar>> z(logits.raw(), n, k);
  RowMatrixX<Scalar> p(n, k);
  for (Index r = 0; r < n; ++r) {
    const Eigen::RowVectorXd shifted = z.row(r).template cast<double>().array() - z.row(r).template cast<double>().maxCoeff();
    const Eigen::RowVectorXd e = shifted.array().exp();
    p.row(r) = (e / e.sum()).template cast<Scalar>();
  }
  return p;
}

template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(Graph<Scalar>& graph, const Tensor<Scalar>& logits,
                                     std::span<const int> labels) {
  if (logits.rank() != 2) throw Error(Errc::ShapeMismatch, "softmax_cross_entropy expects (N,K) logits");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw Error(Errc::ShapeMismatch, "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                         std::to_string(n) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(labels[i]) + " at row " + std::to_string(i));
    }
  }

  Eigen::Map<const RowMatrixX<Scalar>> z(logits.raw(), n, k);
  double total = 0.0;
  for (Index r = 0; r < n; ++r) {
    const Eigen::RowVectorXd row = z.row(r).template cast<double>();
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row[labels[static_cast<std::size_t>(r)]];
  }
  Tensor<Scalar> out = Tensor<Scalar>::full({1}, static_cast<Scalar>(total / static_cast<double>(n)));
  detail::require_finite(out, "softmax_cross_entropy");

  if (graph.tracks({&logits})) {
    std::vector<int> owned(labels.begin(), labels.end());
    graph.record(OpKind::SoftmaxCrossEntropy, {&logits}, out,
                 [logits, owned = std::move(owned), n, k](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
                   RowMatrixX<Scalar> delta = softmax(logits);
                   for (Index r = 0; r < n; ++r) delta(r, owned[static_cast<std::size_t>(r)]) -= Scalar(1);
                   delta *= g[0] / static_cast<Scalar>(n);
                   Eigen::Map<RowMatrixX<Scalar>>(gr.grad_slot(logits).data(), n, k) += delta;
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> slice_last(Graph<Scalar>& graph, const Tensor<Scalar>& input, Index begin, Index count) {
  if (input.rank() == 0) throw Error(Errc::ShapeMismatch, "slice_last on a scalar");
  const Index last = input.shape().back();
  if (begin < 0 || count < 0 || begin + count > last) {
    throw Error(Errc::ShapeMismatch, "slice_last range out of bounds for " + shape_string(input.shape()));
  }
  const Index outer = last == 0 ? 0 : input.size() / last;
  Shape shape = input.shape();
  shape.back() = count;
  Tensor<Scalar> out(shape);
  Eigen::Map<const RowMatrixX<Scalar>> in(input.raw(), outer, last);
  Eigen::Map<RowMatrixX<Scalar>>(out.raw(), outer, count) = in.middleCols(begin, count);
  if (graph.tracks({&input})) {
    graph.record(OpKind::SliceLast, {&input}, out,
                 [input, begin, count, outer, last](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
                   Eigen::Map<RowMatrixX<Scalar>>(gr.grad_slot(input).data(), outer, last).middleCols(begin, count) +=
                       Eigen::Map<const RowMatrixX<Scalar>>(g.data(), outer, count);
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> feature_map_to_sequence(Graph<Scalar>& graph, const Tensor<Scalar>& input) {
  if (input.rank() != 4) throw Error(Errc::ShapeMismatch, "feature_map_to_sequence expects (N,C,F,L)");
  const Index n = input.dim(0), c = input.dim(1), f = input.dim(2), l = input.dim(3);
  const Index features = c * f;
  Tensor<Scalar> out({n, l, features});
  for (Index b = 0; b < n; ++b) {
    // Per sample the input is a (C*F, L) matrix; the sequence is its transpose.
    Eigen::Map<RowMatrixX<Scalar>>(out.raw() + b * l * features, l, features) =
        Eigen::Map<const RowMatrixX<Scalar>>(input.raw() + b * features * l, features, l).transpose();
  }
  if (graph.tracks({&input})) {
    graph.record(OpKind::FeatureMapToSequence, {&input}, out,
                 [input, n, l, features](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
                   auto& slot = gr.grad_slot(input);
                   for (Index b = 0; b < n; ++b) {
                     Eigen::Map<RowMatrixX<Scalar>>(slot.data() + b * features * l, features, l) +=
                         Eigen::Map<const RowMatrixX<Scalar>>(g.data() + b * l * features, l, features).transpose();
                   }
                 });
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> sequence_endpoints(Graph<Scalar>& graph, const Tensor<Scalar>& sequence) {
  if (sequence.rank() != 3 || sequence.dim(2) % 2 != 0 || sequence.dim(1) < 1) {
    throw Error(Errc::ShapeMismatch, "sequence_endpoints expects (N,T,2U), got " + shape_string(sequence.shape()));
  }
  const Index n = sequence.dim(0), t = sequence.dim(1), width = sequence.dim(2), units = width / 2;
  Tensor<Scalar> out({n, width});
  for (Index b = 0; b < n; ++b) {
    const Scalar* seq = sequence.raw() + b * t * width;
    Scalar* dst = out.raw() + b * width;
    std::copy(seq + (t - 1) * width, seq + (t - 1) * width + units, dst);
    std::copy(seq + units, seq + width, dst + units);
  }
  if (graph.tracks({&sequence})) {
    graph.record(OpKind::SequenceEndpoints, {&sequence}, out,
                 [sequence, n, t, width, units](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
                   auto& slot = gr.grad_slot(sequence);
                   for (Index b = 0; b < n; ++b) {
                     Scalar* seq = slot.data() + b * t * width;
                     const Scalar* src = g.data() + b * width;
                     for (Index u = 0; u < units; ++u) {
                       seq[(t - 1) * width + u] += src[u];
                       seq[units + u] += src[units + u];
                     }
                   }
                 });
  }
  return out;
}

#define DISFLUENT_INSTANTIATE_BASIC(S)                                                                   \
  template Tensor<S> relu(Graph<S>&, const Tensor<S>&);                                                 \
  template Tensor<S> add(Graph<S>&, const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> mul(Graph<S>&, const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> sum(Graph<S>&, const Tensor<S>&);                                                  \
  template Tensor<S> linear(Graph<S>&, const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);           \
  template Tensor<S> dropout(Graph<S>&, const Tensor<S>&, double, Mode, std::uint64_t);                 \
  template RowMatrixX<S> softmax(const Tensor<S>&);                                                     \
  template Tensor<S> softmax_cross_entropy(Graph<S>&, const Tensor<S>&, std::span<const int>);          \
  template Tensor<S> slice_last(Graph<S>&, const Tensor<S>&, Index, Index);                             \
  template Tensor<S> feature_map_to_sequence(Graph<S>&, const Tensor<S>&);                              \
  template Tensor<S> sequence_endpoints(Graph<S>&, const Tensor<S>&);

DISFLUENT_INSTANTIATE_BASIC(float)
DISFLUENT_INSTANTIATE_BASIC(double)

#undef DISFLUENT_INSTANTIATE_BASIC

}  // namespace disfluent
