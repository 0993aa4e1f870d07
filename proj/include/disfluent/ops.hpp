#pragma once

#include "disfluent/tensor.hpp"

#include <array>
#include <cstdint>
#include <span>

namespace disfluent {

// Differentiable layer operations. Every op takes the graph it records into
// (a disabled graph runs forward only), validates shapes, and raises
// NumericalError if its output contains NaN or Inf.

struct Conv2dOptions {
  std::array<Index, 2> stride{1, 1};
  std::array<Index, 2> padding{0, 0};
};

/// Cross-correlation. `input` is (N,C,H,W) or (C,H,W); `weight` is
/// (O,C,kh,kw); `bias` (O) may be undefined.
template <typename Scalar>
Tensor<Scalar> conv2d(Graph<Scalar>& graph, const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const Conv2dOptions& options = {});

/// Running statistics owned by a batch-norm layer. They are plain tensors
/// (no gradient) updated in place by train-mode calls.
template <typename Scalar>
struct BatchNormStats {
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;

  static BatchNormStats create(Index channels);
};

struct BatchNormOptions {
  double momentum = 0.9;
  double eps = 1e-5;
};

/// Per-channel normalisation over axes {0, 2, 3, ...} of an (N,C,...) input.
/// Train mode uses batch statistics and folds them into `stats`
/// (running = momentum * running + (1 - momentum) * batch); eval mode uses
/// the running statistics.
template <typename Scalar>
Tensor<Scalar> batch_norm(Graph<Scalar>& graph, const Tensor<Scalar>& input, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, BatchNormStats<Scalar>& stats, Mode mode,
                          const BatchNormOptions& options = {});

template <typename Scalar>
Tensor<Scalar> relu(Graph<Scalar>& graph, const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> add(Graph<Scalar>& graph, const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> mul(Graph<Scalar>& graph, const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Sum of all elements, shape (1).
template <typename Scalar>
Tensor<Scalar> sum(Graph<Scalar>& graph, const Tensor<Scalar>& input);

/// y = x W^T + b for x (N,D), W (O,D), b (O).
template <typename Scalar>
Tensor<Scalar> linear(Graph<Scalar>& graph, const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias);

/// Inverted dropout. Eval mode and rate 0 return `input` unchanged.
template <typename Scalar>
Tensor<Scalar> dropout(Graph<Scalar>& graph, const Tensor<Scalar>& input, double rate, Mode mode,
                       std::uint64_t seed);

/// Mean over the batch of -log softmax(logits)[label]; logits are (N,K).
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(Graph<Scalar>& graph, const Tensor<Scalar>& logits,
                                     std::span<const int> labels);

/// Row-wise softmax of an (N,K) tensor; not recorded.
template <typename Scalar>
RowMatrixX<Scalar> softmax(const Tensor<Scalar>& logits);

/// Columns [begin, begin + count) of the last axis.
template <typename Scalar>
Tensor<Scalar> slice_last(Graph<Scalar>& graph, const Tensor<Scalar>& input, Index begin, Index count);

// Recurrent layers. Gate blocks are stacked in the order
// [input i, forget f, cell g, output o]:
//   i, f, o = sigmoid(.), g = tanh(.)
//   c' = f * c + i * g,  h' = o * tanh(c')

template <typename Scalar>
struct LstmParams {
  Tensor<Scalar> input_weights;      // (4U, D)
  Tensor<Scalar> recurrent_weights;  // (4U, U)
  Tensor<Scalar> bias;               // (4U)

  Index units() const { return recurrent_weights.dim(1); }
  Index input_dim() const { return input_weights.dim(1); }
  static LstmParams zeros(Index input_dim, Index units);
};

template <typename Scalar>
struct LstmState {
  Tensor<Scalar> h;
  Tensor<Scalar> c;
};

/// One cell update. `x` is (N,D) or (D); `state` tensors are (N,U) or (U).
template <typename Scalar>
LstmState<Scalar> lstm_step(Graph<Scalar>& graph, const Tensor<Scalar>& x, const LstmState<Scalar>& state,
                            const LstmParams<Scalar>& params);

/// Bidirectional layer from a zero initial state. `sequence` is (N,T,D) or
/// (T,D); the result is (N,T,2U) (resp. (T,2U)) with the forward hidden
/// state in [0,U) and the backward one in [U,2U) of every step.
template <typename Scalar>
Tensor<Scalar> bilstm_layer(Graph<Scalar>& graph, const Tensor<Scalar>& sequence, const LstmParams<Scalar>& forward,
                            const LstmParams<Scalar>& backward);

/// (N,C,F,L) feature map to an (N,L,C*F) sequence: step l collects every
/// channel/frequency value of time column l, channel-major.
template <typename Scalar>
Tensor<Scalar> feature_map_to_sequence(Graph<Scalar>& graph, const Tensor<Scalar>& input);

/// (N,T,2U) bidirectional output to (N,2U): the forward half at the last
/// step joined with the backward half at the first step.
template <typename Scalar>
Tensor<Scalar> sequence_endpoints(Graph<Scalar>& graph, const Tensor<Scalar>& sequence);

}  // namespace disfluent
