#pragma once

#include "disfluent/checkpoint.hpp"
#include "disfluent/ops.hpp"
#include "disfluent/stutter_class.hpp"
#include "disfluent/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace disfluent {

/// Three 3x3 conv-bn layers with a residual shortcut. The stride applies to
/// the block's first convolution (and to the shortcut projection).
struct ConvBlockSpec {
  std::array<Index, 3> channels{};
  std::array<Index, 2> stride{1, 1};  // (frequency, time)
  Index kernel = 3;

  bool operator==(const ConvBlockSpec&) const = default;
};

struct ModelConfig {
  /// Frequency rows fed to the conv stack; spectrograms carry one more
  /// (the Nyquist bin), which is dropped.
  Index freq_bins = 256;
  Index stem_channels = 64;
  Index stem_kernel = 7;
  std::vector<ConvBlockSpec> blocks;
  Index lstm_layers = 2;
  Index lstm_units = 512;
  std::vector<double> dropout_rates{0.2, 0.4};
  Index classes = 2;

  /// The residual + bidirectional-LSTM network: 7x7/64 stem, six blocks
  /// (32,64,64) (64,128,128) (128,128,128) (128,64,64) (64,64,32) (32,16,16)
  /// with strides (2,2) (2,2) (1,2) (2,2) (2,2) (2,2), then 2 x 512 Bi-LSTM.
  static ModelConfig canonical();
  /// Two narrow blocks and 8 recurrent units over 16 frequency rows; for
  /// gradient checks and fast tests.
  static ModelConfig miniature();

  void validate() const;

  /// Input time columns must be a multiple of this (product of time strides).
  Index time_multiple() const;
  Index output_freq_bins() const;
  Index output_channels() const;
  Index sequence_features() const { return output_channels() * output_freq_bins(); }
  Index block_input_channels(std::size_t block) const;
  bool block_has_projection(std::size_t block) const;

  /// Convolutions inside the residual blocks (three per block).
  Index block_conv_count() const { return 3 * static_cast<Index>(blocks.size()); }
  /// Weight-bearing stem and block convolutions, shortcut projections excluded.
  Index main_path_conv_count() const { return 1 + block_conv_count(); }

  bool operator==(const ModelConfig&) const = default;
};

/// Convolution followed by batch norm; the conv carries no bias.
template <typename Scalar>
struct ConvBn {
  Tensor<Scalar> weight;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  BatchNormStats<Scalar> stats;
};

template <typename Scalar>
struct ResidualBlock {
  ConvBlockSpec spec;
  std::array<ConvBn<Scalar>, 3> layers;
  bool has_projection = false;
  ConvBn<Scalar> projection;
};

/// One binary detector (positive = this stutter class present). Training
/// and inference run in float; the double instantiation exists for
/// finite-difference checks. Checkpoints always hold float32.
template <typename Scalar>
class BasicStutterDetector {
 public:
  using Named = BasicNamedTensor<Scalar>;

  BasicStutterDetector(StutterClass class_label, ModelConfig config, std::uint64_t seed);

  StutterClass class_label() const { return class_label_; }
  const ModelConfig& config() const { return config_; }

  /// (N,1,F,T') -> (N,C_out,F_out,T'/time_multiple). When `trace` is given
  /// the stem output shape and each block output shape are appended.
  Tensor<Scalar> conv_module_forward(Graph<Scalar>& graph, const Tensor<Scalar>& input, Mode mode,
                                     std::vector<Shape>* trace = nullptr);

  /// Full pipeline on an (N,1,F+1,T) spectrogram batch; returns (N,classes)
  /// logits. `dropout_seed` fixes the train-mode dropout masks.
  Tensor<Scalar> logits(Graph<Scalar>& graph, const Tensor<Scalar>& batch, Mode mode,
                        std::uint64_t dropout_seed = 0);

  /// Eval-mode class probabilities, rows sum to one.
  RowMatrixX<Scalar> predict_proba(const Tensor<Scalar>& batch);

  /// Trainable parameters, in a fixed documented order.
  std::vector<Named> named_parameters() const;
  std::vector<Tensor<Scalar>> parameters() const;
  /// Batch-norm running statistics.
  std::vector<Named> named_buffers() const;

  std::size_t parameter_count() const;
  std::size_t recurrent_parameter_count() const;

  Checkpoint to_checkpoint() const;
  /// Copies values from `checkpoint`; every parameter and buffer must be
  /// present with a matching shape.
  void load(const Checkpoint& checkpoint);

 private:
  Tensor<Scalar> conv_bn(Graph<Scalar>& graph, const Tensor<Scalar>& x, ConvBn<Scalar>& layer,
                         const Conv2dOptions& options, Mode mode);
  Tensor<Scalar> prepare_input(const Tensor<Scalar>& batch) const;

  StutterClass class_label_;
  ModelConfig config_;
  ConvBn<Scalar> stem_;
  std::vector<ResidualBlock<Scalar>> blocks_;
  std::vector<std::array<LstmParams<Scalar>, 2>> recurrent_;
  Tensor<Scalar> head_weight_;
  Tensor<Scalar> head_bias_;
};

using StutterDetector = BasicStutterDetector<float>;

extern template class BasicStutterDetector<float>;
extern template class BasicStutterDetector<double>;

StutterDetector build_model(const ModelConfig& config, StutterClass class_label, std::uint64_t seed);

/// Stacks equally-shaped (F+1, T) spectrogram matrices into (N,1,F+1,T).
Tensor<float> stack_spectrograms(std::span<const Eigen::MatrixXf* const> spectrograms);

}  // namespace disfluent
