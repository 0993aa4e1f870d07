#include "disfluent/model.hpp"

#include "disfluent/optim.hpp"
#include "disfluent/random.hpp"

#include <random>
#include <string>

namespace disfluent {

ModelConfig ModelConfig::canonical() {
  ModelConfig c;
  c.blocks = {
      {{32, 64, 64}, {2, 2}},    {{64, 128, 128}, {2, 2}}, {{128, 128, 128}, {1, 2}},
      {{128, 64, 64}, {2, 2}},   {{64, 64, 32}, {2, 2}},   {{32, 16, 16}, {2, 2}},
  };
  return c;
}

ModelConfig ModelConfig::miniature() {
  ModelConfig c;
  c.freq_bins = 16;
  c.stem_channels = 4;
  c.stem_kernel = 3;
  c.blocks = {{{3, 4, 4}, {2, 2}}, {{4, 3, 3}, {2, 2}}};
  c.lstm_layers = 2;
  c.lstm_units = 8;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(Errc::InvalidConfig, why); };
  if (freq_bins < 1) fail("freq_bins must be positive");
  if (stem_channels < 1 || stem_kernel < 1 || stem_kernel % 2 == 0) fail("stem needs positive channels and an odd kernel");
  if (blocks.empty()) fail("at least one convolutional block is required");
  for (const auto& b : blocks) {
    for (Index ch : b.channels) {
      if (ch < 1) fail("block channel widths must be positive");
    }
    if (b.stride[0] < 1 || b.stride[1] < 1) fail("block strides must be positive");
    if (b.kernel < 1 || b.kernel % 2 == 0) fail("block kernels must be odd");
  }
  if (lstm_layers < 1 || lstm_units < 1) fail("at least one recurrent layer with positive width is required");
  if (static_cast<Index>(dropout_rates.size()) != lstm_layers) fail("one dropout rate per recurrent layer is required");
  for (double r : dropout_rates) {
    if (!(r >= 0.0 && r < 1.0)) fail("dropout rates must lie in [0, 1)");
  }
  if (classes < 2) fail("at least two output classes are required");
  Index f = freq_bins;
  for (const auto& b : blocks) {
    if (f % b.stride[0] != 0) fail("freq_bins must halve exactly through every strided block");
    f /= b.stride[0];
  }
}

Index ModelConfig::time_multiple() const {
  Index m = 1;
  for (const auto& b : blocks) m *= b.stride[1];
  return m;
}

Index ModelConfig::output_freq_bins() const {
  Index f = freq_bins;
  for (const auto& b : blocks) f /= b.stride[0];
  return f;
}

Index ModelConfig::output_channels() const { return blocks.back().channels[2]; }

Index ModelConfig::block_input_channels(std::size_t block) const {
  return block == 0 ? stem_channels : blocks[block - 1].channels[2];
}

bool ModelConfig::block_has_projection(std::size_t block) const {
  const auto& b = blocks[block];
  return block_input_channels(block) != b.channels[2] || b.stride[0] != 1 || b.stride[1] != 1;
}

namespace {

template <typename Scalar>
ConvBn<Scalar> make_conv_bn(Index in_channels, Index out_channels, Index kernel, std::mt19937_64& rng) {
  ConvBn<Scalar> layer;
  layer.weight = Tensor<Scalar>({out_channels, in_channels, kernel, kernel}, true);
  he_uniform(layer.weight, in_channels * kernel * kernel, rng);
  layer.gamma = Tensor<Scalar>::full({out_channels}, Scalar(1)).set_requires_grad(true);
  layer.beta = Tensor<Scalar>({out_channels}, true);
  layer.stats = BatchNormStats<Scalar>::create(out_channels);
  return layer;
}

template <typename Scalar>
LstmParams<Scalar> make_lstm(Index input_dim, Index units, std::mt19937_64& rng) {
  auto p = LstmParams<Scalar>::zeros(input_dim, units);
  const double bound = 1.0 / std::sqrt(static_cast<double>(units));
  uniform(p.input_weights, bound, rng);
  uniform(p.recurrent_weights, bound, rng);
  p.bias.data().segment(units, units).setOnes();  // forget gate
  p.input_weights.set_requires_grad(true);
  p.recurrent_weights.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

template <typename Scalar>
void append_conv_bn(std::vector<BasicNamedTensor<Scalar>>& out, const std::string& prefix, const ConvBn<Scalar>& layer) {
  out.push_back({prefix + ".weight", layer.weight});
  out.push_back({prefix + ".gamma", layer.gamma});
  out.push_back({prefix + ".beta", layer.beta});
}

template <typename Scalar>
void append_stats(std::vector<BasicNamedTensor<Scalar>>& out, const std::string& prefix, const ConvBn<Scalar>& layer) {
  out.push_back({prefix + ".running_mean", layer.stats.running_mean});
  out.push_back({prefix + ".running_var", layer.stats.running_var});
}

}  // namespace

template <typename Scalar>
BasicStutterDetector<Scalar>::BasicStutterDetector(StutterClass class_label, ModelConfig config, std::uint64_t seed)
    : class_label_(class_label), config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(derive_seed(seed, {0x6d6f64656cull}));

  stem_ = make_conv_bn<Scalar>(1, config_.stem_channels, config_.stem_kernel, rng);
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const auto& spec = config_.blocks[i];
    ResidualBlock<Scalar> block;
    block.spec = spec;
    Index in = config_.block_input_channels(i);
    for (std::size_t j = 0; j < 3; ++j) {
      block.layers[j] = make_conv_bn<Scalar>(in, spec.channels[j], spec.kernel, rng);
      in = spec.channels[j];
    }
    block.has_projection = config_.block_has_projection(i);
    if (block.has_projection) {
      block.projection = make_conv_bn<Scalar>(config_.block_input_channels(i), spec.channels[2], 1, rng);
    }
    blocks_.push_back(std::move(block));
  }

  Index input_dim = config_.sequence_features();
  for (Index l = 0; l < config_.lstm_layers; ++l) {
    auto fwd = make_lstm<Scalar>(input_dim, config_.lstm_units, rng);
    auto bwd = make_lstm<Scalar>(input_dim, config_.lstm_units, rng);
    recurrent_.push_back({std::move(fwd), std::move(bwd)});
    input_dim = 2 * config_.lstm_units;
  }

  head_weight_ = Tensor<Scalar>({config_.classes, 2 * config_.lstm_units}, true);
  he_uniform(head_weight_, 2 * config_.lstm_units, rng);
  head_bias_ = Tensor<Scalar>({config_.classes}, true);
}

template <typename Scalar>
Tensor<Scalar> BasicStutterDetector<Scalar>::conv_bn(Graph<Scalar>& graph, const Tensor<Scalar>& x,
                                                     ConvBn<Scalar>& layer, const Conv2dOptions& options, Mode mode) {
  const auto y = conv2d(graph, x, layer.weight, Tensor<Scalar>{}, options);
  return batch_norm(graph, y, layer.gamma, layer.beta, layer.stats, mode);
}

template <typename Scalar>
Tensor<Scalar> BasicStutterDetector<Scalar>::conv_module_forward(Graph<Scalar>& graph, const Tensor<Scalar>& input,
                                                                 Mode mode, std::vector<Shape>* trace) {
  if (input.rank() != 4 || input.dim(1) != 1 || input.dim(2) != config_.freq_bins) {
    throw Error(Errc::ShapeMismatch, "conv module expects (N,1," + std::to_string(config_.freq_bins) + ",T'), got " +
                                         shape_string(input.shape()));
  }
  if (input.dim(3) % config_.time_multiple() != 0 || input.dim(3) == 0) {
    throw Error(Errc::ShapeMismatch, "time axis " + std::to_string(input.dim(3)) + " is not a positive multiple of " +
                                         std::to_string(config_.time_multiple()));
  }

  const Index pad = config_.stem_kernel / 2;
  auto x = relu(graph, conv_bn(graph, input, stem_, {{1, 1}, {pad, pad}}, mode));
  if (trace) trace->push_back(x.shape());

  for (auto& block : blocks_) {
    const auto& spec = block.spec;
    const Index k = spec.kernel / 2;
    auto h = relu(graph, conv_bn(graph, x, block.layers[0], {spec.stride, {k, k}}, mode));
    h = relu(graph, conv_bn(graph, h, block.layers[1], {{1, 1}, {k, k}}, mode));
    h = conv_bn(graph, h, block.layers[2], {{1, 1}, {k, k}}, mode);
    const auto shortcut = block.has_projection ? conv_bn(graph, x, block.projection, {spec.stride, {0, 0}}, mode) : x;
    x = relu(graph, add(graph, h, shortcut));
    if (trace) trace->push_back(x.shape());
  }
  return x;
}

template <typename Scalar>
Tensor<Scalar> BasicStutterDetector<Scalar>::prepare_input(const Tensor<Scalar>& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != config_.freq_bins + 1) {
    throw Error(Errc::ShapeMismatch, "expected spectrogram batch (N,1," + std::to_string(config_.freq_bins + 1) +
                                         ",T), got " + shape_string(batch.shape()));
  }
  const Index n = batch.dim(0);
  const Index frames = batch.dim(3);
  if (frames < 1) throw Error(Errc::ShapeMismatch, "spectrogram batch has no frames");
  const Index multiple = config_.time_multiple();
  const Index padded = (frames + multiple - 1) / multiple * multiple;

  Tensor<Scalar> x({n, 1, config_.freq_bins, padded});
  for (Index b = 0; b < n; ++b) {
    Eigen::Map<const RowMatrixX<Scalar>> src(batch.raw() + b * (config_.freq_bins + 1) * frames,
                                            config_.freq_bins + 1, frames);
    Eigen::Map<RowMatrixX<Scalar>> dst(x.raw() + b * config_.freq_bins * padded, config_.freq_bins, padded);
    dst.leftCols(frames) = src.topRows(config_.freq_bins);
  }
  return x;
}

template <typename Scalar>
Tensor<Scalar> BasicStutterDetector<Scalar>::logits(Graph<Scalar>& graph, const Tensor<Scalar>& batch, Mode mode,
                                                    std::uint64_t dropout_seed) {
  const auto input = prepare_input(batch);
  auto seq = feature_map_to_sequence(graph, conv_module_forward(graph, input, mode));
  for (std::size_t l = 0; l < recurrent_.size(); ++l) {
    seq = bilstm_layer(graph, seq, recurrent_[l][0], recurrent_[l][1]);
    seq = dropout(graph, seq, config_.dropout_rates[l], mode, derive_seed(dropout_seed, {l}));
  }
  return linear(graph, sequence_endpoints(graph, seq), head_weight_, head_bias_);
}

template <typename Scalar>
RowMatrixX<Scalar> BasicStutterDetector<Scalar>::predict_proba(const Tensor<Scalar>& batch) {
  Graph<Scalar> graph(false);
  return softmax(logits(graph, batch, Mode::Eval));
}

template <typename Scalar>
auto BasicStutterDetector<Scalar>::named_parameters() const -> std::vector<Named> {
  std::vector<Named> out;
  append_conv_bn(out, "stem", stem_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i + 1);
    for (std::size_t j = 0; j < 3; ++j) append_conv_bn(out, prefix + ".conv" + std::to_string(j + 1), blocks_[i].layers[j]);
    if (blocks_[i].has_projection) append_conv_bn(out, prefix + ".proj", blocks_[i].projection);
  }
  for (std::size_t l = 0; l < recurrent_.size(); ++l) {
    for (std::size_t d = 0; d < 2; ++d) {
      const std::string prefix = "lstm" + std::to_string(l + 1) + (d == 0 ? ".fwd" : ".bwd");
      out.push_back({prefix + ".input_weights", recurrent_[l][d].input_weights});
      out.push_back({prefix + ".recurrent_weights", recurrent_[l][d].recurrent_weights});
      out.push_back({prefix + ".bias", recurrent_[l][d].bias});
    }
  }
  out.push_back({"head.weight", head_weight_});
  out.push_back({"head.bias", head_bias_});
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> BasicStutterDetector<Scalar>::parameters() const {
  std::vector<Tensor<Scalar>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename Scalar>
auto BasicStutterDetector<Scalar>::named_buffers() const -> std::vector<Named> {
  std::vector<Named> out;
  append_stats(out, "stem", stem_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i + 1);
    for (std::size_t j = 0; j < 3; ++j) append_stats(out, prefix + ".conv" + std::to_string(j + 1), blocks_[i].layers[j]);
    if (blocks_[i].has_projection) append_stats(out, prefix + ".proj", blocks_[i].projection);
  }
  return out;
}

template <typename Scalar>
std::size_t BasicStutterDetector<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += static_cast<std::size_t>(t.size());
  return n;
}

template <typename Scalar>
std::size_t BasicStutterDetector<Scalar>::recurrent_parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : recurrent_) {
    for (const auto& p : layer) {
      n += static_cast<std::size_t>(p.input_weights.size() + p.recurrent_weights.size() + p.bias.size());
    }
  }
  return n;
}

template <typename Scalar>
Checkpoint BasicStutterDetector<Scalar>::to_checkpoint() const {
  Checkpoint ck;
  ck.flags = kCheckpointHasRunningStats;
  auto append = [&](const Named& e) {
    ck.entries.push_back({e.name, Tensor<float>(e.tensor.shape(), e.tensor.data().template cast<float>())});
  };
  for (const auto& e : named_parameters()) append(e);
  for (const auto& e : named_buffers()) append(e);
  return ck;
}

template <typename Scalar>
void BasicStutterDetector<Scalar>::load(const Checkpoint& checkpoint) {
  auto copy_into = [&](const Named& target) {
    const auto* src = checkpoint.find(target.name);
    if (!src) throw Error(Errc::MissingCheckpoint, "checkpoint lacks entry " + target.name);
    if (src->shape() != target.tensor.shape()) {
      throw Error(Errc::ShapeMismatch, "checkpoint entry " + target.name + " has shape " + shape_string(src->shape()) +
                                           ", model expects " + shape_string(target.tensor.shape()));
    }
    auto dst = target.tensor;
    dst.data() = src->data().template cast<Scalar>();
  };
  for (const auto& e : named_parameters()) copy_into(e);
  if (checkpoint.flags & kCheckpointHasRunningStats) {
    for (const auto& e : named_buffers()) copy_into(e);
  }
}

template class BasicStutterDetector<float>;
template class BasicStutterDetector<double>;

StutterDetector build_model(const ModelConfig& config, StutterClass class_label, std::uint64_t seed) {
  return StutterDetector(class_label, config, seed);
}

Tensor<float> stack_spectrograms(std::span<const Eigen::MatrixXf* const> spectrograms) {
  if (spectrograms.empty()) throw Error(Errc::ShapeMismatch, "cannot stack an empty batch");
  const Index rows = spectrograms.front()->rows();
  const Index cols = spectrograms.front()->cols();
  const auto n = static_cast<Index>(spectrograms.size());
  Tensor<float> out({n, 1, rows, cols});
  for (Index b = 0; b < n; ++b) {
    const auto& m = *spectrograms[static_cast<std::size_t>(b)];
    if (m.rows() != rows || m.cols() != cols) {
      throw Error(Errc::ShapeMismatch, "spectrograms in a batch must share a shape");
    }
    Eigen::Map<RowMatrixX<float>>(out.raw() + b * rows * cols, rows, cols) = m;
  }
  return out;
}

}  // namespace disfluent
