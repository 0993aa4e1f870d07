#include "disfluent/ops.hpp"

#include <cmath>

namespace disfluent {

template <typename Scalar>
BatchNormStats<Scalar> BatchNormStats<Scalar>::create(Index channels) {
  return {Tensor<Scalar>::zeros({channels}), Tensor<Scalar>::full({channels}, Scalar(1))};
}

template <typename Scalar>
Tensor<Scalar> batch_norm(Graph<Scalar>& graph, const Tensor<Scalar>& input, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, BatchNormStats<Scalar>& stats, Mode mode,
                          const BatchNormOptions& options) {
  if (input.rank() < 2) throw Error(Errc::ShapeMismatch, "batch_norm input must be (N,C,...)");
  const Index batch = input.dim(0);
  const Index channels = input.dim(1);
  const Index spatial = input.size() / std::max<Index>(1, batch * channels);
  for (const Tensor<Scalar>* t : std::initializer_list<const Tensor<Scalar>*>{&gamma, &beta, &stats.running_mean, &stats.running_var}) {
    if (t->rank() != 1 || t->dim(0) != channels) {
      throw Error(Errc::ShapeMismatch, "batch_norm parameters must have " + std::to_string(channels) + " entries");
    }
  }
  const Index count = batch * spatial;
  if (mode == Mode::Train && count < 2) {
    throw Error(Errc::BatchTooSmall, "train-mode batch_norm needs at least two values per channel, got " +
                                         std::to_string(count));
  }

  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using ConstSeg = Eigen::Map<const Array>;
  using Seg = Eigen::Map<Array>;
  const auto segment = [&](const Scalar* base, Index n, Index c) {
    return ConstSeg(base + (n * channels + c) * spatial, spatial);
  };

  Array mean(channels), inv_std(channels);
  if (mode == Mode::Train) {
    const double momentum = options.momentum;
    for (Index c = 0; c < channels; ++c) {
      // Per-segment sums are vectorised in Scalar; segments combine in double.
      double s = 0.0;
      for (Index n = 0; n < batch; ++n) s += static_cast<double>(segment(input.raw(), n, c).sum());
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (Index n = 0; n < batch; ++n) {
        ss += static_cast<double>((segment(input.raw(), n, c) - static_cast<Scalar>(mu)).square().sum());
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = static_cast<Scalar>(mu);
      inv_std[c] = static_cast<Scalar>(1.0 / std::sqrt(var + options.eps));
      auto& rm = stats.running_mean.data()[c];
      auto& rv = stats.running_var.data()[c];
      rm = static_cast<Scalar>(momentum * rm + (1.0 - momentum) * mu);
      rv = static_cast<Scalar>(momentum * rv +
                               (1.0 - momentum) * var * static_cast<double>(count) / static_cast<double>(count - 1));
    }
  } else {
    mean = stats.running_mean.data().array();
    inv_std = (stats.running_var.data().array() + static_cast<Scalar>(options.eps)).rsqrt();
  }

  auto out = Tensor<Scalar>::uninitialized(input.shape());
  for (Index n = 0; n < batch; ++n) {
    for (Index c = 0; c < channels; ++c) {
      const Scalar scale = gamma.data()[c] * inv_std[c];
      const Scalar shift = beta.data()[c] - mean[c] * scale;
      Seg(out.raw() + (n * channels + c) * spatial, spatial) = segment(input.raw(), n, c) * scale + shift;
    }
  }
  detail::require_finite(out, "batch_norm");

  if (graph.tracks({&input, &gamma, &beta})) {
    // x_hat is recomputed from the saved input rather than stored.
    graph.record(
        OpKind::BatchNorm, {&input, &gamma, &beta}, out,
        [input, gamma, beta, mean, inv_std, batch, channels, spatial, count, train = mode == Mode::Train](
            const VectorX<Scalar>& grad_out, Graph<Scalar>& gr) {
          const bool want_x = gr.wants_grad(input);
          const bool want_gamma = gr.wants_grad(gamma);
          const bool want_beta = gr.wants_grad(beta);
          Scalar* dx = want_x ? gr.grad_slot(input).data() : nullptr;
          for (Index c = 0; c < channels; ++c) {
            const Scalar mu = mean[c];
            const Scalar is = inv_std[c];
            double sum_dy = 0.0;
            double sum_dy_xhat = 0.0;
            for (Index n = 0; n < batch; ++n) {
              const Index at = (n * channels + c) * spatial;
              const ConstSeg dy(grad_out.data() + at, spatial);
              const ConstSeg x(input.raw() + at, spatial);
              sum_dy += static_cast<double>(dy.sum());
              sum_dy_xhat += static_cast<double>((dy * (x - mu)).sum()) * static_cast<double>(is);
            }
            if (want_gamma) gr.grad_slot(gamma)[c] += static_cast<Scalar>(sum_dy_xhat);
            if (want_beta) gr.grad_slot(beta)[c] += static_cast<Scalar>(sum_dy);
            if (!want_x) continue;
            const Scalar scale = gamma.data()[c] * is;
            const Scalar mean_dy = static_cast<Scalar>(sum_dy / static_cast<double>(count));
            const Scalar mean_dy_xhat = static_cast<Scalar>(sum_dy_xhat / static_cast<double>(count));
            for (Index n = 0; n < batch; ++n) {
              const Index at = (n * channels + c) * spatial;
              const ConstSeg dy(grad_out.data() + at, spatial);
              Seg dxs(dx + at, spatial);
              if (train) {
                const ConstSeg x(input.raw() + at, spatial);
                dxs += scale * (dy - mean_dy - (x - mu) * (is * mean_dy_xhat));
              } else {
                dxs += scale * dy;
              }
            }
          }
        });
  }
  return out;
}

template struct BatchNormStats<float>;
template struct BatchNormStats<double>;
template Tensor<float> batch_norm(Graph<float>&, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                  BatchNormStats<float>&, Mode, const BatchNormOptions&);
template Tensor<double> batch_norm(Graph<double>&, const Tensor<double>&, const Tensor<double>&,
                                   const Tensor<double>&, BatchNormStats<double>&, Mode, const BatchNormOptions&);

}  // namespace disfluent
