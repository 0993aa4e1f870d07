#include "disfluent/ops.hpp"

#include <algorithm>

namespace disfluent {
namespace {

struct ConvGeometry {
  Index batch, in_channels, height, width;
  Index out_channels, kernel_h, kernel_w;
  Index stride_h, stride_w, pad_h, pad_w;
  Index out_h, out_w;

  Index patch() const { return in_channels * kernel_h * kernel_w; }
  Index positions() const { return out_h * out_w; }
  bool pointwise() const {
    return kernel_h == 1 && kernel_w == 1 && stride_h == 1 && stride_w == 1 && pad_h == 0 && pad_w == 0;
  }
};

// Output columns [lo, hi) whose input column lies inside [0, width).
std::pair<Index, Index> valid_columns(const ConvGeometry& g, Index kj) {
  const Index offset = kj - g.pad_w;
  Index lo = 0;
  if (offset < 0) lo = (-offset + g.stride_w - 1) / g.stride_w;
  Index hi = 0;
  if (g.width - 1 - offset >= 0) hi = (g.width - 1 - offset) / g.stride_w + 1;
  hi = std::min(hi, g.out_w);
  lo = std::min(lo, hi);
  return {lo, hi};
}

template <typename Scalar>
void im2col(const ConvGeometry& g, const Scalar* in, Scalar* cols) {
  const Index positions = g.positions();
  for (Index c = 0; c < g.in_channels; ++c) {
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        Scalar* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * positions;
        const auto [lo, hi] = valid_columns(g, kj);
        const Index offset = kj - g.pad_w;
        for (Index oh = 0; oh < g.out_h; ++oh) {
          Scalar* dst = row + oh * g.out_w;
          const Index ih = oh * g.stride_h - g.pad_h + ki;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = in + (c * g.height + ih) * g.width;
          std::fill(dst, dst + lo, Scalar(0));
          if (g.stride_w == 1) {
            std::copy(src + lo + offset, src + hi + offset, dst + lo);
          } else {
            for (Index ow = lo; ow < hi; ++ow) dst[ow] = src[ow * g.stride_w + offset];
          }
          std::fill(dst + hi, dst + g.out_w, Scalar(0));
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const ConvGeometry& g, const Scalar* cols, Scalar* in) {
  const Index positions = g.positions();
  for (Index c = 0; c < g.in_channels; ++c) {
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj) {
        const Scalar* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * positions;
        const auto [lo, hi] = valid_columns(g, kj);
        const Index offset = kj - g.pad_w;
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride_h - g.pad_h + ki;
          if (ih < 0 || ih >= g.height) continue;
          const Scalar* src = row + oh * g.out_w;
          Scalar* dst = in + (c * g.height + ih) * g.width;
          if (g.stride_w == 1) {
            for (Index ow = lo; ow < hi; ++ow) dst[ow + offset] += src[ow];
          } else {
            for (Index ow = lo; ow < hi; ++ow) dst[ow * g.stride_w + offset] += src[ow];
          }
        }
      }
    }
  }
}

// Per-thread scratch for unfolded patches; conv layers run one at a time
// within a thread, and the largest unfold dominates memory otherwise.
template <typename Scalar>
Scalar* scratch(Index size) {
  thread_local VectorX<Scalar> buffer;
  if (buffer.size() < size) buffer.resize(size);
  return buffer.data();
}

template <typename Scalar>
using ConstRowMap = Eigen::Map<const RowMatrixX<Scalar>>;
template <typename Scalar>
using RowMap = Eigen::Map<RowMatrixX<Scalar>>;

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(Graph<Scalar>& graph, const Tensor<Scalar>& input_in, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const Conv2dOptions& options) {
  const bool unbatched = input_in.rank() == 3;
  if (!unbatched && input_in.rank() != 4) {
    throw Error(Errc::ShapeMismatch, "conv2d input must be (N,C,H,W) or (C,H,W), got " +
                                         shape_string(input_in.shape()));
  }
  if (weight.rank() != 4) throw Error(Errc::ShapeMismatch, "conv2d weight must be (O,C,kh,kw)");
  const Shape& s = input_in.shape();
  ConvGeometry g{};
  g.batch = unbatched ? 1 : s[0];
  g.in_channels = s[s.size() - 3];
  g.height = s[s.size() - 2];
  g.width = s[s.size() - 1];
  g.out_channels = weight.dim(0);
  g.kernel_h = weight.dim(2);
  g.kernel_w = weight.dim(3);
  g.stride_h = options.stride[0];
  g.stride_w = options.stride[1];
  g.pad_h = options.padding[0];
  g.pad_w = options.padding[1];

  if (weight.dim(1) != g.in_channels) {
    throw Error(Errc::ShapeMismatch, "conv2d weight " + shape_string(weight.shape()) + " expects " +
                                         std::to_string(weight.dim(1)) + " input channels, got " +
                                         std::to_string(g.in_channels));
  }
  if (g.stride_h < 1 || g.stride_w < 1 || g.pad_h < 0 || g.pad_w < 0) {
    throw Error(Errc::ShapeMismatch, "conv2d stride must be positive and padding non-negative");
  }
  if (g.kernel_h > g.height + 2 * g.pad_h || g.kernel_w > g.width + 2 * g.pad_w) {
    throw Error(Errc::ShapeMismatch, "conv2d kernel larger than padded input " + shape_string(s));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_channels)) {
    throw Error(Errc::ShapeMismatch, "conv2d bias must be (O)");
  }
  g.out_h = (g.height + 2 * g.pad_h - g.kernel_h) / g.stride_h + 1;
  g.out_w = (g.width + 2 * g.pad_w - g.kernel_w) / g.stride_w + 1;

  const Index in_sample = g.in_channels * g.height * g.width;
  const Index out_sample = g.out_channels * g.positions();
  const ConstRowMap<Scalar> w(weight.raw(), g.out_channels, g.patch());

  Shape out_shape = unbatched ? Shape{g.out_channels, g.out_h, g.out_w}
                              : Shape{g.batch, g.out_channels, g.out_h, g.out_w};
  auto out = Tensor<Scalar>::uninitialized(std::move(out_shape));
  for (Index n = 0; n < g.batch; ++n) {
    const Scalar* in_n = input_in.raw() + n * in_sample;
    RowMap<Scalar> y(out.raw() + n * out_sample, g.out_channels, g.positions());
    if (g.pointwise()) {
      y.noalias() = w * ConstRowMap<Scalar>(in_n, g.patch(), g.positions());
    } else {
      Scalar* cols = scratch<Scalar>(g.patch() * g.positions());
      im2col(g, in_n, cols);
      y.noalias() = w * ConstRowMap<Scalar>(cols, g.patch(), g.positions());
    }
    if (bias.defined()) y.colwise() += bias.data();
  }
  detail::require_finite(out, "conv2d");

  if (graph.tracks({&input_in, &weight, &bias})) {
    graph.record(OpKind::Conv2d, {&input_in, &weight, &bias}, out,
                 [input = input_in, weight, bias, g, in_sample, out_sample](const VectorX<Scalar>& grad_out,
                                                                            Graph<Scalar>& gr) {
                   const bool want_w = gr.wants_grad(weight);
                   const bool want_b = gr.wants_grad(bias);
                   const bool want_x = gr.wants_grad(input);
                   Scalar* grad_w = want_w ? gr.grad_slot(weight).data() : nullptr;
                   Scalar* grad_x = want_x ? gr.grad_slot(input).data() : nullptr;
                   RowMatrixX<Scalar> w_t;
                   if (want_x) w_t = ConstRowMap<Scalar>(weight.raw(), g.out_channels, g.patch()).transpose();

                   for (Index n = 0; n < g.batch; ++n) {
                     const ConstRowMap<Scalar> dy(grad_out.data() + n * out_sample, g.out_channels, g.positions());
                     const Scalar* in_n = input.raw() + n * in_sample;
                     if (want_b) gr.grad_slot(bias) += dy.rowwise().sum();
                     if (want_w) {
                       RowMap<Scalar> dw(grad_w, g.out_channels, g.patch());
                       if (g.pointwise()) {
                         dw.noalias() += dy * ConstRowMap<Scalar>(in_n, g.patch(), g.positions()).transpose();
                       } else {
                         Scalar* cols = scratch<Scalar>(g.patch() * g.positions());
                         im2col(g, in_n, cols);
                         dw.noalias() += dy * ConstRowMap<Scalar>(cols, g.patch(), g.positions()).transpose();
                       }
                     }
                     if (want_x) {
                       Scalar* dx_n = grad_x + n * in_sample;
                       if (g.pointwise()) {
                         RowMap<Scalar>(dx_n, g.patch(), g.positions()).noalias() += w_t * dy;
                       } else {
                         Scalar* cols = scratch<Scalar>(g.patch() * g.positions());
                         RowMap<Scalar>(cols, g.patch(), g.positions()).noalias() = w_t * dy;
                         col2im_add(g, cols, dx_n);
                       }
                     }
                   }
                 });
  }
  return out;
}

template Tensor<float> conv2d(Graph<float>&, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              const Conv2dOptions&);
template Tensor<double> conv2d(Graph<double>&, const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                               const Conv2dOptions&);

}  // namespace disfluent
