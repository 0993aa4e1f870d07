#include "disfluent/ops.hpp"

#include <memory>

namespace disfluent {
namespace {

template <typename Scalar>
using Mat = RowMatrixX<Scalar>;
template <typename Scalar>
using CMap = Eigen::Map<const RowMatrixX<Scalar>>;
template <typename Scalar>
using Map = Eigen::Map<RowMatrixX<Scalar>>;

template <typename Scalar>
void validate_params(const LstmParams<Scalar>& p, Index input_dim) {
  const auto& w = p.input_weights;
  const auto& r = p.recurrent_weights;
  const auto& b = p.bias;
  if (!w.defined() || !r.defined() || !b.defined() || w.rank() != 2 || r.rank() != 2 || b.rank() != 1) {
    throw Error(Errc::ShapeMismatch, "LSTM parameters must be W (4U,D), R (4U,U), b (4U)");
  }
  const Index units = r.dim(1);
  if (r.dim(0) != 4 * units || w.dim(0) != 4 * units || b.dim(0) != 4 * units) {
    throw Error(Errc::ShapeMismatch, "LSTM gate blocks disagree: W " + shape_string(w.shape()) + ", R " +
                                         shape_string(r.shape()) + ", b " + shape_string(b.shape()));
  }
  if (w.dim(1) != input_dim) {
    throw Error(Errc::ShapeMismatch, "LSTM input width " + std::to_string(input_dim) + " but W expects " +
                                         std::to_string(w.dim(1)));
  }
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// Turns pre-activations (N,4U) into gate values in place.
template <typename Scalar>
void activate_gates(Eigen::Ref<Mat<Scalar>> pre, Index units) {
  auto logistic = [](Scalar v) { return sigmoid(v); };
  pre.leftCols(2 * units) = pre.leftCols(2 * units).unaryExpr(logistic);
  pre.middleCols(2 * units, units) = pre.middleCols(2 * units, units).array().tanh();
  pre.rightCols(units) = pre.rightCols(units).unaryExpr(logistic);
}

// Gate pre-activation gradients from dL/dc (total) and dL/dh.
// Writes into `da` (N,4U) and returns dL/dc_prev via `dc_prev`.
template <typename Scalar>
void cell_backward(const Mat<Scalar>& gates, const Eigen::Ref<const Mat<Scalar>>& c_prev,
                   const Eigen::Ref<const Mat<Scalar>>& tanh_c, const Mat<Scalar>& dh, Mat<Scalar> dc,
                   Eigen::Ref<Mat<Scalar>> da, Mat<Scalar>& dc_prev, Index units) {
  const auto i = gates.leftCols(units).array();
  const auto f = gates.middleCols(units, units).array();
  const auto g = gates.middleCols(2 * units, units).array();
  const auto o = gates.rightCols(units).array();
  const auto tc = tanh_c.array();

  dc.array() += dh.array() * o * (Scalar(1) - tc.square());
  da.leftCols(units).array() = dc.array() * g * i * (Scalar(1) - i);
  da.middleCols(units, units).array() = dc.array() * c_prev.array() * f * (Scalar(1) - f);
  da.middleCols(2 * units, units).array() = dc.array() * i * (Scalar(1) - g.square());
  da.rightCols(units).array() = dh.array() * tc * o * (Scalar(1) - o);
  dc_prev = (dc.array() * f).matrix();
}

template <typename Scalar>
struct DirectionTrace {
  std::vector<Index> order;  // time index visited at each step
  Mat<Scalar> inputs;        // (T*N, D), step-major
  Mat<Scalar> gates;         // (T*N, 4U)
  Mat<Scalar> cells;         // (T*N, U)
  Mat<Scalar> tanh_cells;    // (T*N, U)
  Mat<Scalar> hidden;        // (T*N, U)
};

template <typename Scalar>
DirectionTrace<Scalar> run_direction(const Scalar* seq, Index batch, Index steps, Index dim,
                                     const LstmParams<Scalar>& p, bool reverse) {
  const Index units = p.units();
  DirectionTrace<Scalar> tr;
  tr.order.resize(static_cast<std::size_t>(steps));
  for (Index k = 0; k < steps; ++k) tr.order[static_cast<std::size_t>(k)] = reverse ? steps - 1 - k : k;

  tr.inputs.resize(steps * batch, dim);
  for (Index k = 0; k < steps; ++k) {
    const Index t = tr.order[static_cast<std::size_t>(k)];
    for (Index n = 0; n < batch; ++n) {
      tr.inputs.row(k * batch + n) = CMap<Scalar>(seq + (n * steps + t) * dim, 1, dim);
    }
  }

  const CMap<Scalar> w(p.input_weights.raw(), 4 * units, dim);
  const CMap<Scalar> r(p.recurrent_weights.raw(), 4 * units, units);
  tr.gates.noalias() = tr.inputs * w.transpose();
  tr.gates.rowwise() += p.bias.data().transpose();
  tr.cells.resize(steps * batch, units);
  tr.tanh_cells.resize(steps * batch, units);
  tr.hidden.resize(steps * batch, units);

  for (Index k = 0; k < steps; ++k) {
    auto pre = tr.gates.middleRows(k * batch, batch);
    if (k > 0) pre.noalias() += tr.hidden.middleRows((k - 1) * batch, batch) * r.transpose();
    activate_gates<Scalar>(pre, units);
    auto c = tr.cells.middleRows(k * batch, batch);
    c = (pre.leftCols(units).array() * pre.middleCols(2 * units, units).array()).matrix();
    if (k > 0) c.array() += pre.middleCols(units, units).array() * tr.cells.middleRows((k - 1) * batch, batch).array();
    tr.tanh_cells.middleRows(k * batch, batch) = c.array().tanh().matrix();
    tr.hidden.middleRows(k * batch, batch) =
        (pre.rightCols(units).array() * tr.tanh_cells.middleRows(k * batch, batch).array()).matrix();
  }
  return tr;
}

// Back-propagates one direction. `grad_out` is the layer output gradient
// (N,T,width); this direction owns columns [offset, offset + U).
template <typename Scalar>
void backprop_direction(const DirectionTrace<Scalar>& tr, const Scalar* grad_out, Index batch, Index steps,
                        Index dim, Index width, Index offset, const LstmParams<Scalar>& p, Graph<Scalar>& gr,
                        const Tensor<Scalar>& sequence) {
  const Index units = p.units();
  const CMap<Scalar> w(p.input_weights.raw(), 4 * units, dim);
  const CMap<Scalar> r(p.recurrent_weights.raw(), 4 * units, units);

  Mat<Scalar> da(steps * batch, 4 * units);
  Mat<Scalar> dh_next = Mat<Scalar>::Zero(batch, units);
  Mat<Scalar> dc_next = Mat<Scalar>::Zero(batch, units);
  const Mat<Scalar> zero_state = Mat<Scalar>::Zero(batch, units);
  Mat<Scalar> dh(batch, units);
  for (Index k = steps; k-- > 0;) {
    const Index t = tr.order[static_cast<std::size_t>(k)];
    for (Index n = 0; n < batch; ++n) {
      dh.row(n) = CMap<Scalar>(grad_out + (n * steps + t) * width + offset, 1, units);
    }
    dh += dh_next;
    const Mat<Scalar> gates = tr.gates.middleRows(k * batch, batch);
    Mat<Scalar> dc_prev;
    if (k > 0) {
      cell_backward<Scalar>(gates, tr.cells.middleRows((k - 1) * batch, batch),
                            tr.tanh_cells.middleRows(k * batch, batch), dh, dc_next,
                            da.middleRows(k * batch, batch), dc_prev, units);
    } else {
      cell_backward<Scalar>(gates, zero_state, tr.tanh_cells.middleRows(0, batch), dh, dc_next,
                            da.middleRows(0, batch), dc_prev, units);
    }
    dc_next = std::move(dc_prev);
    dh_next.noalias() = da.middleRows(k * batch, batch) * r;
  }

  if (gr.wants_grad(p.input_weights)) {
    Map<Scalar>(gr.grad_slot(p.input_weights).data(), 4 * units, dim).noalias() += da.transpose() * tr.inputs;
  }
  if (gr.wants_grad(p.recurrent_weights) && steps > 1) {
    Map<Scalar>(gr.grad_slot(p.recurrent_weights).data(), 4 * units, units).noalias() +=
        da.bottomRows((steps - 1) * batch).transpose() * tr.hidden.topRows((steps - 1) * batch);
  }
  if (gr.wants_grad(p.bias)) gr.grad_slot(p.bias) += da.colwise().sum().transpose();
  if (gr.wants_grad(sequence)) {
    const Mat<Scalar> dx = da * w;
    Scalar* slot = gr.grad_slot(sequence).data();
    for (Index k = 0; k < steps; ++k) {
      const Index t = tr.order[static_cast<std::size_t>(k)];
      for (Index n = 0; n < batch; ++n) {
        Map<Scalar>(slot + (n * steps + t) * dim, 1, dim) += dx.row(k * batch + n);
      }
    }
  }
}

}  // namespace

template <typename Scalar>
LstmParams<Scalar> LstmParams<Scalar>::zeros(Index input_dim, Index units) {
  return {Tensor<Scalar>::zeros({4 * units, input_dim}), Tensor<Scalar>::zeros({4 * units, units}),
          Tensor<Scalar>::zeros({4 * units})};
}

template <typename Scalar>
LstmState<Scalar> lstm_step(Graph<Scalar>& graph, const Tensor<Scalar>& x, const LstmState<Scalar>& state,
                            const LstmParams<Scalar>& params) {
  const bool unbatched = x.rank() == 1;
  if (!unbatched && x.rank() != 2) throw Error(Errc::ShapeMismatch, "lstm_step input must be (N,D) or (D)");
  const Index batch = unbatched ? 1 : x.dim(0);
  const Index dim = x.shape().back();
  validate_params(params, dim);
  const Index units = params.units();
  for (const auto* t : {&state.h, &state.c}) {
    if (!t->defined() || t->size() != batch * units || t->rank() != x.rank()) {
      throw Error(Errc::ShapeMismatch, "lstm_step state must match (N,U) with U=" + std::to_string(units));
    }
  }

  const CMap<Scalar> xm(x.raw(), batch, dim);
  const CMap<Scalar> hm(state.h.raw(), batch, units);
  const CMap<Scalar> cm(state.c.raw(), batch, units);
  Mat<Scalar> gates = xm * CMap<Scalar>(params.input_weights.raw(), 4 * units, dim).transpose();
  gates.noalias() += hm * CMap<Scalar>(params.recurrent_weights.raw(), 4 * units, units).transpose();
  gates.rowwise() += params.bias.data().transpose();
  activate_gates<Scalar>(gates, units);

  const Mat<Scalar> c_new =
      (gates.middleCols(units, units).array() * cm.array() +
       gates.leftCols(units).array() * gates.middleCols(2 * units, units).array())
          .matrix();
  Mat<Scalar> tanh_c = c_new.array().tanh().matrix();

  Shape combined_shape = unbatched ? Shape{2 * units} : Shape{batch, 2 * units};
  Tensor<Scalar> combined(combined_shape);
  Map<Scalar> cb(combined.raw(), batch, 2 * units);
  cb.leftCols(units) = (gates.rightCols(units).array() * tanh_c.array()).matrix();
  cb.rightCols(units) = c_new;
  detail::require_finite(combined, "lstm_step");

  const Tensor<Scalar>& w = params.input_weights;
  const Tensor<Scalar>& r = params.recurrent_weights;
  const Tensor<Scalar>& b = params.bias;
  if (graph.tracks({&x, &state.h, &state.c, &w, &r, &b})) {
    graph.record(OpKind::LstmStep, {&x, &state.h, &state.c, &w, &r, &b}, combined,
                 [x, h = state.h, c = state.c, params, gates = std::move(gates), tanh_c = std::move(tanh_c), batch,
                  dim, units](const VectorX<Scalar>& g, Graph<Scalar>& gr) {
                   const CMap<Scalar> gm(g.data(), batch, 2 * units);
                   const Mat<Scalar> dh = gm.leftCols(units);
                   const Mat<Scalar> dc = gm.rightCols(units);
                   Mat<Scalar> da(batch, 4 * units);
                   Mat<Scalar> dc_prev;
                   cell_backward<Scalar>(gates, CMap<Scalar>(c.raw(), batch, units), tanh_c, dh, dc, da, dc_prev,
                                         units);
                   if (gr.wants_grad(x)) {
                     Map<Scalar>(gr.grad_slot(x).data(), batch, dim).noalias() +=
                         da * CMap<Scalar>(params.input_weights.raw(), 4 * units, dim);
                   }
                   if (gr.wants_grad(h)) {
                     Map<Scalar>(gr.grad_slot(h).data(), batch, units).noalias() +=
                         da * CMap<Scalar>(params.recurrent_weights.raw(), 4 * units, units);
                   }
                   if (gr.wants_grad(c)) Map<Scalar>(gr.grad_slot(c).data(), batch, units) += dc_prev;
                   if (gr.wants_grad(params.input_weights)) {
                     Map<Scalar>(gr.grad_slot(params.input_weights).data(), 4 * units, dim).noalias() +=
                         da.transpose() * CMap<Scalar>(x.raw(), batch, dim);
                   }
                   if (gr.wants_grad(params.recurrent_weights)) {
                     Map<Scalar>(gr.grad_slot(params.recurrent_weights).data(), 4 * units, units).noalias() +=
                         da.transpose() * CMap<Scalar>(h.raw(), batch, units);
                   }
                   if (gr.wants_grad(params.bias)) gr.grad_slot(params.bias) += da.colwise().sum().transpose();
                 });
  }

  return {slice_last(graph, combined, 0, units), slice_last(graph, combined, units, units)};
}

template <typename Scalar>
Tensor<Scalar> bilstm_layer(Graph<Scalar>& graph, const Tensor<Scalar>& sequence, const LstmParams<Scalar>& fwd,
                            const LstmParams<Scalar>& bwd) {
  const bool unbatched = sequence.rank() == 2;
  if (!unbatched && sequence.rank() != 3) {
    throw Error(Errc::ShapeMismatch, "bilstm_layer input must be (N,T,D) or (T,D)");
  }
  const Index batch = unbatched ? 1 : sequence.dim(0);
  const Index steps = sequence.dim(sequence.rank() - 2);
  const Index dim = sequence.dim(sequence.rank() - 1);
  if (steps < 1) throw Error(Errc::EmptySequence, "bilstm_layer needs at least one time step");
  validate_params(fwd, dim);
  validate_params(bwd, dim);
  if (fwd.units() != bwd.units()) throw Error(Errc::ShapeMismatch, "bilstm directions must share a unit count");
  const Index units = fwd.units();
  const Index width = 2 * units;

  auto traces = std::make_shared<std::array<DirectionTrace<Scalar>, 2>>();
  (*traces)[0] = run_direction(sequence.raw(), batch, steps, dim, fwd, false);
  (*traces)[1] = run_direction(sequence.raw(), batch, steps, dim, bwd, true);

  Shape out_shape = unbatched ? Shape{steps, width} : Shape{batch, steps, width};
  Tensor<Scalar> out(out_shape);
  for (int d = 0; d < 2; ++d) {
    const auto& tr = (*traces)[static_cast<std::size_t>(d)];
    for (Index k = 0; k < steps; ++k) {
      const Index t = tr.order[static_cast<std::size_t>(k)];
      for (Index n = 0; n < batch; ++n) {
        Map<Scalar>(out.raw() + (n * steps + t) * width + d * units, 1, units) = tr.hidden.row(k * batch + n);
      }
    }
  }
  detail::require_finite(out, "bilstm_layer");

  if (graph.tracks({&sequence, &fwd.input_weights, &fwd.recurrent_weights, &fwd.bias, &bwd.input_weights,
                    &bwd.recurrent_weights, &bwd.bias})) {
    graph.record(OpKind::BiLstm,
                 {&sequence, &fwd.input_weights, &fwd.recurrent_weights, &fwd.bias, &bwd.input_weights,
                  &bwd.recurrent_weights, &bwd.bias},
                 out,
                 [sequence, fwd, bwd, traces, batch, steps, dim, units, width](const VectorX<Scalar>& g,
                                                                                 Graph<Scalar>& gr) {
                   backprop_direction((*traces)[0], g.data(), batch, steps, dim, width, 0, fwd, gr, sequence);
                   backprop_direction((*traces)[1], g.data(), batch, steps, dim, width, units, bwd, gr, sequence);
                 });
  }
  return out;
}

#define DISFLUENT_INSTANTIATE_LSTM(S)                                                                  \
  template struct LstmParams<S>;                                                                      \
  template LstmState<S> lstm_step(Graph<S>&, const Tensor<S>&, const LstmState<S>&, const LstmParams<S>&); \
  template Tensor<S> bilstm_layer(Graph<S>&, const Tensor<S>&, const LstmParams<S>&, const LstmParams<S>&);

DISFLUENT_INSTANTIATE_LSTM(float)
DISFLUENT_INSTANTIATE_LSTM(double)

#undef DISFLUENT_INSTANTIATE_LSTM

}  // namespace disfluent
