#pragma once

#include "disfluent/tensor.hpp"

#include <random>
#include <vector>

namespace disfluent {

struct RmsPropConfig {
  double learning_rate = 1e-4;
  double rho = 0.9;
  double epsilon = 1e-8;
};

/// One RMSProp update on raw buffers:
///   v <- rho v + (1 - rho) g^2
///   theta <- theta - lr g / (sqrt(v) + eps)
template <typename Scalar>
void rmsprop_update(Eigen::Ref<VectorX<Scalar>> param, const Eigen::Ref<const VectorX<Scalar>>& grad,
                    Eigen::Ref<VectorX<Scalar>> accumulator, const RmsPropConfig& config);

/// Plain RMSProp (no momentum, no weight decay) over a fixed parameter list.
template <typename Scalar>
class RmsProp {
 public:
  RmsProp(std::vector<Tensor<Scalar>> params, RmsPropConfig config);

  /// Applies the current `.grad()` of every parameter. Parameters without a
  /// gradient are treated as having a zero gradient.
  void step();
  void zero_grad();

  const RmsPropConfig& config() const { return config_; }
  RmsPropConfig& config() { return config_; }
  const std::vector<Tensor<Scalar>>& params() const { return params_; }
  /// Mean-square accumulators, one per parameter, same order.
  std::vector<VectorX<Scalar>>& accumulators() { return accum_; }
  const std::vector<VectorX<Scalar>>& accumulators() const { return accum_; }

 private:
  std::vector<Tensor<Scalar>> params_;
  std::vector<VectorX<Scalar>> accum_;
  RmsPropConfig config_;
};

// Initialisers. All draw from the supplied engine so a seed fixes every value.

/// U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
template <typename Scalar>
void he_uniform(Tensor<Scalar>& t, Index fan_in, std::mt19937_64& rng);

/// U(-bound, +bound).
template <typename Scalar>
void uniform(Tensor<Scalar>& t, double bound, std::mt19937_64& rng);

}  // namespace disfluent
