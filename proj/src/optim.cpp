#include "disfluent/optim.hpp"

#include <cmath>

namespace disfluent {
namespace {

// Portable draw in [0, 1) so initial weights do not depend on the
// standard library's distribution implementation.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

template <typename Scalar>
void rmsprop_update(Eigen::Ref<VectorX<Scalar>> param, const Eigen::Ref<const VectorX<Scalar>>& grad,
                    Eigen::Ref<VectorX<Scalar>> accumulator, const RmsPropConfig& config) {
  if (param.size() != grad.size() || param.size() != accumulator.size()) {
    throw Error(Errc::ShapeMismatch, "rmsprop: parameter, gradient and accumulator sizes differ");
  }
  const auto rho = static_cast<Scalar>(config.rho);
  const auto lr = static_cast<Scalar>(config.learning_rate);
  const auto eps = static_cast<Scalar>(config.epsilon);
  accumulator.array() = rho * accumulator.array() + (Scalar(1) - rho) * grad.array().square();
  param.array() -= lr * grad.array() / (accumulator.array().sqrt() + eps);
}

template <typename Scalar>
RmsProp<Scalar>::RmsProp(std::vector<Tensor<Scalar>> params, RmsPropConfig config)
    : params_(std::move(params)), config_(config) {
  accum_.reserve(params_.size());
  for (const auto& p : params_) accum_.push_back(VectorX<Scalar>::Zero(p.size()));
}

template <typename Scalar>
void RmsProp<Scalar>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (accum_[i].size() != p.size()) {
      throw Error(Errc::ShapeMismatch, "rmsprop state does not match parameter " + std::to_string(i));
    }
    if (!p.has_grad()) {
      accum_[i] *= static_cast<Scalar>(config_.rho);
      continue;
    }
    rmsprop_update<Scalar>(p.data(), p.grad(), accum_[i], config_);
  }
}

template <typename Scalar>
void RmsProp<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename Scalar>
void he_uniform(Tensor<Scalar>& t, Index fan_in, std::mt19937_64& rng) {
  uniform(t, std::sqrt(6.0 / static_cast<double>(std::max<Index>(1, fan_in))), rng);
}

template <typename Scalar>
void uniform(Tensor<Scalar>& t, double bound, std::mt19937_64& rng) {
  for (Index i = 0; i < t.size(); ++i) {
    t.data()[i] = static_cast<Scalar>((2.0 * unit_uniform(rng) - 1.0) * bound);
  }
}

template void rmsprop_update<float>(Eigen::Ref<VectorX<float>>, const Eigen::Ref<const VectorX<float>>&,
                                    Eigen::Ref<VectorX<float>>, const RmsPropConfig&);
template void rmsprop_update<double>(Eigen::Ref<VectorX<double>>, const Eigen::Ref<const VectorX<double>>&,
                                     Eigen::Ref<VectorX<double>>, const RmsPropConfig&);
template class RmsProp<float>;
template class RmsProp<double>;
template void he_uniform(Tensor<float>&, Index, std::mt19937_64&);
template void he_uniform(Tensor<double>&, Index, std::mt19937_64&);
template void uniform(Tensor<float>&, double, std::mt19937_64&);
template void uniform(Tensor<double>&, double, std::mt19937_64&);

}  // namespace disfluent
