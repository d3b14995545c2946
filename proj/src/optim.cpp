#include "genrec/optim.hpp"

#include <cmath>

#include "genrec/common.hpp"

namespace genrec {

template <class S>
AdamW<S>::AdamW(const ParameterSet<S>& params, const AdamWConfig& cfg) : cfg_(cfg) {
  if (!(cfg.lr >= 0) || !(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1) ||
      !(cfg.eps > 0) || !(cfg.weight_decay >= 0) || !(cfg.clip_norm >= 0))
    throw Error("invalid_config", "invalid AdamW hyper-parameters");
  for (const auto& t : params.tensors) {
    m_.push_back(Mat<S>::Zero(t.value.rows(), t.value.cols()));
    v_.push_back(Mat<S>::Zero(t.value.rows(), t.value.cols()));
  }
}

template <class S>
void AdamW<S>::step(ParameterSet<S>& params, const GradSet<S>& grads, S grad_scale, double lr) {
  if (params.size() != m_.size() || grads.grads.size() != m_.size())
    throw Error("shape_mismatch", "optimizer state does not match the parameter set");
  double sq = 0;
  for (size_t i = 0; i < grads.grads.size(); ++i) {
    const auto& g = grads.grads[i];
    if (g.rows() != params.tensors[i].value.rows() || g.cols() != params.tensors[i].value.cols())
      throw Error("shape_mismatch", "gradient shape differs for " + params.tensors[i].name);
    if (!g.allFinite()) throw Error("non_finite_gradient", "non-finite gradient in " + params.tensors[i].name);
    sq += static_cast<double>(g.template cast<double>().squaredNorm());
  }
  double scale = static_cast<double>(grad_scale);
  const double norm = std::sqrt(sq) * std::abs(scale);
  if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) scale *= cfg_.clip_norm / norm;

  if (lr < 0) lr = cfg_.lr;
  ++t_;
  const double bc1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
  const S step = static_cast<S>(lr / bc1);
  const S inv_bc2 = static_cast<S>(1 / bc2);
  const S eps = static_cast<S>(cfg_.eps);
  const S sc = static_cast<S>(scale);
  for (size_t i = 0; i < m_.size(); ++i) {
    auto& p = params.tensors[i].value;
    const auto g = (grads.grads[i] * sc).eval();
    m_[i] = b1 * m_[i] + (S(1) - b1) * g;
    v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseAbs2();
    if (p.rows() > 1 && cfg_.weight_decay > 0) p *= static_cast<S>(1 - lr * cfg_.weight_decay);
    p.array() -= step * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace genrec
