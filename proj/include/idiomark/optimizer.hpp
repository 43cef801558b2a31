#pragma once

#include <cmath>
#include <cstdint>

#include "idiomark/encoder.hpp"
#include "idiomark/errors.hpp"

namespace idiomark {

/// Adam with decoupled weight decay. Decay applies only to tensors flagged
/// decay-eligible (weight matrices and embeddings; never biases or norm
/// parameters).
template <typename T>
class AdamW {
 public:
  explicit AdamW(const EncoderConfig& cfg, T beta1 = T(0.9),
                 T beta2 = T(0.999), T eps = T(1e-8),
                 T weight_decay = T(0.01))
      : m_(cfg),
        v_(cfg),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        weight_decay_(weight_decay) {
    m_.set_zero();
    v_.set_zero();
  }

  void step(ModelTensors<T>* params, const ModelTensors<T>& grads, T lr) {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, T(t_));
    const T bc2 = T(1) - std::pow(beta2_, T(t_));
    auto pr = tensor_refs(*params);
    const auto gr = tensor_refs(grads);
    auto mr = tensor_refs(m_);
    auto vr = tensor_refs(v_);
    if (pr.size() != gr.size())
      throw ContractError("AdamW: parameter/gradient structure mismatch");
    for (size_t i = 0; i < pr.size(); ++i) {
      T* p = pr[i].data;
      const T* g = gr[i].data;
      T* m = mr[i].data;
      T* v = vr[i].data;
      const Eigen::Index n = pr[i].size();
      if (gr[i].size() != n)
        throw ContractError("AdamW: tensor shape mismatch at " + pr[i].name);
      const bool decay = pr[i].decay;
      for (Eigen::Index j = 0; j < n; ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        T upd = mhat / (std::sqrt(vhat) + eps_);
        if (decay) upd += weight_decay_ * p[j];
        p[j] -= lr * upd;
      }
    }
  }

  int64_t update_count() const { return t_; }

 private:
  ModelTensors<T> m_, v_;
  T beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
};

}  // namespace idiomark
