#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "idiomark/errors.hpp"
#include "idiomark/linalg.hpp"

namespace idiomark {

template <typename T>
struct LossBreakdown {
  T ce = 0;
  T kl = 0;
  T contrastive = 0;
  T adversarial_ce = 0;
  T total = 0;
};

namespace detail {
template <typename T>
inline T clamp_prob(T p) {
  return p < T(1e-12) ? T(1e-12) : p;
}
}  // namespace detail

/// KL(p || q) = sum p_k ln(p_k / q_k), entries clamped to >= 1e-12 before
/// the log.
template <typename T>
inline T kl_div(const std::vector<T>& p, const std::vector<T>& q) {
  if (p.size() != q.size())
    throw ContractError("kl_div: length mismatch");
  T acc = 0;
  for (size_t k = 0; k < p.size(); ++k) {
    const T pk = detail::clamp_prob(p[k]);
    const T qk = detail::clamp_prob(q[k]);
    acc += p[k] * std::log(pk / qk);
  }
  return acc;
}

template <typename T>
inline T cross_entropy(const std::vector<T>& p, int y) {
  if (y < 0 || y >= static_cast<int>(p.size()))
    throw ContractError("cross_entropy: label out of range");
  return -std::log(detail::clamp_prob(p[y]));
}

/// Per-example R-drop objective over two dropout-independent forwards:
/// ce = CE(p1,y) + CE(p2,y); kl = (KL(p1||p2) + KL(p2||p1)) / 2;
/// total = ce + alpha * kl.
template <typename T>
inline LossBreakdown<T> rdrop_loss(const std::vector<T>& p1,
                                   const std::vector<T>& p2, int y, T alpha) {
  if (alpha < T(0)) throw ContractError("rdrop_loss: alpha must be >= 0");
  LossBreakdown<T> out;
  out.ce = cross_entropy(p1, y) + cross_entropy(p2, y);
  out.kl = (kl_div(p1, p2) + kl_div(p2, p1)) / T(2);
  out.total = out.ce + alpha * out.kl;
  return out;
}

/// Gradients of the per-example R-drop total w.r.t. the two logit vectors
/// (probabilities are softmax(z1), softmax(z2)). For each side,
/// d total / dz = (p - onehot(y)) + alpha * p ⊙ (g - <p, g>) with
/// g_k = (ln(p_k/q_k) + 1 - q_k/p_k) / 2 against the other side's q.
template <typename T>
inline void rdrop_logit_grads(const VecX<T>& p1, const VecX<T>& p2, int y,
                              T alpha, VecX<T>* dz1, VecX<T>* dz2) {
  const auto side = [&](const VecX<T>& p, const VecX<T>& q, VecX<T>* dz) {
    *dz = p;
    (*dz)(y) -= T(1);
    if (alpha > T(0)) {
      VecX<T> g(p.size());
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        const T pk = detail::clamp_prob(p(k));
        const T qk = detail::clamp_prob(q(k));
        g(k) = (std::log(pk / qk) + T(1) - qk / pk) / T(2);
      }
      const T inner = p.dot(g);
      *dz += alpha * (p.array() * (g.array() - inner)).matrix();
    }
  };
  side(p1, p2, dz1);
  side(p2, p1, dz2);
}

/// FGM direction: delta = epsilon * g / ||g||_2 over the whole tensor, or
/// zero when the gradient is numerically zero.
template <typename T>
inline MatX<T> fgm_perturb(const MatX<T>& embedding_grad, T epsilon) {
  if (epsilon < T(0)) throw ContractError("fgm_perturb: epsilon must be >= 0");
  const T norm = embedding_grad.norm();
  if (norm < T(1e-12) || epsilon == T(0))
    return MatX<T>::Zero(embedding_grad.rows(), embedding_grad.cols());
  return (epsilon / norm) * embedding_grad;
}

namespace detail {

// Cosine-similarity matrix of the rows of a against the rows of b, with the
// row norms returned for gradient reuse.
template <typename T>
inline MatX<T> cosine_matrix(const MatX<T>& a, const MatX<T>& b,
                             VecX<T>* na_out, VecX<T>* nb_out) {
  VecX<T> na = a.rowwise().norm();
  VecX<T> nb = b.rowwise().norm();
  for (Eigen::Index i = 0; i < na.size(); ++i)
    if (na(i) < T(1e-12)) na(i) = T(1e-12);
  for (Eigen::Index i = 0; i < nb.size(); ++i)
    if (nb(i) < T(1e-12)) nb(i) = T(1e-12);
  MatX<T> sim = a * b.transpose();
  for (Eigen::Index i = 0; i < sim.rows(); ++i)
    for (Eigen::Index j = 0; j < sim.cols(); ++j)
      sim(i, j) /= na(i) * nb(j);
  if (na_out) *na_out = std::move(na);
  if (nb_out) *nb_out = std::move(nb);
  return sim;
}

}  // namespace detail

/// Symmetric InfoNCE over cosine similarities / temperature with positives
/// on the diagonal: the mean of the row-softmax and column-softmax losses.
template <typename T>
inline T contrastive_auxiliary_loss(const MatX<T>& reps1, const MatX<T>& reps2,
                                    T temperature) {
  const Eigen::Index B = reps1.rows();
  if (B < 2)
    throw ContractError("contrastive_auxiliary_loss: batch must be >= 2");
  if (reps2.rows() != B || reps2.cols() != reps1.cols())
    throw ContractError("contrastive_auxiliary_loss: shape mismatch");
  if (temperature <= T(0))
    throw ContractError("contrastive_auxiliary_loss: temperature must be > 0");
  MatX<T> sim = detail::cosine_matrix<T>(reps1, reps2, nullptr, nullptr);
  sim /= temperature;

  T l_rows = 0, l_cols = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const T mr = sim.row(i).maxCoeff();
    const T zr = (sim.row(i).array() - mr).exp().sum();
    l_rows += -(sim(i, i) - mr) + std::log(zr);
    const T mc = sim.col(i).maxCoeff();
    const T zc = (sim.col(i).array() - mc).exp().sum();
    l_cols += -(sim(i, i) - mc) + std::log(zc);
  }
  return (l_rows / T(B) + l_cols / T(B)) / T(2);
}

/// Gradient of contrastive_auxiliary_loss w.r.t. both representation
/// batches, accumulated into d1/d2 with the given weight.
template <typename T>
inline void contrastive_grads(const MatX<T>& reps1, const MatX<T>& reps2,
                              T temperature, T weight, MatX<T>* d1,
                              MatX<T>* d2) {
  const Eigen::Index B = reps1.rows();
  VecX<T> n1, n2;
  MatX<T> cos = detail::cosine_matrix(reps1, reps2, &n1, &n2);
  MatX<T> sim = cos / temperature;

  // dL/dsim = ((row softmax - I) + (col softmax - I)) / (2B).
  MatX<T> a_rows = sim;
  softmax_rows(a_rows);
  MatX<T> a_cols = sim.transpose();
  softmax_rows(a_cols);
  MatX<T> dsim = a_rows + a_cols.transpose();
  for (Eigen::Index i = 0; i < B; ++i) dsim(i, i) -= T(2);
  dsim *= weight / (T(2) * T(B) * temperature);

  // cos(i,j) = r1_i . r2_j / (|r1_i| |r2_j|);
  // d cos/d r1_i = r2_j/(|r1_i||r2_j|) - cos(i,j) r1_i/|r1_i|^2.
  for (Eigen::Index i = 0; i < B; ++i) {
    for (Eigen::Index j = 0; j < B; ++j) {
      const T w = dsim(i, j);
      if (w == T(0)) continue;
      d1->row(i) += w * (reps2.row(j) / (n1(i) * n2(j)) -
                         cos(i, j) / (n1(i) * n1(i)) * reps1.row(i));
      d2->row(j) += w * (reps1.row(i) / (n1(i) * n2(j)) -
                         cos(i, j) / (n2(j) * n2(j)) * reps2.row(j));
    }
  }
}

}  // namespace idiomark
