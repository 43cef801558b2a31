#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace idiomark {

// Row-major everywhere: token vectors are rows, and checkpoints serialize
// tensors as contiguous row-major float data.
template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using MatXi =
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
inline T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
}

// d/dx gelu(x) = Phi(x) + x * phi(x).
template <typename T>
inline T gelu_grad_scalar(T x) {
  const T phi = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  const T Phi = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
  return Phi + x * phi;
}

// In-place row-wise softmax with max subtraction; -inf entries become
// exactly zero.
template <typename T>
inline void softmax_rows(MatX<T>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

}  // namespace idiomark
