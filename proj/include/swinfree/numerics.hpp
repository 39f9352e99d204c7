#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "swinfree/tensor.hpp"

namespace swinfree {

/// Batched contraction [.., m, k] x [.., k, n] -> [.., m, n]. Leading extents
/// are aligned from the right and must agree or be 1 (numpy broadcasting).
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto fail = [&] {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  };
  if (a.rank() < 2 || b.rank() < 2 || a.dim(-1) != b.dim(-2)) fail();

  const Index m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
  const std::size_t lead = static_cast<std::size_t>(std::max(a.rank(), b.rank()) - 2);
  Shape ea(lead, 1), eb(lead, 1), out(lead, 1);
  std::copy(a.shape().begin(), a.shape().end() - 2, ea.end() - (a.rank() - 2));
  std::copy(b.shape().begin(), b.shape().end() - 2, eb.end() - (b.rank() - 2));
  for (std::size_t i = 0; i < lead; ++i) {
    if (ea[i] != eb[i] && ea[i] != 1 && eb[i] != 1) fail();
    out[i] = std::max(ea[i], eb[i]);
  }
  const Index batches = shape_size(out);
  Shape result_shape = out;
  result_shape.push_back(m);
  result_shape.push_back(n);
  Tensor<T> result(result_shape);

  Shape idx(lead, 0);
  for (Index bi = 0; bi < batches; ++bi) {
    Index rem = bi;
    for (std::size_t i = lead; i-- > 0;) {
      idx[i] = rem % out[i];
      rem /= out[i];
    }
    Index oa = 0, ob = 0;
    for (std::size_t i = 0; i < lead; ++i) {
      oa = oa * ea[i] + (ea[i] == 1 ? 0 : idx[i]);
      ob = ob * eb[i] + (eb[i] == 1 ? 0 : idx[i]);
    }
    Eigen::Map<const RowMatrix<T>> ma(a.data() + oa * m * k, m, k);
    Eigen::Map<const RowMatrix<T>> mb(b.data() + ob * k * n, k, n);
    Eigen::Map<RowMatrix<T>> mc(result.data() + bi * m * n, m, n);
    mc.noalias() = ma * mb;
  }
  return result;
}

/// Row-wise numerically stable softmax, in place on a row-major block.
template <class Derived>
void softmax_rows_inplace(Eigen::MatrixBase<Derived>& x) {
  for (Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const auto mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
}

template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  Tensor<T> out = x;
  auto rows = out.rows();
  softmax_rows_inplace(rows);
  return out;
}

/// Per-token normalization over the last (channel) extent, population variance.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Vector<T>& gamma, const Vector<T>& beta,
                     T eps = T(1e-5)) {
  if (gamma.size() != x.dim(-1) || beta.size() != x.dim(-1)) {
    throw DimensionError("layer_norm: affine length " + std::to_string(gamma.size()) +
                         " vs channels " + std::to_string(x.dim(-1)));
  }
  Tensor<T> out(x.shape());
  auto in = x.rows();
  auto o = out.rows();
  for (Index r = 0; r < in.rows(); ++r) {
    const T mean = in.row(r).mean();
    const T var = (in.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + eps);
    o.row(r) = (((in.row(r).array() - mean) * inv) * gamma.transpose().array() +
                beta.transpose().array())
                   .matrix();
  }
  return out;
}

/// Inference-mode batch norm with fixed per-channel statistics.
template <class T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const Vector<T>& mean, const Vector<T>& var,
                           const Vector<T>& gamma, const Vector<T>& beta, T eps = T(1e-5)) {
  const Index c = x.dim(-1);
  if (mean.size() != c || var.size() != c || gamma.size() != c || beta.size() != c) {
    throw DimensionError("batch_norm_infer: statistics length does not match channels " +
                         std::to_string(c));
  }
  const Eigen::Array<T, 1, Eigen::Dynamic> scale =
      gamma.transpose().array() / (var.transpose().array() + eps).sqrt();
  const Eigen::Array<T, 1, Eigen::Dynamic> shift =
      beta.transpose().array() - mean.transpose().array() * scale;
  Tensor<T> out(x.shape());
  out.rows() = (x.rows().array().rowwise() * scale).rowwise() + shift;
  return out;
}

/// Exact GELU, x * Phi(x).
template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <class T>
T relu(T x) {
  return x > T(0) ? x : T(0);
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> out = x;
  for (auto& v : out.values()) v = gelu(v);
  return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = x;
  out.vec() = out.vec().cwiseMax(T(0));
  return out;
}

/// N(0, std^2) samples truncated to [-2 std, 2 std] by rejection.
template <class T>
Tensor<T> trunc_normal_init(Shape shape, double std, Rng& rng) {
  if (!(std > 0.0)) throw ConfigError("trunc_normal_init: std must be positive");
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) {
    double z = rng.normal();
    while (std::abs(z) > 2.0) z = rng.normal();
    v = static_cast<T>(z * std);
  }
  return t;
}

template <class Derived>
void trunc_normal_fill(Eigen::DenseBase<Derived>& m, double std, Rng& rng) {
  using T = typename Derived::Scalar;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      double z = rng.normal();
      while (std::abs(z) > 2.0) z = rng.normal();
      m(i, j) = static_cast<T>(z * std);
    }
  }
}

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                       const Tensor<double>& x, double h = 1e-5) {
  Tensor<double> grad(x.shape());
  Tensor<double> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.vec()[i];
    probe.vec()[i] = orig + h;
    const double fp = f(probe);
    probe.vec()[i] = orig - h;
    const double fm = f(probe);
    probe.vec()[i] = orig;
    grad.vec()[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace swinfree
