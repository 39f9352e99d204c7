#include "swinfree/attention.hpp"

namespace swinfree {

AttentionGrads window_attention_backward(const WindowSet<double>& w,
                                         const AttentionParams<double>& p,
                                         const ShiftMask<double>* mask,
                                         const WindowSet<double>& upstream) {
  if (upstream.windows.shape() != w.windows.shape()) {
    throw DimensionError("upstream gradient " + shape_string(upstream.windows.shape()) +
                         " does not match windows " + shape_string(w.windows.shape()));
  }
  AttentionCache<double> cache;
  window_attention_forward(w, p, mask, &cache);

  const Index C = p.dim, H = p.num_heads, d = p.head_dim(), t = w.tokens();
  const Index nw = w.windows.dim(0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Eigen::Map<const RowMatrix<double>> x(w.windows.data(), nw * t, C);
  Eigen::Map<const RowMatrix<double>> dy(upstream.windows.data(), nw * t, C);

  AttentionGrads g;
  g.proj_weight.noalias() = cache.context.transpose() * dy;
  g.proj_bias = dy.colwise().sum().transpose();
  const RowMatrix<double> dctx = dy * p.proj_weight.transpose();

  RowMatrix<double> dqkv = RowMatrix<double>::Zero(nw * t, 3 * C);
  g.bias_table = RowMatrix<double>::Zero(p.bias_table.rows(), p.bias_table.cols());
  g.logits = Tensor<double>(Shape{nw, H, t, t});

  for (Index wi = 0; wi < nw; ++wi) {
    for (Index h = 0; h < H; ++h) {
      const RowMatrix<double>& a = cache.weights(wi, h);
      const auto q = cache.qkv.block(wi * t, h * d, t, d);
      const auto k = cache.qkv.block(wi * t, C + h * d, t, d);
      const auto v = cache.qkv.block(wi * t, 2 * C + h * d, t, d);
      const auto dc = dctx.block(wi * t, h * d, t, d);

      const RowMatrix<double> da = dc * v.transpose();
      dqkv.block(wi * t, 2 * C + h * d, t, d).noalias() = a.transpose() * dc;

      // softmax Jacobian: dS = A .* (dA - rowsum(dA .* A))
      const Vector<double> inner = (da.array() * a.array()).rowwise().sum();
      RowMatrix<double> ds = (a.array() * (da.colwise() - inner).array()).matrix();

      Eigen::Map<RowMatrix<double>>(g.logits.data() + (wi * H + h) * t * t, t, t) = ds;
      for (Index i = 0; i < t; ++i)
        for (Index j = 0; j < t; ++j) g.bias_table(p.rel_index(i, j), h) += ds(i, j);

      dqkv.block(wi * t, h * d, t, d).noalias() = (ds * k) * scale;
      dqkv.block(wi * t, C + h * d, t, d).noalias() = (ds.transpose() * q) * scale;
    }
  }

  g.qkv_weight.noalias() = x.transpose() * dqkv;
  g.qkv_bias = dqkv.colwise().sum().transpose();
  g.input = Tensor<double>(w.windows.shape());
  Eigen::Map<RowMatrix<double>>(g.input.data(), nw * t, C).noalias() =
      dqkv * p.qkv_weight.transpose();
  return g;
}

}  // namespace swinfree
