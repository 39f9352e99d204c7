#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "swinfree/numerics.hpp"
#include "swinfree/op_timer.hpp"
#include "swinfree/windowing.hpp"

namespace swinfree {

enum class NormKind { layer, batch };
enum class Activation { gelu, relu };
/// shifted_baseline alternates plain and shifted windows; size_varying never shifts.
enum class AttentionMode { shifted_baseline, size_varying };

template <class T>
struct NormParams {
  NormKind kind = NormKind::layer;
  Vector<T> gamma;
  Vector<T> beta;
  Vector<T> running_mean;  // batch only, not learnable
  Vector<T> running_var;   // batch only, not learnable
  T eps = T(1e-5);

  Index channels() const { return gamma.size(); }

  static NormParams make(Index c, NormKind kind) {
    NormParams p;
    p.kind = kind;
    p.gamma = Vector<T>::Ones(c);
    p.beta = Vector<T>::Zero(c);
    if (kind == NormKind::batch) {
      p.running_mean = Vector<T>::Zero(c);
      p.running_var = Vector<T>::Ones(c);
    }
    return p;
  }
};

template <class T>
Tensor<T> apply_norm(const Tensor<T>& x, const NormParams<T>& p) {
  if (p.kind == NormKind::layer) return layer_norm(x, p.gamma, p.beta, p.eps);
  return batch_norm_infer(x, p.running_mean, p.running_var, p.gamma, p.beta, p.eps);
}

template <class T>
void apply_activation_inplace(Tensor<T>& x, Activation act) {
  if (act == Activation::relu) {
    x.vec() = x.vec().cwiseMax(T(0));
  } else {
    for (auto& v : x.values()) v = gelu(v);
  }
}

template <class T>
struct AttentionParams {
  Index dim = 0;
  Index num_heads = 0;
  Index window = 0;
  RowMatrix<T> qkv_weight;   // [C, 3C], columns q | k | v, head-major inside each
  Vector<T> qkv_bias;        // [3C]
  RowMatrix<T> proj_weight;  // [C, C]
  Vector<T> proj_bias;       // [C]
  RowMatrix<T> bias_table;   // [(2M-1)^2, heads]
  RelPosIndex rel_index;

  Index head_dim() const { return dim / num_heads; }

  static AttentionParams zeros(Index dim, Index heads, Index window) {
    if (heads < 1 || dim % heads != 0) {
      throw ConfigError("channels " + std::to_string(dim) + " not divisible by heads " +
                        std::to_string(heads));
    }
    AttentionParams p;
    p.dim = dim;
    p.num_heads = heads;
    p.window = window;
    p.rel_index = relative_position_index(window);
    p.qkv_weight = RowMatrix<T>::Zero(dim, 3 * dim);
    p.qkv_bias = Vector<T>::Zero(3 * dim);
    p.proj_weight = RowMatrix<T>::Zero(dim, dim);
    p.proj_bias = Vector<T>::Zero(dim);
    p.bias_table = RowMatrix<T>::Zero(p.rel_index.table_size(), heads);
    return p;
  }

  template <class U>
  AttentionParams<U> cast() const {
    AttentionParams<U> o;
    o.dim = dim;
    o.num_heads = num_heads;
    o.window = window;
    o.qkv_weight = qkv_weight.template cast<U>();
    o.qkv_bias = qkv_bias.template cast<U>();
    o.proj_weight = proj_weight.template cast<U>();
    o.proj_bias = proj_bias.template cast<U>();
    o.bias_table = bias_table.template cast<U>();
    o.rel_index = rel_index;
    return o;
  }
};

template <class T>
AttentionParams<T> init_attention(Index dim, Index heads, Index window, Rng& rng,
                                  double std = 0.02) {
  auto p = AttentionParams<T>::zeros(dim, heads, window);
  trunc_normal_fill(p.qkv_weight, std, rng);
  trunc_normal_fill(p.proj_weight, std, rng);
  trunc_normal_fill(p.bias_table, std, rng);
  return p;
}

/// Intermediates retained by the forward pass for the backward pass and for
/// attention-weight inspection.
template <class T>
struct AttentionCache {
  RowMatrix<T> qkv;                 // [B*N*T, 3C]
  RowMatrix<T> context;             // [B*N*T, C], heads concatenated, pre-projection
  std::vector<RowMatrix<T>> probs;  // [(window * heads + head)] -> T x T
  Index heads = 0;

  const RowMatrix<T>& weights(Index window, Index head) const {
    return probs[static_cast<std::size_t>(window * heads + head)];
  }
};

namespace detail {

template <class T>
void check_attention_geometry(const WindowSet<T>& w, const AttentionParams<T>& p,
                              const ShiftMask<T>* mask) {
  if (w.windows.rank() != 3 || w.channels() != p.dim || w.tokens() != p.rel_index.tokens() ||
      w.windows.dim(1) != w.tokens() || p.bias_table.rows() != p.rel_index.table_size() ||
      p.bias_table.cols() != p.num_heads || p.qkv_weight.rows() != p.dim ||
      p.qkv_weight.cols() != 3 * p.dim) {
    throw DimensionError("attention geometry mismatch: windows " +
                         shape_string(w.windows.shape()) + " (M=" + std::to_string(w.window) +
                         ") vs params C=" + std::to_string(p.dim) +
                         " M=" + std::to_string(p.window));
  }
  if (mask) {
    const Index n = mask->count();
    if (mask->window != w.window || n == 0 || w.windows.dim(0) % n != 0 || n != w.count()) {
      throw DimensionError("shift mask with " + std::to_string(n) + " windows (M=" +
                           std::to_string(mask->window) + ") does not fit window set " +
                           shape_string(w.windows.shape()));
    }
  }
}

template <class T>
std::vector<RowMatrix<T>> head_bias(const AttentionParams<T>& p) {
  const Index t = p.rel_index.tokens();
  std::vector<RowMatrix<T>> out(static_cast<std::size_t>(p.num_heads), RowMatrix<T>(t, t));
  for (Index h = 0; h < p.num_heads; ++h)
    for (Index i = 0; i < t; ++i)
      for (Index j = 0; j < t; ++j) out[h](i, j) = p.bias_table(p.rel_index(i, j), h);
  return out;
}

}  // namespace detail

/// Per window: softmax(Q K^T / sqrt(d) + bias + mask) V, heads concatenated,
/// then the output projection. Output has the input's shape.
template <class T>
WindowSet<T> window_attention_forward(const WindowSet<T>& w, const AttentionParams<T>& p,
                                      const ShiftMask<T>* mask = nullptr,
                                      AttentionCache<T>* cache = nullptr,
                                      OpTimer* timer = nullptr) {
  detail::check_attention_geometry(w, p, mask);
  const Index C = p.dim, H = p.num_heads, d = p.head_dim(), t = w.tokens();
  const Index nw = w.windows.dim(0);
  const T scale = T(1) / std::sqrt(static_cast<T>(d));

  Eigen::Map<const RowMatrix<T>> x(w.windows.data(), nw * t, C);
  RowMatrix<T> qkv;
  {
    TimedScope s(timer, op::kQkvProj);
    qkv.noalias() = x * p.qkv_weight;
    qkv.rowwise() += p.qkv_bias.transpose();
  }
  const auto bias = detail::head_bias(p);
  RowMatrix<T> context(nw * t, C);
  if (cache) {
    cache->heads = H;
    cache->probs.assign(static_cast<std::size_t>(nw * H), RowMatrix<T>());
  }

  RowMatrix<T> scores(t, t);
  for (Index wi = 0; wi < nw; ++wi) {
    for (Index h = 0; h < H; ++h) {
      const auto q = qkv.block(wi * t, h * d, t, d);
      const auto k = qkv.block(wi * t, C + h * d, t, d);
      const auto v = qkv.block(wi * t, 2 * C + h * d, t, d);
      {
        TimedScope s(timer, op::kAttentionMatmul);
        scores.noalias() = (q * k.transpose()) * scale;
      }
      {
        TimedScope s(timer, op::kSoftmax);
        scores += bias[h];
        if (mask) {
          scores += Eigen::Map<const RowMatrix<T>>(
              mask->mask.data() + (wi % mask->count()) * t * t, t, t);
        }
        softmax_rows_inplace(scores);
      }
      {
        TimedScope s(timer, op::kAttentionMatmul);
        context.block(wi * t, h * d, t, d).noalias() = scores * v;
      }
      if (cache) cache->probs[static_cast<std::size_t>(wi * H + h)] = scores;
    }
  }

  WindowSet<T> out{Tensor<T>(w.windows.shape()), w.window, w.grid_h, w.grid_w};
  {
    TimedScope s(timer, op::kOutProj);
    Eigen::Map<RowMatrix<T>> y(out.windows.data(), nw * t, C);
    y.noalias() = context * p.proj_weight;
    y.rowwise() += p.proj_bias.transpose();
  }
  if (cache) {
    cache->qkv = std::move(qkv);
    cache->context = std::move(context);
  }
  return out;
}

/// Gradients of <upstream, forward(w)> with respect to the input and every
/// parameter. `logits` holds dL/dS for the pre-softmax scores S (after
/// scale, bias and mask), laid out [B*N, heads, T, T].
struct AttentionGrads {
  Tensor<double> input;
  RowMatrix<double> qkv_weight;
  Vector<double> qkv_bias;
  RowMatrix<double> proj_weight;
  Vector<double> proj_bias;
  RowMatrix<double> bias_table;
  Tensor<double> logits;
};

AttentionGrads window_attention_backward(const WindowSet<double>& w,
                                         const AttentionParams<double>& p,
                                         const ShiftMask<double>* mask,
                                         const WindowSet<double>& upstream);

template <class T>
struct MlpParams {
  RowMatrix<T> fc1_weight;  // [C, rC]
  Vector<T> fc1_bias;
  RowMatrix<T> fc2_weight;  // [rC, C]
  Vector<T> fc2_bias;

  static MlpParams zeros(Index c, Index hidden) {
    return {RowMatrix<T>::Zero(c, hidden), Vector<T>::Zero(hidden),
            RowMatrix<T>::Zero(hidden, c), Vector<T>::Zero(c)};
  }
};

inline constexpr Index kMlpRatio = 4;

template <class T>
MlpParams<T> init_mlp(Index c, Rng& rng, double std = 0.02) {
  auto p = MlpParams<T>::zeros(c, kMlpRatio * c);
  trunc_normal_fill(p.fc1_weight, std, rng);
  trunc_normal_fill(p.fc2_weight, std, rng);
  return p;
}

/// fc2(act(fc1(x))) applied over the last extent.
template <class T>
Tensor<T> mlp_forward(const Tensor<T>& x, const MlpParams<T>& p, Activation act,
                      OpTimer* timer = nullptr) {
  const Index c = x.dim(-1);
  if (p.fc1_weight.rows() != c || p.fc2_weight.rows() != p.fc1_weight.cols() ||
      p.fc1_bias.size() != p.fc1_weight.cols() || p.fc2_bias.size() != p.fc2_weight.cols()) {
    throw DimensionError("mlp shape mismatch: input " + shape_string(x.shape()) + ", fc1 [" +
                         std::to_string(p.fc1_weight.rows()) + "," +
                         std::to_string(p.fc1_weight.cols()) + "], fc2 [" +
                         std::to_string(p.fc2_weight.rows()) + "," +
                         std::to_string(p.fc2_weight.cols()) + "]");
  }
  const Index n = x.size() / c;
  Shape hidden_shape = x.shape();
  hidden_shape.back() = p.fc1_weight.cols();
  Tensor<T> hidden(hidden_shape);
  {
    TimedScope s(timer, op::kMlpMatmul);
    auto hm = hidden.rows();
    hm.noalias() = x.rows() * p.fc1_weight;
    hm.rowwise() += p.fc1_bias.transpose();
  }
  {
    TimedScope s(timer, op::kActivation);
    apply_activation_inplace(hidden, act);
  }
  Shape out_shape = x.shape();
  out_shape.back() = p.fc2_weight.cols();
  Tensor<T> out(out_shape);
  {
    TimedScope s(timer, op::kMlpMatmul);
    Eigen::Map<RowMatrix<T>> om(out.data(), n, p.fc2_weight.cols());
    om.noalias() = hidden.rows() * p.fc2_weight;
    om.rowwise() += p.fc2_bias.transpose();
  }
  return out;
}

template <class T>
struct BlockParams {
  NormParams<T> norm1;
  AttentionParams<T> attn;
  NormParams<T> norm2;
  MlpParams<T> mlp;
  Activation act = Activation::gelu;
  bool shift = false;
  Index window = 0;
};

/// Roll amount a block actually applies: floor(M/2) when its flag is on,
/// zero when the window already covers the whole grid.
inline Index effective_shift(Index window, bool flag, Index H, Index W) {
  if (!flag || (window == H && window == W)) return 0;
  return window / 2;
}

/// Pre-norm block: x + Attn(Norm1(x)), then + MLP(Norm2(.)). In
/// shifted_baseline mode a shifted block rolls the normalized grid by
/// floor(M/2), applies region-masked window attention and rolls back.
template <class T>
FeatureGrid<T> block_forward(const FeatureGrid<T>& g, const BlockParams<T>& bp,
                             AttentionMode mode, OpTimer* timer = nullptr) {
  if (mode == AttentionMode::size_varying && bp.shift) {
    throw ConfigError("shifted block is not allowed in size-varying mode");
  }
  const Index H = g.height(), W = g.width(), M = bp.window;
  check_window_divides(H, W, M);
  const Index s = effective_shift(M, bp.shift, H, W);

  FeatureGrid<T> h;
  {
    TimedScope sc(timer, op::kNorm);
    h = FeatureGrid<T>(apply_norm(g.values, bp.norm1));
  }
  std::optional<ShiftMask<T>> mask;
  if (s > 0) {
    {
      TimedScope sc(timer, op::kShift);
      h = cyclic_shift(h, s, s);
    }
    TimedScope sc(timer, op::kMaskBuild);
    mask = build_shift_mask<T>(H, W, M, s);
  }
  WindowSet<T> ws;
  {
    TimedScope sc(timer, op::kWindowReshape);
    ws = window_partition(h, M);
  }
  ws = window_attention_forward(ws, bp.attn, mask ? &*mask : nullptr,
                                static_cast<AttentionCache<T>*>(nullptr), timer);
  {
    TimedScope sc(timer, op::kWindowReshape);
    h = window_reverse(ws, H, W);
  }
  if (s > 0) {
    TimedScope sc(timer, op::kShift);
    h = cyclic_shift(h, -s, -s);
  }

  FeatureGrid<T> out = g;
  {
    TimedScope sc(timer, op::kResidual);
    out.values.vec() += h.values.vec();
  }
  Tensor<T> normed;
  {
    TimedScope sc(timer, op::kNorm);
    normed = apply_norm(out.values, bp.norm2);
  }
  const Tensor<T> m = mlp_forward(normed, bp.mlp, bp.act, timer);
  {
    TimedScope sc(timer, op::kResidual);
    out.values.vec() += m.vec();
  }
  return out;
}

}  // namespace swinfree
