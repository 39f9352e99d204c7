#pragma once

#include <algorithm>
#include <cstring>
#include <vector>

#include "swinfree/tensor.hpp"

namespace swinfree {

/// Additive value for disallowed attention pairs.
inline constexpr double kMaskNeg = -1e4;

/// Batch of token grids, values laid out [B, H, W, C].
template <class T>
struct FeatureGrid {
  Tensor<T> values;

  FeatureGrid() = default;
  explicit FeatureGrid(Tensor<T> v) : values(std::move(v)) {
    if (values.rank() != 4) {
      throw DimensionError("feature grid must be [B,H,W,C], got " +
                           shape_string(values.shape()));
    }
  }
  FeatureGrid(Index b, Index h, Index w, Index c) : values(Shape{b, h, w, c}) {}

  Index batch() const { return values.dim(0); }
  Index height() const { return values.dim(1); }
  Index width() const { return values.dim(2); }
  Index channels() const { return values.dim(3); }
  Index tokens() const { return height() * width(); }

  T& operator()(Index b, Index y, Index x, Index c) { return values(b, y, x, c); }
  const T& operator()(Index b, Index y, Index x, Index c) const { return values(b, y, x, c); }

  /// [B*H*W, C] view.
  auto token_rows() { return values.rows(); }
  auto token_rows() const { return values.rows(); }
};

/// Windows flattened for attention: windows is [B*N, M*M, C], window index
/// b*N + wy*grid_w + wx, tokens row-major inside each window.
template <class T>
struct WindowSet {
  Tensor<T> windows;
  Index window = 0;
  Index grid_h = 0;
  Index grid_w = 0;

  Index count() const { return grid_h * grid_w; }
  Index batch() const { return count() == 0 ? 0 : windows.dim(0) / count(); }
  Index tokens() const { return window * window; }
  Index channels() const { return windows.dim(2); }

  Eigen::Map<RowMatrix<T>> window_rows(Index w) {
    return {windows.data() + w * tokens() * channels(), tokens(), channels()};
  }
  Eigen::Map<const RowMatrix<T>> window_rows(Index w) const {
    return {windows.data() + w * tokens() * channels(), tokens(), channels()};
  }

  struct Origin {
    Index b, y, x;
  };
  /// Grid coordinate of token i of window w.
  Origin origin(Index w, Index i) const {
    const Index b = w / count();
    const Index n = w % count();
    return {b, (n / grid_w) * window + i / window, (n % grid_w) * window + i % window};
  }
};

inline void check_window_divides(Index h, Index w, Index m) {
  if (m < 1 || h % m != 0 || w % m != 0) {
    throw ConfigError("window size " + std::to_string(m) + " does not divide grid " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
}

template <class T>
WindowSet<T> window_partition(const FeatureGrid<T>& g, Index m) {
  const Index B = g.batch(), H = g.height(), W = g.width(), C = g.channels();
  check_window_divides(H, W, m);
  WindowSet<T> ws;
  ws.window = m;
  ws.grid_h = H / m;
  ws.grid_w = W / m;
  ws.windows = Tensor<T>(Shape{B * ws.count(), m * m, C});
  T* dst = ws.windows.data();
  for (Index b = 0; b < B; ++b)
    for (Index wy = 0; wy < ws.grid_h; ++wy)
      for (Index wx = 0; wx < ws.grid_w; ++wx)
        for (Index iy = 0; iy < m; ++iy) {
          const T* src = &g(b, wy * m + iy, wx * m, 0);
          std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(m * C));
          dst += m * C;
        }
  return ws;
}

template <class T>
FeatureGrid<T> window_reverse(const WindowSet<T>& ws, Index H, Index W) {
  const Index m = ws.window;
  if (m < 1 || ws.windows.rank() != 3 || ws.grid_h * m != H || ws.grid_w * m != W ||
      ws.windows.dim(1) != m * m || ws.windows.dim(0) % std::max<Index>(ws.count(), 1) != 0) {
    throw DimensionError("window set " + shape_string(ws.windows.shape()) + " (M=" +
                         std::to_string(m) + ") inconsistent with grid " + std::to_string(H) +
                         "x" + std::to_string(W));
  }
  const Index B = ws.batch(), C = ws.channels();
  FeatureGrid<T> g(B, H, W, C);
  const T* src = ws.windows.data();
  for (Index b = 0; b < B; ++b)
    for (Index wy = 0; wy < ws.grid_h; ++wy)
      for (Index wx = 0; wx < ws.grid_w; ++wx)
        for (Index iy = 0; iy < m; ++iy) {
          std::memcpy(&g(b, wy * m + iy, wx * m, 0), src,
                      sizeof(T) * static_cast<std::size_t>(m * C));
          src += m * C;
        }
  return g;
}

/// Torus roll: out[b, y, x] = g[b, (y + dy) mod H, (x + dx) mod W].
template <class T>
FeatureGrid<T> cyclic_shift(const FeatureGrid<T>& g, Index dy, Index dx) {
  const Index B = g.batch(), H = g.height(), W = g.width(), C = g.channels();
  FeatureGrid<T> out(B, H, W, C);
  const Index sy = ((dy % H) + H) % H;
  const Index sx = ((dx % W) + W) % W;
  const auto row_bytes = [&](Index n) { return sizeof(T) * static_cast<std::size_t>(n * C); };
  for (Index b = 0; b < B; ++b)
    for (Index y = 0; y < H; ++y) {
      const Index ys = (y + sy) % H;
      // two contiguous runs per row
      std::memcpy(&out(b, y, 0, 0), &g(b, ys, sx, 0), row_bytes(W - sx));
      if (sx) std::memcpy(&out(b, y, W - sx, 0), &g(b, ys, 0, 0), row_bytes(sx));
    }
  return out;
}

/// Region-id mask for a grid rolled by `shift` (see cyclic_shift with +shift).
template <class T>
struct ShiftMask {
  Tensor<T> mask;                // [N, M*M, M*M], 0 or kMaskNeg
  std::vector<int> region_ids;   // [H, W] over the rolled grid
  Index height = 0, width = 0, window = 0, shift = 0;

  Index count() const { return mask.dim(0); }
  int region(Index y, Index x) const { return region_ids[static_cast<std::size_t>(y * width + x)]; }
};

template <class T>
ShiftMask<T> build_shift_mask(Index H, Index W, Index m, Index shift) {
  check_window_divides(H, W, m);
  if (shift < 0 || shift >= m) {
    throw ConfigError("shift " + std::to_string(shift) + " must lie in [0, " +
                      std::to_string(m) + ")");
  }
  ShiftMask<T> sm;
  sm.height = H;
  sm.width = W;
  sm.window = m;
  sm.shift = shift;
  sm.region_ids.assign(static_cast<std::size_t>(H * W), 0);
  // slices [0, -M), [-M, -shift), [-shift, end) per axis
  auto band = [&](Index p, Index extent) -> int {
    if (shift == 0) return 0;
    if (p < extent - m) return 0;
    if (p < extent - shift) return 1;
    return 2;
  };
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x)
      sm.region_ids[static_cast<std::size_t>(y * W + x)] = band(y, H) * 3 + band(x, W);

  const Index gh = H / m, gw = W / m, t = m * m;
  sm.mask = Tensor<T>(Shape{gh * gw, t, t});
  std::vector<int> ids(static_cast<std::size_t>(t));
  for (Index wy = 0; wy < gh; ++wy)
    for (Index wx = 0; wx < gw; ++wx) {
      for (Index i = 0; i < t; ++i) ids[i] = sm.region(wy * m + i / m, wx * m + i % m);
      const Index n = wy * gw + wx;
      for (Index i = 0; i < t; ++i)
        for (Index j = 0; j < t; ++j)
          sm.mask(n, i, j) = ids[i] == ids[j] ? T(0) : static_cast<T>(kMaskNeg);
    }
  return sm;
}

/// Relative-position-bias lookup for an M x M window.
struct RelPosIndex {
  Index window = 0;
  std::vector<int> index;  // [M*M, M*M]

  Index tokens() const { return window * window; }
  Index table_size() const { return (2 * window - 1) * (2 * window - 1); }
  int operator()(Index i, Index j) const {
    return index[static_cast<std::size_t>(i * tokens() + j)];
  }
};

RelPosIndex relative_position_index(Index m);

}  // namespace swinfree
