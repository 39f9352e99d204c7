#include "swinfree/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "swinfree/model.hpp"
#include "swinfree/profiler.hpp"

namespace swinfree {

namespace {

using Row = std::vector<double>;

/// Dense softmax attention among `rows` (each of length C) whose in-window
/// coordinates are `pos`; plain loops only.
std::vector<Row> dense_attention(const std::vector<Row>& rows,
                                 const std::vector<std::pair<Index, Index>>& pos,
                                 const AttentionParams<double>& p,
                                 std::vector<RowMatrix<double>>* weights) {
  const Index n = static_cast<Index>(rows.size());
  const Index C = p.dim, H = p.num_heads, d = C / H, M = p.window;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<Row> qkv(rows.size(), Row(static_cast<std::size_t>(3 * C), 0.0));
  for (Index i = 0; i < n; ++i)
    for (Index o = 0; o < 3 * C; ++o) {
      double acc = p.qkv_bias[o];
      for (Index c = 0; c < C; ++c) acc += rows[i][c] * p.qkv_weight(c, o);
      qkv[i][o] = acc;
    }

  std::vector<Row> ctx(rows.size(), Row(static_cast<std::size_t>(C), 0.0));
  if (weights) weights->assign(static_cast<std::size_t>(H), RowMatrix<double>(n, n));
  Row logits(static_cast<std::size_t>(n));
  for (Index h = 0; h < H; ++h) {
    for (Index i = 0; i < n; ++i) {
      double mx = -1e300;
      for (Index j = 0; j < n; ++j) {
        double dot = 0.0;
        for (Index k = 0; k < d; ++k) dot += qkv[i][h * d + k] * qkv[j][C + h * d + k];
        const Index dy = pos[i].first - pos[j].first + M - 1;
        const Index dx = pos[i].second - pos[j].second + M - 1;
        logits[j] = dot * scale + p.bias_table(dy * (2 * M - 1) + dx, h);
        mx = std::max(mx, logits[j]);
      }
      double z = 0.0;
      for (Index j = 0; j < n; ++j) {
        logits[j] = std::exp(logits[j] - mx);
        z += logits[j];
      }
      for (Index j = 0; j < n; ++j) {
        const double a = logits[j] / z;
        if (weights) (*weights)[h](i, j) = a;
        for (Index k = 0; k < d; ++k) ctx[i][h * d + k] += a * qkv[j][2 * C + h * d + k];
      }
    }
  }

  std::vector<Row> out(rows.size(), Row(static_cast<std::size_t>(C), 0.0));
  for (Index i = 0; i < n; ++i)
    for (Index o = 0; o < C; ++o) {
      double acc = p.proj_bias[o];
      for (Index c = 0; c < C; ++c) acc += ctx[i][c] * p.proj_weight(c, o);
      out[i][o] = acc;
    }
  return out;
}

std::span<const double> as_span(const Tensor<double>& t) { return t.values(); }

template <class M>
std::span<const double> as_span(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

RowMatrix<double> global_attention_oracle(const RowMatrix<double>& tokens,
                                          const AttentionParams<double>& p,
                                          std::vector<RowMatrix<double>>* weights) {
  const Index T = tokens.rows(), M = p.window;
  if (T != M * M || tokens.cols() != p.dim) {
    throw DimensionError("oracle expects [" + std::to_string(M * M) + "," +
                         std::to_string(p.dim) + "] tokens");
  }
  std::vector<Row> rows;
  std::vector<std::pair<Index, Index>> pos;
  for (Index i = 0; i < T; ++i) {
    Row r(static_cast<std::size_t>(p.dim));
    for (Index c = 0; c < p.dim; ++c) r[c] = tokens(i, c);
    rows.push_back(std::move(r));
    pos.emplace_back(i / M, i % M);
  }
  const auto out = dense_attention(rows, pos, p, weights);
  RowMatrix<double> res(T, p.dim);
  for (Index i = 0; i < T; ++i)
    for (Index c = 0; c < p.dim; ++c) res(i, c) = out[i][c];
  return res;
}

FeatureGrid<double> masked_group_oracle(const FeatureGrid<double>& g, Index M, Index shift,
                                        const AttentionParams<double>& p) {
  const Index B = g.batch(), H = g.height(), W = g.width(), C = g.channels();
  if (M < 1 || H % M || W % M) throw ConfigError("oracle: window must divide grid");
  if (shift < 0 || shift >= M) throw ConfigError("oracle: shift must lie in [0, M)");

  auto band = [&](Index v, Index extent) -> int {
    if (shift == 0 || v < extent - M) return 0;
    return v < extent - shift ? 1 : 2;
  };
  // rolled[y][x] holds the token originally at ((y+shift) % H, (x+shift) % W)
  auto src_y = [&](Index y) { return (y + shift) % H; };
  auto src_x = [&](Index x) { return (x + shift) % W; };

  FeatureGrid<double> out(B, H, W, C);
  for (Index b = 0; b < B; ++b)
    for (Index wy = 0; wy < H / M; ++wy)
      for (Index wx = 0; wx < W / M; ++wx) {
        std::map<int, std::vector<std::pair<Index, Index>>> groups;  // region -> local coords
        for (Index iy = 0; iy < M; ++iy)
          for (Index ix = 0; ix < M; ++ix) {
            const int region = band(wy * M + iy, H) * 3 + band(wx * M + ix, W);
            groups[region].emplace_back(iy, ix);
          }
        for (const auto& [region, members] : groups) {
          std::vector<Row> rows;
          for (const auto& [iy, ix] : members) {
            Row r(static_cast<std::size_t>(C));
            for (Index c = 0; c < C; ++c) r[c] = g(b, src_y(wy * M + iy), src_x(wx * M + ix), c);
            rows.push_back(std::move(r));
          }
          const auto res = dense_attention(rows, members, p, nullptr);
          for (std::size_t k = 0; k < members.size(); ++k) {
            const auto [iy, ix] = members[k];
            for (Index c = 0; c < C; ++c)
              out(b, src_y(wy * M + iy), src_x(wx * M + ix), c) = res[k][c];
          }
        }
      }
  return out;
}

Index ConnectivityGraph::components() const {
  const Index n = nodes();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  Index count = 0;
  std::queue<Index> q;
  for (Index s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++count;
    seen[s] = 1;
    q.push(s);
    while (!q.empty()) {
      const Index u = q.front();
      q.pop();
      const auto* row = adjacency.data() + u * n;
      for (Index v = 0; v < n; ++v) {
        if (row[v] && !seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
  }
  return count;
}

ConnectivityGraph connectivity_graph(const std::vector<BlockWindow>& blocks, Index H, Index W) {
  ConnectivityGraph g;
  g.height = H;
  g.width = W;
  const Index n = H * W;
  g.adjacency.assign(static_cast<std::size_t>(n * n), 0);
  for (Index i = 0; i < n; ++i) g.adjacency[static_cast<std::size_t>(i * n + i)] = 1;

  for (const auto& blk : blocks) {
    const Index M = blk.window;
    if (M < 1 || H % M || W % M) throw ConfigError("connectivity: window must divide grid");
    const Index s = blk.shift && !(M == H && M == W) ? M / 2 : 0;
    // key = (window id, region id) of each original token after rolling by s
    std::vector<Index> key(static_cast<std::size_t>(n));
    for (Index y = 0; y < H; ++y)
      for (Index x = 0; x < W; ++x) {
        const Index ry = ((y - s) % H + H) % H;
        const Index rx = ((x - s) % W + W) % W;
        auto band = [&](Index v, Index extent) -> Index {
          if (s == 0 || v < extent - M) return 0;
          return v < extent - s ? 1 : 2;
        };
        const Index window = (ry / M) * (W / M) + rx / M;
        key[static_cast<std::size_t>(y * W + x)] = window * 9 + band(ry, H) * 3 + band(rx, W);
      }
    for (Index a = 0; a < n; ++a)
      for (Index b = 0; b < n; ++b)
        if (key[a] == key[b]) g.adjacency[static_cast<std::size_t>(a * n + b)] = 1;
  }
  return g;
}

ConnectivityGraph stage_connectivity(const ModelConfig& cfg, int stage) {
  const auto& st = cfg.stages[stage];
  std::vector<BlockWindow> blocks;
  for (bool sh : st.shift_pattern) blocks.push_back({st.window, sh});
  const Index res = cfg.stage_resolution(stage);
  return connectivity_graph(blocks, res, res);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  return max_abs_diff(analytic, numeric) / std::max(scale, 1e-8);
}

AttentionParams<double> random_attention(Index dim, Index heads, Index window, Rng& rng,
                                         double scale) {
  auto p = AttentionParams<double>::zeros(dim, heads, window);
  auto fill = [&](auto& m) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  };
  fill(p.qkv_weight);
  fill(p.qkv_bias);
  fill(p.proj_weight);
  fill(p.proj_bias);
  fill(p.bias_table);
  return p;
}

double attention_gradient_error(const WindowSet<double>& w, const AttentionParams<double>& p,
                                const ShiftMask<double>* mask, const WindowSet<double>& upstream,
                                double h) {
  const auto grads = window_attention_backward(w, p, mask, upstream);
  auto loss = [&](const WindowSet<double>& ws, const AttentionParams<double>& pp) {
    const auto y = window_attention_forward(ws, pp, mask);
    return y.windows.vec().dot(upstream.windows.vec());
  };

  double worst = 0.0;
  {
    const auto num = finite_diff_grad(
        [&](const Tensor<double>& x) {
          WindowSet<double> ws = w;
          ws.windows = x;
          return loss(ws, p);
        },
        w.windows, h);
    worst = std::max(worst, max_rel_error(as_span(grads.input), as_span(num)));
  }
  // one finite-difference pass per parameter tensor
  auto check = [&](auto member, const auto& analytic) {
    const auto& ref = p.*member;
    Tensor<double> flat(Shape{ref.size()}, Eigen::Map<const Vector<double>>(ref.data(), ref.size()));
    const auto num = finite_diff_grad(
        [&](const Tensor<double>& x) {
          AttentionParams<double> pp = p;
          std::copy(x.data(), x.data() + x.size(), (pp.*member).data());
          return loss(w, pp);
        },
        flat, h);
    worst = std::max(worst, max_rel_error(as_span(analytic), as_span(num)));
  };
  check(&AttentionParams<double>::qkv_weight, grads.qkv_weight);
  check(&AttentionParams<double>::qkv_bias, grads.qkv_bias);
  check(&AttentionParams<double>::proj_weight, grads.proj_weight);
  check(&AttentionParams<double>::proj_bias, grads.proj_bias);
  check(&AttentionParams<double>::bias_table, grads.bias_table);
  return worst;
}

// ---------------------------------------------------------------------------
// property suite

bool SuiteReport::all_passed() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

std::vector<std::string> SuiteReport::failures() const {
  std::vector<std::string> out;
  for (const auto& r : results)
    if (!r.passed) out.push_back(r.name);
  return out;
}

std::string SuiteReport::text() const {
  std::ostringstream os;
  for (const auto& r : results) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", r.max_error);
    os << (r.passed ? "PASS " : "FAIL ") << r.name << " max_error=" << err << " seed=" << r.seed;
    if (!r.detail.empty()) os << " (" << r.detail << ")";
    os << '\n';
  }
  os << (all_passed() ? "all " : "") << results.size() - failures().size() << "/"
     << results.size() << " properties passed\n";
  return os.str();
}

std::string SuiteReport::json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    nlohmann::ordered_json e;
    e["property"] = r.name;
    e["status"] = r.passed ? "pass" : "fail";
    e["max_error"] = r.max_error;
    e["seed"] = r.seed;
    arr.push_back(std::move(e));
  }
  j["passed"] = all_passed();
  j["properties"] = std::move(arr);
  return j.dump(2) + "\n";
}

namespace {

struct Ctx {
  const SuiteOptions& opts;
  std::uint64_t seed_for(int salt, int k) const {
    return opts.seed * 1000003ULL + static_cast<std::uint64_t>(salt) * 7919ULL +
           static_cast<std::uint64_t>(k);
  }
};

/// Accumulates the worst error and first failure detail of a property.
struct Tally {
  double worst = 0.0;
  bool ok = true;
  std::string detail;
  std::uint64_t seed = 0;

  void check(double err, double tol, std::uint64_t s, const std::string& what = {}) {
    if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
    if (err > worst) {
      worst = err;
      seed = s;
    }
    if (!(err <= tol) && ok) {
      ok = false;
      seed = s;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3e > %.1e", err, tol);
      detail = (what.empty() ? std::string() : what + ": ") + buf;
    }
  }
  void require(bool cond, std::uint64_t s, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      seed = s;
      detail = what;
      worst = std::max(worst, 1.0);
    }
  }
};

FeatureGrid<double> random_grid(Rng& rng, Index b, Index h, Index w, Index c) {
  return FeatureGrid<double>(random_uniform<double>(Shape{b, h, w, c}, rng));
}

Tally prop_matmul(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(1, k);
    Rng rng(seed);
    const Index m = rng.uniform_int(1, 6), kk = rng.uniform_int(1, 7), n = rng.uniform_int(1, 5);
    const Index batch = rng.uniform_int(1, 3);
    const bool broadcast = rng.uniform() < 0.5;
    const auto a = random_uniform<double>(Shape{batch, m, kk}, rng);
    const auto b = random_uniform<double>(Shape{broadcast ? 1 : batch, kk, n}, rng);
    const auto c = matmul(a, b);
    double err = 0.0;
    for (Index bi = 0; bi < batch; ++bi)
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) {
          double acc = 0.0;
          for (Index q = 0; q < kk; ++q) acc += a(bi, i, q) * b(broadcast ? 0 : bi, q, j);
          err = std::max(err, std::abs(acc - c(bi, i, j)));
        }
    t.check(err, 1e-12, seed);
  }
  return t;
}

Tally prop_softmax_normalization(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(2, k);
    Rng rng(seed);
    const Index rows = rng.uniform_int(1, 8), cols = rng.uniform_int(1, 50);
    auto y = softmax_lastdim(random_uniform<double>(Shape{rows, cols}, rng, -20.0, 20.0));
    if (ctx.opts.inject_softmax_fault) y.vec() = -y.vec();
    const auto sums = y.rows().rowwise().sum();
    t.check((sums.array() - 1.0).abs().maxCoeff(), 1e-6, seed);
    t.require((y.vec().array() >= 0.0).all(), seed, "negative probability");
  }
  return t;
}

Tally prop_softmax_shift_invariance(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(3, k);
    Rng rng(seed);
    const auto x = random_uniform<double>(Shape{4, rng.uniform_int(1, 30)}, rng, -5.0, 5.0);
    Tensor<double> shifted = x;
    shifted.vec().array() += rng.uniform(-100.0, 100.0);
    t.check(max_abs_diff(as_span(softmax_lastdim(x)), as_span(softmax_lastdim(shifted))), 1e-6,
            seed);
  }
  return t;
}

Tally prop_layer_norm_stats(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(4, k);
    Rng rng(seed);
    const Index c = rng.uniform_int(2, 64);
    const auto x = random_uniform<double>(Shape{5, c}, rng, -10.0, 10.0);
    const auto y = layer_norm<double>(x, Vector<double>::Ones(c), Vector<double>::Zero(c));
    for (Index r = 0; r < 5; ++r) {
      const auto row = y.rows().row(r).array();
      const auto in = x.rows().row(r).array();
      // eps keeps the output variance at var / (var + eps), not exactly 1.
      const double var = (in - in.mean()).square().mean();
      const double expected = var / (var + 1e-5);
      t.check(std::abs(row.mean()), 1e-5, seed, "mean");
      t.check(std::abs((row - row.mean()).square().mean() - expected), 1e-5, seed, "variance");
    }
  }
  return t;
}

Tally prop_batch_norm_affine(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(5, k);
    Rng rng(seed);
    const Index c = rng.uniform_int(1, 16);
    auto vec = [&](double lo, double hi) {
      Vector<double> v(c);
      for (Index i = 0; i < c; ++i) v[i] = rng.uniform(lo, hi);
      return v;
    };
    const auto mean = vec(-1, 1), var = vec(0, 2), gamma = vec(-2, 2), beta = vec(-1, 1);
    const auto x = random_uniform<double>(Shape{3, c}, rng);
    const auto z = random_uniform<double>(Shape{3, c}, rng);
    const double alpha = rng.uniform(-2.0, 2.0);
    Tensor<double> mix(x.shape());
    mix.vec() = alpha * x.vec() + (1.0 - alpha) * z.vec();
    auto bn = [&](const Tensor<double>& v) { return batch_norm_infer(v, mean, var, gamma, beta); };
    Tensor<double> expect(x.shape());
    expect.vec() = alpha * bn(x).vec() + (1.0 - alpha) * bn(z).vec();
    t.check(max_abs_diff(as_span(bn(mix)), as_span(expect)), 1e-10, seed);
  }
  return t;
}

Tally prop_partition_roundtrip(const Ctx& ctx) {
  Tally t;
  const Index cap = ctx.opts.scope == SuiteScope::quick ? 28 : 56;
  for (int k = 0; k < ctx.opts.roundtrip_cases; ++k) {
    const auto seed = ctx.seed_for(6, k);
    Rng rng(seed);
    const Index m = rng.uniform_int(1, 7);
    const Index gh = rng.uniform_int(1, std::max<Index>(1, std::min<Index>(4, cap / m)));
    const Index gw = rng.uniform_int(1, std::max<Index>(1, std::min<Index>(4, cap / m)));
    const auto g = random_grid(rng, rng.uniform_int(1, 2), gh * m, gw * m, rng.uniform_int(1, 5));
    const auto ws = window_partition(g, m);
    t.require(ws.count() == gh * gw, seed, "window count");
    t.require(window_reverse(ws, g.height(), g.width()).values == g.values, seed,
              "partition/reverse not bit-exact");
  }
  if (ctx.opts.scope == SuiteScope::full) {
    Rng rng(ctx.seed_for(6, -1));
    const auto g = random_grid(rng, 1, 56, 56, 3);
    t.require(window_reverse(window_partition(g, 7), 56, 56).values == g.values, 0,
              "56x56 round trip");
  }
  return t;
}

Tally prop_shift_roundtrip(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.roundtrip_cases; ++k) {
    const auto seed = ctx.seed_for(7, k);
    Rng rng(seed);
    const Index h = rng.uniform_int(1, 12), w = rng.uniform_int(1, 12);
    const auto g = random_grid(rng, rng.uniform_int(1, 2), h, w, rng.uniform_int(1, 4));
    const Index dy = rng.uniform_int(-2 * h, 2 * h), dx = rng.uniform_int(-2 * w, 2 * w);
    const auto back = cyclic_shift(cyclic_shift(g, dy, dx), -dy, -dx);
    t.require(back.values == g.values, seed, "shift/unshift not bit-exact");
  }
  return t;
}

Tally prop_shift_mask(const Ctx& ctx) {
  Tally t;
  for (Index m = 2; m <= 8; ++m)
    for (Index s = 1; s < m; ++s) {
      const auto seed = ctx.seed_for(8, static_cast<int>(m * 16 + s));
      const auto sm = build_shift_mask<double>(2 * m, 2 * m, m, s);
      const std::set<int> ids(sm.region_ids.begin(), sm.region_ids.end());
      t.require(ids.size() >= 4 && ids.size() <= 9, seed, "region count outside [4, 9]");
      const Index T = m * m;
      for (Index n = 0; n < sm.count(); ++n)
        for (Index i = 0; i < T; ++i) {
          t.require(sm.mask(n, i, i) == 0.0, seed, "nonzero diagonal");
          for (Index j = 0; j < T; ++j) {
            t.require(sm.mask(n, i, j) == sm.mask(n, j, i), seed, "asymmetric mask");
            t.require(sm.mask(n, i, j) == 0.0 || sm.mask(n, i, j) == kMaskNeg, seed,
                      "mask value outside {0, NEG}");
          }
        }
    }
  const auto zero = build_shift_mask<double>(14, 14, 7, 0);
  t.require(zero.mask.vec().isZero(), 0, "shift 0 mask not all zero");
  return t;
}

Tally prop_relpos_translation(const Ctx&) {
  Tally t;
  for (Index m = 1; m <= 7; ++m) {
    const auto r = relative_position_index(m);
    const Index T = m * m;
    std::map<std::pair<Index, Index>, int> seen;
    for (Index i = 0; i < T; ++i)
      for (Index j = 0; j < T; ++j) {
        const auto off = std::make_pair(i / m - j / m, i % m - j % m);
        const int v = r(i, j);
        t.require(v >= 0 && v < r.table_size(), static_cast<std::uint64_t>(m), "index range");
        auto [it, fresh] = seen.emplace(off, v);
        t.require(fresh || it->second == v, static_cast<std::uint64_t>(m),
                  "index differs for equal offsets");
      }
    t.require(static_cast<Index>(seen.size()) == r.table_size(), static_cast<std::uint64_t>(m),
              "offset classes do not cover the table");
  }
  return t;
}

Tally prop_attention_rows(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(9, k);
    Rng rng(seed);
    const auto g = random_grid(rng, 1, 8, 8, 8);
    const auto p = random_attention(8, 2, 4, rng, 1.0);
    const auto mask = build_shift_mask<double>(8, 8, 4, 2);
    for (const ShiftMask<double>* mk : {static_cast<const ShiftMask<double>*>(nullptr), &mask}) {
      AttentionCache<double> cache;
      window_attention_forward(window_partition(g, 4), p, mk, &cache);
      for (const auto& a : cache.probs)
        t.check((a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-6, seed);
    }
  }
  return t;
}

Tally prop_window_permutation(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(10, k);
    Rng rng(seed);
    const auto ws = window_partition(random_grid(rng, 2, 6, 6, 4), 3);
    const auto p = random_attention(4, 2, 3, rng);
    const Index n = ws.windows.dim(0);
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (Index i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    WindowSet<double> permuted = ws;
    for (Index i = 0; i < n; ++i) permuted.window_rows(i) = ws.window_rows(perm[i]);
    const auto a = window_attention_forward(ws, p);
    const auto b = window_attention_forward(permuted, p);
    double err = 0.0;
    for (Index i = 0; i < n; ++i)
      err = std::max(err, (b.window_rows(i) - a.window_rows(perm[i])).cwiseAbs().maxCoeff());
    t.check(err, 0.0, seed);
  }
  return t;
}

Tally prop_global_oracle(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(11, k);
    Rng rng(seed);
    const auto g = random_grid(rng, 1, 7, 7, 8);
    const auto p = random_attention(8, 2, 7, rng);
    const auto fast = window_attention_forward(window_partition(g, 7), p);
    const RowMatrix<double> tokens = g.token_rows();
    const auto dense = global_attention_oracle(tokens, p);
    t.check((fast.window_rows(0) - dense).cwiseAbs().maxCoeff(), 1e-10, seed, "64-bit");
    const auto fast32 =
        window_attention_forward(window_partition(FeatureGrid<float>(g.values.cast<float>()), 7),
                                 p.cast<float>());
    t.check((fast32.window_rows(0).cast<double>() - dense).cwiseAbs().maxCoeff(), 1e-5, seed,
            "32-bit");
  }
  return t;
}

template <class T>
FeatureGrid<T> shifted_attention_fast(const FeatureGrid<T>& g, Index m, Index s,
                                      const AttentionParams<T>& p) {
  const auto mask = build_shift_mask<T>(g.height(), g.width(), m, s);
  const auto ws = window_partition(cyclic_shift(g, s, s), m);
  const auto y = window_attention_forward(ws, p, s > 0 ? &mask : nullptr);
  return cyclic_shift(window_reverse(y, g.height(), g.width()), -s, -s);
}

Tally prop_group_oracle(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(12, k);
    Rng rng(seed);
    const auto g = random_grid(rng, 1, 14, 14, 8);
    const auto p = random_attention(8, 2, 7, rng);
    const auto oracle = masked_group_oracle(g, 7, 3, p);
    t.check(max_abs_diff(as_span(shifted_attention_fast(g, 7, 3, p).values),
                         as_span(oracle.values)),
            1e-10, seed, "64-bit");
    const auto f32 = shifted_attention_fast(FeatureGrid<float>(g.values.cast<float>()), 7, 3,
                                            p.cast<float>());
    t.check(max_abs_diff(as_span(f32.values.cast<double>()), as_span(oracle.values)), 1e-5, seed,
            "32-bit");
  }
  return t;
}

Tally prop_gradient(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(13, k);
    Rng rng(seed);
    const auto ws = window_partition(random_grid(rng, 1, 2, 2, 4), 2);
    const auto p = random_attention(4, 2, 2, rng);
    WindowSet<double> up = ws;
    up.windows = random_uniform<double>(ws.windows.shape(), rng);
    t.check(attention_gradient_error(ws, p, nullptr, up), 1e-4, seed, "single window");

    const auto masked = window_partition(cyclic_shift(random_grid(rng, 1, 4, 4, 4), 1, 1), 2);
    const auto mask = build_shift_mask<double>(4, 4, 2, 1);
    WindowSet<double> up2 = masked;
    up2.windows = random_uniform<double>(masked.windows.shape(), rng);
    t.check(attention_gradient_error(masked, p, &mask, up2), 1e-4, seed, "masked");
  }
  return t;
}

Tally prop_masked_logit_grad(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < ctx.opts.seeds; ++k) {
    const auto seed = ctx.seed_for(14, k);
    Rng rng(seed);
    const auto ws = window_partition(cyclic_shift(random_grid(rng, 1, 8, 8, 4), 2, 2), 4);
    const auto p = random_attention(4, 2, 4, rng);
    const auto mask = build_shift_mask<double>(8, 8, 4, 2);
    WindowSet<double> up = ws;
    up.windows = random_uniform<double>(ws.windows.shape(), rng);
    const auto g = window_attention_backward(ws, p, &mask, up);
    double worst = 0.0;
    const Index T = 16;
    for (Index w = 0; w < 4; ++w)
      for (Index h = 0; h < 2; ++h)
        for (Index i = 0; i < T; ++i)
          for (Index j = 0; j < T; ++j)
            if (mask.mask(w, i, j) != 0.0) worst = std::max(worst, std::abs(g.logits(w, h, i, j)));
    t.check(worst, 1e-8, seed);
  }
  return t;
}

Tally prop_connectivity(const Ctx& ctx) {
  Tally t;
  t.check(std::abs(static_cast<double>(connectivity_graph({{7, false}}, 14, 14).components() - 4)),
          0.0, 1, "M=7 no shift");
  t.check(std::abs(static_cast<double>(
              connectivity_graph({{7, false}, {14, false}}, 14, 14).components() - 1)),
          0.0, 2, "7 then 14");
  t.check(std::abs(static_cast<double>(
              connectivity_graph({{7, false}, {7, true}}, 14, 14).components() - 1)),
          0.0, 3, "W-MSA + SW-MSA");

  const auto free_b = preset("swin-free-B");
  const auto trace = stage_trace(free_b);
  const int first = ctx.opts.scope == SuiteScope::quick ? 1 : 0;  // quick caps grids at 28
  for (int s = first; s < kNumStages; ++s) {
    const auto comps = stage_connectivity(free_b, s).components();
    t.check(std::abs(static_cast<double>(comps - trace[s].windows)), 0.0, 10 + s,
            "swin-free stage " + std::to_string(s + 1));
  }
  const auto ablation = preset("swin-B-shift0000");
  t.check(std::abs(static_cast<double>(stage_connectivity(ablation, 2).components() - 4)), 0.0,
          20, "no-shift stage 3");
  return t;
}

Tally prop_shift_zero_equivalence(const Ctx& ctx) {
  Tally t;
  for (int k = 0; k < std::min(ctx.opts.seeds, 5); ++k) {
    const auto seed = ctx.seed_for(16, k);
    Rng rng(seed);
    const auto g = FeatureGrid<float>(random_uniform<float>(Shape{1, 8, 8, 8}, rng));
    BlockParams<float> bp;
    bp.window = 4;
    bp.norm1 = NormParams<float>::make(8, NormKind::layer);
    bp.norm2 = NormParams<float>::make(8, NormKind::layer);
    bp.attn = init_attention<float>(8, 2, 4, rng, 0.2);
    bp.mlp = init_mlp<float>(8, rng, 0.2);
    const auto a = block_forward(g, bp, AttentionMode::shifted_baseline);
    const auto b = block_forward(g, bp, AttentionMode::size_varying);
    t.require(a.values == b.values, seed, "shift-free baseline differs from size-varying");
  }
  return t;
}

Tally prop_table2_trace(const Ctx&) {
  Tally t;
  struct Cell {
    Index res, window, windows;
  };
  const std::array<Cell, 4> swin = {{{56, 7, 64}, {28, 7, 16}, {14, 7, 4}, {7, 7, 1}}};
  const std::array<Cell, 4> free = {{{56, 7, 64}, {28, 14, 4}, {14, 14, 1}, {7, 7, 1}}};
  auto cmp = [&](const char* name, const std::array<Cell, 4>& expect) {
    const auto tr = stage_trace(preset(name));
    for (int s = 0; s < kNumStages; ++s) {
      t.require(tr[s].resolution == expect[s].res && tr[s].window == expect[s].window &&
                    tr[s].windows == expect[s].windows,
                static_cast<std::uint64_t>(s), std::string(name) + " stage " +
                                                   std::to_string(s + 1));
      const auto ws = window_partition(FeatureGrid<float>(1, tr[s].resolution, tr[s].resolution, 1),
                                       tr[s].window);
      t.require(ws.count() == expect[s].windows, static_cast<std::uint64_t>(s),
                "partition window count");
    }
  };
  cmp("swin-B", swin);
  cmp("swin-free-B", free);
  return t;
}

Tally prop_depth_reduction(const Ctx&) {
  Tally t;
  std::int64_t prev_p = 0, prev_f = 0;
  for (const char* name : {"swin-free-B-DR10", "swin-free-B-DR12", "swin-free-B-DR14",
                           "swin-free-B-DR16", "swin-free-B"}) {
    const auto cfg = preset(name);
    const auto p = count_params(cfg), f = count_flops(cfg);
    t.require(p > prev_p && f > prev_f, 0, std::string("not increasing at ") + name);
    prev_p = p;
    prev_f = f;
  }
  t.require(count_params(preset("swin-free-B-BR")) == count_params(preset("swin-free-B")), 1,
            "BR changes parameter count");
  t.require(count_flops(preset("swin-free-B-BR")) <= count_flops(preset("swin-free-B")), 2,
            "BR increases flops");
  return t;
}

Tally prop_forward_determinism(const Ctx& ctx) {
  Tally t;
  auto cfg = expand_config({{"variant", "custom"},
                            {"mode", "swin"},
                            {"img_size", 32},
                            {"patch_size", 2},
                            {"embed_dim", 8},
                            {"depths", {2, 2, 2, 2}},
                            {"heads", {2, 2, 4, 4}},
                            {"window_sizes", {4, 4, 4, 2}},
                            {"num_classes", 10},
                            {"seed", ctx.opts.seed}});
  const auto a = build_model<float>(cfg), b = build_model<float>(cfg);
  Rng rng(ctx.seed_for(17, 0));
  const auto img = random_uniform<float>(Shape{2, 3, 32, 32}, rng);
  const auto la = model_forward(a, img), lb = model_forward(b, img);
  t.require(la == lb, ctx.opts.seed, "logits differ across identical builds");
  t.require(la.vec().allFinite(), ctx.opts.seed, "non-finite logits");
  return t;
}

}  // namespace

SuiteReport run_property_suite(const SuiteOptions& opts) {
  const Ctx ctx{opts};
  using Fn = std::function<Tally(const Ctx&)>;
  std::vector<std::pair<std::string, Fn>> props = {
      {"matmul_matches_triple_loop", prop_matmul},
      {"softmax_rows_sum_to_one", prop_softmax_normalization},
      {"softmax_shift_invariance", prop_softmax_shift_invariance},
      {"layer_norm_statistics", prop_layer_norm_stats},
      {"batch_norm_affine_in_input", prop_batch_norm_affine},
      {"partition_reverse_bit_exact", prop_partition_roundtrip},
      {"shift_unshift_bit_exact", prop_shift_roundtrip},
      {"shift_mask_structure", prop_shift_mask},
      {"relative_index_translation_invariant", prop_relpos_translation},
      {"attention_rows_sum_to_one", prop_attention_rows},
      {"window_permutation_equivariance", prop_window_permutation},
      {"single_window_equals_global_oracle", prop_global_oracle},
      {"masked_shift_equals_group_oracle", prop_group_oracle},
      {"attention_backward_matches_finite_diff", prop_gradient},
      {"masked_logit_gradient_vanishes", prop_masked_logit_grad},
      {"connectivity_components", prop_connectivity},
      {"unshifted_baseline_equals_size_varying", prop_shift_zero_equivalence},
      {"depth_reduction_monotone", prop_depth_reduction},
      {"forward_deterministic", prop_forward_determinism},
  };
  if (opts.scope == SuiteScope::full) props.emplace_back("stage_geometry_trace", prop_table2_trace);

  SuiteReport report;
  for (const auto& [name, fn] : props) {
    PropertyResult r;
    r.name = name;
    try {
      const Tally t = fn(ctx);
      r.passed = t.ok;
      r.max_error = t.worst;
      r.seed = t.seed;
      r.detail = t.detail;
    } catch (const std::exception& e) {
      r.passed = false;
      r.max_error = std::numeric_limits<double>::infinity();
      r.detail = std::string("exception: ") + e.what();
    }
    report.results.push_back(std::move(r));
  }
  return report;
}

}  // namespace swinfree
