#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "swinfree/attention.hpp"
#include "swinfree/config.hpp"

namespace swinfree {

template <class T>
struct PatchEmbedParams {
  Index patch = 4;
  RowMatrix<T> weight;  // [in_chans * patch * patch, embed_dim], rows ordered (c, ky, kx)
  Vector<T> bias;
  NormParams<T> norm;
};

template <class T>
struct MergeParams {
  NormParams<T> norm;      // over the 4C concatenation
  RowMatrix<T> reduction;  // [4C, 2C], no bias
};

template <class T>
struct StageParams {
  std::vector<BlockParams<T>> blocks;
  std::optional<MergeParams<T>> merge;  // present after stages 1-3
};

template <class T>
struct ModelParams {
  ModelConfig config;
  PatchEmbedParams<T> embed;
  std::array<StageParams<T>, kNumStages> stages;
  NormParams<T> final_norm;
  RowMatrix<T> head_weight;  // [8 * embed_dim, num_classes]
  Vector<T> head_bias;
};

/// How a named parameter tensor is initialized and whether it is learnable.
enum class ParamRole { linear_weight, linear_bias, norm_scale, norm_shift, bias_table, buffer };

/// Calls f(name, shape, span, role) for every stored tensor in a fixed order.
/// Works for const and non-const ModelParams.
template <class P, class F>
void visit_params(P& p, F&& f) {
  auto mat = [&](const std::string& name, auto& m, ParamRole role) {
    f(name, Shape{m.rows(), m.cols()}, std::span(m.data(), static_cast<std::size_t>(m.size())),
      role);
  };
  auto vec = [&](const std::string& name, auto& v, ParamRole role) {
    f(name, Shape{v.size()}, std::span(v.data(), static_cast<std::size_t>(v.size())), role);
  };
  auto norm = [&](const std::string& prefix, auto& n) {
    vec(prefix + ".weight", n.gamma, ParamRole::norm_scale);
    vec(prefix + ".bias", n.beta, ParamRole::norm_shift);
    if (n.kind == NormKind::batch) {
      vec(prefix + ".running_mean", n.running_mean, ParamRole::buffer);
      vec(prefix + ".running_var", n.running_var, ParamRole::buffer);
    }
  };

  mat("patch_embed.proj.weight", p.embed.weight, ParamRole::linear_weight);
  vec("patch_embed.proj.bias", p.embed.bias, ParamRole::linear_bias);
  norm("patch_embed.norm", p.embed.norm);
  for (int s = 0; s < kNumStages; ++s) {
    auto& stage = p.stages[s];
    const std::string sp = "stages." + std::to_string(s);
    for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
      auto& blk = stage.blocks[b];
      const std::string bp = sp + ".blocks." + std::to_string(b);
      norm(bp + ".norm1", blk.norm1);
      mat(bp + ".attn.qkv.weight", blk.attn.qkv_weight, ParamRole::linear_weight);
      vec(bp + ".attn.qkv.bias", blk.attn.qkv_bias, ParamRole::linear_bias);
      mat(bp + ".attn.relative_position_bias_table", blk.attn.bias_table, ParamRole::bias_table);
      mat(bp + ".attn.proj.weight", blk.attn.proj_weight, ParamRole::linear_weight);
      vec(bp + ".attn.proj.bias", blk.attn.proj_bias, ParamRole::linear_bias);
      norm(bp + ".norm2", blk.norm2);
      mat(bp + ".mlp.fc1.weight", blk.mlp.fc1_weight, ParamRole::linear_weight);
      vec(bp + ".mlp.fc1.bias", blk.mlp.fc1_bias, ParamRole::linear_bias);
      mat(bp + ".mlp.fc2.weight", blk.mlp.fc2_weight, ParamRole::linear_weight);
      vec(bp + ".mlp.fc2.bias", blk.mlp.fc2_bias, ParamRole::linear_bias);
    }
    if (stage.merge) {
      norm(sp + ".downsample.norm", stage.merge->norm);
      mat(sp + ".downsample.reduction.weight", stage.merge->reduction, ParamRole::linear_weight);
    }
  }
  norm("norm", p.final_norm);
  mat("head.weight", p.head_weight, ParamRole::linear_weight);
  vec("head.bias", p.head_bias, ParamRole::linear_bias);
}

/// Correctly shaped parameters with zero weights, unit norm gains and
/// identity running statistics.
template <class T>
ModelParams<T> allocate_model(const ModelConfig& cfg) {
  validate(cfg);
  ModelParams<T> p;
  p.config = cfg;
  const Index patch_in = cfg.in_chans * cfg.patch_size * cfg.patch_size;
  p.embed.patch = cfg.patch_size;
  p.embed.weight = RowMatrix<T>::Zero(patch_in, cfg.embed_dim);
  p.embed.bias = Vector<T>::Zero(cfg.embed_dim);
  p.embed.norm = NormParams<T>::make(cfg.embed_dim, cfg.norm);
  for (int s = 0; s < kNumStages; ++s) {
    const auto& sc = cfg.stages[s];
    const Index c = cfg.stage_channels(s);
    auto& stage = p.stages[s];
    for (Index b = 0; b < sc.depth; ++b) {
      BlockParams<T> blk;
      blk.norm1 = NormParams<T>::make(c, cfg.norm);
      blk.attn = AttentionParams<T>::zeros(c, sc.num_heads, sc.window);
      blk.norm2 = NormParams<T>::make(c, cfg.norm);
      blk.mlp = MlpParams<T>::zeros(c, kMlpRatio * c);
      blk.act = cfg.act;
      blk.shift = sc.shift_pattern[static_cast<std::size_t>(b)];
      blk.window = sc.window;
      stage.blocks.push_back(std::move(blk));
    }
    if (s + 1 < kNumStages) {
      MergeParams<T> m;
      m.norm = NormParams<T>::make(4 * c, cfg.norm);
      m.reduction = RowMatrix<T>::Zero(4 * c, 2 * c);
      stage.merge = std::move(m);
    }
  }
  const Index final_c = cfg.stage_channels(kNumStages - 1);
  p.final_norm = NormParams<T>::make(final_c, cfg.norm);
  p.head_weight = RowMatrix<T>::Zero(final_c, cfg.num_classes);
  p.head_bias = Vector<T>::Zero(cfg.num_classes);
  return p;
}

/// Truncated-normal (std 0.02) linear weights and bias tables, zero biases,
/// unit norm gains. Deterministic per seed.
template <class T>
ModelParams<T> build_model(const ModelConfig& cfg, Rng& rng) {
  auto p = allocate_model<T>(cfg);
  visit_params(p, [&](const std::string&, const Shape&, std::span<T> data, ParamRole role) {
    if (role != ParamRole::linear_weight && role != ParamRole::bias_table) return;
    for (auto& v : data) {
      double z = rng.normal();
      while (std::abs(z) > 2.0) z = rng.normal();
      v = static_cast<T>(z * 0.02);
    }
  });
  return p;
}

template <class T>
ModelParams<T> build_model(const ModelConfig& cfg) {
  Rng rng(cfg.seed);
  return build_model<T>(cfg, rng);
}

/// Learnable scalars: weights, biases, norm affines and bias tables.
template <class T>
std::int64_t count_params(const ModelParams<T>& p) {
  std::int64_t n = 0;
  visit_params(p, [&](const std::string&, const Shape&, auto data, ParamRole role) {
    if (role != ParamRole::buffer) n += static_cast<std::int64_t>(data.size());
  });
  return n;
}

/// Closed-form count from the configuration alone.
std::int64_t count_params(const ModelConfig& cfg);

/// Non-overlapping patch projection of a [B, C_in, H, W] image, then norm.
template <class T>
FeatureGrid<T> patch_embed(const Tensor<T>& img, const PatchEmbedParams<T>& p) {
  if (img.rank() != 4) {
    throw DimensionError("image must be [B,C,H,W], got " + shape_string(img.shape()));
  }
  const Index B = img.dim(0), Cin = img.dim(1), H = img.dim(2), W = img.dim(3), k = p.patch;
  if (k < 1 || H % k != 0 || W % k != 0) {
    throw ConfigError("image " + std::to_string(H) + "x" + std::to_string(W) +
                      " not divisible by patch size " + std::to_string(k));
  }
  if (Cin * k * k != p.weight.rows()) {
    throw DimensionError("image channels " + std::to_string(Cin) +
                         " do not match patch projection rows " +
                         std::to_string(p.weight.rows()));
  }
  const Index gh = H / k, gw = W / k, E = p.weight.cols();
  RowMatrix<T> patches(B * gh * gw, Cin * k * k);
  for (Index b = 0; b < B; ++b)
    for (Index py = 0; py < gh; ++py)
      for (Index px = 0; px < gw; ++px) {
        const Index r = (b * gh + py) * gw + px;
        Index col = 0;
        for (Index c = 0; c < Cin; ++c)
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) patches(r, col++) = img(b, c, py * k + ky, px * k + kx);
      }
  FeatureGrid<T> g(B, gh, gw, E);
  auto out = g.token_rows();
  out.noalias() = patches * p.weight;
  out.rowwise() += p.bias.transpose();
  g.values = apply_norm(g.values, p.norm);
  return g;
}

/// 2x2 neighbor concatenation [x(0,0), x(1,0), x(0,1), x(1,1)] -> norm -> 4C to 2C.
template <class T>
FeatureGrid<T> patch_merge(const FeatureGrid<T>& g, const MergeParams<T>& p) {
  const Index B = g.batch(), H = g.height(), W = g.width(), C = g.channels();
  if (H % 2 != 0 || W % 2 != 0) {
    throw ConfigError("patch merge needs even extents, got " + std::to_string(H) + "x" +
                      std::to_string(W));
  }
  if (p.reduction.rows() != 4 * C) {
    throw DimensionError("merge reduction expects " + std::to_string(p.reduction.rows()) +
                         " inputs, grid has 4x" + std::to_string(C));
  }
  const Index h2 = H / 2, w2 = W / 2;
  Tensor<T> cat(Shape{B, h2, w2, 4 * C});
  constexpr Index offs[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (Index b = 0; b < B; ++b)
    for (Index y = 0; y < h2; ++y)
      for (Index x = 0; x < w2; ++x)
        for (int q = 0; q < 4; ++q) {
          const T* src = &g(b, 2 * y + offs[q][0], 2 * x + offs[q][1], 0);
          std::copy(src, src + C, &cat(b, y, x, q * C));
        }
  const Tensor<T> normed = apply_norm(cat, p.norm);
  FeatureGrid<T> out(B, h2, w2, p.reduction.cols());
  out.token_rows().noalias() = normed.rows() * p.reduction;
  return out;
}

template <class T>
struct ForwardTrace {
  std::array<FeatureGrid<T>, kNumStages> stage_outputs;  // after the blocks, before merging
};

/// Embed, four stages with merges, final norm, token mean, linear head.
template <class T>
Tensor<T> model_forward(const ModelParams<T>& p, const Tensor<T>& img, OpTimer* timer = nullptr,
                        ForwardTrace<T>* trace = nullptr) {
  const auto& cfg = p.config;
  if (img.rank() != 4 || img.dim(1) != cfg.in_chans || img.dim(2) != cfg.img_size ||
      img.dim(3) != cfg.img_size) {
    throw DimensionError("input " + shape_string(img.shape()) + " does not match config [B," +
                         std::to_string(cfg.in_chans) + "," + std::to_string(cfg.img_size) +
                         "," + std::to_string(cfg.img_size) + "]");
  }
  FeatureGrid<T> g;
  {
    TimedScope s(timer, op::kEmbed);
    g = patch_embed(img, p.embed);
  }
  for (int s = 0; s < kNumStages; ++s) {
    const auto& stage = p.stages[s];
    for (const auto& blk : stage.blocks) {
      g = block_forward(g, blk, cfg.mode, timer);
    }
    if (timer) {
      const Index m = cfg.stages[s].window;
      timer->set("stage" + std::to_string(s + 1) + ".windows_per_block",
                 (g.height() / m) * (g.width() / m));
      timer->count("stage" + std::to_string(s + 1) + ".shifted_blocks",
                   std::count_if(stage.blocks.begin(), stage.blocks.end(), [&](const auto& b) {
                     return cfg.mode == AttentionMode::shifted_baseline &&
                            effective_shift(b.window, b.shift, g.height(), g.width()) > 0;
                   }));
    }
    if (trace) trace->stage_outputs[s] = g;
    if (stage.merge) {
      TimedScope sc(timer, op::kMerge);
      g = patch_merge(g, *stage.merge);
    }
  }
  const Index B = g.batch(), tokens = g.tokens(), C = g.channels();
  Tensor<T> normed;
  {
    TimedScope s(timer, op::kNorm);
    normed = apply_norm(g.values, p.final_norm);
  }
  TimedScope s(timer, op::kHead);
  RowMatrix<T> pooled(B, C);
  for (Index b = 0; b < B; ++b) {
    pooled.row(b) = Eigen::Map<const RowMatrix<T>>(normed.data() + b * tokens * C, tokens, C)
                        .colwise()
                        .mean();
  }
  Tensor<T> logits(Shape{B, cfg.num_classes});
  logits.rows().noalias() = pooled * p.head_weight;
  logits.rows().rowwise() += p.head_bias.transpose();
  return logits;
}

template <class T, class U>
ModelParams<U> cast_model(const ModelParams<T>& p) {
  auto out = allocate_model<U>(p.config);
  std::vector<std::span<const T>> src;
  visit_params(p, [&](const std::string&, const Shape&, auto data, ParamRole) {
    src.push_back(std::span<const T>(data.data(), data.size()));
  });
  std::size_t i = 0;
  visit_params(out, [&](const std::string&, const Shape&, std::span<U> data, ParamRole) {
    const auto& s = src[i++];
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = static_cast<U>(s[k]);
  });
  return out;
}

}  // namespace swinfree
