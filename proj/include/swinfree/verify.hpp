#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swinfree/attention.hpp"
#include "swinfree/config.hpp"

namespace swinfree {

// Oracles below are written with plain loops over std::vector storage and
// share no code with the windowed fast path.

/// Dense attention over all T = M*M tokens of `tokens` ([T, C]), with the
/// relative-position bias derived directly from token coordinates. When
/// `weights` is non-null it receives one T x T probability matrix per head.
RowMatrix<double> global_attention_oracle(const RowMatrix<double>& tokens,
                                          const AttentionParams<double>& p,
                                          std::vector<RowMatrix<double>>* weights = nullptr);

/// Shifted-window attention computed without an additive mask: roll the grid,
/// run independent dense attention per region group inside each window,
/// reassemble and roll back.
FeatureGrid<double> masked_group_oracle(const FeatureGrid<double>& g, Index window, Index shift,
                                        const AttentionParams<double>& p);

struct BlockWindow {
  Index window = 7;
  bool shift = false;
};

/// Tokens of an H x W grid linked when some block lets them attend to each
/// other (same window and, for shifted blocks, same mask region).
struct ConnectivityGraph {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> adjacency;  // nodes x nodes

  Index nodes() const { return height * width; }
  bool linked(Index a, Index b) const {
    return adjacency[static_cast<std::size_t>(a * nodes() + b)] != 0;
  }
  Index components() const;
};

ConnectivityGraph connectivity_graph(const std::vector<BlockWindow>& blocks, Index H, Index W);

/// Blocks of stage `stage` (0-based) as configured, on that stage's grid.
ConnectivityGraph stage_connectivity(const ModelConfig& cfg, int stage);

struct PropertyResult {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  std::uint64_t seed = 0;
  std::string detail;
};

enum class SuiteScope { quick, full };

struct SuiteOptions {
  SuiteScope scope = SuiteScope::quick;
  std::uint64_t seed = 0;
  int seeds = 20;                     // random seeds per oracle property
  int roundtrip_cases = 1000;         // randomized partition/shift cases
  bool inject_softmax_fault = false;  // mutation smoke test: sign-flipped softmax
};

struct SuiteReport {
  std::vector<PropertyResult> results;

  bool all_passed() const;
  std::vector<std::string> failures() const;
  std::string text() const;
  std::string json() const;
};

/// Runs every property; failures are collected, never thrown.
SuiteReport run_property_suite(const SuiteOptions& opts = {});

/// Attention parameters with entries uniform in [-scale, scale], for checks
/// that need non-degenerate logits.
AttentionParams<double> random_attention(Index dim, Index heads, Index window, Rng& rng,
                                         double scale = 0.5);

/// Largest normwise relative error between window_attention_backward and
/// central differences of <upstream, forward> over the input and every
/// parameter tensor.
double attention_gradient_error(const WindowSet<double>& w, const AttentionParams<double>& p,
                                const ShiftMask<double>* mask, const WindowSet<double>& upstream,
                                double h = 1e-5);

/// Max |a - b| over two same-shaped ranges.
double max_abs_diff(std::span<const double> a, std::span<const double> b);

/// max |a - n| / max(max |n|, 1e-8): normwise relative error used for gradient checks.
double max_rel_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace swinfree
