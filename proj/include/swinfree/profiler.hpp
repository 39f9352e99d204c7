#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "swinfree/model.hpp"

namespace swinfree {

/// Multiply-accumulates of every matmul, one MAC counted as one FLOP.
/// Elementwise work (norms, softmax, activations) is tallied separately
/// and excluded from total().
struct FlopBreakdown {
  std::int64_t embed = 0;
  std::int64_t qkv = 0;
  std::int64_t attention = 0;  // QK^T and AV
  std::int64_t proj = 0;
  std::int64_t mlp = 0;
  std::int64_t merge = 0;
  std::int64_t head = 0;
  std::array<std::int64_t, kNumStages> per_stage{};  // blocks plus the trailing merge

  std::int64_t norm_elements = 0;
  std::int64_t softmax_elements = 0;
  std::int64_t activation_elements = 0;

  std::int64_t total() const { return embed + qkv + attention + proj + mlp + merge + head; }
};

FlopBreakdown flop_breakdown(const ModelConfig& cfg);
std::int64_t count_flops(const ModelConfig& cfg);

/// Grid elements moved by rolls: 2 * H * W * C per block that actually shifts.
std::int64_t count_shift_traffic(const ModelConfig& cfg);

/// Operation categories every bench breakdown reports, timed or not.
const std::vector<std::string>& breakdown_categories();

struct BenchStats {
  int runs = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::map<std::string, double> fractions;  // share of forward wall time per category
  std::array<std::int64_t, kNumStages> stage_windows{};
  std::array<std::int64_t, kNumStages> stage_shifted_blocks{};
};

/// Sets Eigen's math thread count (effective only when built with OpenMP).
void set_math_threads(int threads);

template <class T>
BenchStats bench_forward(const ModelParams<T>& params, const Tensor<T>& input, int runs,
                         int warmup) {
  if (runs < 3) throw UsageError("bench needs at least 3 runs");
  if (warmup < 1) throw UsageError("bench needs at least 1 warmup run");
  for (int i = 0; i < warmup; ++i) model_forward(params, input);

  BenchStats st;
  st.runs = runs;
  std::vector<double> ms;
  std::map<std::string, double> seconds;
  double total = 0.0;
  OpTimer timer;
  for (int r = 0; r < runs; ++r) {
    timer.clear();
    const auto t0 = std::chrono::steady_clock::now();
    model_forward(params, input, &timer);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ms.push_back(dt * 1e3);
    total += dt;
    for (const auto& [k, v] : timer.seconds()) seconds[k] += v;
  }
  double sum = 0.0;
  for (double v : ms) sum += v;
  st.mean_ms = sum / runs;
  double var = 0.0;
  for (double v : ms) var += (v - st.mean_ms) * (v - st.mean_ms);
  st.std_ms = std::sqrt(var / (runs - 1));

  for (const auto& c : breakdown_categories()) st.fractions[c] = 0.0;
  for (const auto& [k, v] : seconds) st.fractions[k] = total > 0.0 ? v / total : 0.0;
  for (int s = 0; s < kNumStages; ++s) {
    const auto& cnt = timer.counters();
    const std::string key = "stage" + std::to_string(s + 1);
    if (auto it = cnt.find(key + ".windows_per_block"); it != cnt.end()) {
      st.stage_windows[s] = it->second;
    }
    if (auto it = cnt.find(key + ".shifted_blocks"); it != cnt.end()) {
      st.stage_shifted_blocks[s] = it->second;
    }
  }
  return st;
}

struct ProfileReport {
  std::string name;
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t shift_elements = 0;
  int runs = 0;
  double wall_mean_ms = 0.0;
  double wall_std_ms = 0.0;
  std::array<std::int64_t, kNumStages> stage_windows{};
  std::map<std::string, double> breakdown;

  std::int64_t shift_bytes(std::int64_t bytes_per_element) const {
    return shift_elements * bytes_per_element;
  }
  bool operator==(const ProfileReport&) const = default;
};

/// Analytic counts for `cfg`; wall-clock fields and the breakdown come from
/// `bench` when given.
ProfileReport make_report(const ModelConfig& cfg, const BenchStats* bench = nullptr);

struct ReportSet {
  std::vector<ProfileReport> reports;
  bool compare = false;  // append a delta row for reports[0] vs reports[1]
};

enum class ReportFormat { json, csv, table };
ReportFormat parse_format(const std::string& name);

inline constexpr const char* kCsvHeader = "name,params,flops,shift_elements,wall_mean_ms,wall_std_ms";

std::string emit_report(const ReportSet& set, ReportFormat format);
std::string emit_report(const ProfileReport& rep, ReportFormat format);
ReportSet parse_report_json(const std::string& text);

}  // namespace swinfree
