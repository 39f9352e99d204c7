// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "swinfree/commands.hpp"
#include "swinfree/io.hpp"
#include "swinfree/profiler.hpp"
#include "swinfree/verify.hpp"

using namespace swinfree;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and reference values.
constexpr double kGeometryBudgetSeconds = 1.0;
constexpr double kSwinBParams = 88.7e6;
constexpr double kParamTolerance = 0.02;
constexpr double kSwinBFlops = 15.9e9;
constexpr double kSwinFreeTFlops = 5.0e9;
constexpr double kFlopTolerance = 0.10;
constexpr double kFlopDeltaLow = 0.5e9;
constexpr double kFlopDeltaHigh = 1.2e9;
constexpr std::int64_t kSwinBShiftElements = 3010560;
constexpr int kOracleSeeds = 20;
constexpr double kOracleTolerance = 1e-10;
constexpr double kOracleBudgetSeconds = 30.0;
constexpr int kGradientSeeds = 20;
constexpr double kGradientTolerance = 1e-4;
constexpr double kGradientStep = 1e-5;
constexpr int kRoundTripCases = 1000;

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Stage geometry at 224: {P side, M, N} per stage.
struct Cell {
  Index p, m, n;
};
constexpr std::array<Cell, 4> kSwinGeometry{{{56, 7, 64}, {28, 7, 16}, {14, 7, 4}, {7, 7, 1}}};
constexpr std::array<Cell, 4> kSwinFreeGeometry{{{56, 7, 64}, {28, 14, 4}, {14, 14, 1}, {7, 7, 1}}};

Outcome criterion_geometry() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  int matched = 0;
  for (const auto& [name, want] : {std::pair{"swin-B", kSwinGeometry}, std::pair{"swin-free-B", kSwinFreeGeometry}}) {
    cli::Options opts;
    opts.presets = {name};
    opts.format = "json";
    std::ostringstream out, err;
    o.require(cli::describe(opts, out, err) == 0, std::string("describe failed for ") + name);
    const auto j = nlohmann::json::parse(out.str());
    for (int s = 0; s < 4; ++s) {
      const auto& st = j["stages"][s];
      const bool p = st["P"][0] == want[s].p && st["P"][1] == want[s].p;
      const bool m = st["M"] == want[s].m;
      const bool n = st["N"] == want[s].n;
      matched += p + m + n;
      o.require(p && m && n, std::string(name) + " stage " + std::to_string(s + 1) + " differs");
    }
  }
  const double dt = seconds_since(t0);
  o.require(matched == 24, std::to_string(matched) + "/24 cells");
  o.require(dt < kGeometryBudgetSeconds, "describe took " + fmt("%.3f s", dt));
  o.detail = std::to_string(matched) + "/24 cells in " + fmt("%.3f s", dt) +
             (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

Outcome criterion_params() {
  Outcome o;
  const auto swin_b = count_params(preset("swin-B"));
  const double rel = std::abs(static_cast<double>(swin_b) - kSwinBParams) / kSwinBParams;
  o.require(rel <= kParamTolerance, "Swin-B off by " + fmt("%.2f%%", 100 * rel));

  // The visitor over built tensors must agree with the closed form.
  o.require(count_params(allocate_model<float>(preset("swin-B"))) == swin_b, "visitor count differs");

  for (const auto& [plain, br] : {std::pair{"swin-B", "swin-B-BR"}, std::pair{"swin-free-B", "swin-free-B-BR"},
                                  std::pair{"swin-free-T", "swin-free-T-BR"},
                                  std::pair{"swin-free-S", "swin-free-S-BR"}}) {
    o.require(count_params(preset(plain)) == count_params(preset(br)),
              std::string(br) + " count differs from " + plain);
  }
  std::vector<std::int64_t> chain;
  for (const char* name : {"swin-free-B-DR10", "swin-free-B-DR12", "swin-free-B-DR14", "swin-free-B-DR16", "swin-free-B"})
    chain.push_back(count_params(preset(name)));
  for (std::size_t i = 1; i < chain.size(); ++i) o.require(chain[i - 1] < chain[i], "DR ordering broken");
  std::string dr;
  for (auto c : chain) dr += (dr.empty() ? "" : " < ") + fmt("%.1fM", static_cast<double>(c) / 1e6);
  o.detail = "Swin-B " + fmt("%.2fM", static_cast<double>(swin_b) / 1e6) + " (" +
             fmt("%+.2f%%", 100 * (static_cast<double>(swin_b) - kSwinBParams) / kSwinBParams) +
             "), BR counts equal, DR " + dr + (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

Outcome criterion_flops() {
  Outcome o;
  const double b = static_cast<double>(count_flops(preset("swin-B")));
  const double t = static_cast<double>(count_flops(preset("swin-free-T")));
  const double fb = static_cast<double>(count_flops(preset("swin-free-B")));
  o.require(std::abs(b - kSwinBFlops) / kSwinBFlops <= kFlopTolerance, "Swin-B outside 10%");
  o.require(std::abs(t - kSwinFreeTFlops) / kSwinFreeTFlops <= kFlopTolerance, "Swin-Free-T outside 10%");
  o.require(fb - b >= kFlopDeltaLow && fb - b <= kFlopDeltaHigh, "Swin-Free-B minus Swin-B outside range");
  o.detail = "Swin-B " + fmt("%.2fG", b / 1e9) + ", Swin-Free-T " + fmt("%.2fG", t / 1e9) +
             ", Swin-Free-B - Swin-B " + fmt("%.2fG", (fb - b) / 1e9) +
             (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

Outcome criterion_shift_traffic() {
  Outcome o;
  const auto swin_b = count_shift_traffic(preset("swin-B"));
  o.require(swin_b == kSwinBShiftElements, "Swin-B shift elements " + std::to_string(swin_b));
  int size_varying = 0;
  for (const auto& name : known_presets()) {
    const auto cfg = preset(name);
    if (cfg.mode != AttentionMode::size_varying) continue;
    ++size_varying;
    o.require(count_shift_traffic(cfg) == 0, name + " has shift traffic");
  }
  // Measured share of forward time spent in rolls: reported, not asserted.
  Rng rng(1);
  const auto img = random_uniform<float>(Shape{1, 3, 224, 224}, rng);
  const auto sb = bench_forward(build_model<float>(preset("swin-B")), img, 3, 1);
  const auto sf = bench_forward(build_model<float>(preset("swin-free-B")), img, 3, 1);
  o.require(sf.fractions.at("shift") == 0.0, "size-varying bench timed a shift");
  o.detail = "Swin-B " + std::to_string(swin_b) + " elements, 0 for " +
             std::to_string(size_varying) + " size-varying presets; measured shift share " +
             fmt("%.2f%%", 100 * sb.fractions.at("shift")) + " (roll) + " +
             fmt("%.2f%%", 100 * sb.fractions.at("window_reshape")) +
             " (partition/reverse) of Swin-B forward, " + fmt("%.2f%%", 100 * sf.fractions.at("shift")) +
             " for Swin-Free-B" + (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

Outcome criterion_oracles() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst_global = 0.0, worst_group = 0.0;
  for (int k = 0; k < kOracleSeeds; ++k) {
    Rng rng(1000 + k);
    const Index heads = rng.uniform_int(1, 4);
    const Index c = heads * rng.uniform_int(2, 6);

    // One window covering a 7x7 grid.
    const auto p = random_attention(c, heads, 7, rng);
    const FeatureGrid<double> g7(random_uniform<double>(Shape{1, 7, 7, c}, rng));
    const auto w = window_partition(g7, 7);
    const auto out = window_attention_forward(w, p);
    const RowMatrix<double> tokens = w.window_rows(0);
    const auto ref = global_attention_oracle(tokens, p);
    worst_global = std::max(worst_global, (out.window_rows(0) - ref).cwiseAbs().maxCoeff());

    // Mask-based shifted windows against the per-region dense oracle.
    const FeatureGrid<double> g(random_uniform<double>(Shape{1, 14, 14, c}, rng));
    const auto mask = build_shift_mask<double>(14, 14, 7, 3);
    const auto ws = window_attention_forward(window_partition(cyclic_shift(g, 3, 3), 7), p, &mask);
    const auto masked = cyclic_shift(window_reverse(ws, 14, 14), -3, -3);
    const auto oracle = masked_group_oracle(g, 7, 3, p);
    worst_group = std::max(worst_group, max_abs_diff(masked.values.values(), oracle.values.values()));
  }
  const double dt = seconds_since(t0);
  o.require(worst_global < kOracleTolerance, "global oracle error " + fmt("%.2e", worst_global));
  o.require(worst_group < kOracleTolerance, "group oracle error " + fmt("%.2e", worst_group));
  o.require(dt < kOracleBudgetSeconds, "took " + fmt("%.1f s", dt));
  o.detail = std::to_string(kOracleSeeds) + " seeds, max error N=1 " + fmt("%.2e", worst_global) +
             ", shifted 14x14/M=7/s=3 " + fmt("%.2e", worst_group) + ", " + fmt("%.2f s", dt) +
             (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

Outcome criterion_gradients() {
  Outcome o;
  double worst = 0.0;
  for (int k = 0; k < kGradientSeeds; ++k) {
    Rng rng(2000 + k);
    const auto p = random_attention(4, 2, 2, rng);
    auto grid = [&](Index h) {
      return window_partition(FeatureGrid<double>(random_uniform<double>(Shape{1, h, h, 4}, rng)), 2);
    };
    const auto w1 = grid(2), up1 = grid(2);
    worst = std::max(worst, attention_gradient_error(w1, p, nullptr, up1, kGradientStep));
    const auto mask = build_shift_mask<double>(4, 4, 2, 1);
    const auto w4 = grid(4), up4 = grid(4);
    worst = std::max(worst, attention_gradient_error(w4, p, &mask, up4, kGradientStep));
  }
  o.require(worst < kGradientTolerance, "max relative error " + fmt("%.2e", worst));
  o.detail = std::to_string(kGradientSeeds) + " seeds (one window and masked 4x4), max relative error " +
             fmt("%.2e", worst) + (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

Outcome criterion_connectivity() {
  Outcome o;
  const auto plain = connectivity_graph({{7, false}}, 14, 14).components();
  const auto grown = connectivity_graph({{7, false}, {14, false}}, 14, 14).components();
  const auto shifted = connectivity_graph({{7, false}, {7, true}}, 14, 14).components();
  o.require(plain == 4, "M=7 alone gives " + std::to_string(plain));
  o.require(grown == 1, "M=7 then M=14 gives " + std::to_string(grown));
  o.require(shifted == 1, "M=7 then shifted M=7 gives " + std::to_string(shifted));
  const auto cfg = preset("swin-free-B");
  std::string per_stage;
  for (int s = 0; s < 4; ++s) {
    const auto c = stage_connectivity(cfg, s).components();
    per_stage += (s ? "," : "") + std::to_string(c);
    o.require(c == kSwinFreeGeometry[s].n, "stage " + std::to_string(s + 1) + " components " + std::to_string(c));
  }
  o.detail = "components " + std::to_string(plain) + " / " + std::to_string(grown) + " / " +
             std::to_string(shifted) + ", Swin-Free-B stages " + per_stage +
             (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion_determinism() {
  Outcome o;
  const auto dir = fs::temp_directory_path() / "swinfree_acceptance";
  fs::create_directories(dir);
  Rng rng(3);
  write_blob(dir / "img.f32", random_uniform<float>(Shape{1, 3, 224, 224}, rng));
  cli::Options opts;
  opts.presets = {"swin-free-T"};
  opts.seed = 11;
  opts.input = (dir / "img.f32").string();
  std::ostringstream sink, err;
  opts.output = (dir / "a.f32").string();
  o.require(cli::infer(opts, sink, err) == 0, "first infer failed: " + err.str());
  opts.output = (dir / "b.f32").string();
  o.require(cli::infer(opts, sink, err) == 0, "second infer failed: " + err.str());
  const auto a = read_bytes(dir / "a.f32"), b = read_bytes(dir / "b.f32");
  o.require(!a.empty() && a == b, "logits differ between runs");

  int partition_cases = 0, shift_cases = 0;
  Rng r(4);
  for (int k = 0; k < kRoundTripCases; ++k) {
    const Index m = r.uniform_int(1, 5);
    const Index h = m * r.uniform_int(1, 4), w = m * r.uniform_int(1, 4);
    const FeatureGrid<double> g(random_uniform<double>(Shape{r.uniform_int(1, 2), h, w, r.uniform_int(1, 4)}, r));
    if (window_reverse(window_partition(g, m), h, w).values == g.values) ++partition_cases;
    const Index dy = r.uniform_int(-2 * h, 2 * h), dx = r.uniform_int(-2 * w, 2 * w);
    if (cyclic_shift(cyclic_shift(g, dy, dx), -dy, -dx).values == g.values) ++shift_cases;
  }
  o.require(partition_cases == kRoundTripCases, "partition/reverse failed in " +
                                                    std::to_string(kRoundTripCases - partition_cases) + " cases");
  o.require(shift_cases == kRoundTripCases, "shift/unshift failed in " +
                                                std::to_string(kRoundTripCases - shift_cases) + " cases");
  o.detail = "seeded infer " + std::string(a == b ? "byte-identical" : "differs") + " (" +
             std::to_string(a.size()) + " bytes), partition/reverse " + std::to_string(partition_cases) +
             "/" + std::to_string(kRoundTripCases) + ", shift/unshift " + std::to_string(shift_cases) + "/" +
             std::to_string(kRoundTripCases) + (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

Outcome criterion_rows_resolve() {
  Outcome o;
  // Shift on/off rows, window-size rows and the model-comparison rows.
  const std::vector<std::string> rows = {
      "swin-B-shift1111", "swin-B-shift0111", "swin-B-shift0011", "swin-B-shift0001",
      "swin-B-shift0010", "swin-B-shift0100", "swin-B-shift1000", "swin-B-shift0000",
      "swin-free-B-win7x7x7x7", "swin-free-B-win7x7x14x7", "swin-free-B-win7x14x7x7",
      "swin-free-B-win14x7x7x7", "swin-free-B-win7x14x14x7", "swin-free-B-win14x7x14x7",
      "swin-free-B-win14x14x7x7", "swin-free-B-win14x14x14x7",
      "swin-B", "swin-B-BR", "swin-free-B", "swin-free-T", "swin-free-S", "swin-free-T-BR",
      "swin-free-S-BR", "swin-free-B-BR", "swin-free-B-DR10", "swin-free-B-DR12",
      "swin-free-B-DR14", "swin-free-B-DR16", "swin-free-B-BR-DR12", "swin-free-B-BR-DR14",
      "swin-free-B-BR-DR16"};
  int built = 0;
  for (const auto& name : rows) {
    try {
      const auto cfg = preset(name);
      validate(cfg);
      const auto params = build_model<float>(cfg);
      if (count_params(params) == count_params(cfg)) ++built;
      else o.require(false, name + " count mismatch");
    } catch (const std::exception& e) {
      o.require(false, name + ": " + e.what());
    }
  }
  o.detail = std::to_string(built) + "/" + std::to_string(rows.size()) + " row presets build" +
             (o.detail.empty() ? "" : " [" + o.detail + "]");
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 geometry", criterion_geometry},
      {"2 parameter count", criterion_params},
      {"3 FLOP count", criterion_flops},
      {"4 shift traffic", criterion_shift_traffic},
      {"5 oracle equivalence", criterion_oracles},
      {"6 gradient check", criterion_gradients},
      {"7 connectivity", criterion_connectivity},
      {"8 determinism and round trip", criterion_determinism},
      {"9 row configs resolve", criterion_rows_resolve},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.ok;
    std::printf("%s criterion %s: %s\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
