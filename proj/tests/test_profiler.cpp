#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "swinfree/profiler.hpp"

using namespace swinfree;

namespace {

// MACs counted one window at a time, the way the forward pass executes them.
std::int64_t window_level_macs(const ModelConfig& cfg) {
  const std::int64_t l0 = cfg.stage_resolution(0) * cfg.stage_resolution(0);
  std::int64_t n = l0 * 48 * cfg.embed_dim;
  for (int s = 0; s < kNumStages; ++s) {
    const std::int64_t res = cfg.stage_resolution(s), c = cfg.stage_channels(s);
    const std::int64_t m = cfg.stages[s].window, t = m * m;
    const std::int64_t windows = (res / m) * (res / m);
    const std::int64_t heads = cfg.stages[s].num_heads, d = c / heads;
    std::int64_t per_window = t * c * 3 * c;      // qkv
    per_window += heads * t * t * d;              // Q K^T
    per_window += heads * t * t * d;              // A V
    per_window += t * c * c;                      // proj
    per_window += t * c * 4 * c + t * 4 * c * c;  // fc1, fc2
    n += cfg.stages[s].depth * windows * per_window;
    if (s < 3) n += (res / 2) * (res / 2) * 4 * c * 2 * c;
  }
  return n + cfg.stage_channels(3) * cfg.num_classes;
}

ModelConfig tiny(const std::string& mode) {
  return expand_config(nlohmann::ordered_json{{"name", "tiny-" + mode},
                                              {"mode", mode},
                                              {"embed_dim", 12},
                                              {"depths", {1, 2, 2, 2}},
                                              {"heads", {3, 3, 3, 3}},
                                              {"num_classes", 10}});
}

ProfileReport synthetic(const std::string& name, std::int64_t params, std::int64_t flops,
                        std::int64_t shift, double mean, double sd) {
  ProfileReport r;
  r.name = name;
  r.params = params;
  r.flops = flops;
  r.shift_elements = shift;
  r.runs = 5;
  r.wall_mean_ms = mean;
  r.wall_std_ms = sd;
  r.stage_windows = {64, 16, 4, 1};
  r.breakdown = {{"shift", 0.0625}, {"softmax", 0.125}};
  return r;
}

}  // namespace

TEST_CASE("FLOP counts") {
  const auto swin_b = count_flops(preset("swin-B"));
  const auto free_b = count_flops(preset("swin-free-B"));
  const auto free_t = count_flops(preset("swin-free-T"));
  CHECK(std::abs(swin_b - 15.9e9) / 15.9e9 <= 0.10);
  CHECK(std::abs(free_t - 5.0e9) / 5.0e9 <= 0.10);
  CHECK(free_b - swin_b >= 0.5e9);
  CHECK(free_b - swin_b <= 1.2e9);

  for (const char* name :
       {"swin-B", "swin-free-B", "swin-free-T", "swin-free-S-BR", "swin-free-B-win14x14x14x7"}) {
    INFO(name);
    CHECK(count_flops(preset(name)) == window_level_macs(preset(name)));
  }
}

TEST_CASE("FLOP breakdown is additive over stages") {
  const auto f = flop_breakdown(preset("swin-free-B"));
  std::int64_t stages = 0;
  for (auto v : f.per_stage) stages += v;
  CHECK(f.total() == f.embed + stages + f.head);
  CHECK(f.softmax_elements > 0);
  CHECK(f.norm_elements > 0);
  CHECK(f.activation_elements > 0);
}

TEST_CASE("FLOP orderings") {
  const auto dr10 = count_flops(preset("swin-free-B-DR10"));
  const auto dr12 = count_flops(preset("swin-free-B-DR12"));
  const auto dr14 = count_flops(preset("swin-free-B-DR14"));
  const auto dr16 = count_flops(preset("swin-free-B-DR16"));
  const auto base = count_flops(preset("swin-free-B"));
  CHECK(dr10 < dr12);
  CHECK(dr12 < dr14);
  CHECK(dr14 < dr16);
  CHECK(dr16 < base);
  CHECK(count_flops(preset("swin-free-B-BR")) <= base);
  CHECK(count_flops(preset("swin-free-T-BR")) <= count_flops(preset("swin-free-T")));
}

TEST_CASE("shift traffic") {
  // Stage 1: 2 * 56^2 * 128, stage 2: 2 * 28^2 * 256, stage 3: 9 * 2 * 14^2 * 512.
  CHECK(count_shift_traffic(preset("swin-B")) == 802816 + 401408 + 9 * 200704);
  CHECK(count_shift_traffic(preset("swin-B")) == 3010560);
  CHECK(count_shift_traffic(preset("swin-B-shift0000")) == 0);
  CHECK(count_shift_traffic(preset("swin-B-shift0001")) == 0);
  CHECK(count_shift_traffic(preset("swin-B-shift1000")) == 802816);
  for (const auto& name : known_presets()) {
    const auto cfg = preset(name);
    if (cfg.mode == AttentionMode::size_varying) CHECK(count_shift_traffic(cfg) == 0);
  }
  auto wide = preset("swin-T");
  const auto narrow = count_shift_traffic(wide);
  wide.embed_dim *= 2;
  CHECK(count_shift_traffic(wide) == 2 * narrow);
  CHECK(make_report(preset("swin-B")).shift_bytes(4) == 4 * 3010560);
}

TEST_CASE("report formats") {
  ReportSet set{{synthetic("a", 88700000, 15900000000, 3010560, 14.3, 0.25),
                 synthetic("b", 99400000, 16800000000, 0, 12.6, 0.5)},
                true};

  SUBCASE("csv header and rows") {
    const auto csv = emit_report(set, ReportFormat::csv);
    CHECK(csv.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
    CHECK(std::string(kCsvHeader) == "name,params,flops,shift_elements,wall_mean_ms,wall_std_ms");
    CHECK(csv.find("\na,88700000,15900000000,3010560,14.300,0.250\n") != std::string::npos);
    CHECK(csv.find("\na vs b,-10700000,-900000000,3010560,1.700,0.559\n") != std::string::npos);
    const auto single = emit_report(set.reports[0], ReportFormat::csv);
    CHECK(std::count(single.begin(), single.end(), '\n') == 2);
  }
  SUBCASE("golden table") {
    const std::string want =
        "| Model  | FLOPs | # params | Shift elements | Wall mean (ms) | Wall std (ms) |\n"
        "|--------|-------|----------|----------------|----------------|---------------|\n"
        "| a      | 15.9G | 88.7M    | 3010560        | 14.30          | 0.25          |\n"
        "| b      | 16.8G | 99.4M    | 0              | 12.60          | 0.50          |\n"
        "| a vs b | -0.9G | -10.7M   | 3010560        | 1.70           | 0.56          |\n";
    CHECK(emit_report(set, ReportFormat::table) == want);
  }
  SUBCASE("json round trip is byte-identical") {
    const auto text = emit_report(set, ReportFormat::json);
    const auto back = parse_report_json(text);
    CHECK(back.compare);
    REQUIRE(back.reports.size() == 2);
    CHECK(back.reports[0] == set.reports[0]);
    CHECK(back.reports[1] == set.reports[1]);
    CHECK(emit_report(back, ReportFormat::json) == text);
    CHECK(text.find("\"comparison\"") != std::string::npos);
  }
  SUBCASE("unknown format") {
    CHECK_THROWS_AS(parse_format("xml"), UsageError);
    CHECK(parse_format("table") == ReportFormat::table);
    CHECK_THROWS_AS(parse_report_json("{\"reports\": 3"), FormatError);
  }
}

TEST_CASE("bench forward") {
  const auto base_cfg = tiny("swin"), free_cfg = tiny("swin-free");
  Rng rng(1);
  const auto img = random_uniform<float>(Shape{1, 3, 224, 224}, rng);
  const auto base = build_model<float>(base_cfg), free = build_model<float>(free_cfg);

  CHECK_THROWS_AS(bench_forward(base, img, 2, 1), UsageError);
  CHECK_THROWS_AS(bench_forward(base, img, 3, 0), UsageError);

  const auto sb = bench_forward(base, img, 5, 1);
  const auto sf = bench_forward(free, img, 5, 1);
  CHECK(sb.runs == 5);
  CHECK(sb.mean_ms > 0.0);
  CHECK(sb.fractions.at("shift") > 0.0);
  CHECK(sf.fractions.at("shift") == 0.0);
  for (const auto& cat : breakdown_categories()) CHECK(sf.fractions.count(cat) == 1);
  double sum = 0.0;
  for (const auto& [k, v] : sb.fractions) sum += v;
  CHECK(sum <= 1.0 + 1e-9);

  // Windows per stage-3 block: 4 under 7x7 windows, 1 under 14x14.
  CHECK(sb.stage_windows[2] == 4);
  CHECK(sf.stage_windows[2] == 1);
  CHECK(sb.stage_windows[0] == 64);
  CHECK(sf.stage_windows[1] == 4);
  CHECK(sb.stage_shifted_blocks[2] == 1);
  CHECK(sf.stage_shifted_blocks[2] == 0);

  // Timing stability after warmup; a busy machine gets two more tries.
  bool stable = false;
  for (int attempt = 0; attempt < 3 && !stable; ++attempt) {
    const auto st = bench_forward(free, img, 7, 2);
    stable = st.std_ms / st.mean_ms < 0.2;
  }
  CHECK(stable);

  const auto rep = make_report(base_cfg, &sb);
  CHECK(rep.runs == 5);
  CHECK(rep.breakdown.at("shift") > 0.0);
  CHECK(make_report(free_cfg).shift_elements == 0);
}
