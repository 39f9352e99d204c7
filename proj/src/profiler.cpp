#include "swinfree/profiler.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace swinfree {

namespace {

using json = nlohmann::ordered_json;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string scaled(std::int64_t v, double unit, const char* suffix) {
  return fixed(static_cast<double>(v) / unit, 1) + suffix;
}

json to_json(const ProfileReport& r) {
  json j;
  j["name"] = r.name;
  j["params"] = r.params;
  j["flops"] = r.flops;
  j["shift_elements"] = r.shift_elements;
  j["shift_bytes_f32"] = r.shift_bytes(4);
  j["runs"] = r.runs;
  j["wall_mean_ms"] = r.wall_mean_ms;
  j["wall_std_ms"] = r.wall_std_ms;
  j["stage_windows"] = r.stage_windows;
  json b = json::object();
  for (const auto& [k, v] : r.breakdown) b[k] = v;
  j["breakdown"] = b;
  return j;
}

ProfileReport from_json(const json& j) {
  ProfileReport r;
  r.name = j.at("name").get<std::string>();
  r.params = j.at("params").get<std::int64_t>();
  r.flops = j.at("flops").get<std::int64_t>();
  r.shift_elements = j.at("shift_elements").get<std::int64_t>();
  r.runs = j.at("runs").get<int>();
  r.wall_mean_ms = j.at("wall_mean_ms").get<double>();
  r.wall_std_ms = j.at("wall_std_ms").get<double>();
  r.stage_windows = j.at("stage_windows").get<std::array<std::int64_t, kNumStages>>();
  for (const auto& [k, v] : j.at("breakdown").items()) r.breakdown[k] = v.get<double>();
  return r;
}

ProfileReport delta(const ProfileReport& a, const ProfileReport& b) {
  ProfileReport d;
  d.name = a.name + " vs " + b.name;
  d.params = a.params - b.params;
  d.flops = a.flops - b.flops;
  d.shift_elements = a.shift_elements - b.shift_elements;
  d.runs = std::min(a.runs, b.runs);
  d.wall_mean_ms = a.wall_mean_ms - b.wall_mean_ms;
  d.wall_std_ms = std::sqrt(a.wall_std_ms * a.wall_std_ms + b.wall_std_ms * b.wall_std_ms);
  for (int s = 0; s < kNumStages; ++s) d.stage_windows[s] = a.stage_windows[s] - b.stage_windows[s];
  return d;
}

}  // namespace

FlopBreakdown flop_breakdown(const ModelConfig& cfg) {
  validate(cfg);
  FlopBreakdown f;
  const std::int64_t l0 = cfg.stage_resolution(0) * cfg.stage_resolution(0);
  f.embed = l0 * cfg.in_chans * cfg.patch_size * cfg.patch_size * cfg.embed_dim;
  f.norm_elements += l0 * cfg.embed_dim;
  for (int s = 0; s < kNumStages; ++s) {
    const auto& st = cfg.stages[s];
    const std::int64_t res = cfg.stage_resolution(s);
    const std::int64_t l = res * res;
    const std::int64_t c = cfg.stage_channels(s);
    const std::int64_t t = st.window * st.window;
    const std::int64_t qkv = l * c * 3 * c;
    const std::int64_t attn = 2 * l * t * c;
    const std::int64_t proj = l * c * c;
    const std::int64_t mlp = 2 * l * c * kMlpRatio * c;
    f.qkv += st.depth * qkv;
    f.attention += st.depth * attn;
    f.proj += st.depth * proj;
    f.mlp += st.depth * mlp;
    f.per_stage[s] = st.depth * (qkv + attn + proj + mlp);
    f.norm_elements += st.depth * 2 * l * c;
    f.softmax_elements += st.depth * st.num_heads * l * t;
    f.activation_elements += st.depth * l * kMlpRatio * c;
    if (s + 1 < kNumStages) {
      const std::int64_t merge = (l / 4) * 4 * c * 2 * c;
      f.merge += merge;
      f.per_stage[s] += merge;
      f.norm_elements += (l / 4) * 4 * c;
    }
  }
  const std::int64_t last_res = cfg.stage_resolution(kNumStages - 1);
  const std::int64_t last_c = cfg.stage_channels(kNumStages - 1);
  f.norm_elements += last_res * last_res * last_c;
  f.head = last_c * cfg.num_classes;
  return f;
}

std::int64_t count_flops(const ModelConfig& cfg) { return flop_breakdown(cfg).total(); }

std::int64_t count_shift_traffic(const ModelConfig& cfg) {
  validate(cfg);
  if (cfg.mode == AttentionMode::size_varying) return 0;
  std::int64_t n = 0;
  for (int s = 0; s < kNumStages; ++s) {
    const auto& st = cfg.stages[s];
    const std::int64_t res = cfg.stage_resolution(s);
    for (bool on : st.shift_pattern) {
      if (effective_shift(st.window, on, res, res) > 0) n += 2 * res * res * cfg.stage_channels(s);
    }
  }
  return n;
}

const std::vector<std::string>& breakdown_categories() {
  static const std::vector<std::string> cats = {
      op::kShift,   op::kWindowReshape, op::kMaskBuild, op::kQkvProj,   op::kAttentionMatmul,
      op::kSoftmax, op::kOutProj,       op::kNorm,      op::kActivation, op::kMlpMatmul,
      op::kResidual, op::kMerge,        op::kEmbed,     op::kHead};
  return cats;
}

void set_math_threads(int threads) { Eigen::setNbThreads(std::max(1, threads)); }

ProfileReport make_report(const ModelConfig& cfg, const BenchStats* bench) {
  ProfileReport r;
  r.name = cfg.name;
  r.params = count_params(cfg);
  r.flops = count_flops(cfg);
  r.shift_elements = count_shift_traffic(cfg);
  const auto trace = stage_trace(cfg);
  for (int s = 0; s < kNumStages; ++s) r.stage_windows[s] = trace[s].windows;
  if (bench) {
    r.runs = bench->runs;
    r.wall_mean_ms = bench->mean_ms;
    r.wall_std_ms = bench->std_ms;
    r.breakdown = bench->fractions;
    for (int s = 0; s < kNumStages; ++s) {
      if (bench->stage_windows[s] > 0) r.stage_windows[s] = bench->stage_windows[s];
    }
  }
  return r;
}

ReportFormat parse_format(const std::string& name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "table") return ReportFormat::table;
  throw UsageError("unknown report format '" + name + "' (expected json, csv or table)");
}

std::string emit_report(const ReportSet& set, ReportFormat format) {
  std::vector<ProfileReport> rows = set.reports;
  const bool with_delta = set.compare && set.reports.size() == 2;
  if (with_delta) rows.push_back(delta(set.reports[0], set.reports[1]));

  std::ostringstream os;
  switch (format) {
    case ReportFormat::json: {
      json j;
      json arr = json::array();
      for (const auto& r : set.reports) arr.push_back(to_json(r));
      j["reports"] = arr;
      j["compare"] = set.compare;
      if (with_delta) j["comparison"] = to_json(rows.back());
      os << j.dump(2) << '\n';
      break;
    }
    case ReportFormat::csv:
      os << kCsvHeader << '\n';
      for (const auto& r : rows) {
        os << r.name << ',' << r.params << ',' << r.flops << ',' << r.shift_elements << ','
           << fixed(r.wall_mean_ms, 3) << ',' << fixed(r.wall_std_ms, 3) << '\n';
      }
      break;
    case ReportFormat::table: {
      const std::vector<std::string> head = {"Model", "FLOPs", "# params", "Shift elements",
                                             "Wall mean (ms)", "Wall std (ms)"};
      std::vector<std::vector<std::string>> cells;
      for (const auto& r : rows) {
        cells.push_back({r.name, scaled(r.flops, 1e9, "G"), scaled(r.params, 1e6, "M"),
                         std::to_string(r.shift_elements), fixed(r.wall_mean_ms, 2),
                         fixed(r.wall_std_ms, 2)});
      }
      std::vector<std::size_t> width(head.size());
      for (std::size_t c = 0; c < head.size(); ++c) {
        width[c] = head[c].size();
        for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
      }
      auto line = [&](const std::vector<std::string>& row) {
        os << '|';
        for (std::size_t c = 0; c < row.size(); ++c) {
          os << ' ' << row[c] << std::string(width[c] - row[c].size(), ' ') << " |";
        }
        os << '\n';
      };
      line(head);
      os << '|';
      for (auto w : width) os << std::string(w + 2, '-') << '|';
      os << '\n';
      for (const auto& row : cells) line(row);
      break;
    }
  }
  return os.str();
}

std::string emit_report(const ProfileReport& rep, ReportFormat format) {
  return emit_report(ReportSet{{rep}, false}, format);
}

ReportSet parse_report_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ReportSet set;
    for (const auto& r : j.at("reports")) set.reports.push_back(from_json(r));
    set.compare = j.value("compare", false);
    return set;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report JSON: ") + e.what());
  }
}

}  // namespace swinfree
