#include "swinfree/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "swinfree/io.hpp"
#include "swinfree/model.hpp"
#include "swinfree/profiler.hpp"
#include "swinfree/verify.hpp"

namespace swinfree::cli {

namespace {

using json = nlohmann::ordered_json;

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError("config " + path + " is not valid JSON: " + e.what());
  }
}

/// Maps library exceptions onto the exit-code contract.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DimensionError& e) {
    err << "shape error: " << e.what() << '\n';
    return kUsageError;
  }
}

std::string giga(std::int64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fG", static_cast<double>(v) / 1e9);
  return buf;
}

std::string mega(std::int64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(v) / 1e6);
  return buf;
}

}  // namespace

std::vector<ModelConfig> resolve_configs(const Options& opts) {
  std::vector<json> docs;
  if (opts.presets.size() == 1 && opts.configs.size() == 1) {
    json merged = preset_json(opts.presets.front());
    const json overrides = read_config_file(opts.configs.front());
    for (const auto& [k, v] : overrides.items()) merged[k] = v;
    docs.push_back(std::move(merged));
  } else {
    for (const auto& p : opts.presets) docs.push_back(preset_json(p));
    for (const auto& c : opts.configs) docs.push_back(read_config_file(c));
  }
  if (docs.empty()) throw UsageError("give --preset NAME or --config PATH");
  std::vector<ModelConfig> out;
  for (auto& d : docs) {
    if (opts.seed) d["seed"] = *opts.seed;
    out.push_back(expand_config(d));
  }
  return out;
}

std::string describe_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "config:\n" << config_to_json(cfg).dump(2) << "\n\n";
  os << "stage  P        M   N    depth  heads  C     shifted_blocks\n";
  const auto trace = stage_trace(cfg);
  for (int s = 0; s < kNumStages; ++s) {
    const auto& t = trace[s];
    char line[128];
    const std::string p = std::to_string(t.resolution) + "x" + std::to_string(t.resolution);
    std::snprintf(line, sizeof line, "%-6d %-8s %-3lld %-4lld %-6lld %-6lld %-5lld %lld\n", s + 1,
                  p.c_str(), static_cast<long long>(t.window), static_cast<long long>(t.windows),
                  static_cast<long long>(t.depth), static_cast<long long>(t.num_heads),
                  static_cast<long long>(t.channels), static_cast<long long>(t.shifted_blocks));
    os << line;
  }
  const auto params = count_params(cfg);
  const auto flops = count_flops(cfg);
  os << "\nparams: " << params << " (" << mega(params) << ")\n";
  os << "flops: " << flops << " (" << giga(flops) << ")\n";
  os << "shift_elements: " << count_shift_traffic(cfg) << '\n';
  return os.str();
}

std::string describe_json(const ModelConfig& cfg) {
  json j;
  j["config"] = config_to_json(cfg);
  json stages = json::array();
  for (const auto& t : stage_trace(cfg)) {
    json s;
    s["P"] = {t.resolution, t.resolution};
    s["M"] = t.window;
    s["N"] = t.windows;
    s["depth"] = t.depth;
    s["heads"] = t.num_heads;
    s["channels"] = t.channels;
    s["shifted_blocks"] = t.shifted_blocks;
    stages.push_back(std::move(s));
  }
  j["stages"] = std::move(stages);
  j["params"] = count_params(cfg);
  j["flops"] = count_flops(cfg);
  j["shift_elements"] = count_shift_traffic(cfg);
  return j.dump(2) + "\n";
}

int describe(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfgs = resolve_configs(opts);
    const std::string fmt = opts.format.empty() ? "table" : opts.format;
    if (fmt != "table" && fmt != "json") throw UsageError("describe supports table or json");
    for (const auto& cfg : cfgs) out << (fmt == "json" ? describe_json(cfg) : describe_text(cfg));
    return int{kOk};
  });
}

int verify(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SuiteOptions so;
    if (opts.scope == "quick") {
      so.scope = SuiteScope::quick;
    } else if (opts.scope == "full") {
      so.scope = SuiteScope::full;
    } else {
      throw UsageError("--scope must be quick or full");
    }
    so.seed = opts.seed.value_or(0);
    const std::string fmt = opts.format.empty() ? "table" : opts.format;
    if (fmt != "table" && fmt != "json") throw UsageError("verify supports table or json");
    const auto report = run_property_suite(so);
    out << (fmt == "json" ? report.json() : report.text());
    if (!opts.output.empty()) {
      std::ofstream f(opts.output);
      if (!f) throw FormatError("cannot write " + opts.output);
      f << report.json();
    }
    if (!report.all_passed()) {
      for (const auto& name : report.failures()) err << "failed: " << name << '\n';
      return int{kPropertyFailure};
    }
    return int{kOk};
  });
}

int bench(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto format = parse_format(opts.format.empty() ? "csv" : opts.format);
    const auto cfgs = resolve_configs(opts);
    if (!opts.analytic && opts.runs < 3) throw UsageError("--runs must be at least 3");
    if (opts.batch < 1) throw UsageError("--batch must be positive");
    set_math_threads(opts.threads);
    ReportSet set;
    set.compare = cfgs.size() == 2;
    for (const auto& cfg : cfgs) {
      if (opts.analytic) {
        set.reports.push_back(make_report(cfg));
        continue;
      }
      const auto params = build_model<float>(cfg);
      Rng rng(cfg.seed + 1);
      const auto img = random_uniform<float>(
          Shape{opts.batch, cfg.in_chans, cfg.img_size, cfg.img_size}, rng);
      const auto stats = bench_forward(params, img, opts.runs, opts.warmup);
      set.reports.push_back(make_report(cfg, &stats));
    }
    const std::string text = emit_report(set, format);
    out << text;
    if (!opts.output.empty()) {
      std::ofstream f(opts.output);
      if (!f) throw FormatError("cannot write " + opts.output);
      f << text;
    }
    return int{kOk};
  });
}

int infer(const Options& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto cfgs = resolve_configs(opts);
    if (cfgs.size() != 1) throw UsageError("infer takes exactly one model");
    const auto& cfg = cfgs.front();
    if (opts.input.empty()) throw UsageError("--input PATH is required");
    if (opts.topk < 1) throw UsageError("--topk must be positive");

    const auto blob = read_blob(opts.input);
    const auto& img = blob.tensor;
    if (blob.layout != "BCHW" || img.rank() != 4 || img.dim(1) != cfg.in_chans ||
        img.dim(2) != cfg.img_size || img.dim(3) != cfg.img_size) {
      throw DimensionError("input " + shape_string(img.shape()) + " (" + blob.layout +
                           ") does not match config [B," + std::to_string(cfg.in_chans) + "," +
                           std::to_string(cfg.img_size) + "," + std::to_string(cfg.img_size) +
                           "] BCHW");
    }
    const auto params =
        opts.weights.empty() ? build_model<float>(cfg) : load_weights(cfg, opts.weights);
    const auto logits = model_forward(params, img);
    if (!opts.output.empty()) write_blob(opts.output, logits, "BC");

    const Index classes = logits.dim(1);
    const Index k = std::min<Index>(opts.topk, classes);
    for (Index b = 0; b < logits.dim(0); ++b) {
      std::vector<Index> order(static_cast<std::size_t>(classes));
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index x, Index y) {
        return logits(b, x) > logits(b, y) || (logits(b, x) == logits(b, y) && x < y);
      });
      out << "batch " << b << ":";
      for (Index r = 0; r < k; ++r) {
        char buf[64];
        std::snprintf(buf, sizeof buf, " %lld:%.6g", static_cast<long long>(order[r]),
                      static_cast<double>(logits(b, order[r])));
        out << buf;
      }
      out << '\n';
    }
    return int{kOk};
  });
}

}  // namespace swinfree::cli
