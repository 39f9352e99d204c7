#include "swinfree/config.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace swinfree {

namespace {

using json = nlohmann::ordered_json;

struct VariantDefaults {
  Index embed_dim;
  std::array<Index, kNumStages> depths;
  std::array<Index, kNumStages> heads;
};

const VariantDefaults* variant_defaults(const std::string& v) {
  static const VariantDefaults tiny{96, {2, 2, 6, 2}, {3, 6, 12, 24}};
  static const VariantDefaults small{96, {2, 2, 18, 2}, {3, 6, 12, 24}};
  static const VariantDefaults base{128, {2, 2, 18, 2}, {4, 8, 16, 32}};
  if (v == "T") return &tiny;
  if (v == "S") return &small;
  if (v == "B") return &base;
  return nullptr;
}

template <class V>
std::array<V, kNumStages> read_four(const json& doc, const char* key) {
  const auto& arr = doc.at(key);
  if (!arr.is_array() || arr.size() != kNumStages) {
    throw ConfigError(std::string("'") + key + "' must be an array of 4 entries");
  }
  std::array<V, kNumStages> out{};
  for (int s = 0; s < kNumStages; ++s) out[s] = arr[s].get<V>();
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const std::set<std::string>& allowed_keys() {
  static const std::set<std::string> keys = {
      "name",   "variant", "mode",         "img_size", "patch_size", "in_chans",
      "embed_dim", "depths", "heads",      "window_sizes", "shift",  "norm",
      "act",    "dr",      "num_classes",  "seed"};
  return keys;
}

ModelConfig expand_impl(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!allowed_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  ModelConfig cfg;
  cfg.variant = doc.value("variant", std::string("custom"));
  cfg.name = doc.value("name", std::string("custom"));

  const std::string mode = doc.value("mode", std::string("swin"));
  if (mode == "swin") {
    cfg.mode = AttentionMode::shifted_baseline;
  } else if (mode == "swin-free") {
    cfg.mode = AttentionMode::size_varying;
  } else {
    throw ConfigError("mode must be \"swin\" or \"swin-free\", got \"" + mode + "\"");
  }
  const bool size_varying = cfg.mode == AttentionMode::size_varying;

  std::array<Index, kNumStages> depths{}, heads{};
  std::array<Index, kNumStages> windows =
      size_varying ? std::array<Index, kNumStages>{7, 14, 14, 7}
                   : std::array<Index, kNumStages>{7, 7, 7, 7};
  std::array<bool, kNumStages> shift{};
  shift.fill(!size_varying);

  if (const auto* v = variant_defaults(cfg.variant)) {
    cfg.embed_dim = v->embed_dim;
    depths = v->depths;
    heads = v->heads;
  } else if (cfg.variant == "custom") {
    for (const char* k : {"embed_dim", "depths", "heads"}) {
      if (!doc.contains(k)) {
        throw ConfigError(std::string("custom variant requires explicit '") + k + "'");
      }
    }
  } else {
    throw ConfigError("variant must be T, S, B or custom, got \"" + cfg.variant + "\"");
  }

  if (doc.contains("dr")) {
    const auto dr = doc.at("dr").get<Index>();
    if (dr < 1) throw ConfigError("dr must be positive");
    depths[2] = dr;
  }

  cfg.img_size = doc.value("img_size", cfg.img_size);
  cfg.patch_size = doc.value("patch_size", cfg.patch_size);
  cfg.in_chans = doc.value("in_chans", cfg.in_chans);
  cfg.embed_dim = doc.value("embed_dim", cfg.embed_dim);
  cfg.num_classes = doc.value("num_classes", cfg.num_classes);
  cfg.seed = doc.value("seed", cfg.seed);
  if (doc.contains("depths")) depths = read_four<Index>(doc, "depths");
  if (doc.contains("heads")) heads = read_four<Index>(doc, "heads");
  if (doc.contains("window_sizes")) windows = read_four<Index>(doc, "window_sizes");
  if (doc.contains("shift")) shift = read_four<bool>(doc, "shift");

  const std::string norm = doc.value("norm", std::string("layer"));
  if (norm == "layer") {
    cfg.norm = NormKind::layer;
  } else if (norm == "batch") {
    cfg.norm = NormKind::batch;
  } else {
    throw ConfigError("norm must be \"layer\" or \"batch\", got \"" + norm + "\"");
  }
  const std::string act = doc.value("act", std::string("gelu"));
  if (act == "gelu") {
    cfg.act = Activation::gelu;
  } else if (act == "relu") {
    cfg.act = Activation::relu;
  } else {
    throw ConfigError("act must be \"gelu\" or \"relu\", got \"" + act + "\"");
  }

  for (int s = 0; s < kNumStages; ++s) {
    if (size_varying && shift[s]) {
      throw ConfigError("shift enabled at stage " + std::to_string(s + 1) +
                        " but mode \"swin-free\" never shifts windows");
    }
    auto& st = cfg.stages[s];
    st.depth = depths[s];
    st.window = windows[s];
    st.num_heads = heads[s];
    const Index res = cfg.patch_size > 0 ? cfg.stage_resolution(s) : 0;
    const bool single_window = st.window == res;
    st.shift_pattern = alternating_shift(std::max<Index>(st.depth, 0), shift[s] && !single_window);
  }
  validate(cfg);
  return cfg;
}

}  // namespace

std::vector<bool> alternating_shift(Index depth, bool on) {
  std::vector<bool> out(static_cast<std::size_t>(depth), false);
  if (on) {
    for (std::size_t i = 1; i < out.size(); i += 2) out[i] = true;
  }
  return out;
}

void validate(const ModelConfig& cfg) {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (cfg.img_size < 1 || cfg.patch_size < 1) fail("img_size and patch_size must be positive");
  if (cfg.img_size % cfg.patch_size != 0) {
    fail("img_size " + std::to_string(cfg.img_size) + " not divisible by patch_size " +
         std::to_string(cfg.patch_size));
  }
  if (cfg.embed_dim < 1) fail("embed_dim must be positive");
  if (cfg.in_chans < 1) fail("in_chans must be positive");
  if (cfg.num_classes < 1) fail("num_classes must be positive");
  const Index base = cfg.img_size / cfg.patch_size;
  for (int s = 0; s < kNumStages; ++s) {
    const auto& st = cfg.stages[s];
    const std::string where = "stage " + std::to_string(s + 1) + ": ";
    if (base % (Index{1} << s) != 0 || cfg.stage_resolution(s) < 1) {
      fail(where + "patch grid " + std::to_string(base) + " cannot be halved " +
           std::to_string(s) + " time(s)");
    }
    const Index res = cfg.stage_resolution(s);
    if (st.depth < 0) fail(where + "depth must be non-negative");
    if (st.window < 1 || res % st.window != 0) {
      fail(where + "window size " + std::to_string(st.window) + " does not divide grid " +
           std::to_string(res));
    }
    if (st.num_heads < 1 || cfg.stage_channels(s) % st.num_heads != 0) {
      fail(where + "channels " + std::to_string(cfg.stage_channels(s)) +
           " not divisible by heads " + std::to_string(st.num_heads));
    }
    if (static_cast<Index>(st.shift_pattern.size()) != st.depth) {
      fail(where + "shift pattern length differs from depth");
    }
    if (cfg.mode == AttentionMode::size_varying &&
        std::any_of(st.shift_pattern.begin(), st.shift_pattern.end(), [](bool b) { return b; })) {
      fail(where + "shifted block in size-varying mode");
    }
  }
}

std::array<StageTrace, kNumStages> stage_trace(const ModelConfig& cfg) {
  std::array<StageTrace, kNumStages> out{};
  for (int s = 0; s < kNumStages; ++s) {
    const auto& st = cfg.stages[s];
    auto& t = out[s];
    t.resolution = cfg.stage_resolution(s);
    t.window = st.window;
    t.windows = (t.resolution / st.window) * (t.resolution / st.window);
    t.depth = st.depth;
    t.channels = cfg.stage_channels(s);
    t.num_heads = st.num_heads;
    for (std::size_t b = 0; b < st.shift_pattern.size(); ++b) {
      if (st.shift_pattern[b] &&
          effective_shift(st.window, true, t.resolution, t.resolution) > 0) {
        ++t.shifted_blocks;
      }
    }
  }
  return out;
}

ModelConfig expand_config(const nlohmann::ordered_json& doc) {
  try {
    return expand_impl(doc);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field has wrong type: ") + e.what());
  }
}

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["variant"] = cfg.variant;
  j["mode"] = cfg.mode == AttentionMode::size_varying ? "swin-free" : "swin";
  j["img_size"] = cfg.img_size;
  j["patch_size"] = cfg.patch_size;
  j["in_chans"] = cfg.in_chans;
  j["embed_dim"] = cfg.embed_dim;
  json depths = json::array(), heads = json::array(), windows = json::array(),
       shift = json::array();
  for (const auto& st : cfg.stages) {
    depths.push_back(st.depth);
    heads.push_back(st.num_heads);
    windows.push_back(st.window);
    shift.push_back(std::any_of(st.shift_pattern.begin(), st.shift_pattern.end(),
                                [](bool b) { return b; }));
  }
  j["depths"] = depths;
  j["heads"] = heads;
  j["window_sizes"] = windows;
  j["shift"] = shift;
  j["norm"] = to_string(cfg.norm);
  j["act"] = to_string(cfg.act);
  j["num_classes"] = cfg.num_classes;
  j["seed"] = cfg.seed;
  return j;
}

nlohmann::ordered_json preset_json(std::string_view name) {
  std::vector<std::string> tok;
  {
    std::string cur;
    for (char c : name) {
      if (c == '-') {
        tok.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    tok.push_back(cur);
  }
  auto bad = [&](const std::string& why) {
    throw ConfigError("unknown preset \"" + std::string(name) + "\": " + why);
  };
  std::size_t i = 0;
  if (tok.empty() || lower(tok[0]) != "swin") bad("must start with swin");
  ++i;
  json j;
  j["name"] = std::string(name);
  j["mode"] = "swin";
  if (i < tok.size() && lower(tok[i]) == "free") {
    j["mode"] = "swin-free";
    ++i;
  }
  if (i >= tok.size()) bad("missing variant T, S or B");
  {
    const std::string v = tok[i++];
    if (v != "T" && v != "S" && v != "B" && v != "t" && v != "s" && v != "b") {
      bad("variant must be T, S or B");
    }
    j["variant"] = std::string(1, static_cast<char>(std::toupper(v[0])));
  }
  for (; i < tok.size(); ++i) {
    const std::string t = lower(tok[i]);
    if (t == "br") {
      j["norm"] = "batch";
      j["act"] = "relu";
    } else if (t.rfind("dr", 0) == 0 && t.size() > 2 &&
               std::all_of(t.begin() + 2, t.end(), ::isdigit)) {
      j["dr"] = std::stoi(t.substr(2));
    } else if (t.rfind("shift", 0) == 0 && t.size() == 5 + kNumStages &&
               std::all_of(t.begin() + 5, t.end(), [](char c) { return c == '0' || c == '1'; })) {
      json s = json::array();
      for (int k = 0; k < kNumStages; ++k) s.push_back(t[5 + k] == '1');
      j["shift"] = s;
    } else if (t.rfind("win", 0) == 0) {
      json w = json::array();
      std::stringstream ss(t.substr(3));
      std::string part;
      while (std::getline(ss, part, 'x')) {
        if (part.empty() || !std::all_of(part.begin(), part.end(), ::isdigit)) {
          bad("window list must look like win7x14x14x7");
        }
        w.push_back(std::stoi(part));
      }
      if (w.size() != kNumStages) bad("window list needs four sizes");
      j["window_sizes"] = w;
    } else {
      bad("unrecognized suffix '" + tok[i] + "'");
    }
  }
  return j;
}

ModelConfig preset(std::string_view name) { return expand_config(preset_json(name)); }

std::vector<std::string> known_presets() {
  return {
      // model comparison
      "swin-B", "swin-B-BR", "swin-free-B", "swin-free-T", "swin-free-S", "swin-free-T-BR",
      "swin-free-S-BR", "swin-free-B-BR", "swin-free-B-DR10", "swin-free-B-DR12",
      "swin-free-B-DR14", "swin-free-B-DR16", "swin-free-B-BR-DR12", "swin-free-B-BR-DR14",
      "swin-free-B-BR-DR16",
      // per-stage shift on/off in the shifted baseline
      "swin-B-shift1111", "swin-B-shift0111", "swin-B-shift0011", "swin-B-shift0001",
      "swin-B-shift0010", "swin-B-shift0100", "swin-B-shift1000", "swin-B-shift0000",
      // per-stage window sizes without shifting
      "swin-free-B-win7x7x7x7", "swin-free-B-win7x7x14x7", "swin-free-B-win7x14x7x7",
      "swin-free-B-win14x7x7x7", "swin-free-B-win7x14x14x7", "swin-free-B-win14x7x14x7",
      "swin-free-B-win14x14x7x7", "swin-free-B-win14x14x14x7"};
}

std::string to_string(AttentionMode m) {
  return m == AttentionMode::size_varying ? "size_varying" : "shifted_baseline";
}
std::string to_string(NormKind n) { return n == NormKind::batch ? "batch" : "layer"; }
std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

}  // namespace swinfree
