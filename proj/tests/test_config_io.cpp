#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "swinfree/config.hpp"
#include "swinfree/io.hpp"

using namespace swinfree;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "swinfree_test_config_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

ModelConfig small_config() {
  return expand_config(json{{"name", "small"},
                            {"embed_dim", 8},
                            {"depths", {1, 1, 2, 1}},
                            {"heads", {2, 2, 2, 2}},
                            {"num_classes", 7},
                            {"seed", 3}});
}

}  // namespace

TEST_CASE("preset keys expand and explicit fields win") {
  const auto a = expand_config(json{{"variant", "B"}, {"mode", "swin-free"}, {"dr", 12}});
  CHECK(a.embed_dim == 128);
  CHECK(a.stages[2].depth == 12);
  CHECK(a.stages[1].window == 14);
  CHECK(a.stages[2].shift_pattern == std::vector<bool>(12, false));

  const auto b = expand_config(
      json{{"variant", "B"}, {"mode", "swin-free"}, {"window_sizes", {7, 7, 14, 7}}, {"embed_dim", 96}});
  CHECK(b.embed_dim == 96);
  CHECK(b.stages[1].window == 7);
  CHECK(b.stages[0].depth == 2);
}

TEST_CASE("per-stage shift flags select the alternating pattern") {
  const auto c = expand_config(json{{"variant", "B"}, {"shift", {false, true, false, true}}});
  CHECK(c.stages[0].shift_pattern == std::vector<bool>{false, false});
  CHECK(c.stages[1].shift_pattern == std::vector<bool>{false, true});
  // Stage 4 is one window, so the flag has nothing to shift.
  CHECK(c.stages[3].shift_pattern == std::vector<bool>{false, false});
  CHECK(alternating_shift(5, true) == std::vector<bool>{false, true, false, true, false});
  CHECK(alternating_shift(3, false) == std::vector<bool>{false, false, false});
}

TEST_CASE("expansion is idempotent") {
  for (const auto& name : known_presets()) {
    const auto cfg = preset(name);
    const auto explicit_json = config_to_json(cfg);
    const auto again = expand_config(explicit_json);
    CHECK(again == cfg);
    CHECK(config_to_json(again).dump() == explicit_json.dump());
  }
}

TEST_CASE("invalid configs name the violated constraint") {
  auto message = [](const json& j) {
    try {
      expand_config(j);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message(json{{"variant", "B"}, {"window_sizes", {7, 7, 7, 5}}}).find("stage 4") !=
        std::string::npos);
  CHECK(message(json{{"variant", "B"}, {"mode", "swin-free"}, {"shift", {true, false, false, false}}})
            .find("swin-free") != std::string::npos);
  CHECK(message(json{{"variant", "Q"}}).find("variant") != std::string::npos);
  CHECK(message(json{{"variant", "B"}, {"colour", 1}}).find("colour") != std::string::npos);
  CHECK(message(json{{"embed_dim", 8}}).find("depths") != std::string::npos);
  CHECK(message(json{{"variant", "T"}, {"heads", {3, 6, 12}}}).find("heads") != std::string::npos);
  CHECK(message(json{{"variant", "T"}, {"img_size", "big"}}) != "no error");
  CHECK(message(json{{"variant", "T"}, {"img_size", 200}}) != "no error");
}

TEST_CASE("every table row resolves to a buildable config") {
  for (const auto& name : known_presets()) {
    INFO(name);
    CHECK_NOTHROW(validate(preset(name)));
    CHECK_NOTHROW(allocate_model<float>(preset(name)));
  }
  CHECK(known_presets().size() >= 30u);
}

TEST_CASE("weights round trip") {
  const auto cfg = small_config();
  const auto params = build_model<float>(cfg);
  const auto path = scratch("small.bin");
  save_weights(params, path);
  CHECK(fs::file_size(path) == 4 * static_cast<std::uintmax_t>(count_params(cfg)));
  const auto back = load_weights(cfg, path);
  bool same = true;
  std::vector<std::span<const float>> a, b;
  visit_params(params, [&](const std::string&, const Shape&, std::span<const float> d, ParamRole) { a.push_back(d); });
  visit_params(back, [&](const std::string&, const Shape&, std::span<const float> d, ParamRole) { b.push_back(d); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) same = same && std::equal(a[i].begin(), a[i].end(), b[i].begin());
  CHECK(same);

  const json manifest = json::parse(slurp(sidecar_path(path)));
  CHECK(manifest["tensors"][0]["name"] == "patch_embed.proj.weight");
  CHECK(manifest["tensors"][0]["offset"] == 0);
  CHECK(manifest["total_length"] == fs::file_size(path));
}

TEST_CASE("corrupt weight archives are format errors") {
  const auto cfg = small_config();
  const auto path = scratch("corrupt.bin");
  save_weights(build_model<float>(cfg), path);
  const std::string data = slurp(path), side = slurp(sidecar_path(path));

  SUBCASE("truncated data") {
    spit(path, data.substr(0, data.size() - 4));
    CHECK_THROWS_AS(load_weights(cfg, path), FormatError);
  }
  SUBCASE("wrong shape in manifest") {
    auto j = json::parse(side);
    j["tensors"][3]["shape"] = {1, 2};
    spit(sidecar_path(path), j.dump());
    CHECK_THROWS_AS(load_weights(cfg, path), FormatError);
  }
  SUBCASE("renamed tensor") {
    auto j = json::parse(side);
    j["tensors"][1]["name"] = "bogus";
    spit(sidecar_path(path), j.dump());
    CHECK_THROWS_AS(load_weights(cfg, path), FormatError);
  }
  SUBCASE("not JSON") {
    spit(sidecar_path(path), "{ nope");
    CHECK_THROWS_AS(load_weights(cfg, path), FormatError);
  }
  SUBCASE("config does not match the archive") {
    auto other = cfg;
    other.num_classes = 8;
    CHECK_THROWS_AS(load_weights(other, path), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_weights(cfg, scratch("absent.bin")), FormatError);
  }
}

TEST_CASE("tensor blobs") {
  Rng rng(4);
  const auto t = random_uniform<float>(Shape{2, 3, 4, 5}, rng);
  const auto path = scratch("img.f32");
  write_blob(path, t);
  CHECK(fs::file_size(path) == 4u * 120u);
  const auto side = json::parse(slurp(sidecar_path(path)));
  CHECK(side["shape"] == json({2, 3, 4, 5}));
  CHECK(side["dtype"] == "f32");
  CHECK(side["layout"] == "BCHW");
  const auto back = read_blob(path);
  CHECK(back.tensor == t);
  CHECK(back.layout == "BCHW");

  // First value is stored little-endian.
  const std::string bytes = slurp(path);
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(bytes[i]);
  float first;
  std::memcpy(&first, &bits, 4);
  CHECK(first == t.data()[0]);

  spit(path, bytes.substr(0, 8));
  CHECK_THROWS_AS(read_blob(path), FormatError);
  spit(sidecar_path(path), R"({"shape":[2],"dtype":"f64","layout":"BCHW"})");
  CHECK_THROWS_AS(read_blob(path), FormatError);
}
