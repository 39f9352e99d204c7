#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "swinfree/config.hpp"

namespace swinfree::cli {

enum ExitCode : int {
  kOk = 0,
  kPropertyFailure = 1,
  kUsageError = 2,
  kIoError = 3,
};

struct Options {
  std::vector<std::string> configs;  // ConfigFile paths
  std::vector<std::string> presets;  // preset names
  std::optional<std::uint64_t> seed;
  int runs = 3;
  int warmup = 1;
  int threads = 1;
  int batch = 1;
  bool analytic = false;  // bench: skip timing
  std::string format;     // empty: command default
  std::string weights;
  std::string input;
  std::string output;
  int topk = 5;
  std::string scope = "quick";
};

/// Presets first, then config files. A config file given together with a
/// single preset overrides that preset's fields.
std::vector<ModelConfig> resolve_configs(const Options& opts);

std::string describe_text(const ModelConfig& cfg);
std::string describe_json(const ModelConfig& cfg);

int describe(const Options& opts, std::ostream& out, std::ostream& err);
int verify(const Options& opts, std::ostream& out, std::ostream& err);
int bench(const Options& opts, std::ostream& out, std::ostream& err);
int infer(const Options& opts, std::ostream& out, std::ostream& err);

}  // namespace swinfree::cli
