// swinfree: describe, verify, benchmark and run windowed vision transformers.

#include <CLI11.hpp>

#include <iostream>

#include "swinfree/commands.hpp"

int main(int argc, char** argv) {
  namespace cli = swinfree::cli;
  CLI::App app{"Shifted-window and size-varying-window vision transformers"};
  app.require_subcommand(1);

  cli::Options opts;
  std::uint64_t seed = 0;

  auto model_flags = [&](CLI::App* sub) {
    sub->add_option("--config", opts.configs, "ConfigFile path (repeatable)");
    sub->add_option("--preset", opts.presets, "Preset name, e.g. swin-free-B-DR14 (repeatable)");
    sub->add_option("--seed", seed, "Weight / input seed");
  };

  auto* describe = app.add_subcommand("describe", "Print expanded config, stage trace and counts");
  model_flags(describe);
  describe->add_option("--format", opts.format, "table or json");

  auto* verify = app.add_subcommand("verify", "Run the property suite");
  verify->add_option("--seed", seed, "Base seed");
  verify->add_option("--scope", opts.scope, "quick or full")->check(CLI::IsMember({"quick", "full"}));
  verify->add_option("--format", opts.format, "table or json");
  verify->add_option("--output", opts.output, "Also write the JSON summary here");

  auto* bench = app.add_subcommand("bench", "Analytic counts and wall-clock forward timing");
  model_flags(bench);
  bench->add_option("--runs", opts.runs, "Timed runs (>= 3)");
  bench->add_option("--warmup", opts.warmup, "Warmup runs (>= 1)");
  bench->add_option("--threads", opts.threads, "Math threads (needs an OpenMP build)");
  bench->add_option("--batch", opts.batch, "Images per forward pass");
  bench->add_flag("--analytic", opts.analytic, "Skip timing, report counts only");
  bench->add_option("--format", opts.format, "json, csv or table");
  bench->add_option("--output", opts.output, "Also write the report here");

  auto* infer = app.add_subcommand("infer", "Classify a raw f32 BCHW tensor blob");
  model_flags(infer);
  infer->add_option("--weights", opts.weights, "Weight archive (default: random from --seed)");
  infer->add_option("--input", opts.input, "Input tensor blob")->required();
  infer->add_option("--output", opts.output, "Write logits blob here");
  infer->add_option("--topk", opts.topk, "Classes to print per image");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kUsageError;
  }
  for (auto* sub : {describe, verify, bench, infer}) {
    if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;
  }

  if (describe->parsed()) return cli::describe(opts, std::cout, std::cerr);
  if (verify->parsed()) return cli::verify(opts, std::cout, std::cerr);
  if (bench->parsed()) return cli::bench(opts, std::cout, std::cerr);
  return cli::infer(opts, std::cout, std::cerr);
}
