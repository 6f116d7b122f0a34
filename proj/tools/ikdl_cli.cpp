#include "commands.hpp"

#include "ikdl/error.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#ifndef IKDL_VERSION
#define IKDL_VERSION "unknown"
#endif

namespace {

// Errors go to stderr as a single JSON line so scripts can parse them.
int fail(const char* kind, const std::string& message, int code) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

void add_data_options(CLI::App* sub, ikdl::cli::DataOptions& d) {
  sub->add_option("--data", d.signals, "Signals file (.csv or .bin)");
  sub->add_option("--labels", d.labels, "Labels file for CSV signals");
  sub->add_option("--format", d.format, "csv or binary (default: from the extension)");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ikdl::cli;

  CLI::App app{"Incoherent (kernel) dictionary learning with residual classification", "ikdl"};
  app.set_version_flag("--version", std::string(IKDL_VERSION));
  app.require_subcommand(1);
  // Global options may also be given after the subcommand.
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Run config (JSON), or a run manifest");
  auto* seed_opt = app.add_option("--seed", seed, "Override the training and split seeds");
  app.add_option("--seeds", g.seeds, "Number of consecutive seeds (bench)")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train a model from --config");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on test data");
  eval_cmd->add_option("--model", eval.model, "Model file")->required();
  eval_cmd->add_option("--manifest", eval.manifest, "Training manifest (default: next to the model)");
  add_data_options(eval_cmd, eval.data);

  ClassifyOptions cls;
  auto* classify_cmd = app.add_subcommand("classify", "Classify signals, printing CSV to stdout");
  classify_cmd->add_option("--model", cls.model, "Model file")->required();
  classify_cmd->add_option("--vector", cls.vector, "A single comma separated signal");
  add_data_options(classify_cmd, cls.data);

  HeatmapOptions heat;
  auto* heatmap_cmd = app.add_subcommand("heatmap", "Write a residual or dictionary-coherence matrix");
  heatmap_cmd->add_option("--model", heat.model, "Model file")->required();
  heatmap_cmd->add_option("--which", heat.which, "reconstruction or discriminative")
      ->check(CLI::IsMember({"reconstruction", "discriminative"}));
  add_data_options(heatmap_cmd, heat.data);

  SynthOptions syn;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a union-of-subspaces dataset");
  synth_cmd->add_option("--classes", syn.spec.classes)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--per-class", syn.spec.per_class)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", syn.spec.dim)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--subspace-dim", syn.spec.subspace_dim)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", syn.spec.noise_sigma)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--format", syn.format)->check(CLI::IsMember({"csv", "binary"}));

  auto* bench = app.add_subcommand("bench", "Run the benchmark grid from --config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return fail("usage", e.what(), 2);
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*train) return cmd_train(g);
    if (*eval_cmd) return cmd_eval(g, eval);
    if (*classify_cmd) return cmd_classify(g, cls);
    if (*heatmap_cmd) return cmd_heatmap(g, heat);
    if (*synth_cmd) return cmd_synth(g, syn);
    if (*bench) return cmd_bench(g);
  } catch (const ikdl::InputError& e) {
    return fail("input", e.what(), 2);
  } catch (const ikdl::NumericalError& e) {
    return fail("numerical", e.what(), 3);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("input", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return fail("usage", "no command given", 2);
}
