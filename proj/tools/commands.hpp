#pragma once

#include "ikdl/config.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace ikdl::cli {

struct GlobalOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  int seeds = 1;
  std::filesystem::path out = ".";
  int threads = 1;
};

// Where a command reads signals from when it does not come from the config.
struct DataOptions {
  std::filesystem::path signals;
  std::filesystem::path labels;
  std::string format;  // empty: guess from the extension
};

struct TrainOptions {};

struct EvalOptions {
  std::filesystem::path model;
  DataOptions data;
  std::filesystem::path manifest;  // empty: manifest.json next to the model
};

struct ClassifyOptions {
  std::filesystem::path model;
  DataOptions data;
  std::string vector;  // comma separated single signal
};

struct HeatmapOptions {
  std::filesystem::path model;
  DataOptions data;
  std::string which = "reconstruction";
};

struct SynthOptions {
  SynthSpec spec;
  std::string format = "binary";
};

int cmd_train(const GlobalOptions& g);
int cmd_eval(const GlobalOptions& g, const EvalOptions& o);
int cmd_classify(const GlobalOptions& g, const ClassifyOptions& o);
int cmd_heatmap(const GlobalOptions& g, const HeatmapOptions& o);
int cmd_synth(const GlobalOptions& g, const SynthOptions& o);
int cmd_bench(const GlobalOptions& g);

// Log levels from IKDL_LOG: error, warn (default), info, debug.
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace ikdl::cli
