#pragma once

#include "ikdl/dataset.hpp"
#include "ikdl/dict_learning.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ikdl {

struct DatasetRef {
  std::string name;
  std::filesystem::path signals;
  std::filesystem::path labels;  // empty for the binary format
  DataFormat format = DataFormat::Binary;
};

// Cross product evaluated by `bench`. Empty lists fall back to the base config.
struct BenchGrid {
  std::vector<UpdateMode> modes;
  std::vector<KernelKind> kernels;
  std::vector<double> gamma;
  std::vector<double> sigma;
  std::vector<double> alpha;
  std::vector<int> beta;
};

// One JSON document: {"dataset"|"synth", "split", "train", "grid"}.
// Unknown keys anywhere are an error.
struct RunConfig {
  std::optional<DatasetRef> dataset;
  std::optional<SynthSpec> synth;
  SplitSpec split;
  TrainConfig train;
  std::optional<BenchGrid> grid;
};

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const nlohmann::json& j);
// `threads` is omitted: it never changes results.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace ikdl
