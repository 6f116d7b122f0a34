#pragma once

#include "ikdl/kernel.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace ikdl {

// Signals stored one per column; labels[l] in [0, C) is the class of column l.
struct LabeledDataset {
  Matrix signals;
  std::vector<int> labels;
  // Original id of each contiguous class index.
  std::vector<std::int64_t> class_ids;
  // Non-fatal notes produced while loading (e.g. label remapping).
  std::vector<std::string> warnings;

  std::size_t classes() const { return class_ids.size(); }
  std::size_t size() const { return labels.size(); }
  // Columns of each class in dataset order.
  std::vector<Matrix> by_class() const;
  void validate() const;
};

// Builds a dataset from raw ids, remapping them to contiguous indices in
// increasing id order.
LabeledDataset make_dataset(Matrix signals, const std::vector<std::int64_t>& raw_ids);

enum class DataFormat { Csv, Binary };
DataFormat parse_data_format(const std::string& name);
DataFormat guess_data_format(const std::filesystem::path& path);

// CSV: one signal per column, comma separated, no header, optional final newline.
Matrix read_csv_matrix(const std::filesystem::path& path);
// Values are written with 17 significant digits so they re-parse exactly.
void write_csv_matrix(const std::filesystem::path& path, const Matrix& m);
std::vector<std::int64_t> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<std::int64_t>& ids);

// Binary layout, all little-endian:
//   "IKDL" | u32 version | u64 m | u64 N | m*N f64 column-major | [N u32 labels]
inline constexpr std::uint32_t kBinaryFormatVersion = 1;
void write_binary_matrix(std::ostream& out, const Matrix& m);
Matrix read_binary_matrix(std::istream& in);

// For the binary format the labels live in the signals file and
// `labels_path` must be empty.
LabeledDataset load_dataset(const std::filesystem::path& signals_path,
                            const std::filesystem::path& labels_path, DataFormat format);
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& signals_path,
                  const std::filesystem::path& labels_path, DataFormat format);
// Signals without labels, either format.
Matrix load_signals(const std::filesystem::path& path, DataFormat format);

struct SplitSpec {
  // Absolute count per class, or a fraction of each class.
  std::variant<int, double> per_class_train = 0.5;
  std::uint64_t seed = 0;
};

// Seeded shuffle inside each class; the first share goes to training.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, const SplitSpec& spec);

struct SynthSpec {
  int classes = 3;
  int per_class = 80;
  int dim = 32;
  int subspace_dim = 4;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
};

// Union of random subspaces: class i draws Gaussian coefficients on its own
// orthonormal basis, adds Gaussian noise and normalizes each column.
LabeledDataset synth_dataset(const SynthSpec& spec);

}  // namespace ikdl
