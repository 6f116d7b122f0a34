#pragma once

#include "ikdl/classifier.hpp"

#include <filesystem>
#include <iosfwd>

namespace ikdl {

// Model container, little-endian:
//   "IKDM" | u32 version | u64 header length | header JSON
//   | matrices as (u64 rows, u64 cols, f64 column-major)
//   | u32 CRC32 of every preceding byte
// Linear models store one dictionary per class; kernel models store the
// coefficient matrix then the training signals of each class. Kernel Grams are
// recomputed on load.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const ClassifierModel& model, std::ostream& out);
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(std::istream& in);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace ikdl
