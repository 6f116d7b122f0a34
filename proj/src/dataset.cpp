#include "ikdl/dataset.hpp"

#include "ikdl/error.hpp"
#include "ikdl/rng.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ikdl {

namespace fs = std::filesystem;

namespace {

std::string where(const fs::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  const auto u = static_cast<U>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw InputError("binary file truncated");
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<std::make_unsigned_t<T>>(bytes[i]) << (8 * i);
  return static_cast<T>(u);
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void check_finite(const Matrix& m, const std::string& source) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      if (!std::isfinite(m(r, c)))
        throw InputError(source + ": non-finite value at row " + std::to_string(r) + ", column " +
                         std::to_string(c));
}

}  // namespace

std::vector<Matrix> LabeledDataset::by_class() const {
  std::vector<std::vector<Eigen::Index>> cols(classes());
  for (std::size_t l = 0; l < labels.size(); ++l)
    cols[static_cast<std::size_t>(labels[l])].push_back(static_cast<Eigen::Index>(l));
  std::vector<Matrix> out;
  for (const auto& idx : cols) {
    Matrix m(signals.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t t = 0; t < idx.size(); ++t) m.col(static_cast<Eigen::Index>(t)) = signals.col(idx[t]);
    out.push_back(std::move(m));
  }
  return out;
}

void LabeledDataset::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != signals.cols())
    throw InputError("dataset has " + std::to_string(signals.cols()) + " signals but " +
                     std::to_string(labels.size()) + " labels");
  std::vector<char> seen(classes(), 0);
  for (int c : labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= classes()) throw InputError("label out of range");
    seen[static_cast<std::size_t>(c)] = 1;
  }
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c]) throw InputError("class " + std::to_string(c) + " has no signals");
}

LabeledDataset make_dataset(Matrix signals, const std::vector<std::int64_t>& raw_ids) {
  if (static_cast<Eigen::Index>(raw_ids.size()) != signals.cols())
    throw InputError("dataset has " + std::to_string(signals.cols()) + " signals but " +
                     std::to_string(raw_ids.size()) + " labels");
  LabeledDataset ds;
  ds.signals = std::move(signals);
  std::map<std::int64_t, int> remap;
  for (auto id : raw_ids) remap.emplace(id, 0);
  int next = 0;
  bool contiguous = true;
  for (auto& [id, idx] : remap) {
    if (id != next) contiguous = false;
    idx = next++;
    ds.class_ids.push_back(id);
  }
  if (!contiguous)
    ds.warnings.push_back("labels are not contiguous from 0; remapped " +
                          std::to_string(remap.size()) + " ids to [0, " +
                          std::to_string(remap.size()) + ")");
  ds.labels.reserve(raw_ids.size());
  for (auto id : raw_ids) ds.labels.push_back(remap.at(id));
  ds.validate();
  return ds;
}

DataFormat parse_data_format(const std::string& name) {
  if (name == "csv") return DataFormat::Csv;
  if (name == "binary" || name == "bin") return DataFormat::Binary;
  throw InputError("unknown data format '" + name + "'");
}

DataFormat guess_data_format(const fs::path& path) {
  return path.extension() == ".csv" ? DataFormat::Csv : DataFormat::Binary;
}

Matrix read_csv_matrix(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) {
      // Only trailing blank lines are tolerated.
      std::string rest;
      while (std::getline(in, rest))
        if (!trim(rest).empty()) throw InputError(where(path, line_no) + ": blank line inside data");
      break;
    }
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const auto comma = body.find(',', pos);
      const auto field = trim(body.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                              : comma - pos));
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
        throw InputError(where(path, line_no) + ": non-numeric entry '" + std::string(field) +
                         "' in column " + std::to_string(row.size()));
      if (!std::isfinite(v))
        throw InputError(where(path, line_no) + ": non-finite value at row " +
                         std::to_string(rows.size()) + ", column " + std::to_string(row.size()));
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows[0].size())
      throw InputError(where(path, line_no) + ": expected " + std::to_string(rows[0].size()) +
                       " columns, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(path.string() + ": empty matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

void write_csv_matrix(const fs::path& path, const Matrix& m) {
  auto out = open_out(path);
  char buf[64];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      const auto res = std::to_chars(buf, buf + sizeof(buf), m(r, c), std::chars_format::general, 17);
      out.write(buf, res.ptr - buf);
    }
    out << '\n';
  }
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::vector<std::int64_t> read_labels(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::int64_t> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
    if (ec != std::errc() || ptr != body.data() + body.size())
      throw InputError(where(path, line_no) + ": invalid label '" + std::string(body) + "'");
    ids.push_back(v);
  }
  return ids;
}

void write_labels(const fs::path& path, const std::vector<std::int64_t>& ids) {
  auto out = open_out(path);
  for (auto id : ids) out << id << '\n';
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void write_binary_matrix(std::ostream& out, const Matrix& m) {
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) put_f64(out, m(r, c));
}

Matrix read_binary_matrix(std::istream& in) {
  const auto rows = get_le<std::uint64_t>(in);
  const auto cols = get_le<std::uint64_t>(in);
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 31;
  if (rows > kLimit || cols > kLimit || (rows && cols > (std::uint64_t{1} << 34) / rows))
    throw InputError("binary matrix dimensions are implausible");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = get_f64(in);
  return m;
}

namespace {

void write_binary_header(std::ostream& out) {
  out.write("IKDL", 4);
  put_le<std::uint32_t>(out, kBinaryFormatVersion);
}

void read_binary_header(std::istream& in, const fs::path& path) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "IKDL", 4) != 0)
    throw InputError(path.string() + ": not an IKDL binary file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kBinaryFormatVersion)
    throw InputError(path.string() + ": unsupported format version " + std::to_string(version));
}

}  // namespace

LabeledDataset load_dataset(const fs::path& signals_path, const fs::path& labels_path,
                            DataFormat format) {
  if (format == DataFormat::Csv) {
    if (labels_path.empty()) throw InputError("CSV datasets need a labels file");
    Matrix signals = read_csv_matrix(signals_path);
    return make_dataset(std::move(signals), read_labels(labels_path));
  }
  if (!labels_path.empty())
    throw InputError("binary datasets carry their labels; do not pass a labels file");
  auto in = open_in(signals_path, std::ios::binary);
  read_binary_header(in, signals_path);
  Matrix signals;
  try {
    signals = read_binary_matrix(in);
  } catch (const InputError& e) {
    throw InputError(signals_path.string() + ": " + e.what());
  }
  check_finite(signals, signals_path.string());
  std::vector<std::int64_t> ids(static_cast<std::size_t>(signals.cols()));
  for (auto& id : ids) {
    try {
      id = get_le<std::uint32_t>(in);
    } catch (const InputError&) {
      throw InputError(signals_path.string() + ": labels missing or truncated");
    }
  }
  return make_dataset(std::move(signals), ids);
}

void save_dataset(const LabeledDataset& ds, const fs::path& signals_path,
                  const fs::path& labels_path, DataFormat format) {
  ds.validate();
  std::vector<std::int64_t> ids;
  for (int c : ds.labels) ids.push_back(ds.class_ids[static_cast<std::size_t>(c)]);
  if (format == DataFormat::Csv) {
    if (labels_path.empty()) throw InputError("CSV datasets need a labels file");
    write_csv_matrix(signals_path, ds.signals);
    write_labels(labels_path, ids);
    return;
  }
  auto out = open_out(signals_path, std::ios::binary);
  write_binary_header(out);
  write_binary_matrix(out, ds.signals);
  for (auto id : ids) {
    if (id < 0 || id > std::numeric_limits<std::uint32_t>::max())
      throw InputError("label id does not fit the binary u32 label field");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id));
  }
  if (!out) throw InputError("failed writing '" + signals_path.string() + "'");
}

Matrix load_signals(const fs::path& path, DataFormat format) {
  if (format == DataFormat::Csv) return read_csv_matrix(path);
  auto in = open_in(path, std::ios::binary);
  read_binary_header(in, path);
  Matrix m = read_binary_matrix(in);
  check_finite(m, path.string());
  return m;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, const SplitSpec& spec) {
  ds.validate();
  std::vector<std::vector<std::size_t>> members(ds.classes());
  for (std::size_t l = 0; l < ds.labels.size(); ++l)
    members[static_cast<std::size_t>(ds.labels[l])].push_back(l);

  std::vector<std::size_t> train_cols, test_cols;
  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto size = members[c].size();
    std::size_t n_train = 0;
    if (std::holds_alternative<int>(spec.per_class_train)) {
      const int k = std::get<int>(spec.per_class_train);
      n_train = k < 0 ? 0 : static_cast<std::size_t>(k);
    } else {
      const double f = std::get<double>(spec.per_class_train);
      if (!(f > 0.0 && f < 1.0)) throw InputError("split fraction must be in (0, 1)");
      n_train = static_cast<std::size_t>(std::llround(f * static_cast<double>(size)));
    }
    if (n_train < 1 || n_train >= size)
      throw InputError("class " + std::to_string(ds.class_ids[c]) + " has " + std::to_string(size) +
                       " signals; cannot take " + std::to_string(n_train) +
                       " for training and leave a test signal");
    Rng rng(derive_seed(spec.seed, c));
    auto order = members[c];
    rng.shuffle(order);
    train_cols.insert(train_cols.end(), order.begin(), order.begin() + static_cast<long>(n_train));
    test_cols.insert(test_cols.end(), order.begin() + static_cast<long>(n_train), order.end());
  }

  auto take = [&](const std::vector<std::size_t>& cols) {
    LabeledDataset out;
    out.signals.resize(ds.signals.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t t = 0; t < cols.size(); ++t) {
      out.signals.col(static_cast<Eigen::Index>(t)) = ds.signals.col(static_cast<Eigen::Index>(cols[t]));
      out.labels.push_back(ds.labels[cols[t]]);
    }
    out.class_ids = ds.class_ids;
    return out;
  };
  return {take(train_cols), take(test_cols)};
}

LabeledDataset synth_dataset(const SynthSpec& spec) {
  if (spec.classes < 1 || spec.per_class < 1 || spec.dim < 1)
    throw InputError("synth: classes, per_class and dim must be >= 1");
  if (spec.subspace_dim < 1 || spec.subspace_dim >= spec.dim)
    throw InputError("synth: subspace_dim must be in [1, dim)");
  if (!(spec.noise_sigma >= 0.0)) throw InputError("synth: noise_sigma must be >= 0");

  Rng rng(spec.seed);
  const Eigen::Index m = spec.dim, d = spec.subspace_dim, per = spec.per_class;
  Matrix signals(m, static_cast<Eigen::Index>(spec.classes) * per);
  std::vector<std::int64_t> ids;
  for (int c = 0; c < spec.classes; ++c) {
    Matrix g(m, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index r = 0; r < m; ++r) g(r, j) = rng.normal();
    const Matrix basis = Eigen::HouseholderQR<Matrix>(g).householderQ() * Matrix::Identity(m, d);
    for (Eigen::Index l = 0; l < per; ++l) {
      Vector coeff(d);
      for (Eigen::Index j = 0; j < d; ++j) coeff(j) = rng.normal();
      Vector y = basis * coeff;
      if (spec.noise_sigma > 0.0)
        for (Eigen::Index r = 0; r < m; ++r) y(r) += spec.noise_sigma * rng.normal();
      const double nrm = y.norm();
      if (nrm > 0.0) y /= nrm;
      signals.col(c * per + l) = y;
      ids.push_back(c);
    }
  }
  return make_dataset(std::move(signals), ids);
}

}  // namespace ikdl
