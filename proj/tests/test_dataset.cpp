#include "ikdl/config.hpp"
#include "ikdl/dataset.hpp"
#include "ikdl/error.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

using namespace ikdl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("ikdl_test_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

LabeledDataset sized_classes(const std::vector<int>& sizes) {
  std::vector<std::int64_t> ids;
  for (std::size_t c = 0; c < sizes.size(); ++c) ids.insert(ids.end(), static_cast<std::size_t>(sizes[c]), static_cast<std::int64_t>(c));
  Matrix signals(2, static_cast<Eigen::Index>(ids.size()));
  for (Eigen::Index l = 0; l < signals.cols(); ++l) signals.col(l) << static_cast<double>(l), 1.0;
  return make_dataset(signals, ids);
}

}  // namespace

TEST_CASE("load a small CSV dataset") {
  TempDir dir;
  write_text(dir / "y.csv", "1,2,3\n4,5,6\n");
  write_text(dir / "l.txt", "0\n0\n1\n");
  const auto ds = load_dataset(dir / "y.csv", dir / "l.txt", DataFormat::Csv);
  CHECK(ds.classes() == 2);
  CHECK(ds.size() == 3);
  CHECK(ds.signals(1, 2) == 6.0);
  CHECK(ds.labels == std::vector<int>{0, 0, 1});
  CHECK(ds.warnings.empty());
  const auto parts = ds.by_class();
  CHECK(parts[0].cols() == 2);
  CHECK(parts[1](0, 0) == 3.0);
}

TEST_CASE("label gaps are remapped with a warning") {
  TempDir dir;
  write_text(dir / "y.csv", "1,2,3\n");
  write_text(dir / "l.txt", "2\n0\n2\n");
  const auto ds = load_dataset(dir / "y.csv", dir / "l.txt", DataFormat::Csv);
  CHECK(ds.labels == std::vector<int>{1, 0, 1});
  CHECK(ds.class_ids == std::vector<std::int64_t>{0, 2});
  CHECK(ds.warnings.size() == 1);
}

TEST_CASE("CSV loader errors are located") {
  TempDir dir;
  write_text(dir / "l.txt", "0\n1\n");
  auto expect_error = [&](const std::string& text, const std::string& needle) {
    write_text(dir / "y.csv", text);
    try {
      load_dataset(dir / "y.csv", dir / "l.txt", DataFormat::Csv);
      FAIL("no error for " << text);
    } catch (const InputError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, std::string(e.what()));
    }
  };
  expect_error("1,2\n3,x\n", "y.csv:2: non-numeric entry 'x'");
  expect_error("1,2\n3,nan\n", "row 1, column 1");
  expect_error("1,2\n3\n", "expected 2 columns");
  expect_error("1,2\n\n3,4\n", "blank line");
  expect_error("", "empty");
  expect_error("1,2,3\n", "3 signals but 2 labels");

  write_text(dir / "y.csv", "1,2\n3,4\n\n\n");
  CHECK(load_dataset(dir / "y.csv", dir / "l.txt", DataFormat::Csv).size() == 2);
  write_text(dir / "bad.txt", "0\nz\n");
  CHECK_THROWS_AS(load_dataset(dir / "y.csv", dir / "bad.txt", DataFormat::Csv), InputError);
  CHECK_THROWS_AS(load_dataset(dir / "missing.csv", dir / "l.txt", DataFormat::Csv), InputError);
  CHECK_THROWS_AS(parse_data_format("hdf5"), InputError);
}

TEST_CASE("binary round-trip is bit-exact") {
  TempDir dir;
  Matrix m = oracle::random_matrix(7, 11, 3);
  m(0, 0) = 5e-324;
  m(1, 0) = -0.0;
  m(2, 0) = 1.7976931348623157e308;
  std::vector<std::int64_t> ids{4, 4, 9, 4, 9, 9, 1, 1, 4, 9, 1};
  const auto ds = make_dataset(m, ids);
  save_dataset(ds, dir / "d.bin", {}, DataFormat::Binary);
  const auto back = load_dataset(dir / "d.bin", {}, DataFormat::Binary);
  CHECK(bit_equal(back.signals, m));
  CHECK(back.labels == ds.labels);
  CHECK(back.class_ids == ds.class_ids);

  const std::string bytes = read_bytes(dir / "d.bin");
  CHECK(bytes.size() == 4 + 4 + 8 + 8 + 7 * 11 * 8 + 11 * 4);
  CHECK(bytes.substr(0, 4) == "IKDL");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[8]) == 7);
  CHECK(static_cast<unsigned char>(bytes[16]) == 11);

  write_text(dir / "t.bin", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_dataset(dir / "t.bin", {}, DataFormat::Binary), InputError);
  write_text(dir / "t.bin", bytes.substr(0, 100));
  CHECK_THROWS_AS(load_dataset(dir / "t.bin", {}, DataFormat::Binary), InputError);
  std::string wrong = bytes;
  wrong[4] = 2;
  write_text(dir / "t.bin", wrong);
  CHECK_THROWS_WITH_AS(load_dataset(dir / "t.bin", {}, DataFormat::Binary),
                       doctest::Contains("version"), InputError);
  std::string nan_file = bytes;
  const double nan = std::nan("");
  std::memcpy(&nan_file[24 + 8 * 3], &nan, 8);
  write_text(dir / "t.bin", nan_file);
  CHECK_THROWS_WITH_AS(load_dataset(dir / "t.bin", {}, DataFormat::Binary),
                       doctest::Contains("row 3, column 0"), InputError);
  CHECK_THROWS_AS(load_dataset(dir / "d.bin", dir / "l.txt", DataFormat::Binary), InputError);
}

TEST_CASE("CSV round-trip is value-exact") {
  TempDir dir;
  Matrix m = oracle::random_matrix(5, 6, 8);
  m(0, 0) = 0.1;
  m(1, 1) = 1e-300;
  m(2, 2) = -123456789.123456789;
  const auto ds = make_dataset(m, {0, 1, 0, 1, 2, 2});
  save_dataset(ds, dir / "y.csv", dir / "l.txt", DataFormat::Csv);
  const auto back = load_dataset(dir / "y.csv", dir / "l.txt", DataFormat::Csv);
  CHECK(back.signals == m);
  CHECK(back.labels == ds.labels);
  CHECK(bit_equal(load_signals(dir / "y.csv", DataFormat::Csv), m));
}

TEST_CASE("split examples") {
  SUBCASE("half of 64 per class") {
    const auto ds = sized_classes({64, 64, 64});
    const auto [tr, te] = split(ds, SplitSpec{0.5, 1});
    for (const auto& c : tr.by_class()) CHECK(c.cols() == 32);
    for (const auto& c : te.by_class()) CHECK(c.cols() == 32);
  }
  SUBCASE("20 of 26 per class") {
    const auto ds = sized_classes({26, 26});
    const auto [tr, te] = split(ds, SplitSpec{20, 1});
    for (const auto& c : tr.by_class()) CHECK(c.cols() == 20);
    for (const auto& c : te.by_class()) CHECK(c.cols() == 6);
  }
  SUBCASE("deterministic and column-preserving") {
    const auto ds = sized_classes({9, 13, 7});
    const auto a = split(ds, SplitSpec{0.6, 42});
    const auto b = split(ds, SplitSpec{0.6, 42});
    CHECK(a.first.signals == b.first.signals);
    CHECK(a.second.labels == b.second.labels);
    CHECK(split(ds, SplitSpec{0.6, 43}).first.signals != a.first.signals);
    // The first row holds the original column index, so the union must be a permutation.
    std::map<int, std::vector<double>> seen;
    for (const auto* part : {&a.first, &a.second})
      for (std::size_t l = 0; l < part->size(); ++l)
        seen[part->labels[l]].push_back(part->signals(0, static_cast<Eigen::Index>(l)));
    for (std::size_t c = 0; c < ds.size(); ++c)
      CHECK(std::count(seen[ds.labels[c]].begin(), seen[ds.labels[c]].end(), static_cast<double>(c)) == 1);
    CHECK(a.first.class_ids == ds.class_ids);
  }
  SUBCASE("too-small classes") {
    const auto ds = sized_classes({5, 1});
    CHECK_THROWS_AS(split(ds, SplitSpec{0.5, 0}), InputError);
    CHECK_THROWS_AS(split(sized_classes({5, 5}), SplitSpec{5, 0}), InputError);
    CHECK_THROWS_AS(split(sized_classes({5, 5}), SplitSpec{0, 0}), InputError);
    CHECK_THROWS_AS(split(sized_classes({5, 5}), SplitSpec{1.0, 0}), InputError);
  }
}

TEST_CASE("synthetic datasets") {
  SUBCASE("noise-free one-dimensional classes are collinear") {
    const auto ds = synth_dataset(SynthSpec{3, 10, 6, 1, 0.0, 2});
    for (const auto& c : ds.by_class())
      for (Eigen::Index l = 1; l < c.cols(); ++l)
        CHECK(std::abs(std::abs(c.col(l).dot(c.col(0))) - 1.0) <= 1e-12);
  }
  SUBCASE("shape, normalization and determinism") {
    const auto a = synth_dataset(SynthSpec{3, 60, 32, 4, 0.05, 9});
    CHECK(a.signals.rows() == 32);
    CHECK(a.size() == 180);
    CHECK(a.classes() == 3);
    for (Eigen::Index l = 0; l < a.signals.cols(); ++l) CHECK(std::abs(a.signals.col(l).norm() - 1.0) <= 1e-12);
    CHECK(synth_dataset(SynthSpec{3, 60, 32, 4, 0.05, 9}).signals == a.signals);
    CHECK(synth_dataset(SynthSpec{3, 60, 32, 4, 0.05, 10}).signals != a.signals);
  }
  SUBCASE("degenerate dimensions") {
    CHECK_THROWS_AS(synth_dataset(SynthSpec{3, 10, 4, 4, 0.0, 0}), InputError);
    CHECK_THROWS_AS(synth_dataset(SynthSpec{0, 10, 4, 1, 0.0, 0}), InputError);
    CHECK_THROWS_AS(synth_dataset(SynthSpec{2, 10, 4, 1, -1.0, 0}), InputError);
  }
}

TEST_CASE("run configuration") {
  SUBCASE("paper protocol is accepted verbatim") {
    const auto doc = nlohmann::json::parse(R"({
      "dataset": {"signals": "yaleb.bin"},
      "split": {"per_class_train": 0.5, "seed": 3},
      "train": {"n_atoms": 40, "sparsity": 20, "iterations": 10, "gamma": 0.1,
                "mode": "UAKSVD", "kernel": {"kind": "rbf", "sigma": 4}}
    })");
    const auto cfg = parse_run_config(doc, "/data");
    CHECK(cfg.train.n_atoms == 40);
    CHECK(cfg.train.sparsity == 20);
    CHECK(cfg.train.iterations == 10);
    CHECK(cfg.train.gamma == 0.1);
    REQUIRE(cfg.train.kernel);
    CHECK(*cfg.train.kernel == KernelSpec::rbf(4.0));
    CHECK(cfg.dataset->signals == fs::path("/data/yaleb.bin"));
    CHECK(cfg.dataset->format == DataFormat::Binary);
    CHECK(std::get<double>(cfg.split.per_class_train) == 0.5);
  }
  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_WITH_AS(parse_run_config(nlohmann::json::parse(R"({"train": {"Gamma": 1}})")),
                         doctest::Contains("Gamma"), InputError);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"trian": {}})")), InputError);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"train": {"kernel": {"kind": "rbf", "s": 1}}})")),
                    InputError);
  }
  SUBCASE("type and value errors") {
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"train": {"n_atoms": "40"}})")), InputError);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"train": {"sparsity": 50}})")), InputError);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"train": {"seed": -1}})")), InputError);
    CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"dataset": {"signals": "a"}, "synth": {}})")),
                    InputError);
  }
  SUBCASE("JSON round-trip") {
    RunConfig cfg;
    cfg.synth = SynthSpec{};
    cfg.split.per_class_train = 60;
    cfg.train.kernel = KernelSpec::polynomial(1.0, 3);
    cfg.train.mode = UpdateMode::AKSVD;
    cfg.train.seed = 123456789012345ULL;
    const auto back = parse_run_config(to_json(cfg));
    CHECK(back.train.kernel == cfg.train.kernel);
    CHECK(back.train.mode == UpdateMode::AKSVD);
    CHECK(back.train.seed == cfg.train.seed);
    CHECK(std::get<int>(back.split.per_class_train) == 60);
    CHECK(back.synth->dim == 32);
    CHECK_FALSE(parse_run_config(nlohmann::json::parse(R"({"train": {"kernel": null}})")).train.kernel);
  }
  SUBCASE("load from file") {
    TempDir dir;
    write_text(dir / "c.json", R"({"dataset": {"signals": "y.csv", "labels": "l.txt"}})");
    const auto cfg = load_run_config(dir / "c.json");
    CHECK(cfg.dataset->format == DataFormat::Csv);
    CHECK(cfg.dataset->labels == dir / "l.txt");
    write_text(dir / "bad.json", "{");
    CHECK_THROWS_AS(load_run_config(dir / "bad.json"), InputError);
    CHECK_THROWS_AS(load_run_config(dir / "none.json"), InputError);
  }
}
