#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// Fresh scratch directory per test, removed afterwards.
struct Workdir {
  fs::path dir;
  explicit Workdir(const std::string& name) : dir(fs::temp_directory_path() / ("ikdl_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  fs::path operator/(const std::string& s) const { return dir / s; }

  Run run(const std::string& args) const {
    const std::string cmd = std::string("cd '") + dir.string() + "' && '" IKDL_CLI_PATH "' " + args +
                            " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir / "stdout.txt");
    r.err = slurp(dir / "stderr.txt");
    fs::remove(dir / "stdout.txt");
    fs::remove(dir / "stderr.txt");
    return r;
  }
};

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> words;
  std::istringstream in(line);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

// Three 1-D classes without noise: a one-atom dictionary per class is exact.
const char* kToyConfig = R"({
  "synth": {"classes": 3, "per_class": 20, "dim": 8, "subspace_dim": 1, "noise_sigma": 0.0, "seed": 2},
  "split": {"per_class_train": 10, "seed": 1},
  "train": {"n_atoms": 1, "sparsity": 1, "iterations": 3, "gamma": 0.0, "mode": "AKSVD"}
})";

const char* kSynthConfig = R"({
  "synth": {"classes": 3, "per_class": 30, "dim": 16, "subspace_dim": 3, "noise_sigma": 0.05, "seed": 4},
  "split": {"per_class_train": 20, "seed": 1},
  "train": {"n_atoms": 3, "sparsity": 2, "iterations": 4, "gamma": 0.1, "mode": "UAKSVD",
            "kernel": {"kind": "rbf", "sigma": 1.0}}
})";

}  // namespace

TEST_CASE("train writes model, manifest, objective and test split") {
  Workdir w("train");
  spit(w / "cfg.json", kSynthConfig);
  const Run r = w.run("train --config cfg.json --out run");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  for (const char* f : {"model.ikdl", "manifest.json", "objective.csv", "test.bin"}) CHECK(fs::exists(w / "run" / f));
  CHECK_FALSE(fs::exists(w / "run" / "stdout.txt"));

  const auto manifest = nlohmann::json::parse(slurp(w / "run/manifest.json"));
  CHECK(manifest.at("tool") == "ikdl");
  CHECK(manifest.at("version").get<std::string>().size() > 0);
  CHECK(manifest.at("timings").at("train_s").get<double>() >= 0.0);
  CHECK(manifest.at("config").at("train").at("n_atoms") == 3);
  CHECK(manifest.at("outputs").at("model") == "model.ikdl");

  const auto objective = parse_csv(slurp(w / "run/objective.csv"));
  REQUIRE(objective.size() == 6);  // header + initial state + 4 iterations
  CHECK(objective[0] == std::vector<std::string>{"iteration", "objective"});
  CHECK(objective[5][0] == "4");
}

TEST_CASE("missing dataset file: exit code 2 and no outputs") {
  Workdir w("missing");
  spit(w / "cfg.json", R"({"dataset": {"signals": "nowhere.bin"}, "train": {"n_atoms": 2, "sparsity": 1}})");
  const Run r = w.run("train --config cfg.json --out run");
  CHECK(r.code == 2);
  CHECK_FALSE(fs::exists(w / "run"));
  // One machine-readable line on stderr.
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  const auto err = nlohmann::json::parse(r.err);
  CHECK(err.at("error") == "input");
  CHECK(err.at("message").get<std::string>().find("nowhere.bin") != std::string::npos);
}

TEST_CASE("usage and input errors map to exit code 2") {
  Workdir w("usage");
  CHECK(w.run("").code == 2);
  CHECK(w.run("frobnicate").code == 2);
  CHECK(w.run("train").code == 2);  // no --config
  CHECK(w.run("eval --model absent.ikdl").code == 2);
  CHECK(w.run("train --config cfg.json --threads 0").code == 2);
  spit(w / "bad.json", R"({"train": {"n_atoms": 4, "sparsity": 9}})");
  CHECK(w.run("train --config bad.json").code == 2);
  spit(w / "garbage.ikdl", "not a model");
  const Run r = w.run("classify --model garbage.ikdl --vector 1,2");
  CHECK(r.code == 2);
  CHECK(nlohmann::json::parse(r.err).at("error") == "input");
  CHECK(w.run("--version").code == 0);
}

TEST_CASE("same config and seed give byte-identical models; manifests reproduce them") {
  Workdir w("determinism");
  spit(w / "cfg.json", kSynthConfig);
  REQUIRE(w.run("train --config cfg.json --seed 7 --out a").code == 0);
  REQUIRE(w.run("train --config cfg.json --seed 7 --out b").code == 0);
  REQUIRE(w.run("train --config cfg.json --seed 8 --out c").code == 0);
  REQUIRE(w.run("train --config a/manifest.json --out d").code == 0);
  const std::string a = slurp(w / "a/model.ikdl");
  CHECK(a == slurp(w / "b/model.ikdl"));
  CHECK(a != slurp(w / "c/model.ikdl"));
  CHECK(a == slurp(w / "d/model.ikdl"));
  CHECK(slurp(w / "a/test.bin") == slurp(w / "d/test.bin"));
  CHECK(slurp(w / "a/objective.csv") == slurp(w / "b/objective.csv"));
}

TEST_CASE("eval of a perfect toy model prints 100.00 and the CSV matches the table") {
  Workdir w("eval");
  spit(w / "cfg.json", kToyConfig);
  REQUIRE(w.run("train --config cfg.json --out run").code == 0);
  const Run r = w.run("eval --model run/model.ikdl --out run");
  REQUIRE_MESSAGE(r.code == 0, r.err);

  std::istringstream table(r.out);
  std::string header_line, rule, row_line;
  std::getline(table, header_line);
  std::getline(table, rule);
  std::getline(table, row_line);
  const std::vector<std::string> header{"dataset", "algorithm", "kernel", "train_s", "test_s", "accuracy"};
  CHECK(split_ws(header_line) == header);
  const auto printed = split_ws(row_line);
  REQUIRE(printed.size() == 6);
  CHECK(printed[5] == "100.00");
  CHECK(printed[1] == "IDL-AKSVD");

  const auto csv = parse_csv(slurp(w / "run/report.csv"));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == header);
  CHECK(csv[1] == printed);

  const auto confusion = parse_csv(slurp(w / "run/confusion.csv"));
  REQUIRE(confusion.size() == 4);
  CHECK(confusion[0] == std::vector<std::string>{"true\\predicted", "0", "1", "2"});
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j) CHECK(confusion[i][j] == (i == j ? "10" : "0"));
}

TEST_CASE("heatmaps have the documented shapes and agree with eval predictions") {
  Workdir w("heatmap");
  spit(w / "cfg.json", kSynthConfig);
  REQUIRE(w.run("train --config cfg.json --out run").code == 0);
  REQUIRE(w.run("eval --model run/model.ikdl --out run").code == 0);
  REQUIRE(w.run("heatmap --model run/model.ikdl --which discriminative --out run").code == 0);
  REQUIRE(w.run("heatmap --model run/model.ikdl --which reconstruction --out run").code == 0);

  const auto disc = parse_csv(slurp(w / "run/heatmap_discriminative.csv"));
  REQUIRE(disc.size() == 4);
  for (const auto& row : disc) CHECK(row.size() == 4);

  const auto rec = parse_csv(slurp(w / "run/heatmap_reconstruction.csv"));
  const auto pred = parse_csv(slurp(w / "run/predictions.csv"));
  REQUIRE(rec.size() == 31);  // header + 10 test signals per class
  REQUIRE(pred.size() == rec.size());
  CHECK(pred[0] == std::vector<std::string>{"index", "true", "predicted"});
  for (std::size_t l = 1; l < rec.size(); ++l) {
    REQUIRE(rec[l].size() == 4);
    std::size_t best = 1;
    for (std::size_t c = 2; c < rec[l].size(); ++c)
      if (std::stod(rec[l][c]) < std::stod(rec[l][best])) best = c;
    CHECK(rec[l][0] == pred[l][0]);
    CHECK(rec[0][best] == pred[l][2]);
  }

  CHECK(w.run("heatmap --model run/model.ikdl --which neither").code == 2);
}

TEST_CASE("classify prints one CSV row per signal") {
  Workdir w("classify");
  spit(w / "cfg.json", kToyConfig);
  REQUIRE(w.run("train --config cfg.json --out run").code == 0);
  REQUIRE(w.run("synth --classes 3 --per-class 20 --dim 8 --subspace-dim 1 --noise 0 --seed 2 --out data").code == 0);
  const Run r = w.run("classify --model run/model.ikdl --data data/synth.bin");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = parse_csv(r.out);
  REQUIRE(rows.size() == 61);
  CHECK(rows[0] == std::vector<std::string>{"index", "label", "residual_0", "residual_1", "residual_2"});
  // The dataset the toy model was trained on: column l belongs to class l / 20.
  for (std::size_t l = 1; l < rows.size(); ++l) CHECK(rows[l][1] == std::to_string((l - 1) / 20));

  const Run wrong = w.run("classify --model run/model.ikdl --vector 1,2,3");
  CHECK(wrong.code == 2);
}

TEST_CASE("synth writes CSV or binary datasets deterministically") {
  Workdir w("synth");
  REQUIRE(w.run("synth --classes 2 --per-class 5 --dim 4 --subspace-dim 1 --seed 3 --out a").code == 0);
  REQUIRE(w.run("synth --classes 2 --per-class 5 --dim 4 --subspace-dim 1 --seed 3 --out b").code == 0);
  CHECK(slurp(w / "a/synth.bin") == slurp(w / "b/synth.bin"));
  REQUIRE(w.run("synth --classes 2 --per-class 5 --dim 4 --subspace-dim 1 --format csv --out c").code == 0);
  CHECK(parse_csv(slurp(w / "c/synth.csv")).size() == 4);
  CHECK(parse_csv(slurp(w / "c/synth_labels.csv")).size() == 10);
  CHECK(w.run("synth --classes 2 --dim 4 --subspace-dim 4 --out d").code == 2);
}

TEST_CASE("bench: 2x2 grid gives four rows, one per cell") {
  Workdir w("bench");
  spit(w / "cfg.json", R"({
    "synth": {"classes": 3, "per_class": 30, "dim": 16, "subspace_dim": 3, "noise_sigma": 0.05, "seed": 4},
    "split": {"per_class_train": 20, "seed": 1},
    "train": {"n_atoms": 3, "sparsity": 2, "iterations": 3, "gamma": 0.1},
    "grid": {"modes": ["AKSVD", "UAKSVD"], "kernels": ["linear", "rbf"], "sigma": [1]}
  })");
  const Run r = w.run("bench --config cfg.json --seeds 2 --out out");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = parse_csv(slurp(w / "out/bench.csv"));
  REQUIRE(rows.size() == 5);
  std::map<std::string, int> algorithms;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].back() == "ok");
    CHECK(rows[i][4] == "2");
    ++algorithms[rows[i][1]];
  }
  CHECK(algorithms == std::map<std::string, int>{{"IDL-AKSVD", 1}, {"IDL-UAKSVD", 1}, {"IKDL-AKSVD", 1}, {"IKDL-UAKSVD", 1}});
  CHECK(slurp(w / "out/bench.csv").find("error") == std::string::npos);
}

TEST_CASE("bench records a failing cell and carries on") {
  Workdir w("bench_fail");
  // Polynomial degree 0 is rejected for that cell only.
  spit(w / "cfg.json", R"({
    "synth": {"classes": 2, "per_class": 20, "dim": 8, "subspace_dim": 2, "noise_sigma": 0.05, "seed": 1},
    "split": {"per_class_train": 10, "seed": 1},
    "train": {"n_atoms": 2, "sparsity": 1, "iterations": 2},
    "grid": {"kernels": ["linear", "polynomial"], "alpha": [2], "beta": [0, 2]}
  })");
  const Run r = w.run("bench --config cfg.json --out out");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto rows = parse_csv(slurp(w / "out/bench.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].back() == "ok");
  CHECK(rows[2].back().rfind("error", 0) == 0);
  CHECK(rows[3].back() == "ok");
}

TEST_CASE("YaleB-style configuration with a full hyperparameter grid parses and runs") {
  Workdir w("yaleb_like");
  REQUIRE(w.run("synth --classes 2 --per-class 90 --dim 32 --subspace-dim 4 --seed 5 --out data").code == 0);
  spit(w / "cfg.json", R"({
    "dataset": {"name": "yaleb-like", "signals": "data/synth.bin"},
    "split": {"per_class_train": 0.5, "seed": 0},
    "train": {"n_atoms": 40, "sparsity": 20, "iterations": 10, "gamma": 0.1,
              "mode": "UAKSVD", "kernel": {"kind": "rbf", "sigma": 4}},
    "grid": {"gamma": [0.01, 0.1, 0.5, 1, 2, 4, 6], "sigma": [0.5, 1, 2, 4, 5, 6, 8, 10]}
  })");
  const Run r = w.run("train --config cfg.json --out run");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto objective = parse_csv(slurp(w / "run/objective.csv"));
  CHECK(objective.size() == 12);
  const Run e = w.run("eval --model run/model.ikdl --out run");
  REQUIRE_MESSAGE(e.code == 0, e.err);
  CHECK(parse_csv(slurp(w / "run/report.csv"))[1][0] == "yaleb-like");
}
