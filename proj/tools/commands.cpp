#include "commands.hpp"

#include "ikdl/classifier.hpp"
#include "ikdl/error.hpp"
#include "ikdl/model_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <unistd.h>

#ifndef IKDL_VERSION
#define IKDL_VERSION "unknown"
#endif

namespace ikdl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level log_level() {
  static const Level level = [] {
    const char* env = std::getenv("IKDL_LOG");
    const std::string v = env ? env : "";
    if (v == "error") return Level::Error;
    if (v == "info") return Level::Info;
    if (v == "debug") return Level::Debug;
    return Level::Warn;
  }();
  return level;
}

void log_at(Level level, const char* tag, const std::string& msg) {
  if (level <= log_level()) std::cerr << "[ikdl] " << tag << ": " << msg << "\n";
}

std::string real(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string percent(double fraction) { return fixed(100.0 * fraction, 2); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  return line + "\n";
}

void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      out << r[c];
      if (c + 1 < r.size()) out << std::string(width[c] - r[c].size() + 2, ' ');
    }
    out << "\n";
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  line(rule);
  for (const auto& r : rows) line(r);
}

// Files are written into a hidden staging directory and moved into place only
// after every one of them was written, so a failing command leaves no partial
// outputs behind.
class Staging {
 public:
  explicit Staging(fs::path out) : out_(std::move(out)) {}
  ~Staging() {
    std::error_code ec;
    if (!dir_.empty()) fs::remove_all(dir_, ec);
  }

  void add(const std::string& name, const std::function<void(const fs::path&)>& write) {
    files_.emplace_back(name, write);
  }
  void add_text(const std::string& name, std::string text) {
    add(name, [text = std::move(text)](const fs::path& p) {
      std::ofstream f(p, std::ios::binary);
      f << text;
      if (!f) throw InputError("failed writing '" + p.string() + "'");
    });
  }

  void commit() {
    fs::create_directories(out_);
    dir_ = out_ / (".ikdl-staging-" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    for (const auto& [name, write] : files_) write(dir_ / name);
    for (const auto& [name, write] : files_) fs::rename(dir_ / name, out_ / name);
  }

 private:
  fs::path out_;
  fs::path dir_;
  std::vector<std::pair<std::string, std::function<void(const fs::path&)>>> files_;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// A run manifest doubles as a config: its "config" member is a full snapshot.
RunConfig load_config(const GlobalOptions& g) {
  if (g.config.empty()) throw InputError("this command needs --config");
  const json doc = read_json(g.config);
  if (doc.is_object() && doc.contains("tool") && doc.contains("config"))
    return parse_run_config(doc.at("config"), g.config.parent_path());
  return parse_run_config(doc, g.config.parent_path());
}

std::string dataset_name(const RunConfig& rc) {
  if (rc.dataset) return rc.dataset->name;
  return "synth";
}

LabeledDataset load_run_data(RunConfig& rc) {
  if (rc.dataset) {
    rc.dataset->signals = fs::absolute(rc.dataset->signals);
    if (!rc.dataset->labels.empty()) rc.dataset->labels = fs::absolute(rc.dataset->labels);
    auto ds = load_dataset(rc.dataset->signals, rc.dataset->labels, rc.dataset->format);
    log_info("loaded " + rc.dataset->signals.string() + ": " + std::to_string(ds.signals.rows()) +
             " x " + std::to_string(ds.size()) + ", " + std::to_string(ds.classes()) + " classes");
    return ds;
  }
  if (rc.synth) return synth_dataset(*rc.synth);
  throw InputError("config has neither 'dataset' nor 'synth'");
}

LabeledDataset load_data(const DataOptions& d) {
  const DataFormat format = d.format.empty() ? guess_data_format(d.signals) : parse_data_format(d.format);
  return load_dataset(d.signals, format == DataFormat::Csv ? d.labels : fs::path{}, format);
}

std::string algorithm_name(const TrainConfig& cfg) {
  return std::string(cfg.kernel ? "IKDL" : "IDL") + "-" + to_string(cfg.mode);
}

std::string kernel_name(const TrainConfig& cfg) { return cfg.kernel ? describe(*cfg.kernel) : "none"; }

json manifest_base(const std::string& command) {
  return {{"tool", "ikdl"}, {"version", IKDL_VERSION}, {"command", command}};
}

std::string labels_header(const ClassifierModel& model, const std::string& first) {
  std::vector<std::string> h{first};
  for (auto id : model.labels) h.push_back(std::to_string(id));
  return csv_row(h);
}

// Test data for eval/heatmap: explicit --data, else the split recorded in the manifest.
struct TestData {
  LabeledDataset ds;
  std::string name;
};

std::optional<json> read_manifest(const fs::path& model_path, const fs::path& explicit_path) {
  const fs::path p = explicit_path.empty() ? model_path.parent_path() / "manifest.json" : explicit_path;
  if (!fs::exists(p)) {
    if (!explicit_path.empty()) throw InputError("manifest '" + p.string() + "' not found");
    return std::nullopt;
  }
  json m = read_json(p);
  m["__dir"] = p.parent_path().string();
  return m;
}

TestData test_data(const DataOptions& d, const std::optional<json>& manifest) {
  if (!d.signals.empty()) return {load_data(d), d.signals.stem().string()};
  if (manifest && manifest->contains("outputs") && manifest->at("outputs").contains("test")) {
    const fs::path p = fs::path(manifest->at("__dir").get<std::string>()) /
                       manifest->at("outputs").at("test").get<std::string>();
    std::string name = "test";
    if (manifest->contains("dataset")) name = manifest->at("dataset").value("name", name);
    return {load_dataset(p, {}, DataFormat::Binary), name};
  }
  throw InputError("no test data: pass --data or keep the training manifest next to the model");
}

// Column indices of `ds` grouped by model class, in dataset order within a class.
std::vector<std::vector<Eigen::Index>> group_by_model_class(const LabeledDataset& ds,
                                                            const ClassifierModel& model) {
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < model.labels.size(); ++i) index[model.labels[i]] = i;
  std::vector<std::vector<Eigen::Index>> groups(model.classes());
  for (std::size_t l = 0; l < ds.size(); ++l) {
    const auto id = ds.class_ids[static_cast<std::size_t>(ds.labels[l])];
    const auto it = index.find(id);
    if (it == index.end())
      throw InputError("test label " + std::to_string(id) + " is not a class of the model");
    groups[it->second].push_back(static_cast<Eigen::Index>(l));
  }
  return groups;
}

}  // namespace

void log_info(const std::string& msg) { log_at(Level::Info, "info", msg); }
void log_warn(const std::string& msg) { log_at(Level::Warn, "warn", msg); }
void log_debug(const std::string& msg) { log_at(Level::Debug, "debug", msg); }

int cmd_train(const GlobalOptions& g) {
  RunConfig rc = load_config(g);
  if (g.seed) {
    rc.train.seed = *g.seed;
    rc.split.seed = *g.seed;
  }
  rc.train.threads = g.threads;
  rc.train.validate();

  const LabeledDataset ds = load_run_data(rc);
  for (const auto& w : ds.warnings) log_warn(w);
  const auto [train_set, test_set] = split(ds, rc.split);
  log_info("training " + algorithm_name(rc.train) + " kernel=" + kernel_name(rc.train) + " on " +
           std::to_string(train_set.size()) + " signals");

  const ClassifierModel model = train(train_set.by_class(), rc.train, train_set.class_ids);
  for (std::size_t k = 0; k < model.objective.size(); ++k)
    log_debug("objective[" + std::to_string(k) + "] = " + real(model.objective[k]));

  std::string objective = "iteration,objective\n";
  for (std::size_t k = 0; k < model.objective.size(); ++k)
    objective += std::to_string(k) + "," + real(model.objective[k]) + "\n";

  json manifest = manifest_base("train");
  manifest["config"] = to_json(rc);
  manifest["seeds"] = {{"train", rc.train.seed}, {"split", rc.split.seed}};
  manifest["timings"] = {{"train_s", model.train_time_s}};
  manifest["dataset"] = {{"name", dataset_name(rc)},
                         {"dim", ds.signals.rows()},
                         {"classes", ds.classes()},
                         {"train", train_set.size()},
                         {"test", test_set.size()}};
  manifest["outputs"] = {{"model", "model.ikdl"}, {"objective", "objective.csv"}, {"test", "test.bin"}};
  manifest["warnings"] = ds.warnings;

  Staging out(g.out);
  out.add("model.ikdl", [&](const fs::path& p) { save_model(model, p); });
  out.add_text("objective.csv", objective);
  out.add("test.bin", [&](const fs::path& p) { save_dataset(test_set, p, {}, DataFormat::Binary); });
  out.add_text("manifest.json", manifest.dump(2) + "\n");
  out.commit();

  std::cout << "trained " << algorithm_name(rc.train) << " (" << kernel_name(rc.train) << ") on "
            << dataset_name(rc) << ": " << ds.classes() << " classes, " << train_set.size()
            << " training signals, " << fixed(model.train_time_s, 4) << " s\n"
            << "wrote " << (g.out / "model.ikdl").string() << "\n";
  return 0;
}

int cmd_eval(const GlobalOptions& g, const EvalOptions& o) {
  const ClassifierModel model = load_model(o.model);
  const auto manifest = read_manifest(o.model, o.manifest);
  const TestData td = test_data(o.data, manifest);
  const auto groups = group_by_model_class(td.ds, model);

  std::vector<Matrix> test_classes;
  std::vector<Eigen::Index> order;
  for (const auto& idx : groups) {
    Matrix m(td.ds.signals.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t t = 0; t < idx.size(); ++t) m.col(static_cast<Eigen::Index>(t)) = td.ds.signals.col(idx[t]);
    test_classes.push_back(std::move(m));
    order.insert(order.end(), idx.begin(), idx.end());
  }
  const EvalReport report = evaluate(test_classes, model, g.threads);

  std::string train_s = "-";
  if (manifest && manifest->contains("timings"))
    train_s = fixed(manifest->at("timings").value("train_s", 0.0), 4);

  const std::vector<std::string> header{"dataset", "algorithm", "kernel", "train_s", "test_s", "accuracy"};
  const std::vector<std::string> row{td.name, algorithm_name(model.cfg), kernel_name(model.cfg), train_s,
                                     fixed(report.test_time_s, 4), percent(report.accuracy)};
  print_table(std::cout, header, {row});

  std::string confusion = labels_header(model, "true\\predicted");
  for (Eigen::Index i = 0; i < report.confusion.rows(); ++i) {
    std::vector<std::string> r{std::to_string(model.labels[static_cast<std::size_t>(i)])};
    for (Eigen::Index j = 0; j < report.confusion.cols(); ++j) r.push_back(std::to_string(report.confusion(i, j)));
    confusion += csv_row(r);
  }

  std::vector<std::size_t> predicted(td.ds.size());
  for (std::size_t t = 0; t < order.size(); ++t) predicted[static_cast<std::size_t>(order[t])] = report.predictions[t];
  std::string predictions = "index,true,predicted\n";
  for (std::size_t l = 0; l < td.ds.size(); ++l)
    predictions += std::to_string(l) + "," +
                   std::to_string(td.ds.class_ids[static_cast<std::size_t>(td.ds.labels[l])]) + "," +
                   std::to_string(model.labels[predicted[l]]) + "\n";

  json manifest_out = manifest_base("eval");
  manifest_out["model"] = fs::absolute(o.model).string();
  manifest_out["timings"] = {{"test_s", report.test_time_s}};
  manifest_out["accuracy"] = report.accuracy;
  manifest_out["outputs"] = {{"report", "report.csv"}, {"confusion", "confusion.csv"}, {"predictions", "predictions.csv"}};

  Staging out(g.out);
  out.add_text("report.csv", csv_row(header) + csv_row(row));
  out.add_text("confusion.csv", confusion);
  out.add_text("predictions.csv", predictions);
  out.add_text("eval_manifest.json", manifest_out.dump(2) + "\n");
  out.commit();
  return 0;
}

int cmd_classify(const GlobalOptions&, const ClassifyOptions& o) {
  const ClassifierModel model = load_model(o.model);
  Matrix signals;
  if (!o.vector.empty()) {
    std::vector<double> v;
    std::stringstream ss(o.vector);
    std::string field;
    while (std::getline(ss, field, ',')) {
      double x = 0;
      const auto first = field.find_first_not_of(' ');
      const char* b = field.data() + (first == std::string::npos ? field.size() : first);
      const auto [ptr, ec] = std::from_chars(b, field.data() + field.size(), x);
      if (ec != std::errc() || ptr != field.data() + field.size())
        throw InputError("--vector: non-numeric entry '" + field + "'");
      v.push_back(x);
    }
    signals = Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else if (!o.data.signals.empty()) {
    const DataFormat format =
        o.data.format.empty() ? guess_data_format(o.data.signals) : parse_data_format(o.data.format);
    signals = load_signals(o.data.signals, format);
  } else {
    throw InputError("classify needs --vector or --data");
  }

  std::string out = "index,label";
  for (auto id : model.labels) out += ",residual_" + std::to_string(id);
  out += "\n";
  for (Eigen::Index l = 0; l < signals.cols(); ++l) {
    const auto d = classify(signals.col(l), model);
    std::vector<std::string> r{std::to_string(l), std::to_string(model.labels[d.class_index])};
    for (Eigen::Index i = 0; i < d.residuals.size(); ++i) r.push_back(real(d.residuals(i)));
    out += csv_row(r);
  }
  std::cout << out;
  return 0;
}

int cmd_heatmap(const GlobalOptions& g, const HeatmapOptions& o) {
  const ClassifierModel model = load_model(o.model);
  std::string csv;
  if (o.which == "discriminative") {
    const Matrix m = discriminative_matrix(model);
    csv = labels_header(model, "class");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      std::vector<std::string> r{std::to_string(model.labels[static_cast<std::size_t>(i)])};
      for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(real(m(i, j)));
      csv += csv_row(r);
    }
  } else if (o.which == "reconstruction") {
    const TestData td = test_data(o.data, read_manifest(o.model, {}));
    const Matrix e = error_matrix(td.ds.signals, model, g.threads);
    csv = labels_header(model, "index");
    for (Eigen::Index l = 0; l < e.rows(); ++l) {
      std::vector<std::string> r{std::to_string(l)};
      for (Eigen::Index i = 0; i < e.cols(); ++i) r.push_back(real(e(l, i)));
      csv += csv_row(r);
    }
  } else {
    throw InputError("heatmap --which must be 'reconstruction' or 'discriminative'");
  }
  const std::string name = "heatmap_" + o.which + ".csv";
  Staging out(g.out);
  out.add_text(name, csv);
  out.commit();
  std::cout << "wrote " << (g.out / name).string() << "\n";
  return 0;
}

int cmd_synth(const GlobalOptions& g, const SynthOptions& o) {
  SynthSpec spec = o.spec;
  if (g.seed) spec.seed = *g.seed;
  const DataFormat format = parse_data_format(o.format);
  const LabeledDataset ds = synth_dataset(spec);

  json manifest = manifest_base("synth");
  manifest["synth"] = {{"classes", spec.classes},   {"per_class", spec.per_class},
                       {"dim", spec.dim},           {"subspace_dim", spec.subspace_dim},
                       {"noise_sigma", spec.noise_sigma}, {"seed", spec.seed}};
  Staging out(g.out);
  if (format == DataFormat::Binary) {
    manifest["outputs"] = {{"signals", "synth.bin"}};
    out.add("synth.bin", [&](const fs::path& p) { save_dataset(ds, p, {}, DataFormat::Binary); });
  } else {
    manifest["outputs"] = {{"signals", "synth.csv"}, {"labels", "synth_labels.csv"}};
    out.add("synth.csv", [&](const fs::path& p) { write_csv_matrix(p, ds.signals); });
    out.add("synth_labels.csv", [&](const fs::path& p) {
      std::vector<std::int64_t> ids(ds.labels.begin(), ds.labels.end());
      write_labels(p, ids);
    });
  }
  out.add_text("synth_manifest.json", manifest.dump(2) + "\n");
  out.commit();
  std::cout << "wrote " << ds.size() << " signals of dimension " << spec.dim << " in " << spec.classes
            << " classes to " << g.out.string() << "\n";
  return 0;
}

int cmd_bench(const GlobalOptions& g) {
  RunConfig rc = load_config(g);
  if (g.seed) rc.train.seed = *g.seed;
  const LabeledDataset ds = load_run_data(rc);
  for (const auto& w : ds.warnings) log_warn(w);
  const BenchGrid grid = rc.grid.value_or(BenchGrid{});
  const TrainConfig& base = rc.train;

  // A grid kernel of "linear" means plain linear dictionaries (no kernel trick).
  std::vector<std::optional<KernelSpec>> kernels;
  if (grid.kernels.empty()) {
    kernels.push_back(base.kernel);
  } else {
    for (KernelKind kind : grid.kernels) {
      if (kind == KernelKind::Linear) {
        kernels.emplace_back(std::nullopt);
      } else if (kind == KernelKind::RBF) {
        const double fallback = base.kernel && base.kernel->kind == KernelKind::RBF ? base.kernel->sigma : 1.0;
        for (double s : grid.sigma.empty() ? std::vector<double>{fallback} : grid.sigma)
          kernels.push_back(KernelSpec::rbf(s));
      } else {
        const bool poly = base.kernel && base.kernel->kind == KernelKind::Polynomial;
        const std::vector<double> alphas = grid.alpha.empty() ? std::vector<double>{poly ? base.kernel->alpha : 2.0} : grid.alpha;
        const std::vector<int> betas = grid.beta.empty() ? std::vector<int>{poly ? base.kernel->beta : 2} : grid.beta;
        for (double a : alphas)
          for (int b : betas) kernels.push_back(KernelSpec::polynomial(a, b));
      }
    }
  }
  const std::vector<UpdateMode> modes = grid.modes.empty() ? std::vector<UpdateMode>{base.mode} : grid.modes;
  const std::vector<double> gammas = grid.gamma.empty() ? std::vector<double>{base.gamma} : grid.gamma;

  const std::vector<std::string> header{"dataset", "algorithm", "kernel", "gamma", "seeds",
                                        "accuracy_mean", "accuracy_min", "accuracy_max",
                                        "train_s", "test_s", "status"};
  std::vector<std::vector<std::string>> rows;
  int failures = 0;
  for (UpdateMode mode : modes)
    for (const auto& kernel : kernels)
      for (double gamma : gammas) {
        TrainConfig cfg = base;
        cfg.mode = mode;
        cfg.kernel = kernel;
        cfg.gamma = gamma;
        cfg.threads = g.threads;
        std::vector<std::string> row{dataset_name(rc), algorithm_name(cfg), kernel_name(cfg), real(gamma),
                                     std::to_string(g.seeds)};
        try {
          double acc_sum = 0, acc_min = 1, acc_max = 0, train_s = 0, test_s = 0;
          for (int k = 0; k < g.seeds; ++k) {
            cfg.seed = base.seed + static_cast<std::uint64_t>(k);
            SplitSpec sp = rc.split;
            sp.seed = rc.split.seed + static_cast<std::uint64_t>(k);
            const auto [train_set, test_set] = split(ds, sp);
            const ClassifierModel model = train(train_set.by_class(), cfg, train_set.class_ids);
            const EvalReport r = evaluate(test_set.by_class(), model, g.threads);
            acc_sum += r.accuracy;
            acc_min = std::min(acc_min, r.accuracy);
            acc_max = std::max(acc_max, r.accuracy);
            train_s += model.train_time_s;
            test_s += r.test_time_s;
          }
          const double k = g.seeds;
          row.insert(row.end(), {percent(acc_sum / k), percent(acc_min), percent(acc_max),
                                 fixed(train_s / k, 4), fixed(test_s / k, 4), "ok"});
        } catch (const std::exception& e) {
          ++failures;
          log_warn(algorithm_name(cfg) + " " + kernel_name(cfg) + " gamma=" + real(gamma) + " failed: " + e.what());
          row.insert(row.end(), {"", "", "", "", "", std::string("error: ") + e.what()});
        }
        log_info("bench cell " + std::to_string(rows.size() + 1) + " done");
        rows.push_back(std::move(row));
      }

  print_table(std::cout, header, rows);
  std::string csv = csv_row(header);
  for (const auto& r : rows) csv += csv_row(r);

  json manifest = manifest_base("bench");
  manifest["config"] = to_json(rc);
  manifest["seeds"] = {{"train_first", base.seed}, {"split_first", rc.split.seed}, {"count", g.seeds}};
  manifest["cells"] = rows.size();
  manifest["failed_cells"] = failures;
  manifest["outputs"] = {{"bench", "bench.csv"}};
  Staging out(g.out);
  out.add_text("bench.csv", csv);
  out.add_text("bench_manifest.json", manifest.dump(2) + "\n");
  out.commit();
  return 0;
}

}  // namespace ikdl::cli
