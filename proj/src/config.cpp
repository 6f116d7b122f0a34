#include "ikdl/config.hpp"

#include "ikdl/error.hpp"

#include <fstream>
#include <set>

namespace ikdl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw InputError(what + " must be a JSON object");
}

void reject_unknown(const json& j, const std::string& what, std::initializer_list<const char*> keys) {
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw InputError("unknown key '" + it.key() + "' in " + what);
}

template <typename T>
T get(const json& j, const char* key, const std::string& what) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(what + "." + key + " is missing or has the wrong type");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& what) {
  if (!j.contains(key)) return fallback;
  return get<T>(j, key, what);
}

int get_int(const json& j, const char* key, int fallback, const std::string& what) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw InputError(what + "." + key + " must be an integer");
  return j.at(key).get<int>();
}

std::uint64_t get_seed(const json& j, const char* key, std::uint64_t fallback, const std::string& what) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw InputError(what + "." + key + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

json to_json(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::Linear: return {{"kind", "linear"}};
    case KernelKind::RBF: return {{"kind", "rbf"}, {"sigma", spec.sigma}};
    case KernelKind::Polynomial:
      return {{"kind", "polynomial"}, {"alpha", spec.alpha}, {"beta", spec.beta}};
  }
  return {};
}

KernelSpec kernel_from_json(const json& j) {
  const std::string what = "kernel";
  require_object(j, what);
  reject_unknown(j, what, {"kind", "sigma", "alpha", "beta"});
  KernelSpec spec;
  spec.kind = parse_kernel_kind(get<std::string>(j, "kind", what));
  spec.sigma = get_or<double>(j, "sigma", 1.0, what);
  spec.alpha = get_or<double>(j, "alpha", 0.0, what);
  spec.beta = get_int(j, "beta", 1, what);
  spec.validate();
  return spec;
}

json to_json(const TrainConfig& cfg) {
  return {{"n_atoms", cfg.n_atoms},
          {"sparsity", cfg.sparsity},
          {"iterations", cfg.iterations},
          {"gamma", cfg.gamma},
          {"mode", to_string(cfg.mode)},
          {"kernel", cfg.kernel ? to_json(*cfg.kernel) : json(nullptr)},
          {"seed", cfg.seed},
          {"recode_every_iteration", cfg.recode_every_iteration}};
}

TrainConfig train_config_from_json(const json& j) {
  const std::string what = "train";
  require_object(j, what);
  reject_unknown(j, what,
                 {"n_atoms", "sparsity", "iterations", "gamma", "mode", "kernel", "seed",
                  "recode_every_iteration", "threads"});
  TrainConfig cfg;
  cfg.n_atoms = get_int(j, "n_atoms", cfg.n_atoms, what);
  cfg.sparsity = get_int(j, "sparsity", cfg.sparsity, what);
  cfg.iterations = get_int(j, "iterations", cfg.iterations, what);
  cfg.gamma = get_or<double>(j, "gamma", cfg.gamma, what);
  if (j.contains("mode")) cfg.mode = parse_update_mode(get<std::string>(j, "mode", what));
  if (j.contains("kernel") && !j.at("kernel").is_null()) {
    // {"kind": "linear"} selects the kernel pipeline with a linear kernel;
    // null or absent selects plain linear dictionaries.
    cfg.kernel = kernel_from_json(j.at("kernel"));
  }
  cfg.seed = get_seed(j, "seed", cfg.seed, what);
  cfg.recode_every_iteration =
      get_or<bool>(j, "recode_every_iteration", cfg.recode_every_iteration, what);
  cfg.threads = get_int(j, "threads", cfg.threads, what);
  cfg.validate();
  return cfg;
}

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  require_object(doc, "config");
  reject_unknown(doc, "config", {"dataset", "synth", "split", "train", "grid"});
  RunConfig cfg;

  if (doc.contains("dataset")) {
    const auto& d = doc.at("dataset");
    const std::string what = "dataset";
    require_object(d, what);
    reject_unknown(d, what, {"name", "signals", "labels", "format"});
    DatasetRef ref;
    ref.signals = resolve(base_dir, get<std::string>(d, "signals", what));
    ref.labels = resolve(base_dir, get_or<std::string>(d, "labels", "", what));
    ref.format = d.contains("format") ? parse_data_format(get<std::string>(d, "format", what))
                                      : guess_data_format(ref.signals);
    ref.name = get_or<std::string>(d, "name", ref.signals.stem().string(), what);
    cfg.dataset = ref;
  }
  if (doc.contains("synth")) {
    const auto& s = doc.at("synth");
    const std::string what = "synth";
    require_object(s, what);
    reject_unknown(s, what, {"classes", "per_class", "dim", "subspace_dim", "noise_sigma", "seed"});
    SynthSpec spec;
    spec.classes = get_int(s, "classes", spec.classes, what);
    spec.per_class = get_int(s, "per_class", spec.per_class, what);
    spec.dim = get_int(s, "dim", spec.dim, what);
    spec.subspace_dim = get_int(s, "subspace_dim", spec.subspace_dim, what);
    spec.noise_sigma = get_or<double>(s, "noise_sigma", spec.noise_sigma, what);
    spec.seed = get_seed(s, "seed", spec.seed, what);
    cfg.synth = spec;
  }
  if (cfg.dataset && cfg.synth) throw InputError("config: give either 'dataset' or 'synth', not both");

  if (doc.contains("split")) {
    const auto& s = doc.at("split");
    const std::string what = "split";
    require_object(s, what);
    reject_unknown(s, what, {"per_class_train", "seed"});
    if (s.contains("per_class_train")) {
      const auto& v = s.at("per_class_train");
      if (v.is_number_integer()) cfg.split.per_class_train = v.get<int>();
      else if (v.is_number_float()) cfg.split.per_class_train = v.get<double>();
      else throw InputError("split.per_class_train must be an integer or a fraction");
    }
    cfg.split.seed = get_seed(s, "seed", cfg.split.seed, what);
  }

  if (doc.contains("train")) cfg.train = train_config_from_json(doc.at("train"));

  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    const std::string what = "grid";
    require_object(g, what);
    reject_unknown(g, what, {"modes", "kernels", "gamma", "sigma", "alpha", "beta"});
    BenchGrid grid;
    for (const auto& m : get_or<std::vector<std::string>>(g, "modes", {}, what))
      grid.modes.push_back(parse_update_mode(m));
    for (const auto& k : get_or<std::vector<std::string>>(g, "kernels", {}, what))
      grid.kernels.push_back(parse_kernel_kind(k));
    grid.gamma = get_or<std::vector<double>>(g, "gamma", {}, what);
    grid.sigma = get_or<std::vector<double>>(g, "sigma", {}, what);
    grid.alpha = get_or<std::vector<double>>(g, "alpha", {}, what);
    grid.beta = get_or<std::vector<int>>(g, "beta", {}, what);
    cfg.grid = grid;
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& cfg) {
  json doc;
  if (cfg.dataset) {
    doc["dataset"] = {{"name", cfg.dataset->name},
                      {"signals", cfg.dataset->signals.string()},
                      {"labels", cfg.dataset->labels.string()},
                      {"format", cfg.dataset->format == DataFormat::Csv ? "csv" : "binary"}};
  }
  if (cfg.synth) {
    const auto& s = *cfg.synth;
    doc["synth"] = {{"classes", s.classes},     {"per_class", s.per_class},
                    {"dim", s.dim},             {"subspace_dim", s.subspace_dim},
                    {"noise_sigma", s.noise_sigma}, {"seed", s.seed}};
  }
  json per_class;
  if (std::holds_alternative<int>(cfg.split.per_class_train))
    per_class = std::get<int>(cfg.split.per_class_train);
  else
    per_class = std::get<double>(cfg.split.per_class_train);
  doc["split"] = {{"per_class_train", per_class}, {"seed", cfg.split.seed}};
  doc["train"] = to_json(cfg.train);
  return doc;
}

}  // namespace ikdl
