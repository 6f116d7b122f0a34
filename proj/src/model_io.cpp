#include "ikdl/model_io.hpp"

#include "ikdl/config.hpp"
#include "ikdl/dataset.hpp"
#include "ikdl/error.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace ikdl {

using nlohmann::json;

namespace {

std::uint32_t crc32_of(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  const auto* data = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_uint(const std::string& s, std::size_t& at, int bytes) {
  if (at + static_cast<std::size_t>(bytes) > s.size()) throw InputError("model file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]))
         << (8 * i);
  at += static_cast<std::size_t>(bytes);
  return v;
}

json header_of(const ClassifierModel& model) {
  return {{"kind", model.kind == ModelKind::Linear ? "linear" : "kernel"},
          {"kernel", model.cfg.kernel ? to_json(*model.cfg.kernel) : json(nullptr)},
          {"dim", model.dim},
          {"classes", model.classes()},
          {"labels", model.labels},
          {"config", to_json(model.cfg)},
          {"objective", model.objective}};
}

}  // namespace

void save_model(const ClassifierModel& model, std::ostream& out) {
  model.validate();
  std::string bytes = "IKDM";
  put_u32(bytes, kModelFormatVersion);
  const std::string header = header_of(model).dump();
  put_u64(bytes, header.size());
  bytes += header;

  std::ostringstream mats(std::ios::binary);
  if (model.kind == ModelKind::Linear) {
    for (const auto& d : model.dicts) write_binary_matrix(mats, d.atoms);
  } else {
    for (const auto& kc : model.kernel_classes) {
      write_binary_matrix(mats, kc.coefs.coefs);
      write_binary_matrix(mats, kc.signals);
    }
  }
  bytes += mats.str();
  put_u32(bytes, crc32_of(bytes));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing model");
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  save_model(model, out);
}

ClassifierModel load_model(std::istream& in) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 4 + 8 + 4 || bytes.compare(0, 4, "IKDM") != 0)
    throw InputError("not an IKDL model file");
  const std::string body = bytes.substr(0, bytes.size() - 4);
  std::size_t at = 4;
  // Version first: a file from another format version may lay out its checksum differently.
  const auto version = static_cast<std::uint32_t>(get_uint(body, at, 4));
  if (version != kModelFormatVersion)
    throw InputError("unsupported model format version " + std::to_string(version));
  std::size_t tail = bytes.size() - 4;
  if (static_cast<std::uint32_t>(get_uint(bytes, tail, 4)) != crc32_of(body))
    throw InputError("model file checksum mismatch (corrupt or truncated)");

  const auto header_len = get_uint(body, at, 8);
  if (at + header_len > body.size()) throw InputError("model file truncated");
  json header;
  try {
    header = json::parse(body.substr(at, header_len));
  } catch (const json::exception& e) {
    throw InputError(std::string("model header is not valid JSON: ") + e.what());
  }
  at += header_len;

  std::istringstream mats(body.substr(at), std::ios::binary);
  ClassifierModel model;
  try {
    model.cfg = train_config_from_json(header.at("config"));
    model.kind = header.at("kind").get<std::string>() == "linear" ? ModelKind::Linear : ModelKind::Kernel;
    model.dim = header.at("dim").get<Eigen::Index>();
    model.labels = header.at("labels").get<std::vector<std::int64_t>>();
    model.objective = header.at("objective").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw InputError(std::string("model header is incomplete: ") + e.what());
  }
  const auto n_classes = model.labels.size();
  if (model.kind == ModelKind::Linear) {
    for (std::size_t i = 0; i < n_classes; ++i) model.dicts.push_back({read_binary_matrix(mats)});
    model.validate();
    return model;
  }
  std::vector<CoefDictionary> coefs;
  std::vector<Matrix> signals;
  for (std::size_t i = 0; i < n_classes; ++i) {
    coefs.push_back({read_binary_matrix(mats)});
    signals.push_back(read_binary_matrix(mats));
  }
  ClassifierModel kernel_model =
      make_kernel_model(model.cfg, std::move(model.labels), std::move(coefs), std::move(signals));
  kernel_model.objective = std::move(model.objective);
  return kernel_model;
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open model '" + path.string() + "'");
  return load_model(in);
}

}  // namespace ikdl
