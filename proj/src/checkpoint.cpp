#include "starnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "starnet/errors.hpp"
#include "starnet/log.hpp"

namespace starnet {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    case torch::kInt32: return "int32";
    case torch::kUInt8: return "uint8";
    default: throw CheckpointError(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  if (name == "int64") return torch::kInt64;
  if (name == "int32") return torch::kInt32;
  if (name == "uint8") return torch::kUInt8;
  throw CheckpointError("checkpoint: unknown dtype '" + name + "'");
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(const ModelState& model) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : model.net->named_parameters()) out.emplace_back(p.key(), p.value());
  for (const auto& b : model.net->named_buffers()) out.emplace_back(b.key(), b.value());
  return out;
}

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["config"] = ckpt.config_text;
  header["epoch"] = ckpt.epoch;
  header["step"] = ckpt.step;
  header["state"] = ckpt.state;
  auto list = nlohmann::json::array();
  std::vector<torch::Tensor> blobs;
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    auto c = t.detach().to(torch::kCPU).contiguous();
    const uint64_t nbytes = c.numel() * c.element_size();
    list.push_back({{"name", name},
                    {"shape", c.sizes().vec()},
                    {"dtype", dtype_name(c.scalar_type())},
                    {"offset", offset},
                    {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(c);
  }
  header["tensors"] = list;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("checkpoint: cannot write " + tmp);
    out << kCheckpointFormat << '\n';
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : blobs) {
      out.write(static_cast<const char*>(b.data_ptr()), static_cast<std::streamsize>(b.numel() * b.element_size()));
    }
    if (!out) throw CheckpointError("checkpoint: short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointFormat) {
    throw CheckpointError("checkpoint: " + path.string() + " is not a " + kCheckpointFormat + " file");
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (uint64_t{1} << 32)) throw CheckpointError("checkpoint: corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) throw CheckpointError("checkpoint: format mismatch");

  Checkpoint ckpt;
  ckpt.config_text = header.at("config").get<std::string>();
  ckpt.epoch = header.at("epoch").get<int64_t>();
  ckpt.step = header.at("step").get<int64_t>();
  ckpt.state = header.value("state", nlohmann::json::object());
  const auto data_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(entry.at("dtype").get<std::string>())));
    const auto nbytes = entry.at("nbytes").get<uint64_t>();
    if (nbytes != static_cast<uint64_t>(t.numel() * t.element_size())) {
      throw CheckpointError("checkpoint: size mismatch for " + entry.at("name").get<std::string>());
    }
    in.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<uint64_t>()));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw CheckpointError("checkpoint: truncated data for " + entry.at("name").get<std::string>());
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), t);
  }
  return ckpt;
}

void add_model_tensors(Checkpoint& ckpt, const ModelState& model) {
  for (auto& [name, t] : named_state(model)) ckpt.tensors.emplace_back("model/" + name, t);
}

void load_model_tensors(const Checkpoint& ckpt, ModelState& model) {
  torch::NoGradGuard no_grad;
  for (auto& [name, t] : named_state(model)) {
    const auto* src = ckpt.find("model/" + name);
    if (!src) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
    if (src->sizes() != t.sizes() || src->scalar_type() != t.scalar_type()) {
      throw CheckpointError("checkpoint: tensor '" + name + "' has incompatible shape or dtype");
    }
    t.copy_(*src);
  }
}

ModelState model_from_checkpoint(const Checkpoint& ckpt) {
  auto config = config_from_text(ckpt.config_text);
  auto model = build(config);
  // Tensors saved from a float64 model load into a float64 model.
  if (const auto* first = ckpt.find("model/" + model.net->named_parameters().begin()->key())) {
    if (first->scalar_type() != torch::kFloat32) model.net->to(first->scalar_type());
  }
  load_model_tensors(ckpt, model);
  return model;
}

void save_model(const std::filesystem::path& path, const ModelState& model, int64_t epoch) {
  Checkpoint ckpt;
  ckpt.config_text = model.config.canonical_text();
  ckpt.epoch = epoch;
  add_model_tensors(ckpt, model);
  write_checkpoint(path, ckpt);
}

ModelState load_model(const std::filesystem::path& path) {
  auto model = model_from_checkpoint(read_checkpoint(path));
  log::info("loaded checkpoint ", path.string());
  return model;
}

}  // namespace starnet
