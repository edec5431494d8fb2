#include "starnet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <random>

#include "starnet/errors.hpp"
#include "starnet/image_io.hpp"
#include "starnet/log.hpp"

namespace fs = std::filesystem;

namespace starnet {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Child directory of `parent` whose name equals `name` ignoring case.
fs::path find_child(const fs::path& parent, const std::string& name) {
  if (!fs::is_directory(parent)) throw IngestionError("dataset directory " + parent.string() + " does not exist");
  if (fs::is_directory(parent / name)) return parent / name;
  for (const auto& e : fs::directory_iterator(parent)) {
    if (e.is_directory() && lower(e.path().filename().string()) == lower(name)) return e.path();
  }
  throw IngestionError("dataset directory " + (parent / name).string() + " does not exist");
}

std::pair<std::string, std::string> layout(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::csd: return {"Snow", "Gt"};
    case DatasetKind::srrs: return {"Syn", "Gt"};
    case DatasetKind::snow100k: return {"synthetic", "gt"};
    case DatasetKind::paired: return {"snowy", "clean"};
  }
  throw ConfigError("unknown dataset kind");
}

std::map<std::string, fs::path> by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& p : list_images(dir)) {
    const auto stem = p.stem().string();
    if (!out.emplace(stem, p).second) {
      throw IngestionError("ambiguous pairing: " + p.string() + " shares its stem with " + out[stem].string());
    }
  }
  return out;
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::csd: return "csd";
    case DatasetKind::srrs: return "srrs";
    case DatasetKind::snow100k: return "snow100k";
    case DatasetKind::paired: return "paired";
  }
  return "?";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  const auto n = lower(name);
  if (n == "csd") return DatasetKind::csd;
  if (n == "srrs") return DatasetKind::srrs;
  if (n == "snow100k") return DatasetKind::snow100k;
  if (n == "paired") return DatasetKind::paired;
  throw ConfigError("unknown dataset kind '" + name + "' (expected csd, srrs, snow100k or paired)");
}

int64_t reference_count(DatasetKind kind, const std::string& split) {
  if (kind == DatasetKind::paired) return -1;
  return lower(split) == "test" ? 2000 : 8000;
}

DatasetManifest load_manifest(const fs::path& root, DatasetKind kind, const std::string& split) {
  const auto [snow_name, gt_name] = layout(kind);
  const fs::path base = kind == DatasetKind::paired ? root : find_child(root, split);
  const auto snowy = by_stem(find_child(base, snow_name));
  const auto clean = by_stem(find_child(base, gt_name));

  DatasetManifest m;
  m.root = root;
  m.split = split;
  m.kind = kind;
  for (const auto& [stem, path] : snowy) {
    auto it = clean.find(stem);
    if (it == clean.end()) throw IngestionError("unpaired snowy image " + path.string());
    m.samples.push_back({stem, path, it->second});
  }
  for (const auto& [stem, path] : clean) {
    if (!snowy.count(stem)) throw IngestionError("unpaired ground-truth image " + path.string());
  }
  if (m.samples.empty()) throw IngestionError("empty dataset: no image pairs under " + base.string());

  const auto ref = reference_count(kind, split);
  log::info("dataset ", to_string(kind), "/", split, ": ", m.count(), " pairs",
            ref > 0 && ref != static_cast<int64_t>(m.count()) ? " (official split: " + std::to_string(ref) + ")" : "");
  return m;
}

ImagePair load_pair(const SamplePaths& sample) {
  ImagePair p{sample.id, read_image(sample.snowy), read_image(sample.clean)};
  if (p.snowy.sizes() != p.clean.sizes()) {
    throw IngestionError("image pair '" + sample.id + "' has mismatched sizes " + c10::str(p.snowy.sizes()) +
                         " and " + c10::str(p.clean.sizes()));
  }
  return p;
}

ImagePair random_crop_pair(const ImagePair& pair, int64_t size, uint64_t seed) {
  const int64_t h = pair.snowy.size(-2), w = pair.snowy.size(-1);
  if (pair.clean.sizes() != pair.snowy.sizes()) throw ShapeError("random_crop_pair: images differ in size");
  if (size <= 0 || h < size || w < size) {
    throw ParameterError("random_crop_pair: crop " + std::to_string(size) + " exceeds image " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  std::mt19937_64 rng(seed);
  const int64_t top = std::uniform_int_distribution<int64_t>(0, h - size)(rng);
  const int64_t left = std::uniform_int_distribution<int64_t>(0, w - size)(rng);
  using torch::indexing::Slice;
  auto crop = [&](const torch::Tensor& t) {
    return t.index({"...", Slice(top, top + size), Slice(left, left + size)}).contiguous();
  };
  return {pair.id, crop(pair.snowy), crop(pair.clean)};
}

}  // namespace starnet
