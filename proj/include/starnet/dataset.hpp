#pragma once
// Paired snowy / clean datasets on disk.
//
//   csd       <root>/{Train,Test}/Snow    <-> <root>/{Train,Test}/Gt
//   srrs      <root>/{train,test}/Syn     <-> <root>/{train,test}/Gt
//   snow100k  <root>/{train,test}/synthetic <-> <root>/{train,test}/gt
//   paired    <root>/snowy <-> <root>/clean   (generated sets; no split level)
//
// Files pair by stem, so "0001.jpg" matches "0001.png". Split and directory
// names match case-insensitively.

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace starnet {

enum class DatasetKind { csd, srrs, snow100k, paired };

std::string to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

struct SamplePaths {
  std::string id;  // shared file stem
  std::filesystem::path snowy;
  std::filesystem::path clean;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  DatasetKind kind = DatasetKind::paired;
  std::vector<SamplePaths> samples;  // sorted by id

  size_t count() const { return samples.size(); }
};

// Pair count of the official split (8000 train / 2000 test for every benchmark).
int64_t reference_count(DatasetKind kind, const std::string& split);

// Throws IngestionError for a missing or empty directory and for any file
// without exactly one partner.
DatasetManifest load_manifest(const std::filesystem::path& root, DatasetKind kind,
                              const std::string& split = "train");

struct ImagePair {
  std::string id;
  torch::Tensor snowy;  // [3, H, W] in [0, 1]
  torch::Tensor clean;
};

ImagePair load_pair(const SamplePaths& sample);

// Same size x size window of both images, top-left corner drawn from `seed`.
ImagePair random_crop_pair(const ImagePair& pair, int64_t size, uint64_t seed);

}  // namespace starnet
