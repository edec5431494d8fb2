#pragma once
// Network configuration, presets and ablation switches.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "starnet/dfm.hpp"
#include "starnet/mit.hpp"
#include "starnet/ssc.hpp"

namespace starnet {

enum class Preset {
  full,   // 64/128/256/256 channels, 224 crops
  tiny,   // 8/16/32/32 channels, 64 crops, halved heads; desk-scale default
  micro,  // two 4-channel levels on 8x8 inputs, for finite-difference checks
};

std::string to_string(Preset p);
Preset parse_preset(const std::string& name);

struct AblationFlags {
  bool use_ssc = true;      // false: same-level skips only (no star aggregation, no DFM chain)
  bool use_mit = true;      // false: plain transformer blocks
  bool use_dfm = true;      // false: identity on every skip level
  bool msam_to_va = false;  // multi-stage attention replaced by vanilla attention
  bool drop_msdc = false;   // no multi-scale deep convolution
  bool drop_cgm = false;    // no convolutional gating network

  bool operator==(const AblationFlags&) const = default;
};

struct StarNetConfig {
  Preset preset = Preset::full;
  int64_t input_size = 224;  // nominal crop side the preset is laid out for
  int64_t stem_stride = 4;
  std::vector<int64_t> channels;
  std::vector<MitConfig> mit;  // per level, shared by encoder and decoder blocks
  std::vector<DfmConfig> dfm;
  std::vector<int64_t> plain_heads;  // heads of the plain blocks used when use_mit is off
  SscConfig ssc;
  AblationFlags flags;
  bool block_residual = true;
  bool global_residual = true;

  size_t levels() const { return channels.size(); }
  // Spatial side of every level at the nominal input size.
  std::vector<int64_t> sides() const;
  // Input height and width must be multiples of this value.
  int64_t input_multiple() const;

  void validate() const;

  // Canonical key-sorted description; reconstructible with config_from_text().
  std::map<std::string, std::string> to_entries() const;
  std::string canonical_text() const;
  uint64_t hash() const;
};

StarNetConfig make_preset(Preset preset);

// Applies named switches ({use_ssc, use_mit, use_dfm, msam_to_va, drop_msdc,
// drop_cgm}); unknown names throw ConfigError.
StarNetConfig ablate(const StarNetConfig& config, const std::map<std::string, bool>& flags);

StarNetConfig with_residuals(StarNetConfig config, bool block_residual, bool global_residual);

// Inverse of canonical_text().
StarNetConfig config_from_text(const std::string& text);

}  // namespace starnet
