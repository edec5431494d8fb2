#include "starnet/config.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "starnet/errors.hpp"
#include "starnet/kv_file.hpp"

namespace starnet {
namespace {

struct LevelSpec {
  int64_t channels;
  int64_t side;
  int64_t msa_heads;
  int64_t sr;
  int64_t wa_heads;
  int64_t ca_heads;
  int64_t fusion_heads;
  int64_t dfm_heads;
};

struct PresetSpec {
  int64_t input_size;
  int64_t stem_stride;
  int64_t attn_patch;
  int64_t dfm_patch;
  std::vector<LevelSpec> levels;
  std::array<int64_t, 3> msdc_kernels;
  int64_t msdc_depth;
  int64_t cgn_kernel;
  int64_t cbam_kernel;
  std::vector<int64_t> chain_kernels;
};

// Per-level attention widths, heads and reduction ratios of the reference
// architecture; the tiny preset halves the heads, the micro preset is minimal.
PresetSpec preset_spec(Preset p) {
  switch (p) {
    case Preset::full:
      return {224, 4, 4, 4,
              {{64, 56, 2, 8, 2, 2, 2, 2},
               {128, 28, 4, 8, 4, 4, 4, 4},
               {256, 14, 4, 4, 4, 4, 4, 4},
               {256, 7, 2, 2, 2, 2, 2, 2}},
              {3, 5, 7}, 3, 3, 7, {7, 5, 3}};
    case Preset::tiny:
      return {64, 4, 4, 4,
              {{8, 16, 1, 8, 1, 1, 1, 1},
               {16, 8, 2, 8, 2, 2, 2, 2},
               {32, 4, 2, 4, 2, 2, 2, 2},
               {32, 2, 1, 2, 1, 1, 1, 1}},
              {3, 5, 7}, 3, 3, 7, {7, 5, 3}};
    case Preset::micro:
      return {8, 2, 2, 1,
              {{4, 4, 1, 2, 1, 1, 1, 1},
               {4, 2, 1, 1, 1, 1, 1, 1}},
              {1, 3, 5}, 1, 1, 3, {3}};
  }
  throw ConfigError("unknown preset");
}

// Largest divisor of `side` that is <= cap and still leaves at least two
// tokens per side. A single token makes softmax constant and its query and key
// projections unreachable.
int64_t token_patch(int64_t side, int64_t cap) {
  return largest_divisor_at_most(side, std::max<int64_t>(1, std::min(cap, side / 2)));
}

MitConfig level_mit(const PresetSpec& spec, const LevelSpec& l) {
  MitConfig m;
  m.channels = l.channels;
  const int64_t branch = l.channels / 4;
  // Patches must tile the level; the last levels fall back to smaller patches.
  const int64_t patch = token_patch(l.side, spec.attn_patch);

  m.window.channels = branch;
  m.window.num_heads = l.wa_heads;
  m.window.patch_size = patch;
  m.window.window_size = l.side;

  m.multi_scale.channels = branch;
  m.multi_scale.num_heads = l.msa_heads;
  m.multi_scale.patch_size = patch;
  m.multi_scale.sr_ratio = token_patch(l.side / patch, l.sr);

  const int64_t qk = std::max<int64_t>(1, branch / 8);
  m.criss_cross.channels = branch;
  m.criss_cross.qkv_channels = {qk, qk, branch};

  m.channel.channels = branch;
  m.channel.num_heads = l.ca_heads;

  m.fusion.channels = l.channels;
  m.fusion.num_heads = l.fusion_heads;

  m.vanilla.channels = l.channels;
  m.vanilla.num_heads = l.fusion_heads;
  m.vanilla.patch_size = patch;
  m.vanilla.sr_ratio = 1;

  m.cbam_reduction = std::min<int64_t>(16, l.channels / 2);
  m.cbam_kernel = spec.cbam_kernel;
  m.msdc_kernels = spec.msdc_kernels;
  m.msdc_depth = spec.msdc_depth;
  m.cgn_kernel = spec.cgn_kernel;
  return m;
}

std::string join(const std::vector<int64_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"use_ssc",    "use_mit",   "use_dfm",
                                                 "msam_to_va", "drop_msdc", "drop_cgm"};
  return names;
}

bool& flag_ref(AblationFlags& f, const std::string& name) {
  if (name == "use_ssc") return f.use_ssc;
  if (name == "use_mit") return f.use_mit;
  if (name == "use_dfm") return f.use_dfm;
  if (name == "msam_to_va") return f.msam_to_va;
  if (name == "drop_msdc") return f.drop_msdc;
  if (name == "drop_cgm") return f.drop_cgm;
  throw ConfigError("unknown ablation flag '" + name + "'");
}

}  // namespace

std::string to_string(Preset p) {
  switch (p) {
    case Preset::full: return "full";
    case Preset::tiny: return "tiny";
    case Preset::micro: return "micro";
  }
  return "?";
}

Preset parse_preset(const std::string& name) {
  if (name == "full") return Preset::full;
  if (name == "tiny") return Preset::tiny;
  if (name == "micro") return Preset::micro;
  throw ConfigError("unknown preset '" + name + "' (expected full, tiny or micro)");
}

StarNetConfig make_preset(Preset preset) {
  const auto spec = preset_spec(preset);
  StarNetConfig c;
  c.preset = preset;
  c.input_size = spec.input_size;
  c.stem_stride = spec.stem_stride;
  for (const auto& l : spec.levels) {
    c.channels.push_back(l.channels);
    c.mit.push_back(level_mit(spec, l));
    DfmConfig d;
    d.channels = l.channels;
    d.patch_size = token_patch(l.side, spec.dfm_patch);
    d.num_heads = l.dfm_heads;
    d.groups = 2 * l.channels;
    c.dfm.push_back(d);
    c.plain_heads.push_back(l.fusion_heads);
  }
  c.ssc.channels = c.channels;
  c.ssc.chain_kernels = spec.chain_kernels;
  c.validate();
  return c;
}

std::vector<int64_t> StarNetConfig::sides() const {
  std::vector<int64_t> s;
  int64_t side = input_size / stem_stride;
  for (size_t i = 0; i < levels(); ++i, side /= 2) s.push_back(side);
  return s;
}

int64_t StarNetConfig::input_multiple() const {
  int64_t m = stem_stride << (levels() - 1);
  for (size_t i = 0; i < levels(); ++i) {
    const int64_t scale = stem_stride << i;
    const auto& a = mit[i];
    int64_t req = std::lcm(a.window.window_size, a.multi_scale.patch_size * a.multi_scale.sr_ratio);
    req = std::lcm(req, a.vanilla.patch_size);
    req = std::lcm(req, dfm[i].patch_size);
    m = std::lcm(m, req * scale);
  }
  return m;
}

void StarNetConfig::validate() const {
  if (levels() == 0) throw ConfigError("starnet: at least one level is required");
  if (mit.size() != levels() || dfm.size() != levels() || plain_heads.size() != levels()) {
    throw ConfigError("starnet: per-level configuration lists must have one entry per level");
  }
  if (stem_stride <= 0) throw ConfigError("starnet: stem_stride must be positive");
  for (size_t i = 0; i < levels(); ++i) {
    if (channels[i] % 4 != 0) {
      throw ConfigError("starnet: channels[" + std::to_string(i) + "] = " +
                        std::to_string(channels[i]) + " is not divisible by 4");
    }
    if (mit[i].channels != channels[i] || dfm[i].channels != channels[i]) {
      throw ConfigError("starnet: level " + std::to_string(i) + " block widths disagree with channels");
    }
    mit[i].validate();
    dfm[i].validate();
    if (channels[i] % plain_heads[i] != 0) {
      throw ConfigError("starnet: plain_heads[" + std::to_string(i) + "] does not divide channels");
    }
  }
  if (ssc.channels != channels) throw ConfigError("starnet: ssc channels disagree with channels");
  ssc.validate();
  if (input_size <= 0 || input_size % input_multiple() != 0) {
    throw ConfigError("starnet: input_size " + std::to_string(input_size) +
                      " is not a multiple of " + std::to_string(input_multiple()));
  }
}

std::map<std::string, std::string> StarNetConfig::to_entries() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"preset", to_string(preset)},
      {"channels", join(channels)},
      {"input_size", std::to_string(input_size)},
      {"use_ssc", b(flags.use_ssc)},
      {"use_mit", b(flags.use_mit)},
      {"use_dfm", b(flags.use_dfm)},
      {"msam_to_va", b(flags.msam_to_va)},
      {"drop_msdc", b(flags.drop_msdc)},
      {"drop_cgm", b(flags.drop_cgm)},
      {"block_residual", b(block_residual)},
      {"global_residual", b(global_residual)},
  };
}

std::string StarNetConfig::canonical_text() const { return format_key_values(to_entries()); }

uint64_t StarNetConfig::hash() const { return fnv1a64(canonical_text()); }

StarNetConfig ablate(const StarNetConfig& config, const std::map<std::string, bool>& flags) {
  StarNetConfig c = config;
  for (const auto& [name, value] : flags) flag_ref(c.flags, name) = value;
  for (auto& m : c.mit) {
    m.mixer = c.flags.msam_to_va ? AttentionMixer::vanilla : AttentionMixer::multi_stage;
    m.use_msdc = !c.flags.drop_msdc;
    m.use_cgn = !c.flags.drop_cgm;
  }
  c.validate();
  return c;
}

StarNetConfig with_residuals(StarNetConfig config, bool block_residual, bool global_residual) {
  config.block_residual = block_residual;
  config.global_residual = global_residual;
  for (auto& m : config.mit) m.block_residual = block_residual;
  return config;
}

StarNetConfig config_from_text(const std::string& text) {
  auto kv = KeyValueFile::parse_text(text, "model config");
  auto c = make_preset(parse_preset(kv.take_string("preset", "full")));
  const auto channels = kv.take_string("channels", join(c.channels));
  const auto input_size = kv.take_int("input_size", c.input_size);
  if (channels != join(c.channels) || input_size != c.input_size) {
    throw ConfigError("model config: channels/input_size do not match preset '" +
                      to_string(c.preset) + "'");
  }
  std::map<std::string, bool> flags;
  for (const auto& name : ablation_names()) {
    if (kv.has(name)) flags[name] = kv.take_bool(name, false);
  }
  c = ablate(c, flags);
  const bool block = kv.take_bool("block_residual", true);
  const bool global = kv.take_bool("global_residual", true);
  kv.finish();
  return with_residuals(c, block, global);
}

}  // namespace starnet
