#include "starnet/train.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>

#include "starnet/checkpoint.hpp"
#include "starnet/errors.hpp"
#include "starnet/log.hpp"

namespace fs = std::filesystem;

namespace starnet {
namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

uint64_t crop_seed(uint64_t seed, int64_t epoch, int64_t step, int64_t slot) {
  uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<uint64_t>(epoch));
  h = splitmix64(h ^ static_cast<uint64_t>(step));
  return splitmix64(h ^ static_cast<uint64_t>(slot));
}

const char* kModelKeys[] = {"use_ssc", "use_mit", "use_dfm", "msam_to_va", "drop_msdc", "drop_cgm"};

}  // namespace

void TrainConfig::validate() const {
  if (!(base_lr > 0)) throw ConfigError("train: base_lr must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ConfigError("train: betas must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train: weight_decay must be non-negative");
  if (epochs < 0) throw ConfigError("train: epochs must be non-negative");
  if (lr_halving_period <= 0) throw ConfigError("train: lr_halving_period must be positive");
  if (crop <= 0) throw ConfigError("train: crop must be positive");
  if (batch <= 0) throw ConfigError("train: batch must be positive");
  if (loss_weight_a < 0) throw ConfigError("train: loss_weight_a must be non-negative");
  if (steps_per_epoch < 0) throw ConfigError("train: steps_per_epoch must be non-negative");
  if (perceptual != "vgg16" && perceptual != "none") {
    throw ConfigError("train: perceptual must be 'vgg16' or 'none', got '" + perceptual + "'");
  }
  parse_dataset_kind(dataset);
}

double lr_at_epoch(double base_lr, int64_t epoch, int64_t period) {
  if (epoch < 0 || period <= 0) throw ParameterError("lr_at_epoch: epoch must be >= 0 and period > 0");
  return std::ldexp(base_lr, -static_cast<int>(epoch / period));
}

ExperimentConfig parse_experiment(KeyValueFile kv) {
  ExperimentConfig e;
  auto model = make_preset(parse_preset(kv.take_string("preset", "tiny")));
  std::map<std::string, bool> flags;
  for (const char* key : kModelKeys) {
    if (kv.has(key)) flags[key] = kv.take_bool(key, false);
  }
  model = ablate(model, flags);
  const bool block = kv.take_bool("block_residual", true);
  const bool global = kv.take_bool("global_residual", true);
  e.model = with_residuals(model, block, global);

  auto& t = e.train;
  t.base_lr = kv.take_double("base_lr", t.base_lr);
  t.beta1 = kv.take_double("beta1", t.beta1);
  t.beta2 = kv.take_double("beta2", t.beta2);
  t.weight_decay = kv.take_double("weight_decay", t.weight_decay);
  t.epochs = kv.take_int("epochs", t.epochs);
  t.lr_halving_period = kv.take_int("lr_halving_period", t.lr_halving_period);
  t.crop = kv.take_int("crop", e.model.input_size);
  t.batch = kv.take_int("batch", t.batch);
  t.loss_weight_a = kv.take_double("loss_weight_a", t.loss_weight_a);
  t.seed = static_cast<uint64_t>(kv.take_int("seed", 0));
  t.steps_per_epoch = kv.take_int("steps_per_epoch", t.steps_per_epoch);
  t.deterministic = kv.take_bool("deterministic", t.deterministic);
  t.dataset = kv.take_string("dataset", t.dataset);
  t.split = kv.take_string("split", t.split);
  t.perceptual = kv.take_string("perceptual", t.perceptual);
  t.vgg_weights = kv.take_string("vgg_weights", t.vgg_weights);
  t.log_every = kv.take_int("log_every", t.log_every);
  kv.finish();

  if (const char* env = std::getenv("STARNET_SEED")) {
    const std::string s(env);
    uint64_t seed = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw ConfigError("STARNET_SEED must be a non-negative integer, got '" + s + "'");
    }
    t.seed = seed;
  }
  t.validate();
  if (t.crop % e.model.input_multiple() != 0) {
    throw ConfigError("train: crop " + std::to_string(t.crop) + " is not a multiple of the network input multiple " +
                      std::to_string(e.model.input_multiple()));
  }
  return e;
}

ExperimentConfig load_experiment(const fs::path& path) { return parse_experiment(KeyValueFile::load(path)); }

std::shared_ptr<FeatureExtractor> make_feature_extractor(const TrainConfig& cfg) {
  if (cfg.perceptual == "none") return std::make_shared<NullFeatures>();
  if (cfg.perceptual == "vgg16") {
    return std::make_shared<Vgg16Features>(cfg.vgg_weights.empty() ? Vgg16Features::default_weights()
                                                                    : fs::path(cfg.vgg_weights));
  }
  throw ConfigError("unknown perceptual extractor '" + cfg.perceptual + "'");
}

TrainingData TrainingData::from_manifest(const DatasetManifest& manifest) {
  auto samples = std::make_shared<std::vector<SamplePaths>>(manifest.samples);
  return {samples->size(), [samples](size_t i) { return load_pair(samples->at(i)); }};
}

TrainingData TrainingData::from_pairs(std::vector<ImagePair> pairs) {
  auto data = std::make_shared<std::vector<ImagePair>>(std::move(pairs));
  return {data->size(), [data](size_t i) { return data->at(i); }};
}

Trainer::Trainer(ModelState model, TrainingData data, TrainConfig cfg, std::shared_ptr<FeatureExtractor> fx)
    : model_(std::move(model)), data_(std::move(data)), cfg_(std::move(cfg)), fx_(std::move(fx)) {
  cfg_.validate();
  if (data_.size == 0) throw IngestionError("train: the training set is empty");
  if (!fx_) throw ConfigError("train: no feature extractor");
  if (cfg_.crop % model_.config.input_multiple() != 0) {
    throw ConfigError("train: crop " + std::to_string(cfg_.crop) + " is not a multiple of " +
                      std::to_string(model_.config.input_multiple()));
  }
  if (cfg_.deterministic) torch::set_num_threads(1);
  optimizer_ = std::make_unique<torch::optim::Adam>(
      model_.net->parameters(), torch::optim::AdamOptions(lr_at_epoch(cfg_.base_lr, 0, cfg_.lr_halving_period))
                                    .betas({cfg_.beta1, cfg_.beta2})
                                    .weight_decay(cfg_.weight_decay));
}

int64_t Trainer::steps_per_epoch() const {
  if (cfg_.steps_per_epoch > 0) return cfg_.steps_per_epoch;
  return (static_cast<int64_t>(data_.size) + cfg_.batch - 1) / cfg_.batch;
}

std::pair<torch::Tensor, torch::Tensor> Trainer::batch_at(int64_t epoch, int64_t step_in_epoch,
                                                          std::vector<std::string>* ids) const {
  std::vector<size_t> perm(data_.size);
  std::iota(perm.begin(), perm.end(), size_t{0});
  std::mt19937_64 rng(cfg_.seed + static_cast<uint64_t>(epoch));
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<torch::Tensor> xs, ys;
  for (int64_t k = 0; k < cfg_.batch; ++k) {
    const size_t index = perm[static_cast<size_t>(step_in_epoch * cfg_.batch + k) % perm.size()];
    auto pair = random_crop_pair(data_.fetch(index), cfg_.crop, crop_seed(cfg_.seed, epoch, step_in_epoch, k));
    if (ids) ids->push_back(pair.id.empty() ? std::to_string(index) : pair.id);
    xs.push_back(pair.snowy);
    ys.push_back(pair.clean);
  }
  return {torch::stack(xs), torch::stack(ys)};
}

StepRecord Trainer::step() {
  if (finished()) throw TrainingError("train: all epochs are complete");
  StepRecord rec;
  rec.epoch = epoch_;
  rec.step = global_step_;
  rec.lr = lr_at_epoch(cfg_.base_lr, epoch_, cfg_.lr_halving_period);
  for (auto& group : optimizer_->param_groups()) group.options().set_lr(rec.lr);

  std::vector<std::string> ids;
  auto [x, y] = batch_at(epoch_, step_in_epoch_, &ids);
  const auto dtype = model_.net->parameters().front().scalar_type();
  x = x.to(dtype);
  y = y.to(dtype);

  model_.net->train();
  optimizer_->zero_grad();
  auto pred = model_.net->forward(x);
  auto loss = total_loss(pred, y, *fx_, cfg_.loss_weight_a);
  rec.total = loss.total.item<double>();
  rec.smooth_l1 = loss.smooth_l1.item<double>();
  rec.perceptual = loss.perceptual.item<double>();

  if (!std::isfinite(rec.total)) {
    const fs::path dir = out_dir_.empty() ? fs::temp_directory_path() : out_dir_;
    fs::create_directories(dir);
    const auto dump = dir / ("nonfinite_step_" + std::to_string(global_step_) + ".txt");
    std::ofstream out(dump);
    out << "epoch = " << epoch_ << "\nstep = " << global_step_ << "\nstep_in_epoch = " << step_in_epoch_
        << "\nlr = " << rec.lr << "\nsmooth_l1 = " << rec.smooth_l1 << "\nperceptual = " << rec.perceptual
        << "\nbatch =";
    for (const auto& id : ids) out << ' ' << id;
    out << "\ninput_min = " << x.min().item<double>() << "\ninput_max = " << x.max().item<double>()
        << "\npred_finite = " << (torch::isfinite(pred).all().item<bool>() ? "true" : "false") << "\n";
    std::string batch;
    for (const auto& id : ids) batch += (batch.empty() ? "" : ",") + id;
    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch_) + " step " +
                        std::to_string(global_step_) + " (batch " + batch + "); diagnostics in " + dump.string());
  }

  loss.total.backward();
  optimizer_->step();

  ++global_step_;
  if (++step_in_epoch_ == steps_per_epoch()) {
    step_in_epoch_ = 0;
    ++epoch_;
    if (!out_dir_.empty()) {
      save_checkpoint(out_dir_ / ("epoch_" + std::to_string(epoch_ - 1) + ".ckpt"));
      save_checkpoint(out_dir_ / "latest.ckpt");
    }
  }
  if (cfg_.log_every > 0 && rec.step % cfg_.log_every == 0) {
    log::info("epoch ", rec.epoch, " step ", rec.step, " lr ", rec.lr, " loss ", rec.total, " (smooth_l1 ",
              rec.smooth_l1, ", perceptual ", rec.perceptual, ")");
  }
  return rec;
}

std::vector<StepRecord> Trainer::run(int64_t max_steps) {
  std::vector<StepRecord> records;
  while (!finished() && (max_steps < 0 || static_cast<int64_t>(records.size()) < max_steps)) {
    records.push_back(step());
  }
  return records;
}

void Trainer::save_checkpoint(const fs::path& path) const {
  Checkpoint ckpt;
  ckpt.config_text = model_.config.canonical_text();
  ckpt.epoch = epoch_;
  ckpt.step = global_step_;
  add_model_tensors(ckpt, model_);
  auto optim = nlohmann::json::object();
  auto& states = optimizer_->state();
  for (const auto& p : model_.net->named_parameters()) {
    auto it = states.find(p.value().unsafeGetTensorImpl());
    if (it == states.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    optim[p.key()] = s.step();
    ckpt.tensors.emplace_back("optim/" + p.key() + "/exp_avg", s.exp_avg());
    ckpt.tensors.emplace_back("optim/" + p.key() + "/exp_avg_sq", s.exp_avg_sq());
  }
  ckpt.state = {{"step_in_epoch", step_in_epoch_}, {"seed", cfg_.seed}, {"adam_steps", optim}};
  write_checkpoint(path, ckpt);
}

Trainer Trainer::resume(const fs::path& checkpoint, TrainingData data, TrainConfig cfg,
                        std::shared_ptr<FeatureExtractor> fx) {
  const auto ckpt = read_checkpoint(checkpoint);
  const auto seed = ckpt.state.value("seed", cfg.seed);
  if (seed != cfg.seed) {
    log::warn("resume: using the checkpoint seed ", seed, " instead of ", cfg.seed);
    cfg.seed = seed;
  }
  Trainer t(model_from_checkpoint(ckpt), std::move(data), std::move(cfg), std::move(fx));
  t.epoch_ = ckpt.epoch;
  t.global_step_ = ckpt.step;
  t.step_in_epoch_ = ckpt.state.value("step_in_epoch", int64_t{0});

  const auto steps = ckpt.state.value("adam_steps", nlohmann::json::object());
  auto& states = t.optimizer_->state();
  for (const auto& p : t.model_.net->named_parameters()) {
    if (!steps.contains(p.key())) continue;
    const auto* m = ckpt.find("optim/" + p.key() + "/exp_avg");
    const auto* v = ckpt.find("optim/" + p.key() + "/exp_avg_sq");
    if (!m || !v) throw CheckpointError("checkpoint: incomplete optimizer state for '" + p.key() + "'");
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(steps.at(p.key()).get<int64_t>());
    s->exp_avg(m->clone());
    s->exp_avg_sq(v->clone());
    states[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
  log::info("resumed from ", checkpoint.string(), " at epoch ", t.epoch_, " step ", t.global_step_);
  return t;
}

torch::Tensor restore_image(ModelState& model, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("restore_image: expected a [3, H, W] image");
  const int64_t m = model.config.input_multiple();
  const int64_t h = image.size(1), w = image.size(2);
  const int64_t ph = (m - h % m) % m, pw = (m - w % m) % m;
  const auto dtype = model.net->parameters().front().scalar_type();
  auto x = image.unsqueeze(0).to(dtype);
  if (ph || pw) {
    namespace F = torch::nn::functional;
    x = F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
  }
  model.net->eval();
  using torch::indexing::Slice;
  return model.net->infer(x)[0].index({torch::indexing::Slice(), Slice(0, h), Slice(0, w)}).to(image.scalar_type());
}

MetricReport evaluate(const DatasetManifest& manifest, const Predictor& predict) {
  MetricReport report;
  for (const auto& sample : manifest.samples) {
    const auto pair = load_pair(sample);
    const auto pred = predict(pair);
    report.add(sample.id, psnr(pred, pair.clean), ssim(pred, pair.clean));
  }
  log::info("evaluated ", report.records.size(), " images: mean PSNR ", report.mean_psnr(), " dB, mean SSIM ",
            report.mean_ssim());
  return report;
}

MetricReport evaluate(ModelState& model, const DatasetManifest& manifest) {
  return evaluate(manifest, [&](const ImagePair& p) { return restore_image(model, p.snowy); });
}

}  // namespace starnet
