// starnet: train, evaluate and run the desnowing network.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "starnet/checkpoint.hpp"
#include "starnet/dataset.hpp"
#include "starnet/errors.hpp"
#include "starnet/features.hpp"
#include "starnet/image_io.hpp"
#include "starnet/log.hpp"
#include "starnet/synth.hpp"
#include "starnet/train.hpp"

namespace fs = std::filesystem;
using namespace starnet;

namespace {

int run_train(const fs::path& config, const fs::path& data, const fs::path& out, bool resume) {
  const auto exp = load_experiment(config);
  const auto manifest = load_manifest(data, parse_dataset_kind(exp.train.dataset), exp.train.split);
  auto fx = make_feature_extractor(exp.train);
  auto train_data = TrainingData::from_manifest(manifest);
  const auto latest = out / "latest.ckpt";
  auto trainer = resume && fs::exists(latest)
                     ? Trainer::resume(latest, train_data, exp.train, fx)
                     : Trainer(build(exp.model, exp.train.seed), train_data, exp.train, fx);
  trainer.set_output_dir(out);
  fs::create_directories(out);
  std::ofstream losses(out / "losses.jsonl", resume ? std::ios::app : std::ios::trunc);
  while (!trainer.finished()) {
    const auto r = trainer.step();
    losses << nlohmann::json{{"epoch", r.epoch}, {"step", r.step}, {"lr", r.lr}, {"total", r.total},
                             {"smooth_l1", r.smooth_l1}, {"perceptual", r.perceptual}}
                  .dump()
           << '\n';
  }
  log::info("training finished after ", trainer.global_step(), " steps; checkpoints in ", out.string());
  return 0;
}

int run_eval(const fs::path& ckpt, const fs::path& data, const std::string& dataset, const std::string& split,
             const fs::path& report_path) {
  auto model = load_model(ckpt);
  const auto manifest = load_manifest(data, parse_dataset_kind(dataset), split);
  const auto report = evaluate(model, manifest);
  if (report_path.empty()) {
    report.write_jsonl(std::cout);
  } else {
    if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
    std::ofstream out(report_path);
    report.write_jsonl(out);
  }
  return 0;
}

int run_infer(const fs::path& ckpt, const fs::path& in, const fs::path& out) {
  auto model = load_model(ckpt);
  std::vector<fs::path> inputs = fs::is_directory(in) ? list_images(in) : std::vector<fs::path>{in};
  if (inputs.empty()) throw IngestionError("no images found under " + in.string());
  for (const auto& p : inputs) {
    const auto target = out / (p.stem().string() + ".png");
    write_png(target, restore_image(model, read_image(p)));
    log::info("wrote ", target.string());
  }
  return 0;
}

int run_synth(const fs::path& spec_path, const fs::path& clean_dir, const fs::path& out, int64_t procedural,
              int64_t size) {
  const auto spec = read_synthesis_spec(spec_path);
  if (procedural > 0) {
    for (int64_t i = 0; i < procedural; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04lld.png", static_cast<long long>(i));
      write_png(clean_dir / name, procedural_clean(size, size, spec.seed + 1000003ull * (i + 1)));
    }
  }
  const auto images = list_images(clean_dir);
  if (images.empty()) throw IngestionError("no clean images under " + clean_dir.string());
  for (size_t i = 0; i < images.size(); ++i) {
    auto s = spec;
    s.seed = spec.seed + i;
    const auto pair = synthesize_pair(read_image(images[i]), s);
    const auto name = images[i].stem().string() + ".png";
    write_png(out / "snowy" / name, pair.snowy);
    write_png(out / "clean" / name, pair.clean);
  }
  log::info("synthesized ", images.size(), " pairs into ", out.string());
  return 0;
}

int run_dump(const fs::path& ckpt, const fs::path& img, int64_t level, const fs::path& out) {
  auto model = load_model(ckpt);
  const auto d = dump_features(model, read_image(img), level, out);
  std::cout << d.pre_dfm.string() << '\n' << d.post_dfm.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-image desnowing network"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log debug output");

  fs::path config, data, out, ckpt, in, spec, clean, img, report;
  std::string dataset = "paired", split = "test";
  bool resume = false;
  int64_t level = 0, procedural = 0, size = 64;

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config, "Key-value experiment file")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data, "Dataset root")->required();
  train->add_option("--out", out, "Output directory for checkpoints")->required();
  train->add_flag("--resume", resume, "Continue from <out>/latest.ckpt when present");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Dataset root")->required();
  eval->add_option("--dataset", dataset, "csd, srrs, snow100k or paired");
  eval->add_option("--split", split, "Split directory (ignored for paired)");
  eval->add_option("--report", report, "Write the JSONL report here instead of stdout");

  auto* infer = app.add_subcommand("infer", "Desnow an image or a directory of images");
  infer->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--in", in, "Input image or directory")->required()->check(CLI::ExistingPath);
  infer->add_option("--out", out, "Output directory")->required();

  auto* synth = app.add_subcommand("synth", "Synthesize snowy/clean pairs");
  synth->add_option("--spec", spec, "Key-value synthesis spec")->required()->check(CLI::ExistingFile);
  synth->add_option("--clean", clean, "Directory of clean images")->required();
  synth->add_option("--out", out, "Output root (snowy/ and clean/)")->required();
  synth->add_option("--procedural", procedural, "First write this many generated clean images into --clean");
  synth->add_option("--size", size, "Side of generated clean images");

  auto* dump = app.add_subcommand("dump-features", "Write pre/post-DFM feature grids for one level");
  dump->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  dump->add_option("--img", img, "Input image")->required()->check(CLI::ExistingFile);
  dump->add_option("--level", level, "Skip level")->required();
  dump->add_option("--out", out, "Output directory")->default_val(".");

  CLI11_PARSE(app, argc, argv);
  if (verbose) log::set_level(log::Level::debug);

  try {
    if (*train) return run_train(config, data, out, resume);
    if (*eval) return run_eval(ckpt, data, dataset, split, report);
    if (*infer) return run_infer(ckpt, in, out);
    if (*synth) return run_synth(spec, clean, out, procedural, size);
    if (*dump) return run_dump(ckpt, img, level, out);
  } catch (const ConfigError& e) {
    log::error("configuration error: ", e.what());
    return 2;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 1;
  }
  return 0;
}
