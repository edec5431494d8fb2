#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "starnet/checkpoint.hpp"
#include "starnet/dataset.hpp"
#include "starnet/errors.hpp"
#include "starnet/features.hpp"
#include "starnet/image_io.hpp"
#include "starnet/metrics.hpp"
#include "starnet/synth.hpp"
#include "starnet/train.hpp"

using namespace starnet;
using namespace starnet::testing;
namespace fs = std::filesystem;

namespace {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("starnet_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void touch(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream(p).put('\0');
}

void write_pairs(const fs::path& root, int n, int64_t side) {
  SnowSynthesisSpec spec;
  for (int i = 0; i < n; ++i) {
    spec.seed = 7 + i;
    auto pair = synthesize_pair(procedural_clean(side, side, 100 + i), spec);
    const auto name = "p" + std::to_string(i) + ".png";
    write_png(root / "snowy" / name, pair.snowy);
    write_png(root / "clean" / name, pair.clean);
  }
}

std::vector<ImagePair> micro_pairs(int n = 3) {
  std::vector<ImagePair> pairs;
  SnowSynthesisSpec spec;
  spec.particles_min = 3;
  spec.particles_max = 6;
  for (int i = 0; i < n; ++i) {
    spec.seed = 50 + i;
    auto p = synthesize_pair(procedural_clean(16, 16, 200 + i), spec);
    p.id = "m" + std::to_string(i);
    pairs.push_back(p);
  }
  return pairs;
}

TrainConfig micro_train() {
  TrainConfig t;
  t.base_lr = 1e-3;
  t.crop = 8;
  t.batch = 2;
  t.epochs = 3;
  t.steps_per_epoch = 2;
  t.seed = 17;
  t.perceptual = "vgg16";
  t.log_every = 0;
  return t;
}

Trainer micro_trainer(const TrainConfig& t) {
  return Trainer(build(make_preset(Preset::micro), t.seed), TrainingData::from_pairs(micro_pairs()), t,
                 make_feature_extractor(t));
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("benchmark layouts pair by stem") {
    TempDir tmp("csd");
    const auto root = tmp.path / "CSD";
    for (int i = 0; i < 8000; ++i) {
      const auto stem = std::to_string(i);
      touch(root / "Train" / "Snow" / (stem + ".tif"));
      touch(root / "Train" / "Gt" / (stem + ".tif"));
      if (i < 2000) {
        touch(root / "Test" / "Snow" / (stem + ".tif"));
        touch(root / "Test" / "Gt" / (stem + ".tif"));
      }
    }
    auto train = load_manifest(root, DatasetKind::csd, "train");
    auto test = load_manifest(root, DatasetKind::csd, "test");
    CHECK(train.count() == 8000);
    CHECK(test.count() == 2000);
    CHECK(train.count() == static_cast<size_t>(reference_count(DatasetKind::csd, "train")));
    CHECK(test.count() == static_cast<size_t>(reference_count(DatasetKind::csd, "test")));
    CHECK(std::is_sorted(train.samples.begin(), train.samples.end(),
                         [](const auto& a, const auto& b) { return a.id < b.id; }));
    CHECK(train.samples[0].snowy.stem() == train.samples[0].clean.stem());

    touch(root / "Test" / "Snow" / "orphan.tif");
    try {
      load_manifest(root, DatasetKind::csd, "test");
      FAIL("expected an ingestion error");
    } catch (const IngestionError& e) {
      CHECK(std::string(e.what()).find("orphan") != std::string::npos);
    }
  }

  TEST_CASE("other layouts") {
    TempDir tmp("layouts");
    touch(tmp.path / "srrs" / "test" / "Syn" / "a.jpg");
    touch(tmp.path / "srrs" / "test" / "Gt" / "a.png");
    touch(tmp.path / "s100k" / "test" / "synthetic" / "b.jpg");
    touch(tmp.path / "s100k" / "test" / "gt" / "b.jpg");
    CHECK(load_manifest(tmp.path / "srrs", DatasetKind::srrs, "test").count() == 1);
    CHECK(load_manifest(tmp.path / "s100k", DatasetKind::snow100k, "test").count() == 1);
    CHECK(parse_dataset_kind("snow100k") == DatasetKind::snow100k);
    CHECK_THROWS_AS(parse_dataset_kind("rain100"), ConfigError);
  }

  TEST_CASE("empty or missing directories are errors") {
    TempDir tmp("empty");
    fs::create_directories(tmp.path / "snowy");
    fs::create_directories(tmp.path / "clean");
    CHECK_THROWS_AS(load_manifest(tmp.path, DatasetKind::paired), IngestionError);
    CHECK_THROWS_AS(load_manifest(tmp.path / "nowhere", DatasetKind::csd), IngestionError);
  }

  TEST_CASE("generated four-pair fixture") {
    TempDir tmp("fixture");
    write_pairs(tmp.path, 4, 16);
    auto m = load_manifest(tmp.path, DatasetKind::paired);
    REQUIRE(m.count() == 4);
    auto pair = load_pair(m.samples[2]);
    CHECK(pair.id == "p2");
    CHECK(pair.snowy.sizes() == torch::IntArrayRef{3, 16, 16});
    // PNG round trip is lossless for 8-bit content.
    auto clean = procedural_clean(16, 16, 102);
    CHECK(torch::equal(pair.clean, clean));
  }

  TEST_CASE("snow synthesis") {
    auto gray = torch::full({3, 64, 64}, 0.5);
    SnowSynthesisSpec spec;
    spec.particles_min = spec.particles_max = 50;
    spec.seed = 3;
    const auto before = gray.clone();
    auto a = synthesize_pair(gray, spec), b = synthesize_pair(gray, spec);
    CHECK(torch::equal(gray, before));
    CHECK(torch::equal(a.snowy, b.snowy));
    CHECK(torch::equal(a.clean, gray));
    CHECK(a.snowy.min().item<float>() >= 0);
    CHECK(a.snowy.max().item<float>() <= 1);
    const double p = psnr(a.snowy, a.clean);
    CHECK(std::isfinite(p));
    CHECK(p < 40.0);

    spec.seed = 4;
    CHECK_FALSE(torch::equal(synthesize_pair(gray, spec).snowy, a.snowy));

    spec.particles_min = spec.particles_max = 0;
    spec.veiling = 0;
    auto none = synthesize_pair(gray, spec);
    CHECK(torch::equal(none.snowy, gray));
    CHECK(std::isinf(psnr(none.snowy, none.clean)));

    SnowSynthesisSpec bad;
    bad.particles_min = 10;
    bad.particles_max = 5;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    CHECK_THROWS_AS(synthesize_pair(gray, bad), ParameterError);
  }

  TEST_CASE("synthesis spec file") {
    TempDir tmp("spec");
    const auto path = tmp.path / "snow.txt";
    std::ofstream(path) << "particles_min = 5\nparticles_max = 9\nveiling = 0.1\nseed = 12\n";
    auto spec = read_synthesis_spec(path);
    CHECK(spec.particles_max == 9);
    CHECK(spec.seed == 12);
    std::ofstream(path) << "particles = 5\n";
    CHECK_THROWS_AS(read_synthesis_spec(path), ConfigError);
  }

  TEST_CASE("random crop") {
    ImagePair pair{"x", torch::rand({3, 20, 24}), torch::rand({3, 20, 24})};
    auto c = random_crop_pair(pair, 8, 5);
    CHECK(c.snowy.sizes() == torch::IntArrayRef{3, 8, 8});
    CHECK(torch::equal(c.snowy, random_crop_pair(pair, 8, 5).snowy));
    // Same window in both images: find the offset in the snowy image and compare.
    bool aligned = false;
    for (int64_t y = 0; y + 8 <= 20 && !aligned; ++y)
      for (int64_t x = 0; x + 8 <= 24 && !aligned; ++x) {
        auto win = [&](const torch::Tensor& t) { return t.narrow(1, y, 8).narrow(2, x, 8); };
        aligned = torch::equal(win(pair.snowy), c.snowy) && torch::equal(win(pair.clean), c.clean);
      }
    CHECK(aligned);

    ImagePair exact{"y", torch::rand({3, 8, 8}), torch::rand({3, 8, 8})};
    auto same = random_crop_pair(exact, 8, 99);
    CHECK(torch::equal(same.snowy, exact.snowy));
    CHECK(torch::equal(same.clean, exact.clean));
    CHECK_THROWS_AS(random_crop_pair(exact, 9, 0), ParameterError);
  }

  TEST_CASE("learning-rate schedule") {
    CHECK(lr_at_epoch(2e-5, 0, 40) == 2e-5);
    CHECK(lr_at_epoch(2e-5, 40, 40) == 1e-5);
    CHECK(lr_at_epoch(2e-5, 80, 40) == 5e-6);
    CHECK(lr_at_epoch(2e-5, 39, 40) == 2e-5);
    for (int64_t e = 0; e < 210; ++e) {
      double expected = 2e-5;
      for (int64_t k = 0; k < e / 40; ++k) expected /= 2;
      CHECK(lr_at_epoch(2e-5, e, 40) == expected);
    }
    CHECK_THROWS_AS(lr_at_epoch(2e-5, -1, 40), ParameterError);
  }

  TEST_CASE("experiment files") {
    auto kv = KeyValueFile::parse_text("preset = micro\nepochs = 4\nbase_lr = 0.001\nuse_dfm = false\nseed = 9\n");
    unsetenv("STARNET_SEED");
    auto e = parse_experiment(kv);
    CHECK(e.model.preset == Preset::micro);
    CHECK_FALSE(e.model.flags.use_dfm);
    CHECK(e.train.epochs == 4);
    CHECK(e.train.crop == e.model.input_size);
    CHECK(e.train.seed == 9);

    setenv("STARNET_SEED", "123", 1);
    CHECK(parse_experiment(kv).train.seed == 123);
    setenv("STARNET_SEED", "abc", 1);
    CHECK_THROWS_AS(parse_experiment(kv), ConfigError);
    unsetenv("STARNET_SEED");

    CHECK_THROWS_AS(parse_experiment(KeyValueFile::parse_text("preset = micro\nlearning_rate = 1\n")), ConfigError);
    CHECK_THROWS_AS(parse_experiment(KeyValueFile::parse_text("preset = micro\ncrop = 6\n")), ConfigError);
    CHECK_THROWS_AS(parse_experiment(KeyValueFile::parse_text("preset = micro\nperceptual = lpips\n")),
                    ConfigError);
  }

  TEST_CASE("one step on a frozen batch lowers the loss") {
    auto t = micro_train();
    t.base_lr = 1e-4;
    auto trainer = micro_trainer(t);
    auto fx = make_feature_extractor(t);
    auto [x, y] = trainer.batch_at(0, 0);
    auto loss = [&] {
      torch::NoGradGuard no_grad;
      return total_loss(trainer.model().net->forward(x), y, *fx).total.item<double>();
    };
    const double before = loss();
    const auto rec = trainer.step();
    CHECK(rec.total == doctest::Approx(before).epsilon(1e-6));
    CHECK(loss() < before);
  }

  TEST_CASE("batches depend only on the position") {
    auto trainer = micro_trainer(micro_train());
    std::vector<std::string> ids_a, ids_b;
    auto a = trainer.batch_at(1, 1, &ids_a);
    auto b = trainer.batch_at(1, 1, &ids_b);
    CHECK(ids_a == ids_b);
    CHECK(torch::equal(a.first, b.first));
    CHECK(a.first.sizes() == torch::IntArrayRef{2, 3, 8, 8});
    CHECK(trainer.steps_per_epoch() == 2);
  }

  TEST_CASE("training is reproducible and resumable") {
    TempDir tmp("resume");
    auto t = micro_train();
    auto a = micro_trainer(t);
    a.set_output_dir(tmp.path);
    auto run_a = a.run();
    REQUIRE(run_a.size() == 6);
    CHECK(a.finished());
    CHECK(fs::exists(tmp.path / "epoch_0.ckpt"));
    CHECK(fs::exists(tmp.path / "epoch_2.ckpt"));
    CHECK(fs::exists(tmp.path / "latest.ckpt"));
    CHECK(read_checkpoint(tmp.path / "epoch_0.ckpt").epoch == 1);

    auto b = micro_trainer(t);
    auto run_b = b.run();
    for (size_t i = 0; i < run_a.size(); ++i) CHECK(run_a[i].total == run_b[i].total);
    CHECK(run_a[2].lr == t.base_lr);

    for (int e : {0, 1}) {
      auto resumed = Trainer::resume(tmp.path / ("epoch_" + std::to_string(e) + ".ckpt"),
                                     TrainingData::from_pairs(micro_pairs()), t, make_feature_extractor(t));
      CHECK(resumed.epoch() == e + 1);
      CHECK(resumed.global_step() == 2 * (e + 1));
      const auto next = resumed.step();
      CHECK(next.total == run_a[2 * (e + 1)].total);
    }
  }

  TEST_CASE("non-finite loss aborts with a diagnostic file") {
    TempDir tmp("nan");
    auto pairs = micro_pairs(2);
    for (auto& p : pairs) p.snowy = torch::full_like(p.snowy, NAN);
    auto t = micro_train();
    Trainer trainer(build(make_preset(Preset::micro), 1), TrainingData::from_pairs(pairs), t,
                    make_feature_extractor(t));
    trainer.set_output_dir(tmp.path);
    CHECK_THROWS_AS(trainer.step(), TrainingError);
    CHECK(fs::exists(tmp.path / "nonfinite_step_0.txt"));
  }

  TEST_CASE("evaluation report") {
    TempDir tmp("eval");
    write_pairs(tmp.path, 4, 16);
    auto manifest = load_manifest(tmp.path, DatasetKind::paired);
    auto perfect = evaluate(manifest, [](const ImagePair& p) { return p.clean; });
    REQUIRE(perfect.records.size() == 4);
    CHECK(perfect.mean_ssim() == 1.0);
    CHECK(std::isinf(perfect.records[0].psnr_db));

    auto model = build(make_preset(Preset::micro), 2);
    auto report = evaluate(model, manifest);
    CHECK(report.records.size() == manifest.count());
    CHECK(report.records[1].id == "p1");
    CHECK(std::isfinite(report.mean_psnr()));
  }

  TEST_CASE("restoration handles sizes that are not multiples") {
    auto model = build(make_preset(Preset::micro), 2);
    auto img = torch::rand({3, 13, 10});
    auto out = restore_image(model, img);
    CHECK(out.sizes() == img.sizes());
    CHECK(out.min().item<float>() >= 0);
    CHECK(out.max().item<float>() <= 1);
  }

  TEST_CASE("feature grids") {
    auto feats = torch::rand({64, 5, 7});
    feats[3].fill_(0.25);
    auto grid = tile_channels(feats);
    CHECK(grid.sizes() == torch::IntArrayRef{8 * 5, 8 * 7});
    auto tile3 = grid.narrow(0, 0, 5).narrow(1, 3 * 7, 7);
    CHECK(max_abs(tile3 - 128.0 / 255.0) < 1e-7);
    CHECK(tile_channels(torch::rand({10, 4, 4})).sizes() == torch::IntArrayRef{3 * 4, 4 * 4});
    CHECK(tile_channels(torch::rand({100, 2, 2})).sizes() == torch::IntArrayRef{16, 16});

    TempDir tmp("dump");
    auto model = build(make_preset(Preset::tiny), 1);
    auto d = dump_features(model, torch::rand({3, 64, 64}), 0, tmp.path);
    CHECK(d.rows == 3);
    CHECK(d.cols == 3);
    auto img = read_image(d.pre_dfm);
    CHECK(img.sizes() == torch::IntArrayRef{3, 3 * 16, 3 * 16});
    CHECK(fs::exists(d.post_dfm));
    CHECK_THROWS_AS(dump_features(model, torch::rand({3, 64, 64}), 4, tmp.path), ParameterError);

    auto full = build(make_preset(Preset::full), 1);
    auto f = dump_features(full, torch::rand({3, 224, 224}), 0, tmp.path);
    CHECK(f.rows == 8);
    CHECK(f.cols == 8);
    CHECK(read_image(f.post_dfm).sizes() == torch::IntArrayRef{3, 8 * 56, 8 * 56});
  }
}
