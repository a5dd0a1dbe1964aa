// ecn: train, evaluate, run and analyze the crack segmentation network.
//
// Exit status: 0 on success, 1 when the work itself fails (bad files, corrupt
// checkpoints, divergence), 2 for command-line misuse.

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ecn/ablation.hpp"
#include "ecn/arch_spec.hpp"
#include "ecn/augment.hpp"
#include "ecn/checkpoint.hpp"
#include "ecn/complexity.hpp"
#include "ecn/errors.hpp"
#include "ecn/image_io.hpp"
#include "ecn/kernels.hpp"
#include "ecn/kv_text.hpp"
#include "ecn/manifest.hpp"
#include "ecn/metrics.hpp"
#include "ecn/rng.hpp"
#include "ecn/synthetic.hpp"
#include "ecn/trainer.hpp"

namespace fs = std::filesystem;
using namespace ecn;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Options {
  std::string spec_path;
  std::string manifest;
  std::size_t synthetic = 0;
  std::size_t synthetic_val = 0;
  std::size_t epochs = 40;
  std::size_t batch = 4;
  std::uint64_t seed = 7;
  std::string out;
  std::string checkpoint;
  std::string input;
  std::size_t input_size = 0;
  std::vector<std::string> disable;
  double threshold = kDefaultThreshold;
  double lr = AdamConfig{}.lr;
  std::size_t max_steps = 0;
  bool augment = false;
  std::string augment_config;
  std::string split = "test";
  bool csv = false;
  bool probabilities = false;
  std::size_t seeds = 10;
  std::size_t train_count = 64;
  std::size_t val_count = 16;
  std::size_t gen_val_count = 0;
  std::size_t test_count = 0;
  std::size_t threads = 1;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
  } else {
    fs::path p(o.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_file(p, text);
  }
}

ArchSpec resolve_spec(const Options& o) {
  ArchSpec spec = o.spec_path.empty() ? default_arch_spec() : load_arch_spec(o.spec_path);
  if (o.input_size != 0) {
    spec.input.height = o.input_size;
    spec.input.width = o.input_size;
  }
  for (const std::string& name : o.disable) disable_block(spec.ablation, name);
  return spec;
}

std::uint64_t data_seed(std::uint64_t seed) { return derive_seed(seed, "data"); }

std::vector<Sample> synthetic_split(std::size_t count, std::size_t size, std::uint64_t seed,
                                    std::string_view split) {
  return make_synthetic_dataset(count, size, derive_seed(data_seed(seed), split));
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

int cmd_train(const Options& o) {
  ArchSpec spec = resolve_spec(o);
  const std::size_t h = spec.input.height;
  const std::size_t w = spec.input.width;

  std::vector<Sample> train_set;
  std::vector<Sample> val_set;
  if (!o.manifest.empty()) {
    Manifest m = load_manifest(o.manifest);
    train_set = load_samples(m.train, h, w);
    val_set = load_samples(m.val, h, w);
  } else if (o.synthetic > 0) {
    if (h != w) throw ConfigError("--synthetic needs a square input size");
    train_set = synthetic_split(o.synthetic, h, o.seed, "train");
    if (o.synthetic_val > 0) val_set = synthetic_split(o.synthetic_val, h, o.seed, "val");
  } else {
    throw UsageError("train needs --manifest or --synthetic N");
  }

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch = o.batch;
  cfg.seed = o.seed;
  cfg.adam.lr = o.lr;
  cfg.max_steps = o.max_steps;
  cfg.threshold = o.threshold;
  cfg.augment = o.augment || !o.augment_config.empty();
  if (!o.augment_config.empty()) cfg.augment_config = load_augment_config(o.augment_config);

  fs::path out(o.out);
  fs::create_directories(out);
  std::ofstream log(out / "train.log", std::ios::binary);
  if (!log) throw IoError((out / "train.log").string(), "cannot open for writing");
  cfg.log = &log;

  TrainResult r = train(spec, train_set, val_set, cfg);
  log.flush();

  auto save = [&](const Checkpoint& c, const char* name) {
    save_checkpoint((out / name).string(), c.model, c.optim, c.progress);
  };
  save(r.best_state, "best.ckpt");
  save(r.final_state, "final.ckpt");
  write_file(out / "spec.txt", to_text(spec));

  std::cout << "steps=" << r.final_state.progress.step << "\n";
  if (!r.epochs.empty()) {
    std::cout << "final_train_loss=" << format_double(r.epochs.back().train_loss) << "\n";
  }
  std::cout << "best_epoch=" << r.best_state.progress.epoch << "\n";
  return 0;
}

int cmd_infer(const Options& o) {
  Checkpoint ck = load_checkpoint(o.checkpoint);
  const ArchSpec& spec = ck.model.spec();

  std::vector<fs::path> inputs;
  fs::path in(o.input);
  if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.is_regular_file() && is_image_file(e.path())) inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw IoError(in.string(), "no PNG images in directory");
  } else {
    inputs.push_back(in);
  }

  fs::path out(o.out);
  fs::create_directories(out);
  for (const fs::path& p : inputs) {
    Tensor4 image = load_image(p.string());
    const std::size_t h0 = image.shape().h;
    const std::size_t w0 = image.shape().w;
    if (spec.input.channels != image.shape().c) {
      throw DimensionError("infer", "c", "model expects " + std::to_string(spec.input.channels) + " channels");
    }
    Tensor4 x = resize_bilinear(image, spec.input.height, spec.input.width);
    Tensor4 logits = ck.model.predict(x);
    Tensor4 prob = kernels::sigmoid_forward(logits);
    Tensor4 mask = resize_nearest(binarize(prob, o.threshold), h0, w0);
    const std::string stem = path_stem(p.string());
    save_mask(mask, (out / (stem + ".png")).string());
    if (o.probabilities) {
      save_image(resize_bilinear(prob, h0, w0), (out / (stem + "_prob.png")).string());
    }
  }
  std::cout << "masks=" << inputs.size() << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  Checkpoint ck = load_checkpoint(o.checkpoint);
  const ArchSpec& spec = ck.model.spec();
  std::vector<Sample> samples;
  if (!o.manifest.empty()) {
    Manifest m = load_manifest(o.manifest);
    samples = load_samples(m.split(o.split), spec.input.height, spec.input.width);
  } else if (o.synthetic > 0) {
    samples = synthetic_split(o.synthetic, spec.input.height, o.seed, o.split);
  } else {
    throw UsageError("eval needs --manifest or --synthetic N");
  }
  if (samples.empty()) throw UsageError("split '" + o.split + "' is empty");
  MetricsRecord m = evaluate(ck.model, samples, o.threshold);
  emit(o, "split=" + o.split + "\nsamples=" + std::to_string(samples.size()) + "\n" + format_metrics(m));
  return 0;
}

int cmd_analyze(const Options& o) {
  ArchSpec spec = resolve_spec(o);
  ComplexityReport r = analyze_complexity(spec);
  emit(o, o.csv ? format_csv(r) : format_table(r));
  return 0;
}

int cmd_ablate(const Options& o) {
  AblationConfig c;
  c.image_size = o.input_size != 0 ? o.input_size : 32;
  Options sized = o;
  sized.input_size = c.image_size;
  sized.disable.clear();
  c.spec = resolve_spec(sized);
  c.train_count = o.train_count;
  c.val_count = o.val_count;
  c.data_seed = data_seed(o.seed);
  c.seeds.clear();
  for (std::size_t i = 0; i < o.seeds; ++i) c.seeds.push_back(derive_seed(o.seed, i));
  if (!o.disable.empty()) c.variants = o.disable;
  c.train.epochs = o.epochs;
  c.train.batch = o.batch;
  c.train.adam.lr = o.lr;
  c.train.threshold = o.threshold;
  c.threads = std::max<std::size_t>(1, o.threads);
  emit(o, format_ablation(run_ablation(c)));
  return 0;
}

int cmd_gen_synth(const Options& o) {
  const std::size_t size = o.input_size != 0 ? o.input_size : 256;
  fs::path out(o.out);
  fs::create_directories(out / "images");
  fs::create_directories(out / "masks");
  Manifest m;
  auto materialize = [&](std::size_t count, std::string_view split, std::vector<ManifestEntry>& dst) {
    for (Sample& s : synthetic_split(count, size, o.seed, split)) {
      const std::string name = std::string(split) + "_" + s.id + ".png";
      save_image(s.image, (out / "images" / name).string());
      save_mask(s.mask, (out / "masks" / name).string());
      dst.push_back({path_stem(name), "images/" + name, "masks/" + name, 0});
    }
  };
  materialize(o.synthetic, "train", m.train);
  materialize(o.gen_val_count, "val", m.val);
  materialize(o.test_count, "test", m.test);
  write_manifest(m, (out / "manifest.tsv").string());
  std::cout << "samples=" << (m.train.size() + m.val.size() + m.test.size()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight crack segmentation: training, inference and analysis"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Master seed for all randomness")->capture_default_str(); };
  auto add_spec = [&](CLI::App* c) {
    c->add_option("--spec", o.spec_path, "Architecture spec file (default: built-in)");
    c->add_option("--input-size", o.input_size, "Override the spec's square input resolution");
    c->add_option("--disable", o.disable, "Disable a block family (eem, ulsam, mobilevit); repeatable")
        ->check(CLI::IsMember({"eem", "ulsam", "mobilevit"}));
  };

  CLI::App* train = app.add_subcommand("train", "Train a model and write best/final checkpoints");
  add_spec(train);
  add_seed(train);
  auto* src = train->add_option("--manifest", o.manifest, "Dataset manifest (train and val splits)");
  train->add_option("--synthetic", o.synthetic, "Train on N generated samples instead of a manifest")
      ->excludes(src);
  train->add_option("--synthetic-val", o.synthetic_val, "Generated validation samples");
  train->add_option("--epochs", o.epochs)->capture_default_str();
  train->add_option("--batch", o.batch)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--lr", o.lr)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--max-steps", o.max_steps, "Stop after this many steps (0: no limit)");
  train->add_option("--threshold", o.threshold)->capture_default_str();
  train->add_flag("--augment", o.augment, "Enable augmentation with default settings");
  train->add_option("--augment-config", o.augment_config, "Augmentation settings file (implies --augment)");
  train->add_option("--out", o.out, "Output directory")->required();

  CLI::App* infer = app.add_subcommand("infer", "Write binary masks for an image or a directory of images");
  infer->add_option("--checkpoint", o.checkpoint)->required();
  infer->add_option("--input", o.input, "PNG file or directory")->required();
  infer->add_option("--out", o.out, "Output directory for masks")->required();
  infer->add_option("--threshold", o.threshold)->capture_default_str();
  infer->add_flag("--probabilities", o.probabilities, "Also write <name>_prob.png maps");

  CLI::App* eval = app.add_subcommand("eval", "Pooled Re/Pr/F1/mIoU of a checkpoint on a split");
  eval->add_option("--checkpoint", o.checkpoint)->required();
  auto* esrc = eval->add_option("--manifest", o.manifest);
  eval->add_option("--synthetic", o.synthetic, "Evaluate on N generated samples")->excludes(esrc);
  eval->add_option("--split", o.split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--threshold", o.threshold)->capture_default_str();
  eval->add_option("--out", o.out, "Report file (default: stdout)");
  add_seed(eval);

  CLI::App* analyze = app.add_subcommand("analyze", "Per-layer FLOPs and parameter counts");
  add_spec(analyze);
  analyze->add_flag("--csv", o.csv, "Comma-separated rows instead of a table");
  analyze->add_option("--out", o.out, "Report file (default: stdout)");

  CLI::App* ablate = app.add_subcommand("ablate", "Compare the full model against disabled block families");
  add_spec(ablate);
  add_seed(ablate);
  ablate->add_option("--epochs", o.epochs)->capture_default_str();
  ablate->add_option("--batch", o.batch)->capture_default_str()->check(CLI::PositiveNumber);
  ablate->add_option("--lr", o.lr)->capture_default_str();
  ablate->add_option("--threshold", o.threshold)->capture_default_str();
  ablate->add_option("--seeds", o.seeds, "Number of training seeds")->capture_default_str();
  ablate->add_option("--train-count", o.train_count)->capture_default_str();
  ablate->add_option("--val-count", o.val_count)->capture_default_str();
  ablate->add_option("--threads", o.threads)->capture_default_str();
  ablate->add_option("--out", o.out, "Report file (default: stdout)");

  CLI::App* gen = app.add_subcommand("gen-synth", "Write a synthetic dataset with a manifest");
  add_seed(gen);
  gen->add_option("--synthetic", o.synthetic, "Training samples")->required();
  gen->add_option("--val-count", o.gen_val_count, "Validation samples");
  gen->add_option("--test-count", o.test_count, "Test samples");
  gen->add_option("--input-size", o.input_size, "Image side length (default 256)");
  gen->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) return cmd_train(o);
    if (*infer) return cmd_infer(o);
    if (*eval) return cmd_eval(o);
    if (*analyze) return cmd_analyze(o);
    if (*ablate) return cmd_ablate(o);
    if (*gen) return cmd_gen_synth(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
