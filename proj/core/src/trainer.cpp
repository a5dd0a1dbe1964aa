#include "ecn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "ecn/losses.hpp"

namespace ecn {

void stack_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                 Tensor4& images, Tensor4& masks) {
  if (indices.empty()) throw UsageError("stack_batch: empty batch");
  const Shape4 is = samples[indices[0]].image.shape();
  const Shape4 ms = samples[indices[0]].mask.shape();
  images = Tensor4({indices.size(), is.c, is.h, is.w});
  masks = Tensor4({indices.size(), ms.c, ms.h, ms.w});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = samples[indices[b]];
    if (!(s.image.shape() == is) || !(s.mask.shape() == ms)) {
      throw DimensionError("stack_batch", "shape", "sample '" + s.id + "' differs in size from the batch");
    }
    std::copy(s.image.ptr(), s.image.ptr() + is.numel(), images.ptr() + b * is.numel());
    std::copy(s.mask.ptr(), s.mask.ptr() + ms.numel(), masks.ptr() + b * ms.numel());
  }
}

double train_step(Model<float>& model, OptimState<float>& optim, const Tensor4& images,
                  const Tensor4& masks, std::uint64_t step) {
  Tape<float> tape;
  Var<float> logits = model.forward(tape, tape.constant(images), ops::Mode::train);
  Var<float> loss = dice_loss(ops::sigmoid(logits), masks);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw DivergenceError(step, "dice loss is " + std::to_string(value));
  tape.backward(loss, model.params());
  for (const auto& e : model.params()) {
    if (!e.grad.all_finite()) throw DivergenceError(step, "non-finite gradient in " + e.name);
  }
  adam_step(model.params(), optim);
  return value;
}

MetricsRecord evaluate(Model<float>& model, const std::vector<Sample>& samples, double threshold,
                       std::size_t batch) {
  ConfusionCounts counts;
  Tensor4 images, masks;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch); ++i) idx.push_back(i);
    stack_batch(samples, idx, images, masks);
    const Tensor4 logits = model.predict(images);
    counts += confusion(binarize(kernels::sigmoid_forward(logits), threshold), masks);
  }
  return metrics(counts);
}

namespace {

void log_epoch(std::ostream& os, const EpochRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch=%zu step=%llu train_loss=%.6f", r.epoch,
                static_cast<unsigned long long>(r.step), r.train_loss);
  os << buf;
  if (r.val) {
    std::snprintf(buf, sizeof buf, " val_re=%.6f val_pr=%.6f val_f1=%.6f val_miou=%.6f", r.val->re.value,
                  r.val->pr.value, r.val->f1.value, r.val->miou);
    os << buf;
  }
  os << " best=" << (r.best ? 1 : 0) << '\n';
}

}  // namespace

TrainResult train(const ArchSpec& spec, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw UsageError("train: training set is empty");
  if (cfg.batch == 0 || cfg.batch > train_set.size()) {
    throw UsageError("train: batch size must be between 1 and the training set size");
  }
  if (cfg.augment) cfg.augment_config.validate();

  Model<float> model(spec, derive_seed(cfg.seed, "init"));
  OptimState<float> optim = OptimState<float>::init(model.params(), cfg.adam);
  Rng shuffle(derive_seed(cfg.seed, "shuffle"));

  TrainResult result{{model, optim, {}}, {model, optim, {}}, {}, {}};
  result.final_state.progress.rng_state = shuffle.state();
  result.best_state.progress = result.final_state.progress;
  double best_score = -1.0;
  std::uint64_t step = 0;
  std::vector<std::size_t> order(train_set.size());
  Tensor4 images, masks;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      if (cfg.max_steps != 0 && step >= cfg.max_steps) break;
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + cfg.batch)));
      if (cfg.augment) {
        std::vector<Sample> batch;
        for (std::size_t i : idx) {
          Rng rng(derive_seed(derive_seed(cfg.seed, train_set[i].id), static_cast<std::uint64_t>(epoch)));
          batch.push_back(augment(train_set[i], cfg.augment_config, rng));
        }
        std::vector<std::size_t> local(batch.size());
        std::iota(local.begin(), local.end(), std::size_t{0});
        stack_batch(batch, local, images, masks);
      } else {
        stack_batch(train_set, idx, images, masks);
      }
      ++step;
      const double loss = train_step(model, optim, images, masks, step);
      result.step_losses.push_back(loss);
      loss_sum += loss;
      ++loss_count;
      if (cfg.log != nullptr && cfg.log_steps) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "step=%llu epoch=%zu loss=%.6f\n", static_cast<unsigned long long>(step),
                      epoch, loss);
        *cfg.log << buf;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    double score = -rec.train_loss;
    if (!val_set.empty()) {
      rec.val = evaluate(model, val_set, cfg.threshold, cfg.batch);
      score = rec.val->miou;
    }
    TrainProgress progress{epoch, step, score, shuffle.state()};
    if (score > best_score) {
      best_score = score;
      rec.best = true;
      result.best_state = Checkpoint{model, optim, progress};
    }
    if (cfg.log != nullptr) log_epoch(*cfg.log, rec);
    result.epochs.push_back(rec);
    result.final_state.progress = progress;
  }
  result.final_state.model = model;
  result.final_state.optim = optim;
  if (result.epochs.empty()) result.best_state = result.final_state;
  return result;
}

}  // namespace ecn
