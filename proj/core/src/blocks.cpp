#include "ecn/blocks.hpp"

#include <cmath>
#include <utility>

namespace ecn {

template <typename T>
void add_kaiming(ParamStore<T>& params, Rng& rng, const std::string& name, Shape4 shape,
                 std::size_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor<T> w(shape);
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
  params.add(name, std::move(w));
}

ConvLayer make_conv(std::string name, std::size_t c_in, std::size_t c_out, std::size_t kernel,
                    std::size_t stride, std::size_t groups, bool bias) {
  if (kernel % 2 == 0) throw ConfigError(name + ": kernel size must be odd");
  return ConvLayer{std::move(name), c_in, c_out, kernel, stride, kernel / 2, groups, bias};
}

template <typename T>
void ConvLayer::allocate(ParamStore<T>& params, Rng& rng) const {
  if (groups == 0 || c_in % groups != 0 || c_out % groups != 0) {
    throw ConfigError(name + ": groups must divide c_in and c_out");
  }
  const std::size_t fan_in = c_in / groups * kernel * kernel;
  add_kaiming(params, rng, name + ".weight", {c_out, c_in / groups, kernel, kernel}, fan_in);
  if (bias) params.add(name + ".bias", Tensor<T>({1, c_out, 1, 1}));
}

template <typename T>
Var<T> ConvLayer::forward(const Context<T>& ctx, Var<T> x) const {
  Var<T> w = ctx.param(name + ".weight");
  if (!bias) return ops::conv2d<T>(x, w, nullptr, conv_params());
  Var<T> b = ctx.param(name + ".bias");
  return ops::conv2d(x, w, &b, conv_params());
}

// ---------------------------------------------------------------------------

DscBlock::DscBlock(std::string name, std::size_t c_in, std::size_t c_out, std::size_t stride)
    : name_(std::move(name)),
      dw_(make_conv(name_ + ".dw", c_in, c_in, 3, stride, c_in)),
      pw_(make_conv(name_ + ".pw", c_in, c_out, 1)) {}

template <typename T>
void DscBlock::allocate(ParamStore<T>& params, BufferStore<T>& buffers, Rng& rng) const {
  dw_.allocate(params, rng);
  pw_.allocate(params, rng);
  const Shape4 s{1, pw_.c_out, 1, 1};
  params.add(name_ + ".bn.gamma", Tensor<T>(s, T(1)));
  params.add(name_ + ".bn.beta", Tensor<T>(s));
  buffers.add(name_ + ".bn.running_mean", Tensor<T>(s));
  buffers.add(name_ + ".bn.running_var", Tensor<T>(s, T(1)));
}

template <typename T>
Var<T> DscBlock::forward(const Context<T>& ctx, Var<T> x) const {
  Var<T> y = pw_.forward(ctx, dw_.forward(ctx, x));
  ops::RunningStats<T> stats{&ctx.buffers.at(name_ + ".bn.running_mean"),
                             &ctx.buffers.at(name_ + ".bn.running_var")};
  y = ops::batchnorm(y, ctx.param(name_ + ".bn.gamma"), ctx.param(name_ + ".bn.beta"), stats,
                     ctx.mode);
  return ops::relu(y);
}

// ---------------------------------------------------------------------------

namespace {

std::size_t checked_hidden(const std::string& name, std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels < reduction) {
    throw ConfigError(name + ": channels (" + std::to_string(channels) +
                      ") must be >= reduction (" + std::to_string(reduction) + ")");
  }
  return channels / reduction;
}

}  // namespace

SemBlock::SemBlock(std::string name, std::size_t channels, std::size_t reduction)
    : fc1_(make_conv(name + ".fc1", channels, checked_hidden(name, channels, reduction), 1)),
      fc2_(make_conv(name + ".fc2", fc1_.c_out, channels, 1)) {}

template <typename T>
void SemBlock::allocate(ParamStore<T>& params, Rng& rng) const {
  fc1_.allocate(params, rng);
  fc2_.allocate(params, rng);
}

template <typename T>
Var<T> SemBlock::forward(const Context<T>& ctx, Var<T> x, Tensor<T>* gate) const {
  Var<T> s = ops::global_avgpool(x);
  s = ops::relu(fc1_.forward(ctx, s));
  s = ops::sigmoid(fc2_.forward(ctx, s));
  if (gate != nullptr) *gate = s.value();
  return ops::mul(x, s);
}

// ---------------------------------------------------------------------------

namespace {

const EemConfig& checked(const EemConfig& cfg) {
  if (!(cfg.sigma > 0.0)) throw ConfigError("eem: sigma must be > 0");
  if (cfg.kernel_size != 3) throw ConfigError("eem: kernel_size must be 3");
  if (cfg.mid_channels == 0) throw ConfigError("eem: mid_channels must be >= 1");
  return cfg;
}

}  // namespace

EemBlock::EemBlock(std::string name, std::size_t c_in, const EemConfig& cfg)
    : cfg_(checked(cfg)),
      dog_(dog_stencil(cfg.sigma)),
      log_(ecn::log_kernel(cfg.sigma, cfg.kernel_size)),
      dog_proj_(make_conv(name + ".dog_proj", c_in, cfg.mid_channels, 1, 1, 1, false)),
      log_proj_(make_conv(name + ".log_proj", c_in, cfg.mid_channels, 1, 1, 1, false)),
      fuse_(make_conv(name + ".fuse", cfg.mid_channels, cfg.mid_channels, 1, 1, 1, false)),
      sem_(name + ".sem", c_in, cfg.sem_reduction),
      skip_proj_(make_conv(name + ".skip_proj", c_in, cfg.mid_channels, 1)) {}

template <typename T>
void EemBlock::allocate(ParamStore<T>& params, Rng& rng) const {
  dog_proj_.allocate(params, rng);
  log_proj_.allocate(params, rng);
  fuse_.allocate(params, rng);
  sem_.allocate(params, rng);
  skip_proj_.allocate(params, rng);
}

template <typename T>
Var<T> EemBlock::forward(const Context<T>& ctx, Var<T> x, EemProbe<T>* probe) const {
  const Shape4& s = x.shape();
  if (s.h < 3) throw DimensionError("eem", "h", "spatial size must be >= 3");
  if (s.w < 3) throw DimensionError("eem", "w", "spatial size must be >= 3");
  Var<T> dog = ops::edge_stencil(x, dog_);
  Var<T> log = ops::edge_stencil(x, log_);
  Var<T> prod = ops::mul(dog_proj_.forward(ctx, dog), log_proj_.forward(ctx, log));
  Var<T> edge = fuse_.forward(ctx, ops::maxpool2d(prod, 3, 1, 1));
  Var<T> skip = skip_proj_.forward(ctx, sem_.forward(ctx, x));
  if (probe != nullptr) {
    probe->dog = dog.value();
    probe->log = log.value();
    probe->product = prod.value();
    probe->edge = edge.value();
    probe->skip = skip.value();
  }
  return ops::add(edge, skip);
}

// ---------------------------------------------------------------------------

namespace {

std::size_t checked_groups(const std::string& name, std::size_t channels, std::size_t groups) {
  if (groups == 0 || channels % groups != 0) {
    throw ConfigError(name + ": groups (" + std::to_string(groups) + ") must divide channels (" +
                      std::to_string(channels) + ")");
  }
  return groups;
}

}  // namespace

UlsamBlock::UlsamBlock(std::string name, std::size_t channels, const UlsamConfig& cfg)
    : channels_(channels),
      groups_(checked_groups(name, channels, cfg.groups)),
      dw_(make_conv(name + ".dw", channels, channels, 1, 1, channels)),
      pw_(make_conv(name + ".pw", channels, groups_, 1, 1, groups_)) {}

template <typename T>
void UlsamBlock::allocate(ParamStore<T>& params, Rng& rng) const {
  dw_.allocate(params, rng);
  pw_.allocate(params, rng);
}

template <typename T>
Var<T> UlsamBlock::forward(const Context<T>& ctx, Var<T> x, Tensor<T>* attention) const {
  Var<T> a = pw_.forward(ctx, ops::maxpool2d(dw_.forward(ctx, x), 3, 1, 1));
  a = ops::softmax(a, kernels::kAxisH | kernels::kAxisW);
  if (attention != nullptr) *attention = a.value();
  Var<T> expanded = ops::repeat_channels(a, channels_ / groups_);
  return ops::add(ops::mul(x, expanded), x);
}

// ---------------------------------------------------------------------------

TransformerLayer::TransformerLayer(std::string name, std::size_t dim, std::size_t heads,
                                   std::size_t mlp_ratio)
    : name_(std::move(name)), dim_(dim), heads_(heads), mlp_ratio_(mlp_ratio) {
  if (heads == 0 || dim % heads != 0) throw ConfigError(name_ + ": heads must divide dim");
  if (mlp_ratio == 0) throw ConfigError(name_ + ": mlp_ratio must be >= 1");
}

template <typename T>
void TransformerLayer::allocate(ParamStore<T>& params, Rng& rng) const {
  const Shape4 norm{1, 1, 1, dim_};
  auto dense = [&](const std::string& n, std::size_t din, std::size_t dout) {
    add_kaiming(params, rng, name_ + "." + n + ".weight", {1, 1, din, dout}, din);
    params.add(name_ + "." + n + ".bias", Tensor<T>({1, 1, 1, dout}));
  };
  params.add(name_ + ".ln1.gamma", Tensor<T>(norm, T(1)));
  params.add(name_ + ".ln1.beta", Tensor<T>(norm));
  dense("q", dim_, dim_);
  dense("k", dim_, dim_);
  dense("v", dim_, dim_);
  dense("o", dim_, dim_);
  params.add(name_ + ".ln2.gamma", Tensor<T>(norm, T(1)));
  params.add(name_ + ".ln2.beta", Tensor<T>(norm));
  dense("fc1", dim_, hidden());
  dense("fc2", hidden(), dim_);
}

template <typename T>
Var<T> TransformerLayer::forward(const Context<T>& ctx, Var<T> x, Tensor<T>* attention) const {
  const Shape4 s = x.shape();
  if (s.c != 1 || s.w != dim_) throw DimensionError("transformer", "w", "expected (B, 1, N, d) tokens");
  const std::size_t b = s.n;
  const std::size_t n = s.h;
  const std::size_t dh = dim_ / heads_;
  auto dense = [&](const std::string& nm, Var<T> in) {
    Var<T> bias = ctx.param(name_ + "." + nm + ".bias");
    return ops::dense(in, ctx.param(name_ + "." + nm + ".weight"), &bias);
  };
  auto split = [&](Var<T> v, const std::array<int, 4>& perm) {
    return ops::permute(ops::reshape(v, {b, n, heads_, dh}), perm);
  };

  Var<T> h = ops::layernorm(x, ctx.param(name_ + ".ln1.gamma"), ctx.param(name_ + ".ln1.beta"));
  Var<T> q = split(dense("q", h), {0, 2, 1, 3});   // (B, heads, N, dh)
  Var<T> kt = split(dense("k", h), {0, 2, 3, 1});  // (B, heads, dh, N)
  Var<T> v = split(dense("v", h), {0, 2, 1, 3});
  Var<T> logits = ops::scale(ops::matmul(q, kt), static_cast<T>(1.0 / std::sqrt(double(dh))));
  Var<T> a = ops::softmax(logits, kernels::kAxisW);
  if (attention != nullptr) *attention = a.value();
  Var<T> o = ops::reshape(ops::permute(ops::matmul(a, v), {0, 2, 1, 3}), {b, 1, n, dim_});
  x = ops::add(x, dense("o", o));

  h = ops::layernorm(x, ctx.param(name_ + ".ln2.gamma"), ctx.param(name_ + ".ln2.beta"));
  Var<T> m = dense("fc2", ops::silu(dense("fc1", h)));
  return ops::add(x, m);
}

// ---------------------------------------------------------------------------

namespace {

const MobileVitConfig& checked(const std::string& name, std::size_t channels,
                               const MobileVitConfig& cfg) {
  if (cfg.dim <= channels) throw ConfigError(name + ": embed dim must exceed input channels");
  if (cfg.kernel % 2 == 0) throw ConfigError(name + ": kernel must be odd");
  if (cfg.patch_h == 0 || cfg.patch_w == 0) throw ConfigError(name + ": patch dims must be >= 1");
  if (cfg.depth == 0) throw ConfigError(name + ": depth must be >= 1");
  return cfg;
}

}  // namespace

MobileVitBlock::MobileVitBlock(std::string name, std::size_t channels, const MobileVitConfig& cfg)
    : channels_(channels),
      cfg_(checked(name, channels, cfg)),
      local_(make_conv(name + ".local", channels, channels, cfg.kernel)),
      proj_(make_conv(name + ".proj", channels, cfg.dim, 1)),
      back_(make_conv(name + ".back", cfg.dim, channels, 1)),
      fuse_(make_conv(name + ".fuse", 2 * channels, channels, cfg.kernel)) {
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    layers_.emplace_back(name + ".t" + std::to_string(l), cfg.dim, cfg.heads, cfg.mlp_ratio);
  }
}

template <typename T>
void MobileVitBlock::allocate(ParamStore<T>& params, Rng& rng) const {
  local_.allocate(params, rng);
  proj_.allocate(params, rng);
  for (const TransformerLayer& layer : layers_) layer.allocate(params, rng);
  back_.allocate(params, rng);
  fuse_.allocate(params, rng);
}

template <typename T>
Var<T> MobileVitBlock::forward(const Context<T>& ctx, Var<T> x, MobileVitProbe<T>* probe) const {
  const Shape4 s = x.shape();
  if (s.h % cfg_.patch_h != 0) throw DimensionError("mobilevit", "h", "not divisible by patch height");
  if (s.w % cfg_.patch_w != 0) throw DimensionError("mobilevit", "w", "not divisible by patch width");
  const std::size_t p = cfg_.patch_h * cfg_.patch_w;
  const std::size_t n = s.h * s.w / p;

  Var<T> local = proj_.forward(ctx, local_.forward(ctx, x));
  Var<T> tokens = ops::reshape(ops::unfold(local, cfg_.patch_h, cfg_.patch_w), {s.n * p, 1, n, cfg_.dim});
  if (probe != nullptr) probe->attention.clear();
  for (const TransformerLayer& layer : layers_) {
    Tensor<T> att;
    tokens = layer.forward(ctx, tokens, probe != nullptr ? &att : nullptr);
    if (probe != nullptr) probe->attention.push_back(std::move(att));
  }
  tokens = ops::reshape(tokens, {s.n, p, n, cfg_.dim});
  Var<T> global = back_.forward(ctx, ops::fold(tokens, cfg_.patch_h, cfg_.patch_w, s.h, s.w));
  return fuse_.forward(ctx, ops::concat_channels<T>({x, global}));
}

// ---------------------------------------------------------------------------

#define ECN_INSTANTIATE(T)                                                                        \
  template void add_kaiming<T>(ParamStore<T>&, Rng&, const std::string&, Shape4, std::size_t);    \
  template void ConvLayer::allocate<T>(ParamStore<T>&, Rng&) const;                               \
  template Var<T> ConvLayer::forward<T>(const Context<T>&, Var<T>) const;                         \
  template void DscBlock::allocate<T>(ParamStore<T>&, BufferStore<T>&, Rng&) const;               \
  template Var<T> DscBlock::forward<T>(const Context<T>&, Var<T>) const;                          \
  template void SemBlock::allocate<T>(ParamStore<T>&, Rng&) const;                                \
  template Var<T> SemBlock::forward<T>(const Context<T>&, Var<T>, Tensor<T>*) const;              \
  template void EemBlock::allocate<T>(ParamStore<T>&, Rng&) const;                                \
  template Var<T> EemBlock::forward<T>(const Context<T>&, Var<T>, EemProbe<T>*) const;            \
  template void UlsamBlock::allocate<T>(ParamStore<T>&, Rng&) const;                              \
  template Var<T> UlsamBlock::forward<T>(const Context<T>&, Var<T>, Tensor<T>*) const;            \
  template void TransformerLayer::allocate<T>(ParamStore<T>&, Rng&) const;                        \
  template Var<T> TransformerLayer::forward<T>(const Context<T>&, Var<T>, Tensor<T>*) const;      \
  template void MobileVitBlock::allocate<T>(ParamStore<T>&, Rng&) const;                          \
  template Var<T> MobileVitBlock::forward<T>(const Context<T>&, Var<T>, MobileVitProbe<T>*) const;

ECN_INSTANTIATE(float)
ECN_INSTANTIATE(double)

#undef ECN_INSTANTIATE

}  // namespace ecn
