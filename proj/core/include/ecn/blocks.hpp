#pragma once

// Network building blocks: plain conv, depthwise-separable unit, squeeze-excitation,
// edge extraction (fixed DoG/LoG stencils with learnable projections), grouped
// spatial subspace attention, and the MobileViT local/global block.
//
// A block holds only its configuration and parameter names. allocate() creates
// its parameters in a fixed order; forward() reads them from a Context.

#include <cstddef>
#include <string>
#include <vector>

#include "ecn/autodiff.hpp"
#include "ecn/edge_kernels.hpp"
#include "ecn/ops.hpp"
#include "ecn/params.hpp"
#include "ecn/rng.hpp"

namespace ecn {

template <typename T>
struct Context {
  Tape<T>& tape;
  ParamStore<T>& params;
  BufferStore<T>& buffers;
  ops::Mode mode = ops::Mode::infer;

  Var<T> param(const std::string& name) const { return tape.parameter(params, name); }
};

/// Kaiming-uniform weights, U(-b, b) with b = sqrt(6 / fan_in), drawn in row-major order.
template <typename T>
void add_kaiming(ParamStore<T>& params, Rng& rng, const std::string& name, Shape4 shape,
                 std::size_t fan_in);

struct ConvLayer {
  std::string name;
  std::size_t c_in = 0;
  std::size_t c_out = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  bool bias = true;

  kernels::Conv2dParams conv_params() const { return {stride, padding, groups}; }

  /// Creates "<name>.weight" (c_out, c_in/groups, k, k), then "<name>.bias" (zeros).
  template <typename T>
  void allocate(ParamStore<T>& params, Rng& rng) const;

  template <typename T>
  Var<T> forward(const Context<T>& ctx, Var<T> x) const;
};

ConvLayer make_conv(std::string name, std::size_t c_in, std::size_t c_out, std::size_t kernel,
                    std::size_t stride = 1, std::size_t groups = 1, bool bias = true);

/// Depthwise 3x3 (stride s, pad 1, bias) -> pointwise 1x1 -> batch norm -> ReLU.
class DscBlock {
 public:
  DscBlock(std::string name, std::size_t c_in, std::size_t c_out, std::size_t stride);

  const ConvLayer& depthwise() const noexcept { return dw_; }
  const ConvLayer& pointwise() const noexcept { return pw_; }
  std::size_t c_out() const noexcept { return pw_.c_out; }

  template <typename T>
  void allocate(ParamStore<T>& params, BufferStore<T>& buffers, Rng& rng) const;

  template <typename T>
  Var<T> forward(const Context<T>& ctx, Var<T> x) const;

 private:
  std::string name_;
  ConvLayer dw_;
  ConvLayer pw_;
};

/// Global average pool -> 1x1 c -> c/r -> ReLU -> 1x1 c/r -> c -> sigmoid -> channel scale.
class SemBlock {
 public:
  /// Throws ConfigError when channels < reduction.
  SemBlock(std::string name, std::size_t channels, std::size_t reduction);

  const ConvLayer& squeeze() const noexcept { return fc1_; }
  const ConvLayer& excite() const noexcept { return fc2_; }

  template <typename T>
  void allocate(ParamStore<T>& params, Rng& rng) const;

  /// When `gate` is non-null it receives the (n, c, 1, 1) sigmoid gate.
  template <typename T>
  Var<T> forward(const Context<T>& ctx, Var<T> x, Tensor<T>* gate = nullptr) const;

 private:
  ConvLayer fc1_;
  ConvLayer fc2_;
};

struct EemConfig {
  double sigma = 1.0;
  std::size_t kernel_size = 3;
  std::size_t mid_channels = 16;
  std::size_t sem_reduction = 4;
};

template <typename T>
struct EemProbe {
  Tensor<T> dog;      // fixed-stencil responses, c_in channels
  Tensor<T> log;
  Tensor<T> product;  // projected branches multiplied, before pooling
  Tensor<T> edge;     // edge path output (after the last 1x1)
  Tensor<T> skip;     // projected SEM-gated residual
};

/// Edge extraction: x - blur(x) and LoG(x), each projected 1x1 to mid channels
/// (no bias), multiplied, max-pooled 3x3/1/1, projected 1x1 (no bias), plus
/// the SEM-gated input projected 1x1 to mid channels.
class EemBlock {
 public:
  EemBlock(std::string name, std::size_t c_in, const EemConfig& cfg);

  const EemConfig& config() const noexcept { return cfg_; }
  const Kernel3x3& dog_kernel() const noexcept { return dog_; }
  const Kernel3x3& log_kernel() const noexcept { return log_; }
  const ConvLayer& dog_proj() const noexcept { return dog_proj_; }
  const ConvLayer& log_proj() const noexcept { return log_proj_; }
  const ConvLayer& fuse() const noexcept { return fuse_; }
  const ConvLayer& skip_proj() const noexcept { return skip_proj_; }
  const SemBlock& sem() const noexcept { return sem_; }

  template <typename T>
  void allocate(ParamStore<T>& params, Rng& rng) const;

  template <typename T>
  Var<T> forward(const Context<T>& ctx, Var<T> x, EemProbe<T>* probe = nullptr) const;

 private:
  EemConfig cfg_;
  Kernel3x3 dog_;
  Kernel3x3 log_;
  ConvLayer dog_proj_;
  ConvLayer log_proj_;
  ConvLayer fuse_;
  SemBlock sem_;
  ConvLayer skip_proj_;
};

struct UlsamConfig {
  std::size_t groups = 4;
};

/// Per group of G = c/g channels: depthwise 1x1 -> maxpool 3x3/1/1 -> 1x1 to a
/// single map -> softmax over (h, w) -> x * A + x. Computed for all groups at
/// once with grouped convolutions, which is the same as splitting and concatenating.
class UlsamBlock {
 public:
  /// Throws ConfigError unless groups divides channels.
  UlsamBlock(std::string name, std::size_t channels, const UlsamConfig& cfg);

  std::size_t groups() const noexcept { return groups_; }
  const ConvLayer& depthwise() const noexcept { return dw_; }
  const ConvLayer& pointwise() const noexcept { return pw_; }

  template <typename T>
  void allocate(ParamStore<T>& params, Rng& rng) const;

  /// When `attention` is non-null it receives the (n, g, h, w) attention maps.
  template <typename T>
  Var<T> forward(const Context<T>& ctx, Var<T> x, Tensor<T>* attention = nullptr) const;

 private:
  std::size_t channels_;
  std::size_t groups_;
  ConvLayer dw_;
  ConvLayer pw_;
};

struct MobileVitConfig {
  std::size_t kernel = 3;
  std::size_t dim = 64;
  std::size_t patch_h = 2;
  std::size_t patch_w = 2;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
};

template <typename T>
struct MobileVitProbe {
  std::vector<Tensor<T>> attention;  // per layer, (n * P, heads, N, N)
};

/// Pre-norm encoder layer over (B, 1, N, d) token rows.
class TransformerLayer {
 public:
  TransformerLayer(std::string name, std::size_t dim, std::size_t heads, std::size_t mlp_ratio);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t heads() const noexcept { return heads_; }
  std::size_t hidden() const noexcept { return dim_ * mlp_ratio_; }

  template <typename T>
  void allocate(ParamStore<T>& params, Rng& rng) const;

  template <typename T>
  Var<T> forward(const Context<T>& ctx, Var<T> x, Tensor<T>* attention = nullptr) const;

 private:
  std::string name_;
  std::size_t dim_;
  std::size_t heads_;
  std::size_t mlp_ratio_;
};

/// n x n conv -> 1x1 to d -> unfold -> transformer layers shared across the P
/// pixel positions -> fold -> 1x1 back to C -> concat with input -> n x n conv 2C -> C.
class MobileVitBlock {
 public:
  /// Throws ConfigError unless dim > channels, heads divides dim, and kernel is odd.
  MobileVitBlock(std::string name, std::size_t channels, const MobileVitConfig& cfg);

  const MobileVitConfig& config() const noexcept { return cfg_; }
  std::size_t channels() const noexcept { return channels_; }
  const ConvLayer& local() const noexcept { return local_; }
  const ConvLayer& to_tokens() const noexcept { return proj_; }
  const ConvLayer& from_tokens() const noexcept { return back_; }
  const ConvLayer& fusion() const noexcept { return fuse_; }
  const std::vector<TransformerLayer>& layers() const noexcept { return layers_; }

  template <typename T>
  void allocate(ParamStore<T>& params, Rng& rng) const;

  template <typename T>
  Var<T> forward(const Context<T>& ctx, Var<T> x, MobileVitProbe<T>* probe = nullptr) const;

 private:
  std::size_t channels_;
  MobileVitConfig cfg_;
  ConvLayer local_;
  ConvLayer proj_;
  std::vector<TransformerLayer> layers_;
  ConvLayer back_;
  ConvLayer fuse_;
};

}  // namespace ecn
