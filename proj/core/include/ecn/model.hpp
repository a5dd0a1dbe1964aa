#pragma once

// Encoder-decoder segmentation network assembled from an ArchSpec.

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "ecn/arch_spec.hpp"
#include "ecn/blocks.hpp"

namespace ecn {

/// The head bias starts at logit(kHeadPrior) so initial predictions match a
/// sparse foreground instead of p = 0.5 everywhere.
inline constexpr double kHeadPrior = 0.05;

template <typename T>
class Model {
 public:
  /// Validates the spec and allocates parameters in layer order from a PRNG
  /// seeded with `seed`. Disabled blocks get no parameters and act as identity.
  Model(ArchSpec spec, std::uint64_t seed);

  const ArchSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  ParamStore<T>& params() noexcept { return params_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  BufferStore<T>& buffers() noexcept { return buffers_; }
  const BufferStore<T>& buffers() const noexcept { return buffers_; }

  /// Logits (n, 1, H, W). Train mode uses batch statistics and updates the
  /// running ones; infer mode reads running statistics.
  Var<T> forward(Tape<T>& tape, Var<T> images, ops::Mode mode);

  /// Inference without recording a backward graph.
  Tensor<T> predict(const Tensor<T>& images);

 private:
  using Block = std::variant<std::monostate, DscBlock, EemBlock, UlsamBlock, MobileVitBlock, ConvLayer>;

  ArchSpec spec_;
  std::uint64_t seed_;
  std::vector<Block> blocks_;
  ParamStore<T> params_;
  BufferStore<T> buffers_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace ecn
