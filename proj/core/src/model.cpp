#include "ecn/model.hpp"

#include <cmath>
#include <map>

namespace ecn {

template <typename T>
Model<T>::Model(ArchSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
  const std::vector<LayerTrace> trace = trace_spec(spec_);
  Rng rng(seed);
  blocks_.reserve(trace.size());
  for (const LayerTrace& t : trace) {
    const LayerDecl& l = *t.decl;
    Block block;
    if (t.active) {
      switch (l.kind) {
        case LayerKind::dsc: block = DscBlock(l.name, t.in.c, l.c_out, l.stride); break;
        case LayerKind::eem: block = EemBlock(l.name, t.in.c, l.eem); break;
        case LayerKind::ulsam: block = UlsamBlock(l.name, t.in.c, l.ulsam); break;
        case LayerKind::mobilevit: block = MobileVitBlock(l.name, t.in.c, l.mobilevit); break;
        case LayerKind::conv: block = make_conv(l.name, t.in.c, l.c_out, l.kernel, l.stride); break;
        case LayerKind::head: block = make_conv(l.name, t.in.c, l.c_out, 1); break;
        case LayerKind::upsample:
        case LayerKind::concat_skip: break;
      }
    }
    std::visit(
        [&](const auto& b) {
          using B = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<B, DscBlock>) {
            b.allocate(params_, buffers_, rng);
          } else if constexpr (!std::is_same_v<B, std::monostate>) {
            b.allocate(params_, rng);
          }
        },
        block);
    if (t.active && l.kind == LayerKind::head) {
      Tensor<T>& bias = params_.at(l.name + ".bias").value;
      for (std::size_t i = 0; i < bias.numel(); ++i) {
        bias[i] = static_cast<T>(std::log(kHeadPrior / (1.0 - kHeadPrior)));
      }
    }
    blocks_.push_back(std::move(block));
  }
}

template <typename T>
Var<T> Model<T>::forward(Tape<T>& tape, Var<T> x, ops::Mode mode) {
  const Shape4& s = x.shape();
  if (s.c != spec_.input.channels) throw DimensionError("model", "c", "expected " + std::to_string(spec_.input.channels) + " channels");
  if (s.h != spec_.input.height) throw DimensionError("model", "h", "expected height " + std::to_string(spec_.input.height));
  if (s.w != spec_.input.width) throw DimensionError("model", "w", "expected width " + std::to_string(spec_.input.width));
  Context<T> ctx{tape, params_, buffers_, mode};
  std::map<std::string, Var<T>> saved;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const LayerDecl& l = spec_.layers[i];
    if (l.kind == LayerKind::upsample) {
      x = ops::upsample_nearest2x(x);
    } else if (l.kind == LayerKind::concat_skip) {
      x = ops::concat_channels<T>({x, saved.at(l.skip)});
    } else {
      x = std::visit(
          [&](const auto& b) -> Var<T> {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, std::monostate>) {
              return x;
            } else {
              return b.forward(ctx, x);
            }
          },
          blocks_[i]);
    }
    if (!l.save.empty()) saved[l.save] = x;
  }
  return x;
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& images) {
  Tape<T> tape;
  tape.set_recording(false);
  return forward(tape, tape.constant(images), ops::Mode::infer).value();
}

template class Model<float>;
template class Model<double>;

}  // namespace ecn
