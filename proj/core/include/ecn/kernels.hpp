#pragma once

// Raw forward/backward kernels on Tensor<T>. These know nothing about the tape;
// ops.hpp wraps them into differentiable operations.
//
// Every reduction runs in a fixed sequential order so results are bit-identical
// across runs. Per-output accumulation order for conv2d is (ci, ky, kx) with
// out-of-bounds taps skipped, followed by the bias, which is what a naive
// nested-loop reference produces too.

#include <array>
#include <cstddef>
#include <cstdint>
#include <type_traits>
#include <vector>

#include "ecn/tensor.hpp"

namespace ecn::kernels {

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Validates and returns the conv2d output shape. `weight` is (c_out, c_in/groups, k, k).
Shape4 conv2d_output_shape(const Shape4& input, const Shape4& weight, const Conv2dParams& p);

/// `bias` may be null; otherwise shape (1, c_out, 1, 1).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias,
                         const Conv2dParams& p);

/// Any of the output pointers may be null to skip that gradient.
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                     const Conv2dParams& p, Tensor<T>* grad_input, Tensor<T>* grad_weight,
                     Tensor<T>* grad_bias);

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// -inf padding semantics; ties resolve to the first row-major maximum.
template <typename T>
MaxPoolResult<T> maxpool2d_forward(const Tensor<T>& input, std::size_t k, std::size_t stride,
                                   std::size_t padding);

template <typename T>
Tensor<T> maxpool2d_backward(const Shape4& input_shape, const std::vector<std::uint32_t>& argmax,
                             const Tensor<T>& grad_out);

/// Non-overlapping-or-not average pool without padding.
template <typename T>
Tensor<T> avgpool2d_forward(const Tensor<T>& input, std::size_t k, std::size_t stride);

template <typename T>
Tensor<T> avgpool2d_backward(const Shape4& input_shape, std::size_t k, std::size_t stride,
                             const Tensor<T>& grad_out);

template <typename T>
Tensor<T> upsample_nearest2x_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& grad_out);

template <typename T>
Tensor<T> global_avgpool_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> global_avgpool_backward(const Shape4& input_shape, const Tensor<T>& grad_out);

/// Axes bitmask for softmax.
enum SoftmaxAxis : unsigned {
  kAxisC = 1u,
  kAxisH = 2u,
  kAxisW = 4u,
};

template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& input, unsigned axes);

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& output, const Tensor<T>& grad_out, unsigned axes);

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& input);

/// How the second operand of a binary elementwise op maps onto the first.
enum class Broadcast {
  same,         // identical shapes
  per_channel,  // (n, c, 1, 1)
  per_map,      // (1, c, h, w), shared across the batch
};

/// Throws DimensionError unless `b` is one of the three accepted forms.
Broadcast broadcast_kind(const Shape4& a, const Shape4& b, const char* op);

enum class BinaryOp { add, sub, mul };

template <typename T>
Tensor<T> binary_forward(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);

/// Reduce a full-shaped gradient down to `b`'s broadcast shape.
template <typename T>
Tensor<T> reduce_to_broadcast(const Tensor<T>& full, const Shape4& b_shape, Broadcast kind);

/// x (B, C, t, d_in) treated as B*C*t rows; weight (1, 1, d_in, d_out); bias (1, 1, 1, d_out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weight, const std::type_identity_t<Tensor<T>>* bias);

template <typename T>
void dense_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                    Tensor<T>* grad_input, Tensor<T>* grad_weight, Tensor<T>* grad_bias);

/// Batched (n, c, t, k) x (n, c, k, m) -> (n, c, t, m).
template <typename T>
Tensor<T> matmul_forward(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
void matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out,
                     Tensor<T>* grad_a, Tensor<T>* grad_b);

/// y.shape[i] = x.shape[perm[i]].
template <typename T>
Tensor<T> permute(const Tensor<T>& input, const std::array<int, 4>& perm);

std::array<int, 4> inverse_permutation(const std::array<int, 4>& perm);

/// (n, d, H, W) -> (n, P, N, d) with P = ph*pw pixel positions per patch and N = HW/P patches.
/// Patch q is row-major over the (H/ph, W/pw) grid; position p is row-major inside the patch.
template <typename T>
Tensor<T> unfold_patches(const Tensor<T>& input, std::size_t ph, std::size_t pw);

/// Inverse of unfold_patches; `height`/`width` are the folded spatial dims.
template <typename T>
Tensor<T> fold_patches(const Tensor<T>& input, std::size_t ph, std::size_t pw, std::size_t height,
                       std::size_t width);

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs);

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t start, std::size_t count);

template <typename T>
struct NormSaved {
  Tensor<T> output;
  Tensor<T> normalized;     // x-hat, same shape as input
  std::vector<T> inv_std;   // per channel (batchnorm) or per row (layernorm)
  std::vector<T> mean;      // batch statistics (batchnorm train mode only)
  std::vector<T> variance;  // biased batch variance (batchnorm train mode only)
};

/// Per-channel statistics over (n, h, w). gamma/beta are (1, c, 1, 1).
template <typename T>
NormSaved<T> batchnorm_train_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                                     const Tensor<T>& beta, T eps);

template <typename T>
NormSaved<T> batchnorm_infer_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                                     const Tensor<T>& beta, const Tensor<T>& running_mean,
                                     const Tensor<T>& running_var, T eps);

/// `train` selects whether the batch statistics depend on the input.
template <typename T>
void batchnorm_backward(const NormSaved<T>& saved, const Tensor<T>& gamma,
                        const Tensor<T>& grad_out, bool train, Tensor<T>* grad_input,
                        Tensor<T>* grad_gamma, Tensor<T>* grad_beta);

/// Normalizes each row of the last axis. gamma/beta are (1, 1, 1, d).
template <typename T>
NormSaved<T> layernorm_forward(const Tensor<T>& input, const Tensor<T>& gamma,
                               const Tensor<T>& beta, T eps);

template <typename T>
void layernorm_backward(const NormSaved<T>& saved, const Tensor<T>& gamma,
                        const Tensor<T>& grad_out, Tensor<T>* grad_input, Tensor<T>* grad_gamma,
                        Tensor<T>* grad_beta);

void check_norm_params(const Shape4& input, const Shape4& gamma, const Shape4& beta,
                       bool per_channel, const char* op);

/// Sum of `a[i] * b[i]` with eight interleaved partial sums combined in a fixed order.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) noexcept;

}  // namespace ecn::kernels
