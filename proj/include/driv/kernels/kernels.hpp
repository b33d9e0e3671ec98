#pragma once

#include <cstdint>
#include <vector>

#include "driv/core/tensor.hpp"

// OpenMP-parallel compute kernels. Parallelism always splits independent
// output slices; every floating-point reduction stays inside one thread, so
// results do not depend on the thread count. Serial reference versions of
// each kernel live in driv::ref (reference.hpp) and back the parity tests
// and the kernel benchmark.
namespace driv::kern {

// 3x3 convolution, stride 1, zero padding 1 ("same"), NCHW layout.
//   x: (N, Cin, H, W)   w: (Cout, Cin, 3, 3)   b: (Cout)   y: (N, Cout, H, W)
template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                    Tensor<T>& y);

// dx: (N, Cin, H, W) from dy: (N, Cout, H, W).
template <typename T>
void conv2d_backward_data(const Tensor<T>& dy, const Tensor<T>& w,
                          Tensor<T>& dx);

// Accumulates nothing: dw/db are overwritten.
template <typename T>
void conv2d_backward_weights(const Tensor<T>& x, const Tensor<T>& dy,
                             Tensor<T>& dw, Tensor<T>& db);

// 2x2 max pooling, stride 2. idx stores the flat offset of the argmax within
// the (H, W) input plane, which the paired unpooling consumes.
template <typename T>
void maxpool2x2_forward(const Tensor<T>& x, Tensor<T>& y,
                        Tensor<std::int32_t>& idx);

template <typename T>
void maxpool2x2_backward(const Tensor<T>& dy, const Tensor<std::int32_t>& idx,
                         Tensor<T>& dx);

// Scatter x into a zero-initialized (N, C, H, W) output at the pooling
// indices recorded by the matching encoder pool.
template <typename T>
void maxunpool2x2_forward(const Tensor<T>& x, const Tensor<std::int32_t>& idx,
                          Tensor<T>& y);

template <typename T>
void maxunpool2x2_backward(const Tensor<T>& dy, const Tensor<std::int32_t>& idx,
                           Tensor<T>& dx);

// Batch normalization over (N, H, W) per channel.
template <typename T>
void batchnorm_forward_train(const Tensor<T>& x, const Tensor<T>& gamma,
                             const Tensor<T>& beta, Tensor<T>& y,
                             Tensor<T>& save_mean, Tensor<T>& save_inv_std,
                             double eps);

template <typename T>
void batchnorm_forward_infer(const Tensor<T>& x, const Tensor<T>& gamma,
                             const Tensor<T>& beta,
                             const Tensor<T>& running_mean,
                             const Tensor<T>& running_var, Tensor<T>& y,
                             double eps);

template <typename T>
void batchnorm_backward(const Tensor<T>& x, const Tensor<T>& gamma,
                        const Tensor<T>& save_mean,
                        const Tensor<T>& save_inv_std, const Tensor<T>& dy,
                        Tensor<T>& dx, Tensor<T>& dgamma, Tensor<T>& dbeta);

template <typename T>
void relu_forward_inplace(Tensor<T>& x);

// dx = dy where y > 0 (y is the post-activation tensor).
template <typename T>
void relu_backward(const Tensor<T>& y, const Tensor<T>& dy, Tensor<T>& dx);

// Channel-wise softmax of (N, K, H, W) scores.
template <typename T>
void softmax_channels(const Tensor<T>& scores, Tensor<T>& probs);

struct LossStats {
  double loss = 0.0;          // mean weighted KL over non-void pixels
  std::int64_t n_valid = 0;   // non-void pixel count
};

// Fused softmax + KL loss and gradient.
//   scores:     (N, K, H, W) pre-softmax activations
//   target_idx: (N, H, W) level-space index per pixel, -1 = void
//   table:      (L, K) soft label per level index
//   weights:    optional (N, H, W) per-pixel loss multipliers
//   dscores:    optional out, d(loss)/d(scores) including the 1/n_valid factor
// Throws when every pixel is void (the mean is undefined).
template <typename T>
LossStats softmax_kl_loss_grad(const Tensor<T>& scores,
                               const Tensor<std::int8_t>& target_idx,
                               const Tensor<double>& table,
                               const Tensor<T>* weights, Tensor<T>* dscores);

// Adam step with bias correction; t is the 1-based step count.
template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m,
                 Tensor<T>& v, double lr, double beta1, double beta2,
                 double eps, std::int64_t t);

// Marks pixels whose 4-neighbourhood contains a different label. Both sides
// of a label change are boundary.
std::vector<std::uint8_t> boundary_map(const std::uint8_t* labels, int height,
                                       int width);

// Two-pass 5x5 chamfer distance transform, move weights 1 / 1.4 / 2.2.
// Boundary pixels get 0; when no pixel is marked, every distance is set to
// `no_boundary_value`. The two passes carry a wavefront dependency, so this
// kernel is intentionally serial; the exact Euclidean oracle in driv::ref is
// the comparison baseline.
Tensor<double> chamfer_dt_5x5(const std::vector<std::uint8_t>& boundary,
                              int height, int width, double no_boundary_value);

// Bilinear resize of a (C, H, W) tensor to (C, out_h, out_w), pixel-center
// aligned.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& src, int out_h, int out_w);

// Inverse-mapped warp: dst(x) = src(map(x)) where map applies an optional
// per-pixel displacement followed by a homography, both in output
// coordinates. Out-of-range samples reflect at the border (reflect-101).
struct WarpField {
  double homography[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};  // output -> source
  const Tensor<float>* displacement = nullptr;  // (2, H, W): dx, dy, optional
};

template <typename T>
Tensor<T> warp_bilinear(const Tensor<T>& src, const WarpField& field,
                        int out_h, int out_w);

std::vector<std::uint8_t> warp_nearest_u8(const std::vector<std::uint8_t>& src,
                                          int src_h, int src_w,
                                          const WarpField& field, int out_h,
                                          int out_w);

std::vector<std::uint8_t> resize_nearest_u8(
    const std::vector<std::uint8_t>& src, int src_h, int src_w, int out_h,
    int out_w);

}  // namespace driv::kern
