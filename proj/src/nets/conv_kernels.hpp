#pragma once

// 3x3x3 "same" convolution kernels (stride 1, zero padding 1) on one sample
// laid out [channel][z][y][x]. Weights are [cout][cin][27] with tap index
// dz*9 + dy*3 + dx. The float path uses AVX2/FMA direct convolution when the
// build targets it; everything else uses the portable loops.

namespace ghc::nn::kernels {

template <typename T>
void conv3_forward(const T* in, int cin, int depth, int height, int width, const T* weight, const T* bias, int cout,
                   T* out);

/// gin += conv_transpose(gout, weight)
template <typename T>
void conv3_backward_data(const T* gout, int cout, int depth, int height, int width, const T* weight, int cin, T* gin);

/// gw[cout][cin][27] += correlation(in, gout); gb[cout] += sum(gout) when gb != nullptr
template <typename T>
void conv3_backward_weights(const T* in, int cin, const T* gout, int cout, int depth, int height, int width,
                            double* gw, double* gb);

bool simd_enabled() noexcept;

}  // namespace ghc::nn::kernels
