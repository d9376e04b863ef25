#pragma once

#include <vector>

#include "dmphn/tensor.hpp"

namespace dmphn {

// Peak signal-to-noise ratio in dB for images in [0,1] (peak L=1), with the
// MSE taken over every element. Identical inputs report the 100 dB cap.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// L=1, evaluated on the valid region (no padding) per channel, then averaged
// over channels and batch. Requires H,W >= 11.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b);

// The normalized 1-D window both ssim() and its test oracle build on.
std::vector<double> gaussian_window(int size = 11, double sigma = 1.5);

}  // namespace dmphn
