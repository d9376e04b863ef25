#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "dmphn/tensor.hpp"

namespace dmphn {

// Stage widths and block counts for one encoder/decoder pair. Defaults give
// 15 convs and 6 residual links per codec, each codec ~3.6 MB in f32
// (~7.2 MB per encoder/decoder pair).
struct CodecConfig {
  int base_channels = 32;
  std::array<int, 3> stage_channels{32, 64, 128};
  int res_blocks_per_stage = 2;
  int kernel_size = 3;
  int in_channels = 3;
  int out_channels = 3;

  // Reduced widths for fast CPU runs.
  static CodecConfig desk() {
    CodecConfig c;
    c.base_channels = 8;
    c.stage_channels = {8, 16, 32};
    return c;
  }
};

template <typename T>
struct ConvLayer {
  Tensor<T> w;  // conv: [Cout, Cin, k, k]; transposed: [Cin, Cout, k, k]
  Tensor<T> b;  // [1, Cout, 1, 1]
  int stride = 1;
  int pad = 1;
  bool transposed = false;
};

// One encoder/decoder pair (the F_i / G_i of a level). Layer vectors are
// flat in execution order; the stage structure is rebuilt from the config.
template <typename T>
struct CodecPair {
  CodecConfig config;
  std::vector<ConvLayer<T>> enc;
  std::vector<ConvLayer<T>> dec;
};

template <typename T>
CodecPair<T> init_params(const CodecConfig& config, std::uint64_t seed);

// x: [N, in_channels, h, w], h and w divisible by 4 and >= 8.
template <typename T>
Tensor<T> encode(const CodecPair<T>& pair, const Tensor<T>& x);

// c: [N, stage_channels[2], h/4, w/4] -> [N, out_channels, h, w].
template <typename T>
Tensor<T> decode(const CodecPair<T>& pair, const Tensor<T>& c);

// Visits every parameter tensor in a fixed order, names like "enc.4.w".
template <typename T>
void for_each_param(
    CodecPair<T>& pair,
    const std::function<void(const std::string&, Tensor<std::type_identity_t<T>>&)>& fn);

template <typename T>
std::int64_t param_count(const CodecPair<T>& pair);

// Analytic conv FLOPs (2 per multiply-accumulate, bias/activation ignored)
// for running the layer list on one n=1 input of the given spatial size.
template <typename T>
std::int64_t conv_chain_flops(const std::vector<ConvLayer<T>>& layers,
                              std::int64_t h, std::int64_t w);

// count * sizeof(element)
template <typename T>
std::int64_t param_bytes(const CodecPair<T>& pair);

}  // namespace dmphn
