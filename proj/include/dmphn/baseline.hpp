#pragma once

#include "dmphn/blocks.hpp"
#include "dmphn/tensor.hpp"

#include <type_traits>

namespace dmphn {

// Multi-scale counterpart built from the same codec, for patch-vs-scale
// comparisons. One encoder/decoder pair per scale, finest first; DMSN(1)
// is the same model as DMPHN(1).
template <typename T>
struct DmsnModel {
  int num_scales = 1;
  std::vector<CodecPair<T>> codecs;  // finest first
  bool top_residual = true;
};

template <typename T>
struct DmsnTrace {
  std::vector<Tensor<T>> inputs;  // per scale, finest first
  std::vector<Tensor<T>> C, S;
};

template <typename T>
DmsnModel<T> make_dmsn(int num_scales, const CodecConfig& config,
                       std::uint64_t seed);

// Coarse-to-fine: each coarser scale sees the input halved once more; its
// decoded residual and features are upsampled and added into the next finer
// scale's input and post-encoder features.
template <typename T>
Tensor<T> dmsn_forward(const DmsnModel<T>& m, const Tensor<T>& b1,
                       DmsnTrace<T>* trace = nullptr);

// factor must be exactly 0.5 or 2.0
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, double factor);

template <typename T>
void for_each_param(
    DmsnModel<T>& m,
    const std::function<void(const std::string&, Tensor<std::type_identity_t<T>>&)>& fn);

template <typename T>
std::int64_t param_count(const DmsnModel<T>& m);
template <typename T>
std::int64_t param_bytes(const DmsnModel<T>& m);

}  // namespace dmphn
