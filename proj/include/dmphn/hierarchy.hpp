#pragma once

#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dmphn/blocks.hpp"
#include "dmphn/tensor.hpp"

namespace dmphn {

struct GridDims {
  int rows = 1, cols = 1;
  bool operator==(const GridDims&) const = default;
};

// Patch counts per level (level 1 first) plus the grid each level uses.
// Ratio-2 splits alternate height first, then width; ratio-4 splits 2x2.
struct HierarchySpec {
  std::vector<int> counts;
  std::vector<GridDims> grids;

  int levels() const { return static_cast<int>(counts.size()); }
  std::string pattern() const;  // canonical "1-2-4" text
};

// "1-2-4-8" -> counts [1,2,4,8], grids (1x1),(2x1),(2x2),(4x2).
HierarchySpec parse_pattern(const std::string& text);

// Everything the forward pass produces, for visualization and for feeding
// the next unit of a stack. B and C are indexed [level][patch]; Cstar and S
// are indexed [level][parent patch] (level 0 has a single entry).
template <typename T>
struct LevelTrace {
  std::vector<std::vector<Tensor<T>>> B, C, Cstar, S;
};

// Optional per-level, per-patch contributions added at the two slots of the
// level-update equation: into the patch input (alongside S from below) and
// into the post-encoder features (alongside C* from below). Used for stack
// connections and for the v-shaped model's downward arm.
template <typename T>
struct LevelExtras {
  std::vector<std::vector<Tensor<T>>> add_to_input;
  std::vector<std::vector<Tensor<T>>> add_to_feat;
};

template <typename T>
struct DmphnModel {
  HierarchySpec spec;
  std::vector<CodecPair<T>> codecs;  // one per level, or one if shared
  bool weight_sharing = false;
  bool top_residual = true;

  const CodecPair<T>& codec(int level) const {
    return codecs[weight_sharing ? 0 : static_cast<std::size_t>(level)];
  }
  CodecPair<T>& codec(int level) {
    return codecs[weight_sharing ? 0 : static_cast<std::size_t>(level)];
  }
};

// Derives the parameter seed for sub-model #ordinal from the master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t ordinal) {
  return Rng::stream(seed, ordinal).next_u64();
}

template <typename T>
DmphnModel<T> make_dmphn(const HierarchySpec& spec, const CodecConfig& config,
                         std::uint64_t seed, bool weight_sharing = false,
                         bool top_residual = true,
                         std::uint64_t seed_ordinal_base = 0);

// Bottom-to-top pass. Returns the deblurred image (with the input residual
// when top_residual is set). trace and extras may be null.
template <typename T>
Tensor<T> forward(const DmphnModel<T>& m, const Tensor<T>& b1,
                  LevelTrace<T>* trace = nullptr,
                  const LevelExtras<T>* extras = nullptr);

// Level-1 loss: 0.5 * mean((s1 - g)^2). Intermediate levels contribute
// nothing.
template <typename T>
Tensor<T> loss(const Tensor<T>& s1, const Tensor<T>& g) {
  return mse_half(s1, g);
}

struct CropBox {
  std::int64_t h = 0, w = 0;  // original size to restore
};

// Reflect-pads right/bottom to the smallest size the spec can consume.
template <typename T>
std::pair<Tensor<T>, CropBox> pad_to_valid(const Tensor<T>& x,
                                           const HierarchySpec& spec);

// Same, for an explicit divisibility/minimum-size requirement.
template <typename T>
std::pair<Tensor<T>, CropBox> pad_to_valid(const Tensor<T>& x,
                                           std::int64_t div_h,
                                           std::int64_t div_w,
                                           std::int64_t min_h,
                                           std::int64_t min_w);

template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, const CropBox& box);

template <typename T>
void for_each_param(
    DmphnModel<T>& m,
    const std::function<void(const std::string&, Tensor<std::type_identity_t<T>>&)>& fn,
    const std::string& prefix = "");

template <typename T>
std::int64_t param_count(const DmphnModel<T>& m);
template <typename T>
std::int64_t param_bytes(const DmphnModel<T>& m);

}  // namespace dmphn
