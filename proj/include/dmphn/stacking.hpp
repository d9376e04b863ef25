#pragma once

#include "dmphn/hierarchy.hpp"

#include <type_traits>

namespace dmphn {

enum class StackKind { stack_dmphn, vmphn, stack_vmphn };

// One v-shaped unit: a top-to-bottom arm followed by a bottom-to-top arm,
// each with its own codecs (hence 2x the parameters of one DMPHN unit).
// The arms reuse DmphnModel as a codec container; only `up` runs the
// standard bottom-to-top pass.
template <typename T>
struct VmphnUnit {
  DmphnModel<T> down;
  DmphnModel<T> up;
};

template <typename T>
struct StackModel {
  StackKind kind = StackKind::stack_dmphn;
  HierarchySpec spec;
  std::vector<DmphnModel<T>> dmphn_units;
  std::vector<VmphnUnit<T>> vmphn_units;

  int num_units() const {
    return static_cast<int>(kind == StackKind::stack_dmphn
                                ? dmphn_units.size()
                                : vmphn_units.size());
  }
};

template <typename T>
struct StackTrace {
  std::vector<LevelTrace<T>> units;       // per unit (vmphn: the up arm)
  std::vector<LevelTrace<T>> down_units;  // vmphn only
  std::vector<Tensor<T>> outputs;         // one image per unit
};

template <typename T>
StackModel<T> make_stack(StackKind kind, const HierarchySpec& spec,
                         const CodecConfig& config, std::uint64_t seed,
                         int stack_n = 1, bool weight_sharing = false,
                         bool top_residual = true);

// Runs the chain; returns every sub-model's output image, last one final.
template <typename T>
std::vector<Tensor<T>> stack_forward(const StackModel<T>& m,
                                     const Tensor<T>& b1,
                                     StackTrace<T>* trace = nullptr);

// One v-shaped pass. up_extras (may be null) carries the previous stack
// unit's features into the upward arm.
template <typename T>
Tensor<T> vmphn_forward(const VmphnUnit<T>& unit, const Tensor<T>& b1,
                        LevelTrace<T>* down_trace = nullptr,
                        LevelTrace<T>* up_trace = nullptr,
                        const LevelExtras<T>* up_extras = nullptr);

// 0.5 * sum_i mean((outputs[i] - g)^2)
template <typename T>
Tensor<T> stacked_loss(const std::vector<Tensor<T>>& outputs,
                       const Tensor<T>& g);

template <typename T>
void for_each_param(
    StackModel<T>& m,
    const std::function<void(const std::string&, Tensor<std::type_identity_t<T>>&)>& fn);

template <typename T>
std::int64_t param_count(const StackModel<T>& m);
template <typename T>
std::int64_t param_bytes(const StackModel<T>& m);

}  // namespace dmphn
