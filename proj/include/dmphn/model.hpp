#pragma once

#include "dmphn/baseline.hpp"
#include "dmphn/checkpoint.hpp"
#include "dmphn/hierarchy.hpp"
#include "dmphn/stacking.hpp"

#include <optional>
#include <string>

namespace dmphn {

enum class ModelKind { dmphn, stack_dmphn, vmphn, stack_vmphn, dmsn };

const char* kind_name(ModelKind k);
ModelKind parse_kind(const std::string& name);

// Input divisibility/minimum required for a valid forward pass.
struct InputGeometry {
  std::int64_t div_h = 1, div_w = 1;
  std::int64_t min_h = 1, min_w = 1;
};

// Type-erased-ish owner of any of the five model kinds, so training,
// checkpointing and the CLI can treat them uniformly.
template <typename T>
struct AnyModel {
  ModelKind kind = ModelKind::dmphn;
  HierarchySpec spec;  // pattern kinds only
  int stack_n = 1;
  int scales = 1;  // dmsn only
  bool weight_sharing = false;
  bool top_residual = true;
  CodecConfig config;
  std::uint64_t seed = 0;

  std::optional<DmphnModel<T>> dmphn;
  std::optional<StackModel<T>> stack;
  std::optional<DmsnModel<T>> dmsn;
};

template <typename T>
AnyModel<T> make_any_model(ModelKind kind, const std::string& pattern,
                           int stack_n, int scales, const CodecConfig& config,
                           std::uint64_t seed, bool weight_sharing = false,
                           bool top_residual = true);

// Every sub-model output, final image last; feed to stacked_loss.
template <typename T>
std::vector<Tensor<T>> model_outputs(const AnyModel<T>& m, const Tensor<T>& b1);

// Just the final image.
template <typename T>
Tensor<T> model_forward(const AnyModel<T>& m, const Tensor<T>& b1);

template <typename T>
void for_each_param(
    AnyModel<T>& m,
    const std::function<void(const std::string&, Tensor<std::type_identity_t<T>>&)>& fn);

template <typename T>
std::int64_t param_count(const AnyModel<T>& m);
template <typename T>
std::int64_t param_bytes(const AnyModel<T>& m);

template <typename T>
InputGeometry input_geometry(const AnyModel<T>& m);

// Analytic conv FLOPs per level (pattern kinds) or per scale (dmsn) for one
// image of the given size, encoder and decoder work included; stacks report
// the per-level total across all units.
template <typename T>
std::vector<std::int64_t> level_flops(const AnyModel<T>& m, std::int64_t h,
                                      std::int64_t w);

template <typename T>
std::int64_t model_flops(const AnyModel<T>& m, std::int64_t h, std::int64_t w);

nlohmann::json config_to_json(const CodecConfig& c);
CodecConfig config_from_json(const nlohmann::json& j);

// Identity (kind, pattern, sizes, seed, dtype) goes into metadata under
// "model"; extra, when given, is merged in at the top level.
template <typename T>
Checkpoint model_to_checkpoint(const AnyModel<T>& m,
                               const nlohmann::json& extra = {});

// Rebuilds the model the metadata describes, then loads every tensor.
template <typename T>
AnyModel<T> model_from_checkpoint(const Checkpoint& ckpt);

// Loads tensors into an existing model; throws naming the first tensor
// that is missing or whose shape disagrees.
template <typename T>
void load_params(AnyModel<T>& m, const Checkpoint& ckpt);

}  // namespace dmphn
