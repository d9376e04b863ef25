#pragma once

#include "dmphn/model.hpp"

#include <map>
#include <string>
#include <vector>

namespace dmphn {

struct TrainConfig {
  int batch_size = 6;
  int crop = 256;
  double lr0 = 1e-4;
  double decay_rate = 0.1;
  int epochs = 3000;
  std::uint64_t seed = 0;
  std::string dtype = "f32";

  // Artifact knobs, not part of the recipe.
  int max_steps = 0;         // stop after this many steps total (0 = off)
  int checkpoint_every = 0;  // epochs between checkpoints (0 = final only)
  std::string out_path;      // checkpoint file; empty disables saving
  int log_every = 0;         // print a loss line every N steps (0 = silent)
};

// lr0 * decay^floor(epoch / (epochs/3)): three equal milestones.
double lr_at(const TrainConfig& cfg, std::int64_t epoch);

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Moments are kept in double regardless of the parameter dtype so that the
// update math is identical for f32 and f64 models.
struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;  // completed steps
  std::map<std::string, std::vector<double>> m, v;
};

template <typename T>
using ParamRefs = std::vector<std::pair<std::string, Tensor<T>*>>;

// One optimizer step over all parameters; bias-corrected Adam. Throws on a
// non-finite gradient, naming the parameter.
template <typename T>
void adam_step(AdamState& st, const ParamRefs<T>& params,
               const std::vector<Tensor<T>>& grads, double lr);

template <typename T>
struct ImagePair {
  Tensor<T> blurry, sharp;
};

template <typename T>
std::vector<ImagePair<T>> load_pairs(const std::string& root,
                                     const std::string& split);

// Random crop (same window for both images of a pair) and shift to
// [-0.5, 0.5]. Two rng draws per sample, always.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> prepare_batch(
    const std::vector<ImagePair<T>>& data, const std::vector<int>& indices,
    int crop, Rng& rng);

struct TrainReport {
  std::vector<double> losses;  // one entry per step
  std::int64_t steps = 0;
  std::int64_t epochs_run = 0;
  double seconds = 0.0;
  bool stopped_by_max_steps = false;
  std::string checkpoint_path;  // last file written, if any
};

// Training loop: per epoch, shuffle, take size/batch full batches
// (leftovers dropped), forward, stacked loss over all sub-model outputs,
// backward, Adam. Checkpoints land at epoch boundaries with the RNG state of
// that moment, so resuming reproduces the uninterrupted run bit-exactly. A
// max_steps stop can land mid-epoch; resuming such a checkpoint starts a
// fresh epoch from the saved RNG state instead of replaying the partial one.
template <typename T>
class Trainer {
 public:
  Trainer(AnyModel<T>* model, const TrainConfig& cfg);
  // Resume: model params are expected to be loaded already (see
  // model_from_checkpoint); this restores optimizer/epoch/RNG state.
  Trainer(AnyModel<T>* model, const TrainConfig& cfg, const Checkpoint& ckpt);

  TrainReport run(const std::vector<ImagePair<T>>& data);

  Checkpoint to_checkpoint() const;
  std::int64_t epoch() const { return epoch_; }
  std::int64_t step() const { return step_; }
  const AdamState& adam() const { return adam_; }
  Rng& rng() { return rng_; }

 private:
  void save_now(TrainReport& report);

  AnyModel<T>* model_;
  TrainConfig cfg_;
  ParamRefs<T> params_;
  AdamState adam_;
  Rng rng_;
  std::int64_t epoch_ = 0;  // completed epochs
  std::int64_t step_ = 0;   // completed steps
};

}  // namespace dmphn
