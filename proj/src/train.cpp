#include "dmphn/train.hpp"

#include "dmphn/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace dmphn {

double lr_at(const TrainConfig& cfg, std::int64_t epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  const std::int64_t milestone = std::max<std::int64_t>(1, cfg.epochs / 3);
  return cfg.lr0 * std::pow(cfg.decay_rate, double(epoch / milestone));
}

template <typename T>
void adam_step(AdamState& st, const ParamRefs<T>& params,
               const std::vector<Tensor<T>>& grads, double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: params/grads size mismatch");
  }
  st.step += 1;
  const double t = double(st.step);
  const double b1 = st.config.beta1, b2 = st.config.beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params[i].first;
    Tensor<T>& p = *params[i].second;
    const Tensor<T>& g = grads[i];
    if (!(g.shape() == p.shape())) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" +
                                  name + "'");
    }
    const std::int64_t n = p.numel();
    const T* gp = g.data();
    for (std::int64_t k = 0; k < n; ++k) {
      if (!std::isfinite(double(gp[k]))) {
        throw std::runtime_error("non-finite gradient in '" + name + "'");
      }
    }
    auto& m = st.m[name];
    auto& v = st.v[name];
    if (m.empty()) m.assign(std::size_t(n), 0.0);
    if (v.empty()) v.assign(std::size_t(n), 0.0);
    if (m.size() != std::size_t(n) || v.size() != std::size_t(n)) {
      throw std::invalid_argument("adam_step: stale moment size for '" + name +
                                  "'");
    }
    T* pp = p.data();
    for (std::int64_t k = 0; k < n; ++k) {
      const std::size_t ks = std::size_t(k);
      const double gk = double(gp[k]);
      m[ks] = b1 * m[ks] + (1.0 - b1) * gk;
      v[ks] = b2 * v[ks] + (1.0 - b2) * gk * gk;
      const double mhat = m[ks] / c1;
      const double vhat = v[ks] / c2;
      pp[k] = T(double(pp[k]) - lr * mhat / (std::sqrt(vhat) + st.config.eps));
    }
  }
}

namespace {

template <typename T>
Tensor<T> cast_image(const Tensor<float>& x) {
  if constexpr (std::is_same_v<T, float>) {
    return x;
  } else {
    Tensor<T> out(x.shape());
    const float* src = x.data();
    T* dst = out.data();
    for (std::int64_t i = 0; i < x.numel(); ++i) dst[i] = T(src[i]);
    return out;
  }
}

}  // namespace

template <typename T>
std::vector<ImagePair<T>> load_pairs(const std::string& root,
                                     const std::string& split) {
  std::vector<ImagePair<T>> out;
  for (const auto& pp : list_pairs(root, split)) {
    ImagePair<T> pair;
    pair.blurry = cast_image<T>(load_image(pp.blur));
    pair.sharp = cast_image<T>(load_image(pp.sharp));
    out.push_back(std::move(pair));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> prepare_batch(
    const std::vector<ImagePair<T>>& data, const std::vector<int>& indices,
    int crop, Rng& rng) {
  if (indices.empty()) throw std::invalid_argument("prepare_batch: empty batch");
  const std::int64_t B = std::int64_t(indices.size());
  Tensor<T> blur({B, 3, crop, crop});
  Tensor<T> sharp({B, 3, crop, crop});
  for (std::int64_t bi = 0; bi < B; ++bi) {
    const auto& pair = data[std::size_t(indices[std::size_t(bi)])];
    const Shape s = pair.blurry.shape();
    if (!(pair.sharp.shape() == s)) {
      throw std::invalid_argument("prepare_batch: pair images differ in size");
    }
    if (s.h < crop || s.w < crop) {
      throw std::invalid_argument("prepare_batch: image " + s.str() +
                                  " smaller than crop " + std::to_string(crop));
    }
    const std::int64_t oy = rng.uniform_int(0, s.h - crop);
    const std::int64_t ox = rng.uniform_int(0, s.w - crop);
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t y = 0; y < crop; ++y) {
        for (std::int64_t x = 0; x < crop; ++x) {
          const std::size_t dst = std::size_t(
              ((bi * 3 + c) * crop + y) * crop + x);
          blur.data()[dst] = pair.blurry.at(0, c, oy + y, ox + x) - T(0.5);
          sharp.data()[dst] = pair.sharp.at(0, c, oy + y, ox + x) - T(0.5);
        }
      }
    }
  }
  return {std::move(blur), std::move(sharp)};
}

template <typename T>
Trainer<T>::Trainer(AnyModel<T>* model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), rng_(cfg.seed) {
  if (cfg.batch_size <= 0 || cfg.crop <= 0 || cfg.epochs <= 0 ||
      cfg.lr0 < 0 || cfg.decay_rate <= 0) {
    throw std::invalid_argument("bad training config");
  }
  const char* want = std::is_same_v<T, float> ? "f32" : "f64";
  if (!cfg.dtype.empty() && cfg.dtype != want) {
    throw std::invalid_argument("config dtype " + cfg.dtype +
                                " does not match trainer dtype " + want);
  }
  const InputGeometry g = input_geometry(*model);
  if (cfg.crop % g.div_h != 0 || cfg.crop % g.div_w != 0 ||
      cfg.crop < g.min_h || cfg.crop < g.min_w) {
    throw std::invalid_argument(
        "crop " + std::to_string(cfg.crop) + " is not valid for this model " +
        "(needs multiples of " + std::to_string(g.div_h) + "x" +
        std::to_string(g.div_w) + ", at least " + std::to_string(g.min_h) +
        "x" + std::to_string(g.min_w) + ")");
  }
  for_each_param<T>(*model_, [&](const std::string& name, Tensor<T>& t) {
    params_.emplace_back(name, &t);
  });
}

template <typename T>
Trainer<T>::Trainer(AnyModel<T>* model, const TrainConfig& cfg,
                    const Checkpoint& ckpt)
    : Trainer(model, cfg) {
  const auto& tr = ckpt.meta.at("train");
  epoch_ = tr.at("epoch").get<std::int64_t>();
  step_ = tr.at("step").get<std::int64_t>();
  adam_.step = tr.at("adam_step").get<std::int64_t>();
  std::array<std::uint64_t, 4> state{};
  const auto& rs = tr.at("rng_state");
  if (!rs.is_array() || rs.size() != 4) {
    throw std::runtime_error("checkpoint: bad rng_state");
  }
  for (int i = 0; i < 4; ++i) state[std::size_t(i)] = rs[std::size_t(i)].get<std::uint64_t>();
  rng_.set_state(state);

  for (const auto& [name, p] : params_) {
    for (auto* slot : {&adam_.m, &adam_.v}) {
      const std::string key =
          (slot == &adam_.m ? "adam.m/" : "adam.v/") + name;
      const NamedTensor* nt = ckpt.find(key);
      if (!nt) throw std::runtime_error("checkpoint is missing '" + key + "'");
      if (nt->dtype != 1) {
        throw std::runtime_error("checkpoint: '" + key + "' is not f64");
      }
      const std::size_t n = std::size_t(p->numel());
      if (nt->payload.size() != n * sizeof(double)) {
        throw std::runtime_error("checkpoint: size mismatch for '" + key + "'");
      }
      auto& dst = (*slot)[name];
      dst.resize(n);
      std::memcpy(dst.data(), nt->payload.data(), nt->payload.size());
    }
  }
}

template <typename T>
Checkpoint Trainer<T>::to_checkpoint() const {
  nlohmann::json extra;
  extra["train"] = {
      {"epoch", epoch_},
      {"step", step_},
      {"adam_step", adam_.step},
      {"rng_state", rng_.state()},
  };
  Checkpoint ckpt = model_to_checkpoint(*model_, extra);
  for (const auto& [name, p] : params_) {
    for (const auto* slot : {&adam_.m, &adam_.v}) {
      NamedTensor nt;
      nt.name = (slot == &adam_.m ? "adam.m/" : "adam.v/") + name;
      nt.dtype = 1;
      const Shape s = p->shape();
      nt.dims = {std::uint64_t(s.n), std::uint64_t(s.c), std::uint64_t(s.h),
                 std::uint64_t(s.w)};
      const auto it = slot->find(name);
      std::vector<double> zeros;
      const std::vector<double>& src =
          it != slot->end() ? it->second
                            : (zeros.assign(std::size_t(p->numel()), 0.0),
                               zeros);
      nt.payload.resize(src.size() * sizeof(double));
      std::memcpy(nt.payload.data(), src.data(), nt.payload.size());
      ckpt.tensors.push_back(std::move(nt));
    }
  }
  return ckpt;
}

template <typename T>
void Trainer<T>::save_now(TrainReport& report) {
  if (cfg_.out_path.empty()) return;
  save_checkpoint(cfg_.out_path, to_checkpoint());
  report.checkpoint_path = cfg_.out_path;
}

template <typename T>
TrainReport Trainer<T>::run(const std::vector<ImagePair<T>>& data) {
  if (data.empty()) throw std::invalid_argument("fit: dataset is empty");
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;

  const int steps_per_epoch =
      std::max(1, int(data.size()) / cfg_.batch_size);
  const int batch = std::min<int>(cfg_.batch_size, int(data.size()));

  std::vector<int> order(data.size());

  bool stop = false;
  while (epoch_ < cfg_.epochs && !stop) {
    // Fisher-Yates from the identity so the epoch's order is a function of
    // the RNG state alone (resume depends on that). Leftover images beyond
    // full batches sit out this epoch.
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::size_t(rng_.uniform_int(0, std::int64_t(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    const double lr = lr_at(cfg_, epoch_);

    for (int s = 0; s < steps_per_epoch; ++s) {
      std::vector<int> idx(order.begin() + s * batch,
                           order.begin() + (s + 1) * batch);
      auto [blur, sharp] = prepare_batch(data, idx, cfg_.crop, rng_);

      Tape<T> tape;
      for (auto& [name, p] : params_) tape.watch(*p);
      const auto outs = model_outputs(*model_, blur);
      const Tensor<T> l = stacked_loss(outs, sharp);
      const double lv = double(l.item());
      if (!std::isfinite(lv)) {
        throw std::runtime_error(
            "training diverged: loss is not finite at step " +
            std::to_string(step_ + 1) +
            (report.checkpoint_path.empty()
                 ? ""
                 : " (last checkpoint: " + report.checkpoint_path + ")"));
      }
      tape.backward(l);
      std::vector<Tensor<T>> grads;
      grads.reserve(params_.size());
      for (auto& [name, p] : params_) grads.push_back(tape.grad(*p));
      adam_step(adam_, params_, grads, lr);

      step_ += 1;
      report.losses.push_back(lv);
      if (cfg_.log_every > 0 && step_ % cfg_.log_every == 0) {
        std::printf("step %lld epoch %lld lr %.3g loss %.6f\n",
                    (long long)step_, (long long)epoch_, lr, lv);
      }
      if (cfg_.max_steps > 0 && step_ >= cfg_.max_steps) {
        report.stopped_by_max_steps = true;
        stop = true;
        break;
      }
    }
    if (!stop) {
      epoch_ += 1;
      report.epochs_run += 1;
      if (cfg_.checkpoint_every > 0 && epoch_ % cfg_.checkpoint_every == 0 &&
          epoch_ < cfg_.epochs) {
        save_now(report);
      }
    }
  }

  save_now(report);
  report.steps = step_;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

#define DMPHN_INSTANTIATE(T)                                              \
  template void adam_step(AdamState&, const ParamRefs<T>&,                \
                          const std::vector<Tensor<T>>&, double);         \
  template std::vector<ImagePair<T>> load_pairs(const std::string&,      \
                                                const std::string&);     \
  template std::pair<Tensor<T>, Tensor<T>> prepare_batch(                \
      const std::vector<ImagePair<T>>&, const std::vector<int>&, int,    \
      Rng&);                                                             \
  template class Trainer<T>;

DMPHN_INSTANTIATE(float)
DMPHN_INSTANTIATE(double)
#undef DMPHN_INSTANTIATE

}  // namespace dmphn
