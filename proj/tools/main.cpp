// dmphn: train, run and measure the patch-hierarchy deblurring models.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "dmphn/data.hpp"
#include "dmphn/metrics.hpp"
#include "dmphn/parallel.hpp"
#include "dmphn/train.hpp"

using namespace dmphn;
namespace fs = std::filesystem;

namespace {

struct SizeArg {
  std::int64_t h = 720, w = 1280;
};

SizeArg parse_size(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == text.size()) {
    throw std::invalid_argument("invalid size '" + text +
                                "' (expected HxW, e.g. 720x1280)");
  }
  SizeArg s;
  try {
    s.h = std::stoll(text.substr(0, x));
    s.w = std::stoll(text.substr(x + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("invalid size '" + text + "'");
  }
  if (s.h <= 0 || s.w <= 0) {
    throw std::invalid_argument("invalid size '" + text + "'");
  }
  return s;
}

struct ModelArgs {
  std::string model = "dmphn";
  std::string pattern = "1-2-4";
  int stack = 1;
  int scales = 1;
  bool weight_sharing = false;
  bool no_top_residual = false;
  std::string profile;
};

void add_model_flags(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--model", a.model,
                  "dmphn | stack-dmphn | vmphn | stack-vmphn | dmsn")
      ->capture_default_str();
  cmd->add_option("--pattern", a.pattern,
                  "patch counts per level, coarse to fine (e.g. 1-2-4)")
      ->capture_default_str();
  cmd->add_option("--stack", a.stack,
                  "sub-model count (stack-dmphn / stack-vmphn only)");
  cmd->add_option("--scales", a.scales, "scale count (dmsn only)");
  cmd->add_flag("--weight-sharing", a.weight_sharing,
                "share one codec pair across all levels");
  cmd->add_flag("--no-top-residual", a.no_top_residual,
                "drop the final input skip connection");
  cmd->add_option("--profile", a.profile,
                  "desk: reduced widths (8/16/32), crop 64, batch 4, for CPU "
                  "runs | paper: full widths, batch 6, crop 256, 3000 epochs "
                  "(NOT desk-runnable; needs long GPU-scale training)");
}

CodecConfig config_for(const ModelArgs& a) {
  if (a.profile.empty() || a.profile == "paper") return CodecConfig{};
  if (a.profile == "desk") return CodecConfig::desk();
  throw std::invalid_argument("unknown profile '" + a.profile +
                              "' (expected desk or paper)");
}

template <typename T>
AnyModel<T> build_model(const ModelArgs& a, std::uint64_t seed) {
  return make_any_model<T>(parse_kind(a.model), a.pattern, a.stack, a.scales,
                           config_for(a), seed, a.weight_sharing,
                           !a.no_top_residual);
}

int usage_error(const std::exception& e) {
  std::fprintf(stderr, "error: %s\n", e.what());
  return 2;
}

int runtime_error_exit(const std::exception& e) {
  std::fprintf(stderr, "error: %s\n", e.what());
  return 1;
}

Tensor<float> shift(const Tensor<float>& x, float d) {
  Tensor<float> out(x.shape());
  const float* src = x.data();
  float* dst = out.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) dst[i] = src[i] + d;
  return out;
}

// [0,1] image in, [0,1] image out; pads to the model's valid geometry and
// crops back.
Tensor<float> deblur(const AnyModel<float>& m, const Tensor<float>& img) {
  const InputGeometry g = input_geometry(m);
  auto [x, box] =
      pad_to_valid(shift(img, -0.5f), g.div_h, g.div_w, g.min_h, g.min_w);
  Tensor<float> y = model_forward(m, x);
  return shift(crop_to(y, box), 0.5f);
}

Tensor<float> clamp01(const Tensor<float>& x) {
  Tensor<float> out(x.shape());
  const float* src = x.data();
  float* dst = out.data();
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    dst[i] = std::min(1.0f, std::max(0.0f, src[i]));
  }
  return out;
}

// Residual maps of the last unit, one full-footprint image per level,
// shifted by +0.5 for viewing (raw model-space footprint, no crop).
std::vector<std::pair<std::string, Tensor<float>>> level_dumps(
    const AnyModel<float>& m, const Tensor<float>& x) {
  std::vector<std::pair<std::string, Tensor<float>>> dumps;
  auto from_trace = [&](const LevelTrace<float>& tr,
                        const HierarchySpec& spec) {
    for (int i = 0; i < spec.levels(); ++i) {
      const GridDims pg =
          i == 0 ? GridDims{1, 1} : spec.grids[std::size_t(i - 1)];
      const Tensor<float> s =
          concat_grid(tr.S[std::size_t(i)], pg.rows, pg.cols);
      dumps.emplace_back("S" + std::to_string(i + 1), shift(s, 0.5f));
    }
  };
  switch (m.kind) {
    case ModelKind::dmphn: {
      LevelTrace<float> tr;
      (void)forward(*m.dmphn, x, &tr);
      from_trace(tr, m.spec);
      break;
    }
    case ModelKind::stack_dmphn:
    case ModelKind::vmphn:
    case ModelKind::stack_vmphn: {
      StackTrace<float> tr;
      (void)stack_forward(*m.stack, x, &tr);
      from_trace(tr.units.back(), m.spec);
      break;
    }
    case ModelKind::dmsn: {
      DmsnTrace<float> tr;
      (void)dmsn_forward(*m.dmsn, x, &tr);
      for (std::size_t s = 0; s < tr.S.size(); ++s) {
        dumps.emplace_back("scale" + std::to_string(s),
                           shift(tr.S[s], 0.5f));
      }
      break;
    }
  }
  return dumps;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  ModelArgs model;
  std::string data;
  std::string out = "model.ckpt";
  std::string log;
  std::string config_path;
  std::string resume;
  std::string dtype = "f32";
  int epochs = -1;
  int batch = -1;
  int crop = -1;
  double lr = -1;
  std::int64_t seed = 0;
  int max_steps = 0;
  int checkpoint_every = 0;
  int log_every = 25;
  // set-by-user markers filled after parse
  CLI::App* cmd = nullptr;
};

template <typename T>
int run_train(const TrainArgs& a) {
  AnyModel<T> model;
  TrainConfig cfg;
  try {
    const bool desk = a.model.profile == "desk";
    cfg.batch_size = a.batch > 0 ? a.batch : (desk ? 4 : 6);
    cfg.crop = a.crop > 0 ? a.crop : (desk ? 64 : 256);
    cfg.lr0 = a.lr >= 0 ? a.lr : 1e-4;
    cfg.epochs = a.epochs > 0 ? a.epochs : (desk ? 30 : 3000);
    cfg.seed = std::uint64_t(a.seed);
    cfg.dtype = a.dtype;
    cfg.max_steps = a.max_steps;
    cfg.checkpoint_every = a.checkpoint_every;
    cfg.out_path = a.out;
    cfg.log_every = a.log_every;
    if (a.data.empty()) {
      throw std::invalid_argument("train needs --data DIR");
    }
    if (a.resume.empty()) {
      model = build_model<T>(a.model, cfg.seed);
    }
  } catch (const std::invalid_argument& e) {
    return usage_error(e);
  }

  try {
    std::unique_ptr<Trainer<T>> trainer;
    Checkpoint mid;
    if (!a.resume.empty()) {
      mid = load_checkpoint(a.resume);
      model = model_from_checkpoint<T>(mid);
      trainer = std::make_unique<Trainer<T>>(&model, cfg, mid);
      std::printf("resumed %s at epoch %lld, step %lld\n", a.resume.c_str(),
                  (long long)trainer->epoch(), (long long)trainer->step());
    } else {
      trainer = std::make_unique<Trainer<T>>(&model, cfg);
    }

    const auto data = load_pairs<T>(a.data, "train");
    if (data.empty()) {
      throw std::runtime_error("no training pairs under " + a.data);
    }
    const TrainReport rep = trainer->run(data);

    const std::string log_path = a.log.empty() ? a.out + ".loss.csv" : a.log;
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + log_path);
    log << "step,loss\n";
    const std::int64_t first = rep.steps - std::int64_t(rep.losses.size());
    for (std::size_t i = 0; i < rep.losses.size(); ++i) {
      log << (first + std::int64_t(i) + 1) << "," << rep.losses[i] << "\n";
    }

    std::printf(
        "trained %lld steps (%lld epochs) in %.1fs; final loss %.6f\n",
        (long long)rep.steps, (long long)rep.epochs_run, rep.seconds,
        rep.losses.empty() ? 0.0 : rep.losses.back());
    std::printf("checkpoint: %s\nloss log:   %s\n",
                rep.checkpoint_path.c_str(), log_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    return runtime_error_exit(e);
  }
}

int cmd_train(TrainArgs& a) {
  // Config-file layer sits between defaults and explicit flags.
  if (!a.config_path.empty()) {
    try {
      std::ifstream in(a.config_path);
      if (!in) {
        throw std::invalid_argument("cannot read config " + a.config_path);
      }
      const auto j = nlohmann::json::parse(in);
      auto absent = [&](const char* flag) {
        return a.cmd->get_option(flag)->count() == 0;
      };
      if (j.contains("model") && absent("--model")) j.at("model").get_to(a.model.model);
      if (j.contains("pattern") && absent("--pattern")) j.at("pattern").get_to(a.model.pattern);
      if (j.contains("stack") && absent("--stack")) j.at("stack").get_to(a.model.stack);
      if (j.contains("scales") && absent("--scales")) j.at("scales").get_to(a.model.scales);
      if (j.contains("weight_sharing") && absent("--weight-sharing")) j.at("weight_sharing").get_to(a.model.weight_sharing);
      if (j.contains("profile") && absent("--profile")) j.at("profile").get_to(a.model.profile);
      if (j.contains("epochs") && absent("--epochs")) j.at("epochs").get_to(a.epochs);
      if (j.contains("batch") && absent("--batch")) j.at("batch").get_to(a.batch);
      if (j.contains("crop") && absent("--crop")) j.at("crop").get_to(a.crop);
      if (j.contains("lr") && absent("--lr")) j.at("lr").get_to(a.lr);
      if (j.contains("seed") && absent("--seed")) j.at("seed").get_to(a.seed);
      if (j.contains("dtype") && absent("--dtype")) j.at("dtype").get_to(a.dtype);
      if (j.contains("out") && absent("--out")) j.at("out").get_to(a.out);
      if (j.contains("data") && absent("--data")) j.at("data").get_to(a.data);
      if (j.contains("max_steps") && absent("--max-steps")) j.at("max_steps").get_to(a.max_steps);
      if (j.contains("checkpoint_every") && absent("--checkpoint-every")) j.at("checkpoint_every").get_to(a.checkpoint_every);
    } catch (const nlohmann::json::exception& e) {
      return usage_error(std::invalid_argument(
          std::string("bad config file: ") + e.what()));
    } catch (const std::invalid_argument& e) {
      return usage_error(e);
    }
  }
  if (a.dtype == "f64") return run_train<double>(a);
  if (a.dtype == "f32") return run_train<float>(a);
  return usage_error(
      std::invalid_argument("dtype must be f32 or f64, got " + a.dtype));
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string ckpt, in, out;
  bool dump_levels = false;
};

int cmd_infer(const InferArgs& a) {
  try {
    const Checkpoint ckpt = load_checkpoint(a.ckpt);
    const AnyModel<float> model = model_from_checkpoint<float>(ckpt);

    std::vector<fs::path> inputs;
    if (fs::is_directory(a.in)) {
      for (const auto& e : fs::directory_iterator(a.in)) {
        const auto ext = e.path().extension().string();
        if (ext == ".png" || ext == ".ppm") inputs.push_back(e.path());
      }
      std::sort(inputs.begin(), inputs.end());
      if (inputs.empty()) {
        throw std::runtime_error("no .png/.ppm images in " + a.in);
      }
    } else {
      inputs.push_back(a.in);
    }
    fs::create_directories(a.out);

    for (const auto& path : inputs) {
      const Tensor<float> img = load_image(path.string());
      const Tensor<float> restored = deblur(model, img);
      const fs::path dst = fs::path(a.out) / path.filename();
      save_image(restored, dst.string());
      std::printf("wrote %s\n", dst.string().c_str());

      if (a.dump_levels) {
        const InputGeometry g = input_geometry(model);
        auto [x, box] = pad_to_valid(shift(img, -0.5f), g.div_h, g.div_w,
                                     g.min_h, g.min_w);
        const fs::path stem = fs::path(a.out) / path.stem();
        for (const auto& [tag, image] : level_dumps(model, x)) {
          const std::string dump = stem.string() + "." + tag + ".png";
          save_image(image, dump);
          std::printf("wrote %s\n", dump.c_str());
        }
      }
    }
    return 0;
  } catch (const std::exception& e) {
    return runtime_error_exit(e);
  }
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt, data;
  std::string split = "test";
};

int cmd_eval(const EvalArgs& a) {
  try {
    const AnyModel<float> model =
        model_from_checkpoint<float>(load_checkpoint(a.ckpt));
    const auto pairs = list_pairs(a.data, a.split);
    if (pairs.empty()) {
      throw std::runtime_error("no '" + a.split + "' pairs under " + a.data);
    }

    std::printf("image,psnr_blurry,ssim_blurry,psnr_deblurred,ssim_deblurred\n");
    double pb = 0, sb = 0, pd = 0, sd = 0;
    for (const auto& pp : pairs) {
      const Tensor<float> blur = load_image(pp.blur);
      const Tensor<float> sharp = load_image(pp.sharp);
      const Tensor<float> restored = clamp01(deblur(model, blur));
      const double p0 = psnr(blur, sharp), s0 = ssim(blur, sharp);
      const double p1 = psnr(restored, sharp), s1 = ssim(restored, sharp);
      std::printf("%s,%.4f,%.6f,%.4f,%.6f\n",
                  fs::path(pp.blur).stem().string().c_str(), p0, s0, p1, s1);
      pb += p0;
      sb += s0;
      pd += p1;
      sd += s1;
    }
    const double n = double(pairs.size());
    std::printf("mean,%.4f,%.6f,%.4f,%.6f\n", pb / n, sb / n, pd / n, sd / n);
    return 0;
  } catch (const std::exception& e) {
    return runtime_error_exit(e);
  }
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  ModelArgs model;
  std::string size = "720x1280";
  std::int64_t seed = 0;
};

int cmd_inspect(const InspectArgs& a) {
  AnyModel<float> model;
  SizeArg size;
  try {
    model = build_model<float>(a.model, std::uint64_t(a.seed));
    size = parse_size(a.size);
    const InputGeometry g = input_geometry(model);
    if (size.h % g.div_h != 0 || size.w % g.div_w != 0 || size.h < g.min_h ||
        size.w < g.min_w) {
      throw std::invalid_argument(
          "size " + a.size + " is invalid for this model (needs multiples of " +
          std::to_string(g.div_h) + "x" + std::to_string(g.div_w) +
          ", at least " + std::to_string(g.min_h) + "x" +
          std::to_string(g.min_w) + ")");
    }
  } catch (const std::invalid_argument& e) {
    return usage_error(e);
  }

  const std::int64_t params = param_count(model);
  const std::int64_t bytes = param_bytes(model);
  std::printf("model:        %s\n", kind_name(model.kind));
  if (model.kind == ModelKind::dmsn) {
    std::printf("scales:       %d\n", model.scales);
  } else {
    std::printf("pattern:      %s\n", model.spec.pattern().c_str());
  }
  if (model.stack_n > 1) std::printf("stack:        %d\n", model.stack_n);
  if (model.weight_sharing) std::printf("weights:      shared across levels\n");
  std::printf("parameters:   %lld\n", (long long)params);
  std::printf("size (f32):   %.1f MB\n", double(bytes) / 1e6);

  // Per-level parameter budget of one unit (v-models own a downward and an
  // upward codec pair per level).
  if (model.kind != ModelKind::dmsn) {
    auto level_params = [&](int i) -> std::int64_t {
      if (model.dmphn) return param_count(model.dmphn->codec(i));
      if (model.stack->kind == StackKind::stack_dmphn) {
        return param_count(model.stack->dmphn_units[0].codec(i));
      }
      const auto& u = model.stack->vmphn_units[0];
      return param_count(u.down.codec(i)) + param_count(u.up.codec(i));
    };
    const char* scale = model.stack_n > 1 ? " (one unit)" : "";
    if (model.weight_sharing) {
      std::printf("  shared across levels%s: %lld params\n", scale,
                  (long long)level_params(0));
    } else {
      for (int i = 0; i < model.spec.levels(); ++i) {
        std::printf("  level %d%s: %lld params\n", i + 1, scale,
                    (long long)level_params(i));
      }
    }
  }

  const auto flops = level_flops(model, size.h, size.w);
  std::printf("flops at %lldx%lld:\n", (long long)size.h, (long long)size.w);
  const char* row = model.kind == ModelKind::dmsn ? "scale" : "level";
  std::int64_t total = 0;
  for (std::size_t i = 0; i < flops.size(); ++i) {
    std::printf("  %s %zu: %.3f GFLOP\n", row, i + 1, double(flops[i]) / 1e9);
    total += flops[i];
  }
  std::printf("  total:   %.3f GFLOP\n", double(total) / 1e9);
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  ModelArgs model;
  std::string size = "720x1280";
  int iters = 10;
  std::int64_t seed = 0;
};

int cmd_bench(const BenchArgs& a) {
  AnyModel<float> model;
  SizeArg size;
  try {
    if (a.iters <= 0) throw std::invalid_argument("--iters must be positive");
    model = build_model<float>(a.model, std::uint64_t(a.seed));
    size = parse_size(a.size);
    const InputGeometry g = input_geometry(model);
    if (size.h % g.div_h != 0 || size.w % g.div_w != 0 || size.h < g.min_h ||
        size.w < g.min_w) {
      throw std::invalid_argument("size " + a.size +
                                  " is invalid for this model");
    }
  } catch (const std::invalid_argument& e) {
    return usage_error(e);
  }

  try {
    Rng rng(std::uint64_t(a.seed));
    const Tensor<float> x =
        Tensor<float>::uniform({1, 3, size.h, size.w}, rng, -0.5f, 0.5f);
    (void)model_forward(model, x);  // warm-up

    std::vector<double> ms;
    ms.reserve(std::size_t(a.iters));
    for (int i = 0; i < a.iters; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      (void)model_forward(model, x);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = ms;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0;
    for (const double v : ms) mean += v;
    mean /= double(ms.size());
    const double p50 = sorted[sorted.size() / 2];
    const double p95 = sorted[std::size_t(0.95 * double(sorted.size() - 1))];
    const std::int64_t flops = model_flops(model, size.h, size.w);
    const double flops_per_s = double(flops) / (mean / 1e3);

    std::printf(
        "model,pattern,h,w,iters,threads,mean_ms,p50_ms,p95_ms,gflop,gflop_per_s\n");
    std::printf("%s,%s,%lld,%lld,%d,%d,%.2f,%.2f,%.2f,%.3f,%.3f\n",
                kind_name(model.kind),
                model.kind == ModelKind::dmsn
                    ? std::to_string(model.scales).c_str()
                    : model.spec.pattern().c_str(),
                (long long)size.h, (long long)size.w, a.iters, num_threads(),
                mean, p50, p95, double(flops) / 1e9, flops_per_s / 1e9);
    return 0;
  } catch (const std::exception& e) {
    return runtime_error_exit(e);
  }
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  int count = 32;
  std::string size = "64x64";
  std::int64_t seed = 0;
  int frames_min = 7;
  int frames_max = 13;
  double d_max = 2.0;
  double train_ratio = 0.75;
};

int cmd_gen_data(const GenDataArgs& a) {
  SizeArg size;
  try {
    size = parse_size(a.size);
    if (a.count <= 0) throw std::invalid_argument("--count must be positive");
    if (a.frames_min < 1 || a.frames_max < a.frames_min) {
      throw std::invalid_argument("bad frames range");
    }
  } catch (const std::invalid_argument& e) {
    return usage_error(e);
  }
  try {
    DatasetOptions opt;
    opt.count = a.count;
    opt.height = size.h;
    opt.width = size.w;
    opt.seed = std::uint64_t(a.seed);
    opt.frames_min = a.frames_min;
    opt.frames_max = a.frames_max;
    opt.d_max = a.d_max;
    opt.train_ratio = a.train_ratio;
    const std::string manifest = gen_dataset(a.out, opt);
    std::printf("wrote %s\n", manifest.c_str());
    return 0;
  } catch (const std::exception& e) {
    return runtime_error_exit(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-patch hierarchical deblurring: train, infer, measure."};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads,
                 "worker threads for conv kernels (1 = deterministic)")
      ->capture_default_str();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand(
      "train", "Train a model on a generated dataset; writes a checkpoint "
               "and a CSV loss log.");
  train_args.cmd = train_cmd;
  add_model_flags(train_cmd, train_args.model);
  train_cmd->add_option("--data", train_args.data,
                        "dataset root (from gen-data)");
  train_cmd->add_option("--out", train_args.out, "checkpoint path")
      ->capture_default_str();
  train_cmd->add_option("--log", train_args.log,
                        "loss CSV path (default: <out>.loss.csv)");
  train_cmd->add_option("--config", train_args.config_path,
                        "JSON config file; explicit flags win over it");
  train_cmd->add_option("--resume", train_args.resume,
                        "checkpoint to continue from (model flags ignored)");
  train_cmd->add_option("--dtype", train_args.dtype, "f32 | f64")
      ->capture_default_str();
  train_cmd->add_option("--epochs", train_args.epochs,
                        "training epochs (default: 30 desk, 3000 paper)");
  train_cmd->add_option("--batch", train_args.batch,
                        "batch size (default: 4 desk, 6 paper)");
  train_cmd->add_option("--crop", train_args.crop,
                        "square crop size (default: 64 desk, 256 paper)");
  train_cmd->add_option("--lr", train_args.lr, "initial learning rate (1e-4)");
  train_cmd->add_option("--seed", train_args.seed, "master seed")
      ->capture_default_str();
  train_cmd->add_option("--max-steps", train_args.max_steps,
                        "stop after N steps (0 = run all epochs)");
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every,
                        "save every N epochs (0 = final only)");
  train_cmd->add_option("--log-every", train_args.log_every,
                        "print a progress line every N steps (0 = silent)")
      ->capture_default_str();

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand(
      "infer", "Deblur images with a trained checkpoint (any input size; "
               "reflect-padded and cropped back).");
  infer_cmd->add_option("--ckpt", infer_args.ckpt, "checkpoint file")
      ->required();
  infer_cmd->add_option("--in", infer_args.in, "input image or directory")
      ->required();
  infer_cmd->add_option("--out", infer_args.out, "output directory")
      ->required();
  infer_cmd->add_flag("--dump-levels", infer_args.dump_levels,
                      "also write each level's residual map S_i");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand(
      "eval", "PSNR/SSIM of blurry and deblurred images against ground "
              "truth; CSV on stdout.");
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "checkpoint file")
      ->required();
  eval_cmd->add_option("--data", eval_args.data, "dataset root")->required();
  eval_cmd->add_option("--split", eval_args.split, "train | test")
      ->capture_default_str();

  InspectArgs inspect_args;
  auto* inspect_cmd = app.add_subcommand(
      "inspect", "Parameter and FLOP breakdown of a model configuration.");
  add_model_flags(inspect_cmd, inspect_args.model);
  inspect_cmd->add_option("--size", inspect_args.size,
                          "input size HxW for the FLOP count")
      ->capture_default_str();

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand(
      "bench", "Forward-pass wall time (mean/p50/p95) and FLOP/s; CSV on "
               "stdout.");
  add_model_flags(bench_cmd, bench_args.model);
  bench_cmd->add_option("--size", bench_args.size, "input size HxW")
      ->capture_default_str();
  bench_cmd->add_option("--iters", bench_args.iters, "timed iterations")
      ->capture_default_str();
  bench_cmd->add_option("--seed", bench_args.seed, "input/init seed")
      ->capture_default_str();

  GenDataArgs gen_args;
  auto* gen_cmd = app.add_subcommand(
      "gen-data", "Generate a synthetic blur dataset (averaged translated "
                  "frames over procedural scenes).");
  gen_cmd->add_option("--out", gen_args.out, "output directory")->required();
  gen_cmd->add_option("--count", gen_args.count, "number of pairs")
      ->capture_default_str();
  gen_cmd->add_option("--size", gen_args.size, "image size HxW")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen_args.seed, "dataset seed")
      ->capture_default_str();
  gen_cmd->add_option("--frames-min", gen_args.frames_min,
                      "min averaged frames")
      ->capture_default_str();
  gen_cmd->add_option("--frames-max", gen_args.frames_max,
                      "max averaged frames")
      ->capture_default_str();
  gen_cmd->add_option("--d-max", gen_args.d_max,
                      "max per-frame drift in pixels")
      ->capture_default_str();
  gen_cmd->add_option("--train-ratio", gen_args.train_ratio,
                      "train split fraction")
      ->capture_default_str();

  for (auto* sub : {train_cmd, infer_cmd, eval_cmd, inspect_cmd, bench_cmd,
                    gen_cmd}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  set_num_threads(threads);
  if (train_cmd->parsed()) return cmd_train(train_args);
  if (infer_cmd->parsed()) return cmd_infer(infer_args);
  if (eval_cmd->parsed()) return cmd_eval(eval_args);
  if (inspect_cmd->parsed()) return cmd_inspect(inspect_args);
  if (bench_cmd->parsed()) return cmd_bench(bench_args);
  if (gen_cmd->parsed()) return cmd_gen_data(gen_args);
  return 2;
}
