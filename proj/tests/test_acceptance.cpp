// Acceptance gate: every release criterion in one binary, one line each.
// Exit code is the number of failed criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dmphn/baseline.hpp"
#include "dmphn/blocks.hpp"
#include "dmphn/checkpoint.hpp"
#include "dmphn/data.hpp"
#include "dmphn/hierarchy.hpp"
#include "dmphn/metrics.hpp"
#include "dmphn/model.hpp"
#include "dmphn/stacking.hpp"
#include "dmphn/tensor.hpp"
#include "dmphn/train.hpp"

using namespace dmphn;
namespace fs = std::filesystem;

namespace {

// The short-run training criterion runs at the CLI's desk defaults.
constexpr double kDeskLr = 1e-3;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dmphn_accept_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) return false;
  return std::memcmp(a.data(), b.data(), sizeof(T) * std::size_t(a.numel())) ==
         0;
}

CodecConfig tiny_config() {
  CodecConfig c;
  c.base_channels = 2;
  c.stage_channels = {2, 3, 4};
  c.res_blocks_per_stage = 1;
  return c;
}

double mb(std::int64_t bytes) { return double(bytes) / 1e6; }

void expect_near(double got, double want, double rel, const std::string& what) {
  expect(std::abs(got - want) <= rel * want,
         what + ": got " + fmt(got) + ", want " + fmt(want) + " within " +
             fmt(rel * 100) + "%");
}

// ---------------------------------------------------------------- 1: sizes

void criterion_sizes() {
  const CodecConfig full;
  auto pair = init_params<float>(full, 0);
  std::int64_t enc_n = 0, dec_n = 0;
  for (const auto& l : pair.enc) enc_n += l.w.numel() + l.b.numel();
  for (const auto& l : pair.dec) dec_n += l.w.numel() + l.b.numel();
  expect_near(mb(enc_n * 4), 3.6, 0.10, "encoder codec MB");
  expect_near(mb(dec_n * 4), 3.6, 0.10, "decoder codec MB");

  const std::vector<std::pair<std::string, double>> table = {
      {"1", 7.2},       {"1-2", 14.5},      {"1-2-4", 21.7},
      {"1-2-4-8", 29.0}, {"1-2-4-8-16", 36.2}};
  std::vector<std::int64_t> bytes;
  for (const auto& [pattern, want] : table) {
    auto m = make_any_model<float>(ModelKind::dmphn, pattern, 1, 1, full, 0);
    bytes.push_back(param_bytes(m));
    expect_near(mb(bytes.back()), want, 0.10, "dmphn(" + pattern + ") MB");
  }
  const std::int64_t pair_bytes_ = param_bytes(pair);
  for (std::size_t i = 1; i < bytes.size(); ++i) {
    expect(bytes[i] - bytes[i - 1] == pair_bytes_,
           "consecutive size difference != one codec pair at level " +
               std::to_string(i + 1));
  }
}

// ------------------------------------------------------------- 2: stacking

void criterion_stacking() {
  const CodecConfig full;
  const auto unit =
      param_bytes(make_any_model<float>(ModelKind::dmphn, "1-2-4", 1, 1, full, 0));
  for (int n : {2, 3, 4}) {
    const auto got = param_bytes(
        make_any_model<float>(ModelKind::stack_dmphn, "1-2-4", n, 1, full, 0));
    expect(got == n * unit, "stack(" + std::to_string(n) +
                                ")-dmphn size is not exactly " +
                                std::to_string(n) + "x the unit");
  }
  const auto v =
      param_bytes(make_any_model<float>(ModelKind::vmphn, "1-2-4", 1, 1, full, 0));
  expect(v == 2 * unit, "vmphn is not exactly 2x the unit size");

  const auto sv = param_bytes(
      make_any_model<float>(ModelKind::stack_vmphn, "1-2-4", 2, 1, full, 0));
  expect_near(mb(sv), 86.8, 0.10, "stack(2)-vmphn MB");

  const auto one_pair = param_bytes(init_params<float>(full, 0));
  for (const char* pattern : {"1-2-4", "1-2-4-8"}) {
    const auto ws = param_bytes(make_any_model<float>(
        ModelKind::dmphn, pattern, 1, 1, full, 0, /*weight_sharing=*/true));
    expect(ws == one_pair, std::string("weight-shared dmphn(") + pattern +
                               ") does not report exactly one codec pair");
  }
}

// ------------------------------------------------------------- 3: autodiff

// Scalar wrapper: L(x) = mse_half(op(x), target). Gradient flows through
// both the op under test and the loss.
template <typename Op>
int grad_case(const std::string& name, Tensor<double>& x, Op op,
              double tol = 1e-5) {
  Rng trng(777);
  Tensor<double> probe = op(x);
  auto target = Tensor<double>::uniform(probe.shape(), trng, -1.0, 1.0);

  Tape<double> tape;
  tape.watch(x);
  tape.backward(mse_half(op(x), target));
  const Tensor<double> analytic = tape.grad(x);

  auto f = [&](const Tensor<double>& v) {
    Tensor<double> vv = v;
    return mse_half(op(vv), target).item();
  };
  const auto fd = finite_diff_grad<double>(f, x, 1e-5);
  const double err = rel_error(analytic, fd);
  expect(err < tol, name + ": gradient rel error " + fmt(err));
  return 1;
}

void criterion_autodiff() {
  Rng rng(42);
  int cases = 0;

  // add: both operands
  {
    auto a = Tensor<double>::uniform({2, 3, 5, 5}, rng, -1, 1);
    auto b = Tensor<double>::uniform({2, 3, 5, 5}, rng, -1, 1);
    cases += grad_case("add/a", a, [&](Tensor<double>& t) { return add(t, b); });
    cases += grad_case("add/b", b, [&](Tensor<double>& t) { return add(a, t); });
  }
  // relu, away from the kink
  {
    auto x = Tensor<double>::uniform({1, 4, 6, 6}, rng, -1, 1);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      if (std::abs(x.data()[i]) < 0.05) x.data()[i] += 0.2;
    }
    cases += grad_case("relu", x, [](Tensor<double>& t) { return relu(t); });
  }
  // conv2d and conv_transpose2d: x, w, b at both strides
  for (int stride : {1, 2}) {
    auto x = Tensor<double>::uniform({2, 3, 6, 6}, rng, -1, 1);
    auto w = Tensor<double>::uniform({4, 3, 3, 3}, rng, -0.5, 0.5);
    auto b = Tensor<double>::uniform({1, 4, 1, 1}, rng, -0.5, 0.5);
    const std::string tag = "conv2d/s" + std::to_string(stride);
    cases += grad_case(tag + "/x", x, [&](Tensor<double>& t) {
      return conv2d(t, w, b, stride, 1);
    });
    cases += grad_case(tag + "/w", w, [&](Tensor<double>& t) {
      return conv2d(x, t, b, stride, 1);
    });
    cases += grad_case(tag + "/b", b, [&](Tensor<double>& t) {
      return conv2d(x, w, t, stride, 1);
    });

    auto xt = Tensor<double>::uniform({2, 4, 5, 5}, rng, -1, 1);
    auto wt = Tensor<double>::uniform({4, 3, 4, 4}, rng, -0.5, 0.5);
    auto bt = Tensor<double>::uniform({1, 3, 1, 1}, rng, -0.5, 0.5);
    const std::string tt = "conv_transpose2d/s" + std::to_string(stride);
    cases += grad_case(tt + "/x", xt, [&](Tensor<double>& t) {
      return conv_transpose2d(t, wt, bt, stride, 1);
    });
    cases += grad_case(tt + "/w", wt, [&](Tensor<double>& t) {
      return conv_transpose2d(xt, t, bt, stride, 1);
    });
    cases += grad_case(tt + "/b", bt, [&](Tensor<double>& t) {
      return conv_transpose2d(xt, wt, t, stride, 1);
    });
  }
  // split/concat round trip keeps gradients routed per patch
  {
    auto x = Tensor<double>::uniform({1, 2, 4, 4}, rng, -1, 1);
    cases += grad_case("split+concat", x, [](Tensor<double>& t) {
      return concat_grid(split_grid(t, 2, 2), 2, 2);
    });
  }
  // the loss itself, w.r.t. both sides
  {
    auto a = Tensor<double>::uniform({1, 3, 4, 4}, rng, -1, 1);
    auto b = Tensor<double>::uniform({1, 3, 4, 4}, rng, -1, 1);
    cases += grad_case("mse_half/a", a,
                       [&](Tensor<double>& t) { return mse_half(t, b); });
    cases += grad_case("mse_half/b", b,
                       [&](Tensor<double>& t) { return mse_half(a, t); });
  }
  // resampling
  {
    auto x = Tensor<double>::uniform({1, 3, 6, 6}, rng, -1, 1);
    cases += grad_case("upsample2x", x,
                       [](Tensor<double>& t) { return upsample2x(t); });
    auto y = Tensor<double>::uniform({1, 3, 8, 8}, rng, -1, 1);
    cases += grad_case("downsample2x", y,
                       [](Tensor<double>& t) { return downsample2x(t); });
  }
  expect(cases >= 20,
         "only " + std::to_string(cases) + " gradient cases ran (need >= 20)");

  // end to end: a whole (1-2) model against finite differences
  auto model = make_dmphn<double>(parse_pattern("1-2"), tiny_config(), 11);
  Rng drng(99);
  auto x = Tensor<double>::uniform({1, 3, 16, 16}, drng, -0.5, 0.5);
  auto g = Tensor<double>::uniform({1, 3, 16, 16}, drng, -0.5, 0.5);

  std::vector<std::pair<std::string, Tensor<double>*>> params;
  for_each_param(model, [&](const std::string& n, Tensor<double>& t) {
    params.emplace_back(n, &t);
  });
  std::map<std::string, Tensor<double>> analytic;
  {
    Tape<double> tape;
    for (auto& [n, t] : params) tape.watch(*t);
    tape.backward(loss(forward(model, x), g));
    for (auto& [n, t] : params) analytic.emplace(n, tape.grad(*t));
  }
  auto eval_loss = [&]() { return loss(forward(model, x), g).item(); };
  const double eps = 1e-5;
  double scale = 0, worst = 0;
  for (auto& [n, a] : analytic) {
    for (std::int64_t i = 0; i < a.numel(); ++i) {
      scale = std::max(scale, std::abs(a.data()[i]));
    }
  }
  expect(scale > 0, "end-to-end analytic gradient is identically zero");
  for (auto& [name, t] : params) {
    const auto& a = analytic.at(name);
    for (std::int64_t i = 0; i < t->numel(); ++i) {
      const double saved = t->data()[i];
      t->data()[i] = saved + eps;
      const double lp = eval_loss();
      t->data()[i] = saved - eps;
      const double lm = eval_loss();
      t->data()[i] = saved;
      const double fd = (lp - lm) / (2 * eps);
      worst = std::max(worst, std::abs(fd - a.data()[i]));
      scale = std::max(scale, std::abs(fd));
    }
  }
  expect(worst <= 1e-4 * scale, "end-to-end gradient rel error " +
                                    fmt(worst / scale) + " exceeds 1e-4");
}

// ----------------------------------------------------------- 4: conv oracle

// Independent nested-loop references, written against the op contracts only.
Tensor<double> conv_ref(const Tensor<double>& x, const Tensor<double>& w,
                        const Tensor<double>& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const std::int64_t ho = (xs.h + 2 * pad - ws.h) / stride + 1;
  const std::int64_t wo = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor<double> y({xs.n, ws.n, ho, wo});
  for (std::int64_t n = 0; n < xs.n; ++n)
    for (std::int64_t co = 0; co < ws.n; ++co)
      for (std::int64_t oy = 0; oy < ho; ++oy)
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          double acc = b.at(0, co, 0, 0);
          for (std::int64_t ci = 0; ci < xs.c; ++ci)
            for (std::int64_t ky = 0; ky < ws.h; ++ky)
              for (std::int64_t kx = 0; kx < ws.w; ++kx) {
                const std::int64_t iy = oy * stride + ky - pad;
                const std::int64_t ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= xs.h || ix < 0 || ix >= xs.w) continue;
                acc += x.at(n, ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          y.data()[((n * ws.n + co) * ho + oy) * wo + ox] = acc;
        }
  return y;
}

Tensor<double> conv_t_ref(const Tensor<double>& x, const Tensor<double>& w,
                          const Tensor<double>& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();  // w: [Cin, Cout, k, k]
  const std::int64_t ho = (xs.h - 1) * stride - 2 * pad + ws.h;
  const std::int64_t wo = (xs.w - 1) * stride - 2 * pad + ws.w;
  Tensor<double> y = Tensor<double>::zeros({xs.n, ws.c, ho, wo});
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t co = 0; co < ws.c; ++co)
      for (std::int64_t oy = 0; oy < ho; ++oy)
        for (std::int64_t ox = 0; ox < wo; ++ox)
          y.data()[((n * ws.c + co) * ho + oy) * wo + ox] = b.at(0, co, 0, 0);
    for (std::int64_t ci = 0; ci < xs.c; ++ci)
      for (std::int64_t iy = 0; iy < xs.h; ++iy)
        for (std::int64_t ix = 0; ix < xs.w; ++ix)
          for (std::int64_t co = 0; co < ws.c; ++co)
            for (std::int64_t ky = 0; ky < ws.h; ++ky)
              for (std::int64_t kx = 0; kx < ws.w; ++kx) {
                const std::int64_t oy = iy * stride + ky - pad;
                const std::int64_t ox = ix * stride + kx - pad;
                if (oy < 0 || oy >= ho || ox < 0 || ox >= wo) continue;
                y.data()[((n * ws.c + co) * ho + oy) * wo + ox] +=
                    x.at(n, ci, iy, ix) * w.at(ci, co, ky, kx);
              }
  }
  return y;
}

void criterion_conv_oracle() {
  Rng rng(7);
  for (int k : {1, 3, 4})
    for (int stride : {1, 2})
      for (int pad : {0, 1}) {
        const std::int64_t h = 7, wdt = 9;
        if (h + 2 * pad < k) continue;
        auto x = Tensor<double>::uniform({2, 3, h, wdt}, rng, -1, 1);
        auto w = Tensor<double>::uniform({4, 3, k, k}, rng, -1, 1);
        auto b = Tensor<double>::uniform({1, 4, 1, 1}, rng, -1, 1);
        auto got = conv2d(x, w, b, stride, pad);
        auto want = conv_ref(x, w, b, stride, pad);
        expect(got.shape() == want.shape(), "conv2d shape mismatch");
        double worst = 0;
        for (std::int64_t i = 0; i < got.numel(); ++i) {
          worst = std::max(worst, std::abs(got.data()[i] - want.data()[i]));
        }
        expect(worst <= 1e-9, "conv2d k=" + std::to_string(k) + " s=" +
                                  std::to_string(stride) + " p=" +
                                  std::to_string(pad) + " off by " + fmt(worst));

        auto wt = Tensor<double>::uniform({3, 4, k, k}, rng, -1, 1);
        auto bt = Tensor<double>::uniform({1, 4, 1, 1}, rng, -1, 1);
        if ((h - 1) * stride - 2 * pad + k <= 0) continue;
        auto gott = conv_transpose2d(x, wt, bt, stride, pad);
        auto wantt = conv_t_ref(x, wt, bt, stride, pad);
        expect(gott.shape() == wantt.shape(), "conv_transpose2d shape mismatch");
        worst = 0;
        for (std::int64_t i = 0; i < gott.numel(); ++i) {
          worst = std::max(worst, std::abs(gott.data()[i] - wantt.data()[i]));
        }
        expect(worst <= 1e-9, "conv_transpose2d k=" + std::to_string(k) +
                                  " s=" + std::to_string(stride) + " p=" +
                                  std::to_string(pad) + " off by " + fmt(worst));
      }

  // adjoint identity: <v, A x> == <x, A^T v>, with the tape supplying A^T v.
  // Backprop of L = 0.5*mean((y - t)^2) at an untracked target t = y + v
  // hands back A^T(-v)/N at the input, so A^T v = -N * grad.
  for (int stride : {1, 2}) {
    auto x = Tensor<double>::uniform({1, 3, 8, 8}, rng, -1, 1);
    auto w = Tensor<double>::uniform({5, 3, 3, 3}, rng, -1, 1);
    auto zero_b = Tensor<double>::zeros({1, 5, 1, 1});

    Tape<double> tape;
    tape.watch(x);
    auto y = conv2d(x, w, zero_b, stride, 1);
    auto v = Tensor<double>::uniform(y.shape(), rng, -1, 1);
    double lhs = 0;
    Tensor<double> t(y.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      lhs += v.data()[i] * y.data()[i];
      t.data()[i] = y.data()[i] + v.data()[i];
    }
    tape.backward(mse_half(y, t));
    const auto grad = tape.grad(x);
    const double n = double(y.numel());
    double rhs = 0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      rhs += -n * grad.data()[i] * x.data()[i];
    }
    const double denom = std::max({1.0, std::abs(lhs), std::abs(rhs)});
    expect(std::abs(lhs - rhs) / denom <= 1e-10,
           "adjoint identity off: <v,Ax>=" + fmt(lhs) + " <x,A^Tv>=" + fmt(rhs));
  }
}

// ------------------------------------------------------ 5: residual identity

void criterion_residual_identity() {
  Rng rng(19);
  auto x = Tensor<float>::uniform({1, 3, 32, 32}, rng, -0.5f, 0.5f);
  const CodecConfig cfg = tiny_config();

  const std::vector<std::string> patterns = {"1", "1-2", "1-2-4", "1-1-1",
                                             "1-4-16"};
  struct KindCase {
    ModelKind kind;
    int stack;
  };
  const std::vector<KindCase> kinds = {{ModelKind::dmphn, 1},
                                       {ModelKind::stack_dmphn, 2},
                                       {ModelKind::vmphn, 1},
                                       {ModelKind::stack_vmphn, 2}};
  for (const auto& kc : kinds) {
    for (const auto& pattern : patterns) {
      auto m = make_any_model<float>(kc.kind, pattern, kc.stack, 1, cfg, 3);
      for_each_param(m, [](const std::string& name, Tensor<float>& t) {
        if (name.find("dec") == std::string::npos) return;
        for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.0f;
      });
      auto y = model_forward(m, x);
      expect(bit_equal(y, x), std::string(kind_name(kc.kind)) + "(" + pattern +
                                  ") with zeroed decoders is not the identity");
    }
  }
  for (int scales : {1, 2, 3}) {
    auto m = make_any_model<float>(ModelKind::dmsn, "", 1, scales, cfg, 3);
    for_each_param(m, [](const std::string& name, Tensor<float>& t) {
      if (name.find("dec") == std::string::npos) return;
      for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = 0.0f;
    });
    auto y = model_forward(m, x);
    expect(bit_equal(y, x), "dmsn(" + std::to_string(scales) +
                                ") with zeroed decoders is not the identity");
  }
}

// -------------------------------------------------------------- 6: geometry

void criterion_geometry() {
  Rng rng(23);
  const auto spec = parse_pattern("1-2-4-8-16");
  // round trips on every supported grid, randomized shapes
  for (const auto& g : spec.grids) {
    for (int trial = 0; trial < 4; ++trial) {
      const std::int64_t h = g.rows * (1 + std::int64_t(rng.uniform_int(1, 6)));
      const std::int64_t w = g.cols * (1 + std::int64_t(rng.uniform_int(1, 6)));
      auto x = Tensor<float>::uniform({2, 3, h, w}, rng, -1, 1);
      auto patches = split_grid(x, g.rows, g.cols);
      expect(int(patches.size()) == g.rows * g.cols, "split count wrong");
      auto back = concat_grid(patches, g.rows, g.cols);
      expect(bit_equal(back, x), "split/concat round trip not exact for " +
                                     std::to_string(g.rows) + "x" +
                                     std::to_string(g.cols));
    }
  }

  // footprint law on randomized valid shapes: the sibling-merged S at level i
  // covers exactly one level-(i-1) patch, so S_2 is full-size
  const auto spec3 = parse_pattern("1-2-4");
  auto m = make_dmphn<float>(spec3, tiny_config(), 5);
  for (int trial = 0; trial < 3; ++trial) {
    const std::int64_t h = 16 * (1 + std::int64_t(rng.uniform_int(0, 2)));
    const std::int64_t w = 16 * (1 + std::int64_t(rng.uniform_int(0, 2)));
    auto x = Tensor<float>::uniform({1, 3, h, w}, rng, -0.5f, 0.5f);
    LevelTrace<float> tr;
    (void)forward(m, x, &tr);
    for (int i = 0; i < spec3.levels(); ++i) {
      const GridDims parent =
          i == 0 ? GridDims{1, 1} : spec3.grids[std::size_t(i - 1)];
      expect(std::int64_t(tr.S[std::size_t(i)].size()) ==
                 std::int64_t(parent.rows) * parent.cols,
             "level " + std::to_string(i + 1) + " has wrong S piece count");
      for (const auto& piece : tr.S[std::size_t(i)]) {
        expect(piece.shape() == Shape{1, 3, h / parent.rows, w / parent.cols},
               "S_" + std::to_string(i + 1) +
                   " piece does not tile a level-" + std::to_string(i) +
                   " patch");
      }
    }
    // S_2 merged over the level-1 grid is full-size by the law above
    expect(tr.S[1].size() == 1 && tr.S[1][0].shape() == Shape{1, 3, h, w},
           "S_2 is not full-size");
  }
}

// ----------------------------------------------------------- 7: FLOP parity

void criterion_flops() {
  auto m = make_any_model<float>(ModelKind::dmphn, "1-2-4-8", 1, 1,
                                 CodecConfig{}, 0);
  const auto per_level = level_flops(m, 720, 1280);
  expect(per_level.size() == 4, "expected four levels");
  const auto [lo, hi] =
      std::minmax_element(per_level.begin(), per_level.end());
  expect(double(*hi - *lo) <= 0.01 * double(*hi),
         "per-level FLOPs differ by more than 1%: " + std::to_string(*lo) +
             " vs " + std::to_string(*hi));

  // measured ordering: each added level adds work
  const CodecConfig desk = CodecConfig::desk();
  Rng rng(3);
  auto x = Tensor<float>::uniform({1, 3, 128, 128}, rng, -0.5f, 0.5f);
  std::vector<double> times;
  for (const char* pattern : {"1", "1-2", "1-2-4", "1-2-4-8"}) {
    auto model = make_any_model<float>(ModelKind::dmphn, pattern, 1, 1, desk, 0);
    (void)model_forward(model, x);  // warm caches
    const auto t0 = std::chrono::steady_clock::now();
    (void)model_forward(model, x);
    (void)model_forward(model, x);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    expect(times[i] > times[i - 1],
           "forward time ordering violated at pattern index " +
               std::to_string(i) + " (" + fmt(times[i - 1]) + "s -> " +
               fmt(times[i]) + "s)");
  }
}

// ---------------------------------------------------------- 8: desk training

void criterion_desk_training() {
  const fs::path root = fresh_dir("train");
  DatasetOptions opt;
  opt.count = 128;
  opt.height = 64;
  opt.width = 64;
  opt.seed = 0;
  gen_dataset(root.string(), opt);

  auto model = make_any_model<float>(ModelKind::dmphn, "1-2-4", 1, 1,
                                     CodecConfig::desk(), 0);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.crop = 64;
  cfg.lr0 = kDeskLr;
  cfg.epochs = 30;
  cfg.seed = 0;
  cfg.max_steps = 200;
  cfg.out_path = (root / "model.ckpt").string();
  Trainer<float> trainer(&model, cfg);
  const auto data = load_pairs<float>(root.string(), "train");
  const TrainReport rep = trainer.run(data);
  expect(rep.steps == 200, "expected 200 steps, ran " +
                               std::to_string(rep.steps));

  // smoothed loss: 25-step windows at both ends
  auto window_mean = [&](std::size_t from, std::size_t to) {
    double s = 0;
    for (std::size_t i = from; i < to; ++i) s += rep.losses[i];
    return s / double(to - from);
  };
  const double initial = window_mean(0, 25);
  const double final_ = window_mean(175, 200);
  expect(final_ < 0.3 * initial,
         "smoothed loss only reached " + fmt(final_) + " from " + fmt(initial) +
             " (need < 0.3x)");

  // held-out gain: deblurred PSNR beats blurry PSNR by at least 0.5 dB
  const auto test = load_pairs<float>(root.string(), "test");
  expect(!test.empty(), "no held-out pairs");
  double pb = 0, pd = 0;
  for (const auto& pair : test) {
    Tensor<float> x(pair.blurry.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      x.data()[i] = pair.blurry.data()[i] - 0.5f;
    }
    Tensor<float> y = model_forward(model, x);
    Tensor<float> restored(y.shape());
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      restored.data()[i] =
          std::min(1.0f, std::max(0.0f, y.data()[i] + 0.5f));
    }
    pb += psnr(pair.blurry, pair.sharp);
    pd += psnr(restored, pair.sharp);
  }
  pb /= double(test.size());
  pd /= double(test.size());
  expect(pd - pb >= 0.5, "held-out PSNR gain " + fmt(pd - pb) +
                             " dB (blurry " + fmt(pb) + ", deblurred " +
                             fmt(pd) + "); need >= 0.5 dB");
}

// ------------------------------------------- 9: determinism and persistence

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_determinism() {
  const fs::path root = fresh_dir("determ");
  DatasetOptions opt;
  opt.count = 8;
  opt.height = 32;
  opt.width = 32;
  opt.seed = 11;
  gen_dataset(root.string(), opt);
  const auto data = load_pairs<float>(root.string(), "train");

  auto run_fresh = [&](const fs::path& out, int epochs) {
    auto m = make_any_model<float>(ModelKind::dmphn, "1-2", 1, 1,
                                   CodecConfig::desk(), 7);
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.crop = 16;
    cfg.lr0 = 1e-4;
    cfg.epochs = epochs;
    cfg.seed = 5;
    cfg.out_path = out.string();
    Trainer<float> t(&m, cfg);
    t.run(data);
  };

  // identical seeds, identical bytes
  run_fresh(root / "a.ckpt", 2);
  run_fresh(root / "b.ckpt", 2);
  const std::string a = file_bytes(root / "a.ckpt");
  expect(!a.empty() && a == file_bytes(root / "b.ckpt"),
         "equal-seed runs produced different checkpoints");

  // round trip is byte-exact
  const Checkpoint parsed = parse_checkpoint(
      std::vector<std::uint8_t>(a.begin(), a.end()));
  const auto again = serialize_checkpoint(parsed);
  expect(a.size() == again.size() &&
             std::memcmp(a.data(), again.data(), a.size()) == 0,
         "checkpoint parse/serialize round trip changed bytes");

  // resume reproduces the uninterrupted run byte for byte
  run_fresh(root / "full.ckpt", 4);
  run_fresh(root / "resumed.ckpt", 2);
  {
    const Checkpoint mid = load_checkpoint((root / "resumed.ckpt").string());
    auto m = model_from_checkpoint<float>(mid);
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.crop = 16;
    cfg.lr0 = 1e-4;
    cfg.epochs = 4;
    cfg.seed = 5;
    cfg.out_path = (root / "resumed.ckpt").string();
    Trainer<float> t(&m, cfg, mid);
    t.run(data);
  }
  expect(file_bytes(root / "full.ckpt") == file_bytes(root / "resumed.ckpt"),
         "resumed training does not reproduce the uninterrupted checkpoint");
}

// --------------------------------------------------------------- 10: metrics

void criterion_metrics() {
  Rng rng(31);
  auto a = Tensor<float>::uniform({1, 3, 32, 32}, rng, 0, 1);
  expect(psnr(a, a) == 100.0, "self PSNR is not capped at 100 dB");
  expect(std::abs(ssim(a, a) - 1.0) <= 1e-12, "self SSIM is not 1");

  // exact formula cases against closed forms
  auto z = Tensor<float>::zeros({1, 1, 8, 8});
  Tensor<float> half(z.shape());
  for (std::int64_t i = 0; i < half.numel(); ++i) half.data()[i] = 0.5f;
  expect(std::abs(psnr(z, half) - 10.0 * std::log10(4.0)) <= 1e-9,
         "psnr(0, 0.5) != 10*log10(4)");
  Tensor<float> tenth(z.shape());
  for (std::int64_t i = 0; i < tenth.numel(); ++i) tenth.data()[i] = 0.1f;
  expect(std::abs(psnr(z, tenth) - 20.0) <= 1e-9, "psnr(0, 0.1) != 20 dB");

  // ssim against an independent direct-formula evaluation
  const auto win = gaussian_window();
  const int k = int(win.size());
  auto direct = [&](const Tensor<float>& p, const Tensor<float>& q) {
    const auto s = p.shape();
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    std::int64_t planes = 0;
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t c = 0; c < s.c; ++c) {
        double acc = 0;
        std::int64_t windows = 0;
        for (std::int64_t y = 0; y + k <= s.h; ++y)
          for (std::int64_t x = 0; x + k <= s.w; ++x) {
            double mu_a = 0, mu_b = 0, va = 0, vb = 0, cov = 0;
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j) {
                const double w = win[size_t(i)] * win[size_t(j)];
                mu_a += w * double(p.at(n, c, y + i, x + j));
                mu_b += w * double(q.at(n, c, y + i, x + j));
              }
            for (int i = 0; i < k; ++i)
              for (int j = 0; j < k; ++j) {
                const double w = win[size_t(i)] * win[size_t(j)];
                const double da = double(p.at(n, c, y + i, x + j)) - mu_a;
                const double db = double(q.at(n, c, y + i, x + j)) - mu_b;
                va += w * da * da;
                vb += w * db * db;
                cov += w * da * db;
              }
            acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
            ++windows;
          }
        total += acc / double(windows);
        ++planes;
      }
    return total / double(planes);
  };
  for (int trial = 0; trial < 3; ++trial) {
    auto p = Tensor<float>::uniform({1, 3, 24, 24}, rng, 0, 1);
    auto q = Tensor<float>::uniform({1, 3, 24, 24}, rng, 0, 1);
    const double diff = std::abs(ssim(p, q) - direct(p, q));
    expect(diff <= 1e-6, "ssim differs from the direct formula by " + fmt(diff));
  }
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* what;
    std::function<void()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "parameter budgets match the published sizes", criterion_sizes},
      {2, "stacked and shared variants scale exactly", criterion_stacking},
      {3, "autodiff matches finite differences", criterion_autodiff},
      {4, "conv ops match the nested-loop oracle", criterion_conv_oracle},
      {5, "zeroed decoders give the identity map", criterion_residual_identity},
      {6, "patch geometry round-trips and footprints", criterion_geometry},
      {7, "per-level FLOPs are flat; runtime ordering holds", criterion_flops},
      {8, "200 desk steps learn and beat the blurry input", criterion_desk_training},
      {9, "determinism, round trips, bit-exact resume", criterion_determinism},
      {10, "metric identities and formula cases", criterion_metrics},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (ok) {
      std::printf("PASS %2d: %s (%.1fs)\n", c.id, c.what, secs);
    } else {
      ++failures;
      std::printf("FAIL %2d: %s (%.1fs)\n         %s\n", c.id, c.what, secs,
                  detail.c_str());
    }
    std::fflush(stdout);
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures;
}
