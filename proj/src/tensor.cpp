#include "dmphn/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>

#include "dmphn/parallel.hpp"

namespace dmphn {

namespace {
std::atomic<bool> g_finite_checks{false};
std::atomic<std::uint64_t> g_tape_epoch{0};

template <typename T>
thread_local Tape<T>* t_active_tape = nullptr;
}  // namespace

void set_finite_checks(bool on) { g_finite_checks.store(on); }
bool finite_checks() { return g_finite_checks.load(); }

template <typename T>
static void check_finite_impl(const T* p, std::int64_t n, const char* op) {
  if (!g_finite_checks.load()) return;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw std::runtime_error(std::string("non-finite value produced by ") +
                               op);
    }
  }
}

void check_finite_or_throw(const float* p, std::int64_t n, const char* op) {
  check_finite_impl(p, n, op);
}
void check_finite_or_throw(const double* p, std::int64_t n, const char* op) {
  check_finite_impl(p, n, op);
}

std::string Shape::str() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "[%lld, %lld, %lld, %lld]",
                static_cast<long long>(n), static_cast<long long>(c),
                static_cast<long long>(h), static_cast<long long>(w));
  return buf;
}

// ---- Tensor ----

template <typename T>
const Shape& Tensor<T>::check_shape(const Shape& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
    throw std::invalid_argument("tensor shape must be positive, got " + s.str());
  }
  return s;
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values)
    : shape_(check_shape(s)),
      data_(std::make_shared<std::vector<T>>(std::move(values))) {
  if (static_cast<std::int64_t>(data_->size()) != shape_.numel()) {
    throw std::invalid_argument("value count does not match shape " +
                                shape_.str());
  }
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape s, T value) {
  Tensor t(s);
  for (auto& v : *t.data_) v = value;
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::uniform(Shape s, Rng& rng, T lo, T hi) {
  Tensor t(s);
  for (auto& v : *t.data_) {
    v = static_cast<T>(rng.uniform(static_cast<double>(lo),
                                   static_cast<double>(hi)));
  }
  return t;
}

// ---- Tape ----

template <typename T>
Tape<T>::Tape() : epoch_(++g_tape_epoch) {
  prev_active_ = t_active_tape<T>;
  t_active_tape<T> = this;
}

template <typename T>
Tape<T>::~Tape() {
  t_active_tape<T> = prev_active_;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return t_active_tape<T>;
}

template <typename T>
void Tape<T>::watch(Tensor<T>& t) {
  if (tracks(t)) return;
  t.bind(record(t.shape(), BackFn{}), epoch_);
}

template <typename T>
int Tape<T>::record(Shape out_shape, BackFn backfn) {
  nodes_.push_back(Node{out_shape, std::move(backfn)});
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
void Tape<T>::accumulate(int node, const std::vector<T>& g) {
  auto& slot = grads_[static_cast<std::size_t>(node)];
  if (slot.empty()) {
    slot = g;
    return;
  }
  for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
}

template <typename T>
const std::vector<T>* Tape<T>::grad_at(int node) const {
  const auto& slot = grads_[static_cast<std::size_t>(node)];
  return slot.empty() ? nullptr : &slot;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) {
    throw std::runtime_error("backward() called twice on the same tape");
  }
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss, got " +
                                loss.shape().str());
  }
  if (!tracks(loss)) {
    throw std::invalid_argument("backward(): loss is not recorded on this tape");
  }
  consumed_ = true;
  grads_[static_cast<std::size_t>(loss.node())] = {T(1)};
  for (int i = loss.node(); i >= 0; --i) {
    const auto& node = nodes_[static_cast<std::size_t>(i)];
    const auto& g = grads_[static_cast<std::size_t>(i)];
    if (!node.backfn || g.empty()) continue;
    node.backfn(*this, g);
  }
}

template <typename T>
Tensor<T> Tape<T>::grad(const Tensor<T>& t) const {
  if (!tracks(t)) {
    throw std::invalid_argument("grad(): tensor is not recorded on this tape");
  }
  const auto* g = grad_at(t.node());
  if (!g) return Tensor<T>::zeros(t.shape());
  return Tensor<T>(t.shape(), *g);
}

// ---- elementwise ops ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument("add: shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  }
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  check_finite_or_throw(po, n, "add");

  if (auto* tp = Tape<T>::active()) {
    const bool ta = tp->tracks(a), tb = tp->tracks(b);
    if (ta || tb) {
      const int na = ta ? a.node() : -1;
      const int nb = tb ? b.node() : -1;
      out.bind(tp->record(out.shape(),
                          [na, nb](Tape<T>& t, const std::vector<T>& gy) {
                            if (na >= 0) t.accumulate(na, gy);
                            if (nb >= 0) t.accumulate(nb, gy);
                          }),
               tp->epoch());
    }
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);

  if (auto* tp = Tape<T>::active(); tp && tp->tracks(x)) {
    const int nx = x.node();
    auto xdata = x.storage();
    out.bind(tp->record(out.shape(),
                        [nx, xdata](Tape<T>& t, const std::vector<T>& gy) {
                          std::vector<T> gx(gy.size());
                          const auto& xv = *xdata;
                          for (std::size_t i = 0; i < gy.size(); ++i) {
                            gx[i] = xv[i] > T(0) ? gy[i] : T(0);
                          }
                          t.accumulate(nx, gx);
                        }),
             tp->epoch());
  }
  return out;
}

// ---- grid split / concat ----

template <typename T>
std::vector<Tensor<T>> split_grid(const Tensor<T>& x, int rows, int cols) {
  const Shape s = x.shape();
  if (rows <= 0 || cols <= 0 || s.h % rows != 0 || s.w % cols != 0) {
    throw std::invalid_argument("split_grid: " + s.str() +
                                " not divisible into " + std::to_string(rows) +
                                "x" + std::to_string(cols) + " grid");
  }
  const std::int64_t ph = s.h / rows, pw = s.w / cols;
  std::vector<Tensor<T>> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  auto* tp = Tape<T>::active();
  const bool track = tp && tp->tracks(x);

  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < cols; ++q) {
      Tensor<T> patch(Shape{s.n, s.c, ph, pw});
      T* pp = patch.data();
      const T* px = x.data();
      for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
          for (std::int64_t h = 0; h < ph; ++h) {
            const T* src = px + ((n * s.c + c) * s.h + r * ph + h) * s.w + q * pw;
            T* dst = pp + ((n * s.c + c) * ph + h) * pw;
            for (std::int64_t w = 0; w < pw; ++w) dst[w] = src[w];
          }
        }
      }
      if (track) {
        const int nx = x.node();
        const Shape xs = s;
        const int rr = r, qq = q;
        patch.bind(
            tp->record(patch.shape(),
                       [nx, xs, ph, pw, rr, qq](Tape<T>& t,
                                                const std::vector<T>& gy) {
                         std::vector<T> gx(
                             static_cast<std::size_t>(xs.numel()), T(0));
                         for (std::int64_t n = 0; n < xs.n; ++n)
                           for (std::int64_t c = 0; c < xs.c; ++c)
                             for (std::int64_t h = 0; h < ph; ++h) {
                               const T* src =
                                   gy.data() + ((n * xs.c + c) * ph + h) * pw;
                               T* dst = gx.data() +
                                        ((n * xs.c + c) * xs.h + rr * ph + h) *
                                            xs.w +
                                        qq * pw;
                               for (std::int64_t w = 0; w < pw; ++w)
                                 dst[w] += src[w];
                             }
                         t.accumulate(nx, gx);
                       }),
            tp->epoch());
      }
      out.push_back(std::move(patch));
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_grid(const std::vector<Tensor<T>>& patches, int rows,
                      int cols) {
  if (rows <= 0 || cols <= 0 ||
      patches.size() != static_cast<std::size_t>(rows) * cols) {
    throw std::invalid_argument("concat_grid: expected " +
                                std::to_string(rows * cols) + " patches, got " +
                                std::to_string(patches.size()));
  }
  const Shape ps = patches[0].shape();
  for (const auto& p : patches) {
    if (!(p.shape() == ps)) {
      throw std::invalid_argument("concat_grid: patch shape mismatch " +
                                  p.shape().str() + " vs " + ps.str());
    }
  }
  const Shape s{ps.n, ps.c, ps.h * rows, ps.w * cols};
  Tensor<T> out(s);
  T* po = out.data();
  for (int r = 0; r < rows; ++r) {
    for (int q = 0; q < cols; ++q) {
      const T* pp = patches[static_cast<std::size_t>(r) * cols + q].data();
      for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
          for (std::int64_t h = 0; h < ps.h; ++h) {
            const T* src = pp + ((n * ps.c + c) * ps.h + h) * ps.w;
            T* dst =
                po + ((n * s.c + c) * s.h + r * ps.h + h) * s.w + q * ps.w;
            for (std::int64_t w = 0; w < ps.w; ++w) dst[w] = src[w];
          }
        }
      }
    }
  }

  if (auto* tp = Tape<T>::active()) {
    std::vector<int> ids(patches.size(), -1);
    bool any = false;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      if (tp->tracks(patches[i])) {
        ids[i] = patches[i].node();
        any = true;
      }
    }
    if (any) {
      out.bind(
          tp->record(s,
                     [ids, ps, s, cols](Tape<T>& t, const std::vector<T>& gy) {
                       for (std::size_t i = 0; i < ids.size(); ++i) {
                         if (ids[i] < 0) continue;
                         const int r = static_cast<int>(i) / cols;
                         const int q = static_cast<int>(i) % cols;
                         std::vector<T> gp(
                             static_cast<std::size_t>(ps.numel()));
                         for (std::int64_t n = 0; n < s.n; ++n)
                           for (std::int64_t c = 0; c < s.c; ++c)
                             for (std::int64_t h = 0; h < ps.h; ++h) {
                               const T* src = gy.data() +
                                              ((n * s.c + c) * s.h + r * ps.h +
                                               h) * s.w +
                                              q * ps.w;
                               T* dst =
                                   gp.data() + ((n * ps.c + c) * ps.h + h) * ps.w;
                               for (std::int64_t w = 0; w < ps.w; ++w)
                                 dst[w] = src[w];
                             }
                         t.accumulate(ids[i], gp);
                       }
                     }),
          tp->epoch());
    }
  }
  return out;
}

// ---- loss ----

template <typename T>
Tensor<T> mse_half(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument("mse_half: shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  }
  const T* pa = a.data();
  const T* pb = b.data();
  const std::int64_t n = a.numel();
  double acc = 0.0;  // sequential double accumulation, deterministic
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(0.5 * acc / n));
  check_finite_or_throw(out.data(), 1, "mse_half");

  if (auto* tp = Tape<T>::active()) {
    const bool ta = tp->tracks(a), tb = tp->tracks(b);
    if (ta || tb) {
      const int na = ta ? a.node() : -1;
      const int nb = tb ? b.node() : -1;
      auto adata = a.storage();
      auto bdata = b.storage();
      out.bind(tp->record(out.shape(),
                          [na, nb, adata, bdata](Tape<T>& t,
                                                 const std::vector<T>& gy) {
                            const auto& av = *adata;
                            const auto& bv = *bdata;
                            const T scale =
                                gy[0] / static_cast<T>(av.size());
                            std::vector<T> g(av.size());
                            for (std::size_t i = 0; i < av.size(); ++i) {
                              g[i] = scale * (av[i] - bv[i]);
                            }
                            if (na >= 0) t.accumulate(na, g);
                            if (nb >= 0) {
                              for (auto& v : g) v = -v;
                              t.accumulate(nb, g);
                            }
                          }),
               tp->epoch());
    }
  }
  return out;
}

// ---- bilinear resize by 2 ----

// align_corners=false. Down by 2 reduces each 2x2 block to its average; up by
// 2 uses source coordinates (d + 0.5)/2 - 0.5, i.e. weights 0.75/0.25 with
// edge clamping.
template <typename T>
Tensor<T> downsample2x(const Tensor<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("downsample2x: H and W must be even, got " +
                                s.str());
  }
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<T> out(os);
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* xp = px + nc * s.h * s.w;
    T* op = po + nc * os.h * os.w;
    for (std::int64_t h = 0; h < os.h; ++h) {
      for (std::int64_t w = 0; w < os.w; ++w) {
        const T* r0 = xp + (2 * h) * s.w + 2 * w;
        const T* r1 = r0 + s.w;
        op[h * os.w + w] =
            static_cast<T>(0.25) * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
    }
  }

  if (auto* tp = Tape<T>::active(); tp && tp->tracks(x)) {
    const int nx = x.node();
    out.bind(tp->record(os,
                        [nx, s, os](Tape<T>& t, const std::vector<T>& gy) {
                          std::vector<T> gx(
                              static_cast<std::size_t>(s.numel()));
                          for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
                            const T* gp = gy.data() + nc * os.h * os.w;
                            T* xp = gx.data() + nc * s.h * s.w;
                            for (std::int64_t h = 0; h < os.h; ++h)
                              for (std::int64_t w = 0; w < os.w; ++w) {
                                const T g =
                                    static_cast<T>(0.25) * gp[h * os.w + w];
                                T* r0 = xp + (2 * h) * s.w + 2 * w;
                                T* r1 = r0 + s.w;
                                r0[0] += g;
                                r0[1] += g;
                                r1[0] += g;
                                r1[1] += g;
                              }
                          }
                          t.accumulate(nx, gx);
                        }),
             tp->epoch());
  }
  return out;
}

namespace {
// For output index d (scale 2 up), the source coordinate is (d+0.5)/2 - 0.5;
// clamped taps i0=floor, i1=i0+1 with weight w1 = frac.
struct UpTap {
  std::int64_t i0, i1;
  double w1;
};
inline UpTap up_tap(std::int64_t d, std::int64_t src_len) {
  const double sc = (static_cast<double>(d) + 0.5) / 2.0 - 0.5;
  double f = std::floor(sc);
  double w1 = sc - f;
  std::int64_t i0 = static_cast<std::int64_t>(f);
  std::int64_t i1 = i0 + 1;
  if (i0 < 0) i0 = 0;
  if (i1 < 0) i1 = 0;
  if (i0 >= src_len) i0 = src_len - 1;
  if (i1 >= src_len) i1 = src_len - 1;
  return {i0, i1, w1};
}
}  // namespace

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  Tensor<T> out(os);
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* xp = px + nc * s.h * s.w;
    T* op = po + nc * os.h * os.w;
    for (std::int64_t h = 0; h < os.h; ++h) {
      const UpTap th = up_tap(h, s.h);
      for (std::int64_t w = 0; w < os.w; ++w) {
        const UpTap tw = up_tap(w, s.w);
        const double v00 = xp[th.i0 * s.w + tw.i0];
        const double v01 = xp[th.i0 * s.w + tw.i1];
        const double v10 = xp[th.i1 * s.w + tw.i0];
        const double v11 = xp[th.i1 * s.w + tw.i1];
        const double top = v00 * (1.0 - tw.w1) + v01 * tw.w1;
        const double bot = v10 * (1.0 - tw.w1) + v11 * tw.w1;
        op[h * os.w + w] = static_cast<T>(top * (1.0 - th.w1) + bot * th.w1);
      }
    }
  }

  if (auto* tp = Tape<T>::active(); tp && tp->tracks(x)) {
    const int nx = x.node();
    out.bind(
        tp->record(os,
                   [nx, s, os](Tape<T>& t, const std::vector<T>& gy) {
                     std::vector<T> gx(static_cast<std::size_t>(s.numel()),
                                       T(0));
                     for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
                       const T* gp = gy.data() + nc * os.h * os.w;
                       T* xp = gx.data() + nc * s.h * s.w;
                       for (std::int64_t h = 0; h < os.h; ++h) {
                         const UpTap th = up_tap(h, s.h);
                         for (std::int64_t w = 0; w < os.w; ++w) {
                           const UpTap tw = up_tap(w, s.w);
                           const double g = gp[h * os.w + w];
                           xp[th.i0 * s.w + tw.i0] += static_cast<T>(
                               g * (1.0 - th.w1) * (1.0 - tw.w1));
                           xp[th.i0 * s.w + tw.i1] +=
                               static_cast<T>(g * (1.0 - th.w1) * tw.w1);
                           xp[th.i1 * s.w + tw.i0] +=
                               static_cast<T>(g * th.w1 * (1.0 - tw.w1));
                           xp[th.i1 * s.w + tw.i1] +=
                               static_cast<T>(g * th.w1 * tw.w1);
                         }
                       }
                     }
                     t.accumulate(nx, gx);
                   }),
        tp->epoch());
  }
  return out;
}

// ---- gradient checking helpers ----

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f,
                           const Tensor<T>& x, T eps) {
  Tensor<T> g(x.shape());
  Tensor<T> probe(x.shape(), x.vec());
  T* pp = probe.data();
  T* pg = g.data();
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) {
    const T saved = pp[i];
    pp[i] = saved + eps;
    const T fp = f(probe);
    pp[i] = saved - eps;
    const T fm = f(probe);
    pp[i] = saved;
    pg[i] = (fp - fm) / (T(2) * eps);
  }
  return g;
}

template <typename T>
double rel_error(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument("rel_error: shape mismatch");
  }
  double max_diff = 0.0, max_a = 0.0, max_b = 0.0;
  const T* pa = a.data();
  const T* pb = b.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    max_diff = std::max(max_diff, std::abs(static_cast<double>(pa[i]) -
                                           static_cast<double>(pb[i])));
    max_a = std::max(max_a, std::abs(static_cast<double>(pa[i])));
    max_b = std::max(max_b, std::abs(static_cast<double>(pb[i])));
  }
  return max_diff / (std::max(max_a, max_b) + 1e-12);
}

// ---- explicit instantiations ----

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

#define DMPHN_INSTANTIATE(T)                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> relu(const Tensor<T>&);                                  \
  template std::vector<Tensor<T>> split_grid(const Tensor<T>&, int, int);     \
  template Tensor<T> concat_grid(const std::vector<Tensor<T>>&, int, int);    \
  template Tensor<T> mse_half(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> upsample2x(const Tensor<T>&);                            \
  template Tensor<T> downsample2x(const Tensor<T>&);                          \
  template Tensor<T> finite_diff_grad(                                        \
      const std::function<T(const Tensor<T>&)>&, const Tensor<T>&, T);        \
  template double rel_error(const Tensor<T>&, const Tensor<T>&);

DMPHN_INSTANTIATE(float)
DMPHN_INSTANTIATE(double)
#undef DMPHN_INSTANTIATE

}  // namespace dmphn
