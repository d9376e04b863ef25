#include <algorithm>
#include <cstring>
#include <vector>

#include "dmphn/parallel.hpp"
#include "dmphn/tensor.hpp"

namespace dmphn {

namespace {

void check_conv_args(const char* op, const Shape& x, const Shape& w,
                     const Shape& b, int stride, int pad, bool transposed) {
  if (w.h != w.w || (w.h != 1 && w.h != 3 && w.h != 4 && w.h != 5)) {
    throw std::invalid_argument(std::string(op) +
                                ": kernel must be square with size 1/3/4/5, "
                                "got " + w.str());
  }
  if (stride != 1 && stride != 2) {
    throw std::invalid_argument(std::string(op) + ": stride must be 1 or 2");
  }
  if (pad < 0) {
    throw std::invalid_argument(std::string(op) + ": pad must be >= 0");
  }
  const std::int64_t in_ch = transposed ? w.n : w.c;
  const std::int64_t out_ch = transposed ? w.c : w.n;
  if (x.c != in_ch) {
    throw std::invalid_argument(std::string(op) + ": input channels " +
                                std::to_string(x.c) + " do not match weight " +
                                w.str());
  }
  if (!(b == Shape{1, out_ch, 1, 1})) {
    throw std::invalid_argument(std::string(op) + ": bias shape " + b.str() +
                                " must be [1, " + std::to_string(out_ch) +
                                ", 1, 1]");
  }
}

// C[m x n] += A[m x k] * B[k x n], rows of B contiguous. Deterministic: each
// C element accumulates over p ascending.
template <typename T>
void gemm_accum(const T* A, const T* B, T* C, std::int64_t m, std::int64_t k,
                std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = A + i * k;
    T* crow = C + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T a = arow[p];
      if (a == T(0)) continue;
      const T* brow = B + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

// col[K x P] for output rows [oh0, oh1) of one batch item; K = C*kh*kw,
// P = (oh1-oh0)*Wo. Zero-padded out-of-range taps.
template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W,
            std::int64_t kh, std::int64_t kw, std::int64_t stride,
            std::int64_t pad, std::int64_t Wo, std::int64_t oh0,
            std::int64_t oh1, T* col) {
  const std::int64_t P = (oh1 - oh0) * Wo;
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < C; ++c) {
    const T* xc = x + c * H * W;
    for (std::int64_t ki = 0; ki < kh; ++ki) {
      for (std::int64_t kj = 0; kj < kw; ++kj, ++row) {
        T* dst = col + row * P;
        for (std::int64_t oh = oh0; oh < oh1; ++oh) {
          const std::int64_t ih = oh * stride - pad + ki;
          T* d = dst + (oh - oh0) * Wo;
          if (ih < 0 || ih >= H) {
            std::memset(d, 0, sizeof(T) * static_cast<std::size_t>(Wo));
            continue;
          }
          const T* xrow = xc + ih * W;
          for (std::int64_t ow = 0; ow < Wo; ++ow) {
            const std::int64_t iw = ow * stride - pad + kj;
            d[ow] = (iw < 0 || iw >= W) ? T(0) : xrow[iw];
          }
        }
      }
    }
  }
}

// rows[P x K]: row per output pixel, K = C*kh*kw. Transpose layout of im2col,
// used on the gradient side where the patch index is the reduction axis.
template <typename T>
void im2row(const T* x, std::int64_t C, std::int64_t H, std::int64_t W,
            std::int64_t kh, std::int64_t kw, std::int64_t stride,
            std::int64_t pad, std::int64_t Ho, std::int64_t Wo, T* rows) {
  const std::int64_t K = C * kh * kw;
  for (std::int64_t oh = 0; oh < Ho; ++oh) {
    for (std::int64_t ow = 0; ow < Wo; ++ow) {
      T* dst = rows + (oh * Wo + ow) * K;
      std::int64_t col = 0;
      for (std::int64_t c = 0; c < C; ++c) {
        const T* xc = x + c * H * W;
        for (std::int64_t ki = 0; ki < kh; ++ki) {
          const std::int64_t ih = oh * stride - pad + ki;
          for (std::int64_t kj = 0; kj < kw; ++kj, ++col) {
            const std::int64_t iw = ow * stride - pad + kj;
            dst[col] = (ih < 0 || ih >= H || iw < 0 || iw >= W)
                           ? T(0)
                           : xc[ih * W + iw];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_raw(const T* x, const Shape& xs, const T* w, const Shape& ws,
                const T* bias, T* out, const Shape& os, int stride, int pad) {
  const std::int64_t K = ws.c * ws.h * ws.w;
  const std::int64_t Wo = os.w;
  // Strip the output rows so the column buffer stays small.
  const std::int64_t cap = std::int64_t(1) << 20;
  const std::int64_t rows_per_strip =
      std::max<std::int64_t>(1, cap / std::max<std::int64_t>(1, K * Wo));
  const std::int64_t strips = (os.h + rows_per_strip - 1) / rows_per_strip;

  parallel_for(xs.n * strips, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<T> col;
    for (std::int64_t job = lo; job < hi; ++job) {
      const std::int64_t n = job / strips;
      const std::int64_t oh0 = (job % strips) * rows_per_strip;
      const std::int64_t oh1 = std::min<std::int64_t>(oh0 + rows_per_strip, os.h);
      const std::int64_t P = (oh1 - oh0) * Wo;
      col.resize(static_cast<std::size_t>(K * P));
      im2col(x + n * xs.c * xs.h * xs.w, xs.c, xs.h, xs.w, ws.h, ws.w, stride,
             pad, Wo, oh0, oh1, col.data());
      T* o = out + (n * os.c * os.h + oh0) * os.w;
      for (std::int64_t co = 0; co < os.c; ++co) {
        T* orow = o + co * os.h * os.w;
        const T bv = bias ? bias[co] : T(0);
        for (std::int64_t j = 0; j < P; ++j) orow[j] = bv;
      }
      // out rows for this strip are strided by full-plane Ho*Wo per channel;
      // gemm wants contiguous [Cout x P], so run it per channel row.
      for (std::int64_t co = 0; co < os.c; ++co) {
        gemm_accum(w + co * K, col.data(), o + co * os.h * os.w, 1, K, P);
      }
    }
  });
}

// Transposed conv as a gather over the input: out[oh] pulls from in rows
// ih = (oh + pad - ki) / stride when divisible and in range.
template <typename T>
void conv_transpose2d_raw(const T* x, const Shape& xs, const T* w,
                          const Shape& ws, const T* bias, T* out,
                          const Shape& os, int stride, int pad) {
  const std::int64_t kh = ws.h, kw = ws.w;
  const std::int64_t Ci = ws.n, Co = ws.c;
  parallel_for(os.n * os.h, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t job = lo; job < hi; ++job) {
      const std::int64_t n = job / os.h;
      const std::int64_t oh = job % os.h;
      const T* xn = x + n * xs.c * xs.h * xs.w;
      T* orow = out + ((n * os.c) * os.h + oh) * os.w;
      for (std::int64_t co = 0; co < Co; ++co) {
        T* od = orow + co * os.h * os.w;
        const T bv = bias ? bias[co] : T(0);
        for (std::int64_t ow = 0; ow < os.w; ++ow) od[ow] = bv;
      }
      for (std::int64_t ki = 0; ki < kh; ++ki) {
        const std::int64_t ht = oh + pad - ki;
        if (ht < 0 || ht % stride != 0) continue;
        const std::int64_t ih = ht / stride;
        if (ih >= xs.h) continue;
        for (std::int64_t ci = 0; ci < Ci; ++ci) {
          const T* xrow = xn + (ci * xs.h + ih) * xs.w;
          const T* wrow = w + ((ci * Co) * kh + ki) * kw;
          for (std::int64_t co = 0; co < Co; ++co) {
            T* od = orow + co * os.h * os.w;
            const T* wk = wrow + co * kh * kw;
            for (std::int64_t kj = 0; kj < kw; ++kj) {
              // cols receiving tap kj: ow = iw*stride - pad + kj, iw ascending
              std::int64_t ow0 = kj - pad;
              std::int64_t iw0 = 0;
              if (ow0 < 0) {
                const std::int64_t steps = (-ow0 + stride - 1) / stride;
                ow0 += steps * stride;
                iw0 += steps;
              }
              const T wv = wk[kj];
              if (wv == T(0)) continue;
              for (std::int64_t ow = ow0, iw = iw0;
                   ow < os.w && iw < xs.w; ow += stride, ++iw) {
                od[ow] += wv * xrow[iw];
              }
            }
          }
        }
      }
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride, int pad) {
  check_conv_args("conv2d", x.shape(), w.shape(), b.shape(), stride, pad,
                  false);
  const Shape xs = x.shape(), ws = w.shape();
  const std::int64_t Ho = (xs.h + 2 * pad - ws.h) / stride + 1;
  const std::int64_t Wo = (xs.w + 2 * pad - ws.w) / stride + 1;
  if (Ho <= 0 || Wo <= 0) {
    throw std::invalid_argument("conv2d: output would be empty for input " +
                                xs.str());
  }
  const Shape os{xs.n, ws.n, Ho, Wo};
  Tensor<T> out(os);
  conv2d_raw(x.data(), xs, w.data(), ws, b.data(), out.data(), os, stride,
             pad);
  check_finite_or_throw(out.data(), out.numel(), "conv2d");

  auto* tp = Tape<T>::active();
  if (!tp) return out;
  const bool tx = tp->tracks(x), tw = tp->tracks(w), tb = tp->tracks(b);
  if (!(tx || tw || tb)) return out;

  const int nx = tx ? x.node() : -1;
  const int nw = tw ? w.node() : -1;
  const int nb = tb ? b.node() : -1;
  auto xdata = x.storage();
  auto wdata = w.storage();
  out.bind(
      tp->record(os, [=](Tape<T>& t, const std::vector<T>& gy) {
        const std::int64_t K = ws.c * ws.h * ws.w;
        const std::int64_t P = os.h * os.w;
        if (nb >= 0) {
          std::vector<T> gb(static_cast<std::size_t>(os.c), T(0));
          for (std::int64_t n = 0; n < os.n; ++n)
            for (std::int64_t co = 0; co < os.c; ++co) {
              const T* g = gy.data() + (n * os.c + co) * P;
              T acc = T(0);
              for (std::int64_t j = 0; j < P; ++j) acc += g[j];
              gb[static_cast<std::size_t>(co)] += acc;
            }
          t.accumulate(nb, gb);
        }
        if (nw >= 0) {
          std::vector<T> gw(static_cast<std::size_t>(ws.numel()), T(0));
          std::vector<T> rows(static_cast<std::size_t>(P * K));
          for (std::int64_t n = 0; n < os.n; ++n) {
            im2row(xdata->data() + n * xs.c * xs.h * xs.w, xs.c, xs.h, xs.w,
                   ws.h, ws.w, stride, pad, os.h, os.w, rows.data());
            gemm_accum(gy.data() + n * os.c * P, rows.data(), gw.data(), os.c,
                       P, K);
          }
          t.accumulate(nw, gw);
        }
        if (nx >= 0) {
          std::vector<T> gx(static_cast<std::size_t>(xs.numel()), T(0));
          const T* wp = wdata->data();
          // gather: gx[ih, iw] sums gy taps with ih = oh*s - p + ki
          parallel_for(xs.n * xs.c, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t job = lo; job < hi; ++job) {
              const std::int64_t n = job / xs.c;
              const std::int64_t ci = job % xs.c;
              T* gplane = gx.data() + job * xs.h * xs.w;
              for (std::int64_t co = 0; co < os.c; ++co) {
                const T* gyp = gy.data() + (n * os.c + co) * P;
                const T* wk = wp + (co * ws.c + ci) * ws.h * ws.w;
                for (std::int64_t ki = 0; ki < ws.h; ++ki)
                  for (std::int64_t kj = 0; kj < ws.w; ++kj) {
                    const T wv = wk[ki * ws.w + kj];
                    if (wv == T(0)) continue;
                    for (std::int64_t oh = 0; oh < os.h; ++oh) {
                      const std::int64_t ih = oh * stride - pad + ki;
                      if (ih < 0 || ih >= xs.h) continue;
                      T* grow = gplane + ih * xs.w;
                      const T* gyrow = gyp + oh * os.w;
                      for (std::int64_t ow = 0; ow < os.w; ++ow) {
                        const std::int64_t iw = ow * stride - pad + kj;
                        if (iw < 0 || iw >= xs.w) continue;
                        grow[iw] += wv * gyrow[ow];
                      }
                    }
                  }
              }
            }
          });
          t.accumulate(nx, gx);
        }
      }),
      tp->epoch());
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w,
                           const Tensor<T>& b, int stride, int pad) {
  check_conv_args("conv_transpose2d", x.shape(), w.shape(), b.shape(), stride,
                  pad, true);
  const Shape xs = x.shape(), ws = w.shape();
  const std::int64_t Ho = (xs.h - 1) * stride - 2 * pad + ws.h;
  const std::int64_t Wo = (xs.w - 1) * stride - 2 * pad + ws.w;
  if (Ho <= 0 || Wo <= 0) {
    throw std::invalid_argument(
        "conv_transpose2d: output would be empty for input " + xs.str());
  }
  const Shape os{xs.n, ws.c, Ho, Wo};
  Tensor<T> out(os);
  conv_transpose2d_raw(x.data(), xs, w.data(), ws, b.data(), out.data(), os,
                       stride, pad);
  check_finite_or_throw(out.data(), out.numel(), "conv_transpose2d");

  auto* tp = Tape<T>::active();
  if (!tp) return out;
  const bool tx = tp->tracks(x), tw = tp->tracks(w), tb = tp->tracks(b);
  if (!(tx || tw || tb)) return out;

  const int nx = tx ? x.node() : -1;
  const int nw = tw ? w.node() : -1;
  const int nb = tb ? b.node() : -1;
  auto xdata = x.storage();
  auto wdata = w.storage();
  out.bind(
      tp->record(os, [=](Tape<T>& t, const std::vector<T>& gy) {
        const std::int64_t P = os.h * os.w;
        if (nb >= 0) {
          std::vector<T> gb(static_cast<std::size_t>(os.c), T(0));
          for (std::int64_t n = 0; n < os.n; ++n)
            for (std::int64_t co = 0; co < os.c; ++co) {
              const T* g = gy.data() + (n * os.c + co) * P;
              T acc = T(0);
              for (std::int64_t j = 0; j < P; ++j) acc += g[j];
              gb[static_cast<std::size_t>(co)] += acc;
            }
          t.accumulate(nb, gb);
        }
        if (nx >= 0) {
          // adjoint of the scatter: a plain conv of gy with w read as
          // [out=Ci, in=Co, kh, kw], same stride/pad, output sized like x.
          std::vector<T> gx(static_cast<std::size_t>(xs.numel()), T(0));
          const Shape gys = os;
          const Shape wconv{ws.n, ws.c, ws.h, ws.w};  // [Ci, Co, kh, kw]
          conv2d_raw(gy.data(), gys, wdata->data(), wconv,
                     static_cast<const T*>(nullptr), gx.data(),
                     Shape{xs.n, xs.c, xs.h, xs.w}, stride, pad);
          t.accumulate(nx, gx);
        }
        if (nw >= 0) {
          // gw[ci, co, ki, kj] = sum_n x[n,ci] . im2row(gy)[., (co,ki,kj)]
          const std::int64_t K = ws.c * ws.h * ws.w;
          const std::int64_t Pi = xs.h * xs.w;
          std::vector<T> gw(static_cast<std::size_t>(ws.numel()), T(0));
          std::vector<T> rows(static_cast<std::size_t>(Pi * K));
          for (std::int64_t n = 0; n < xs.n; ++n) {
            im2row(gy.data() + n * os.c * P, os.c, os.h, os.w, ws.h, ws.w,
                   stride, pad, xs.h, xs.w, rows.data());
            gemm_accum(xdata->data() + n * xs.c * Pi, rows.data(), gw.data(),
                       xs.c, Pi, K);
          }
          t.accumulate(nw, gw);
        }
      }),
      tp->epoch());
  return out;
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&,
                              const Tensor<float>&, int, int);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&,
                               const Tensor<double>&, int, int);
template Tensor<float> conv_transpose2d(const Tensor<float>&,
                                        const Tensor<float>&,
                                        const Tensor<float>&, int, int);
template Tensor<double> conv_transpose2d(const Tensor<double>&,
                                         const Tensor<double>&,
                                         const Tensor<double>&, int, int);

}  // namespace dmphn
