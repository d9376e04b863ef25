#include "dmphn/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dmphn {

namespace {

constexpr double kPsnrCap = 100.0;
constexpr double kC1 = 0.01 * 0.01;  // (K1*L)^2
constexpr double kC2 = 0.03 * 0.03;  // (K2*L)^2

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.str() + " vs " + b.str());
  }
}

// Horizontal then vertical pass with a normalized window; output is the
// valid region (H-size+1) x (W-size+1).
void filter_valid(const std::vector<double>& src, std::int64_t h,
                  std::int64_t w, const std::vector<double>& win,
                  std::vector<double>& tmp, std::vector<double>& dst) {
  const std::int64_t k = static_cast<std::int64_t>(win.size());
  const std::int64_t vw = w - k + 1;
  const std::int64_t vh = h - k + 1;
  tmp.assign(static_cast<std::size_t>(h * vw), 0.0);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < vw; ++x) {
      double acc = 0;
      for (std::int64_t t = 0; t < k; ++t) {
        acc += win[static_cast<std::size_t>(t)] *
               src[static_cast<std::size_t>(y * w + x + t)];
      }
      tmp[static_cast<std::size_t>(y * vw + x)] = acc;
    }
  }
  dst.assign(static_cast<std::size_t>(vh * vw), 0.0);
  for (std::int64_t y = 0; y < vh; ++y) {
    for (std::int64_t x = 0; x < vw; ++x) {
      double acc = 0;
      for (std::int64_t t = 0; t < k; ++t) {
        acc += win[static_cast<std::size_t>(t)] *
               tmp[static_cast<std::size_t>((y + t) * vw + x)];
      }
      dst[static_cast<std::size_t>(y * vw + x)] = acc;
    }
  }
}

}  // namespace

std::vector<double> gaussian_window(int size, double sigma) {
  if (size < 1 || sigma <= 0) {
    throw std::invalid_argument("gaussian_window: bad size/sigma");
  }
  std::vector<double> w(static_cast<std::size_t>(size));
  const double mid = (size - 1) / 2.0;
  double sum = 0;
  for (int i = 0; i < size; ++i) {
    const double d = i - mid;
    w[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2 * sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  double mse = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = double(a.data()[i]) - double(b.data()[i]);
    mse += d * d;
  }
  mse /= double(a.numel());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const auto s = a.shape();
  const auto win = gaussian_window();
  const std::int64_t k = static_cast<std::int64_t>(win.size());
  if (s.h < k || s.w < k) {
    throw std::invalid_argument("ssim: image " + s.str() +
                                " smaller than the 11x11 window");
  }

  const std::int64_t plane = s.h * s.w;
  std::vector<double> pa(static_cast<std::size_t>(plane));
  std::vector<double> pb(static_cast<std::size_t>(plane));
  std::vector<double> paa(static_cast<std::size_t>(plane));
  std::vector<double> pbb(static_cast<std::size_t>(plane));
  std::vector<double> pab(static_cast<std::size_t>(plane));
  std::vector<double> tmp, ma, mb, maa, mbb, mab;

  double total = 0;
  std::int64_t planes = 0;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const T* ap = a.data() + (n * s.c + c) * plane;
      const T* bp = b.data() + (n * s.c + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const double x = double(ap[i]);
        const double y = double(bp[i]);
        pa[static_cast<std::size_t>(i)] = x;
        pb[static_cast<std::size_t>(i)] = y;
        paa[static_cast<std::size_t>(i)] = x * x;
        pbb[static_cast<std::size_t>(i)] = y * y;
        pab[static_cast<std::size_t>(i)] = x * y;
      }
      filter_valid(pa, s.h, s.w, win, tmp, ma);
      filter_valid(pb, s.h, s.w, win, tmp, mb);
      filter_valid(paa, s.h, s.w, win, tmp, maa);
      filter_valid(pbb, s.h, s.w, win, tmp, mbb);
      filter_valid(pab, s.h, s.w, win, tmp, mab);

      double acc = 0;
      for (std::size_t i = 0; i < ma.size(); ++i) {
        const double mu_a = ma[i];
        const double mu_b = mb[i];
        const double var_a = maa[i] - mu_a * mu_a;
        const double var_b = mbb[i] - mu_b * mu_b;
        const double cov = mab[i] - mu_a * mu_b;
        const double num = (2 * mu_a * mu_b + kC1) * (2 * cov + kC2);
        const double den =
            (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
        acc += num / den;
      }
      total += acc / double(ma.size());
      ++planes;
    }
  }
  return total / double(planes);
}

template double psnr(const Tensor<float>&, const Tensor<float>&);
template double psnr(const Tensor<double>&, const Tensor<double>&);
template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

}  // namespace dmphn
