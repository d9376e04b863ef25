#include "dmphn/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace dmphn {

namespace {

constexpr unsigned char kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32be(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::uint32_t get_u32be(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0, out.data() + crc_start, uInt(out.size() - crc_start));
  put_u32be(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

// Reflect fold into [0, n-1] (period 2n-2, no edge repeat).
std::int64_t fold(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

struct Splat {  // one soft-edged disc stamp used by the stroke painter
  double cy, cx, radius;
};

void blend_disc(std::vector<double>& img, std::int64_t h, std::int64_t w,
                const Splat& s, const std::array<double, 3>& color,
                double opacity) {
  const std::int64_t y0 = std::max<std::int64_t>(0, std::int64_t(s.cy - s.radius) - 1);
  const std::int64_t y1 = std::min<std::int64_t>(h - 1, std::int64_t(s.cy + s.radius) + 1);
  const std::int64_t x0 = std::max<std::int64_t>(0, std::int64_t(s.cx - s.radius) - 1);
  const std::int64_t x1 = std::min<std::int64_t>(w - 1, std::int64_t(s.cx + s.radius) + 1);
  for (std::int64_t y = y0; y <= y1; ++y) {
    for (std::int64_t x = x0; x <= x1; ++x) {
      const double d = std::hypot(y - s.cy, x - s.cx);
      const double a = std::clamp(s.radius - d + 0.5, 0.0, 1.0) * opacity;
      if (a <= 0) continue;
      for (int c = 0; c < 3; ++c) {
        double& px = img[static_cast<std::size_t>((c * h + y) * w + x)];
        px = px * (1 - a) + color[static_cast<std::size_t>(c)] * a;
      }
    }
  }
}

}  // namespace

// ------------------------------- quantization ------------------------------

ImageU8 to_u8(const Tensor<float>& t) {
  const auto s = t.shape();
  if (s.n != 1 || s.c != 3) {
    throw std::invalid_argument("to_u8: expected [1,3,H,W], got " + s.str());
  }
  ImageU8 img;
  img.h = s.h;
  img.w = s.w;
  img.rgb.resize(static_cast<std::size_t>(3 * s.h * s.w));
  const std::int64_t plane = s.h * s.w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(double(t.data()[c * plane + i]), 0.0, 1.0);
      // nearbyint under the default rounding mode is round-half-to-even
      img.rgb[static_cast<std::size_t>(3 * i + c)] =
          static_cast<unsigned char>(std::nearbyint(v * 255.0));
    }
  }
  return img;
}

Tensor<float> to_tensor(const ImageU8& img) {
  Tensor<float> t({1, 3, img.h, img.w});
  const std::int64_t plane = img.h * img.w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      t.data()[c * plane + i] =
          float(img.rgb[static_cast<std::size_t>(3 * i + c)]) / 255.0f;
    }
  }
  return t;
}

// ---------------------------------- files ----------------------------------

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path,
                const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

// ----------------------------------- png -----------------------------------

std::vector<unsigned char> encode_png(const ImageU8& img) {
  if (img.h < 1 || img.w < 1 ||
      img.rgb.size() != static_cast<std::size_t>(3 * img.h * img.w)) {
    throw std::invalid_argument("encode_png: inconsistent image");
  }
  std::vector<unsigned char> out(kPngSig, kPngSig + 8);

  std::vector<unsigned char> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(img.w));
  put_u32be(ihdr, static_cast<std::uint32_t>(img.h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  append_chunk(out, "IHDR", ihdr);

  // filter type 0 on every scanline
  const std::int64_t stride = 3 * img.w;
  std::vector<unsigned char> raw(static_cast<std::size_t>(img.h * (stride + 1)));
  for (std::int64_t y = 0; y < img.h; ++y) {
    raw[static_cast<std::size_t>(y * (stride + 1))] = 0;
    std::memcpy(raw.data() + y * (stride + 1) + 1, img.rgb.data() + y * stride,
                static_cast<std::size_t>(stride));
  }
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<unsigned char> idat(bound);
  if (compress2(idat.data(), &bound, raw.data(), uLong(raw.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw std::runtime_error("encode_png: deflate failed");
  }
  idat.resize(bound);
  append_chunk(out, "IDAT", idat);
  append_chunk(out, "IEND", {});
  return out;
}

ImageU8 decode_png(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0) {
    throw std::runtime_error("unsupported format: not a PNG");
  }
  std::size_t pos = 8;
  bool saw_ihdr = false, saw_iend = false;
  std::int64_t w = 0, h = 0;
  int color_type = 0, bpp = 0;
  std::vector<unsigned char> idat;

  while (pos < bytes.size()) {
    if (bytes.size() - pos < 12) throw std::runtime_error("truncated file");
    const std::uint32_t len = get_u32be(bytes.data() + pos);
    if (bytes.size() - pos < 12 + std::size_t(len)) {
      throw std::runtime_error("truncated file");
    }
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const unsigned char* data = bytes.data() + pos + 8;
    const std::uint32_t want_crc = get_u32be(data + len);
    const auto got_crc = crc32(0, bytes.data() + pos + 4, uInt(4 + len));
    if (static_cast<std::uint32_t>(got_crc) != want_crc) {
      throw std::runtime_error("png: chunk crc mismatch");
    }

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw std::runtime_error("png: bad IHDR");
      w = get_u32be(data);
      h = get_u32be(data + 4);
      const int depth = data[8];
      color_type = data[9];
      if (depth != 8) {
        throw std::runtime_error("unsupported format: PNG bit depth " +
                                 std::to_string(depth));
      }
      if (color_type != 2 && color_type != 6) {
        throw std::runtime_error("unsupported format: PNG color type " +
                                 std::to_string(color_type));
      }
      if (data[10] != 0 || data[11] != 0 || data[12] != 0) {
        throw std::runtime_error("unsupported format: PNG interlace/method");
      }
      if (w < 1 || h < 1) throw std::runtime_error("png: bad dimensions");
      bpp = color_type == 2 ? 3 : 4;
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
      break;
    }  // ancillary chunks are skipped

    pos += 12 + len;
  }
  if (!saw_ihdr || !saw_iend || idat.empty()) {
    throw std::runtime_error("truncated file");
  }

  const std::int64_t stride = std::int64_t(w) * bpp;
  std::vector<unsigned char> raw(static_cast<std::size_t>(h * (stride + 1)));
  uLongf raw_len = uLongf(raw.size());
  const int rc = uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size()));
  if (rc != Z_OK) throw std::runtime_error("png: corrupt compressed stream");
  if (raw_len != raw.size()) throw std::runtime_error("png: truncated pixel data");

  // un-filter scanlines in place into `pix`
  std::vector<unsigned char> pix(static_cast<std::size_t>(h * stride));
  for (std::int64_t y = 0; y < h; ++y) {
    const unsigned char f = raw[static_cast<std::size_t>(y * (stride + 1))];
    const unsigned char* src = raw.data() + y * (stride + 1) + 1;
    unsigned char* cur = pix.data() + y * stride;
    const unsigned char* up = y > 0 ? pix.data() + (y - 1) * stride : nullptr;
    for (std::int64_t x = 0; x < stride; ++x) {
      const int a = x >= bpp ? cur[x - bpp] : 0;       // left
      const int b = up ? up[x] : 0;                    // above
      const int c = (up && x >= bpp) ? up[x - bpp] : 0;  // upper-left
      int v = src[x];
      switch (f) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw std::runtime_error("png: bad filter type");
      }
      cur[x] = static_cast<unsigned char>(v & 0xff);
    }
  }

  ImageU8 img;
  img.h = h;
  img.w = w;
  img.rgb.resize(static_cast<std::size_t>(3 * h * w));
  for (std::int64_t i = 0; i < h * std::int64_t(w); ++i) {
    for (int c = 0; c < 3; ++c) {
      img.rgb[static_cast<std::size_t>(3 * i + c)] =
          pix[static_cast<std::size_t>(i * bpp + c)];
    }
  }
  return img;
}

// ----------------------------------- ppm -----------------------------------

std::vector<unsigned char> encode_ppm(const ImageU8& img) {
  std::string header = "P6\n" + std::to_string(img.w) + " " +
                       std::to_string(img.h) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

ImageU8 decode_ppm(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {  // comment to end of line
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) {
      tok.push_back(char(bytes[pos++]));
    }
    if (tok.empty()) throw std::runtime_error("truncated file");
    return tok;
  };

  if (next_token() != "P6") {
    throw std::runtime_error("unsupported format: not binary PPM");
  }
  const long w = std::stol(next_token());
  const long h = std::stol(next_token());
  const long maxval = std::stol(next_token());
  if (w < 1 || h < 1) throw std::runtime_error("ppm: bad dimensions");
  if (maxval != 255) {
    throw std::runtime_error("unsupported format: PPM maxval " +
                             std::to_string(maxval));
  }
  ++pos;  // the single whitespace after maxval
  const std::size_t need = std::size_t(3) * std::size_t(w) * std::size_t(h);
  if (bytes.size() - pos < need) throw std::runtime_error("truncated file");

  ImageU8 img;
  img.h = h;
  img.w = w;
  img.rgb.assign(bytes.begin() + std::ptrdiff_t(pos),
                 bytes.begin() + std::ptrdiff_t(pos + need));
  return img;
}

// ------------------------------ load / save --------------------------------

Tensor<float> load_image(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) {
    return to_tensor(decode_png(bytes));
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    return to_tensor(decode_ppm(bytes));
  }
  throw std::runtime_error("unsupported format: " + path);
}

void save_image(const Tensor<float>& t, const std::string& path) {
  const auto img = to_u8(t);
  const auto ext = fs::path(path).extension().string();
  if (ext == ".png") {
    write_file(path, encode_png(img));
  } else if (ext == ".ppm") {
    write_file(path, encode_ppm(img));
  } else {
    throw std::invalid_argument("save_image: unsupported extension '" + ext +
                                "' (use .png or .ppm)");
  }
}

// ------------------------------- trajectories ------------------------------

Trajectory random_walk_trajectory(int K, double d_max, Rng& rng) {
  if (K < 1) throw std::invalid_argument("trajectory: K must be >= 1");
  Trajectory t;
  t.offsets.resize(static_cast<std::size_t>(K));
  double py = 0, px = 0, vy = 0, vx = 0;
  for (int i = 0; i < K; ++i) {
    vy += rng.uniform(-d_max / 2, d_max / 2);
    vx += rng.uniform(-d_max / 2, d_max / 2);
    const double speed = std::hypot(vy, vx);
    if (speed > d_max) {  // cap per-frame displacement
      vy *= d_max / speed;
      vx *= d_max / speed;
    }
    t.offsets[static_cast<std::size_t>(i)] = {py, px};
    py += vy;
    px += vx;
  }
  const auto mid = t.offsets[static_cast<std::size_t>((K - 1) / 2)];
  for (auto& o : t.offsets) {
    o[0] -= mid[0];
    o[1] -= mid[1];
  }
  return t;
}

Trajectory linear_trajectory(int K, double total, double dy, double dx) {
  if (K < 1) throw std::invalid_argument("trajectory: K must be >= 1");
  Trajectory t;
  t.offsets.resize(static_cast<std::size_t>(K));
  const double norm = std::hypot(dy, dx);
  const double uy = norm > 0 ? dy / norm : 0;
  const double ux = norm > 0 ? dx / norm : 0;
  const int mid = (K - 1) / 2;
  for (int i = 0; i < K; ++i) {
    const double s = K > 1 ? total * double(i - mid) / double(K - 1) : 0.0;
    t.offsets[static_cast<std::size_t>(i)] = {uy * s, ux * s};
  }
  return t;
}

// ------------------------------- synth blur --------------------------------

Tensor<float> translate_bilinear(const Tensor<float>& x, double dy, double dx) {
  const auto s = x.shape();
  Tensor<float> out(s);
  const std::int64_t plane = s.h * s.w;
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const float* src = x.data() + (n * s.c + c) * plane;
      float* dst = out.data() + (n * s.c + c) * plane;
      for (std::int64_t y = 0; y < s.h; ++y) {
        const double sy = double(y) + dy;
        const std::int64_t y0 = std::int64_t(std::floor(sy));
        const double fy = sy - double(y0);
        const std::int64_t ry0 = fold(y0, s.h);
        const std::int64_t ry1 = fold(y0 + 1, s.h);
        for (std::int64_t xx = 0; xx < s.w; ++xx) {
          const double sx = double(xx) + dx;
          const std::int64_t x0 = std::int64_t(std::floor(sx));
          const double fx = sx - double(x0);
          const std::int64_t rx0 = fold(x0, s.w);
          const std::int64_t rx1 = fold(x0 + 1, s.w);
          const double v = (1 - fy) * (1 - fx) * src[ry0 * s.w + rx0] +
                           (1 - fy) * fx * src[ry0 * s.w + rx1] +
                           fy * (1 - fx) * src[ry1 * s.w + rx0] +
                           fy * fx * src[ry1 * s.w + rx1];
          dst[y * s.w + xx] = float(v);
        }
      }
    }
  }
  return out;
}

BlurSample synth_blur(const Tensor<float>& sharp, const Trajectory& traj) {
  const int K = static_cast<int>(traj.offsets.size());
  if (K < 1) throw std::invalid_argument("synth_blur: K must be >= 1");
  const auto s = sharp.shape();

  std::vector<double> acc(static_cast<std::size_t>(sharp.numel()), 0.0);
  Tensor<float> mid_frame = sharp;
  const int mid = (K - 1) / 2;
  for (int i = 0; i < K; ++i) {
    const auto& o = traj.offsets[static_cast<std::size_t>(i)];
    Tensor<float> frame = (o[0] == 0.0 && o[1] == 0.0)
                              ? sharp
                              : translate_bilinear(sharp, o[0], o[1]);
    if (i == mid) mid_frame = frame;
    for (std::int64_t j = 0; j < sharp.numel(); ++j) {
      acc[static_cast<std::size_t>(j)] += double(frame.data()[j]);
    }
  }

  BlurSample out;
  out.blurry = Tensor<float>(s);
  for (std::int64_t j = 0; j < sharp.numel(); ++j) {
    out.blurry.data()[j] = float(acc[static_cast<std::size_t>(j)] / K);
  }
  out.sharp = mid_frame;  // the middle latent frame is the target
  out.frames = K;
  out.trajectory = traj;
  return out;
}

BlurSample synth_blur(const Tensor<float>& sharp, int K, double d_max,
                      Rng& rng) {
  if (K < 1) throw std::invalid_argument("synth_blur: K must be >= 1");
  return synth_blur(sharp, random_walk_trajectory(K, d_max, rng));
}

// ----------------------------- procedural images ---------------------------

Tensor<float> procedural_image(std::int64_t h, std::int64_t w, Rng& rng) {
  std::vector<double> img(static_cast<std::size_t>(3 * h * w), 0.0);
  auto rand_color = [&]() {
    return std::array<double, 3>{rng.uniform(), rng.uniform(), rng.uniform()};
  };

  // background: linear gradient between two colors along a random direction
  const auto c0 = rand_color();
  const auto c1 = rand_color();
  const double theta = rng.uniform(0, 2 * M_PI);
  const double gy = std::sin(theta), gx = std::cos(theta);
  const double span = std::abs(gy) * double(h - 1) + std::abs(gx) * double(w - 1);
  const double base = std::min(0.0, gy * double(h - 1)) +
                      std::min(0.0, gx * double(w - 1));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const double t = span > 0 ? (gy * y + gx * x - base) / span : 0.0;
      for (int c = 0; c < 3; ++c) {
        img[static_cast<std::size_t>((c * h + y) * w + x)] =
            c0[size_t(c)] * (1 - t) + c1[size_t(c)] * t;
      }
    }
  }

  // shapes: anti-aliased discs and hard rectangles
  const std::int64_t n_shapes = rng.uniform_int(3, 8);
  for (std::int64_t i = 0; i < n_shapes; ++i) {
    const auto col = rand_color();
    const double opacity = rng.uniform(0.6, 1.0);
    if (rng.uniform() < 0.5) {
      Splat sp{rng.uniform(0, double(h - 1)), rng.uniform(0, double(w - 1)),
               rng.uniform(double(h) / 16.0, double(h) / 3.0)};
      blend_disc(img, h, w, sp, col, opacity);
    } else {
      std::int64_t y0 = rng.uniform_int(0, h - 2);
      std::int64_t y1 = rng.uniform_int(y0 + 1, h - 1);
      std::int64_t x0 = rng.uniform_int(0, w - 2);
      std::int64_t x1 = rng.uniform_int(x0 + 1, w - 1);
      for (std::int64_t y = y0; y <= y1; ++y) {
        for (std::int64_t x = x0; x <= x1; ++x) {
          for (int c = 0; c < 3; ++c) {
            double& px = img[static_cast<std::size_t>((c * h + y) * w + x)];
            px = px * (1 - opacity) + col[size_t(c)] * opacity;
          }
        }
      }
    }
  }

  // text-like strokes: short jointed polylines stamped as small discs
  const std::int64_t n_strokes = rng.uniform_int(2, 6);
  for (std::int64_t i = 0; i < n_strokes; ++i) {
    const bool dark = rng.uniform() < 0.5;
    const std::array<double, 3> col =
        dark ? std::array<double, 3>{0.05, 0.05, 0.05}
             : std::array<double, 3>{0.95, 0.95, 0.95};
    double cy = rng.uniform(2, double(h - 3));
    double cx = rng.uniform(2, double(w - 3));
    const double radius = rng.uniform(0.5, 1.2);
    const std::int64_t segments = rng.uniform_int(3, 6);
    for (std::int64_t seg = 0; seg < segments; ++seg) {
      const double ang = rng.uniform(0, 2 * M_PI);
      const double len = rng.uniform(double(h) / 16.0, double(h) / 8.0);
      const double ny = cy + std::sin(ang) * len;
      const double nx = cx + std::cos(ang) * len;
      const int steps = std::max(1, int(len / 0.5));
      for (int st = 0; st <= steps; ++st) {
        const double t = double(st) / steps;
        Splat sp{cy + (ny - cy) * t, cx + (nx - cx) * t, radius};
        if (sp.cy < 0 || sp.cy > h - 1 || sp.cx < 0 || sp.cx > w - 1) continue;
        blend_disc(img, h, w, sp, col, 0.9);
      }
      cy = std::clamp(ny, 0.0, double(h - 1));
      cx = std::clamp(nx, 0.0, double(w - 1));
    }
  }

  Tensor<float> out({1, 3, h, w});
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out.data()[i] = float(std::clamp(img[static_cast<std::size_t>(i)], 0.0, 1.0));
  }
  return out;
}

// --------------------------------- dataset ---------------------------------

std::string gen_dataset(const std::string& out_dir,
                        const DatasetOptions& opt) {
  if (opt.count < 1) throw std::invalid_argument("gen_dataset: count >= 1");
  if (opt.frames_min < 1 || opt.frames_max < opt.frames_min) {
    throw std::invalid_argument("gen_dataset: bad frames range");
  }
  const fs::path root(out_dir);
  for (const char* split : {"train", "test"}) {
    for (const char* kind : {"blur", "sharp"}) {
      fs::create_directories(root / split / kind);
    }
  }

  const int train_count =
      std::max(0, std::min<int>(opt.count,
                                int(std::llround(opt.count * opt.train_ratio))));
  nlohmann::json pairs = nlohmann::json::array();
  for (int i = 0; i < opt.count; ++i) {
    auto rng = Rng::stream(opt.seed, static_cast<std::uint64_t>(i));
    auto sharp = procedural_image(opt.height, opt.width, rng);
    const int K = int(rng.uniform_int(opt.frames_min, opt.frames_max));
    auto sample = synth_blur(sharp, K, opt.d_max, rng);

    const std::string split = i < train_count ? "train" : "test";
    char name[16];
    std::snprintf(name, sizeof(name), "%06d.png", i);
    const std::string blur_rel = split + "/blur/" + name;
    const std::string sharp_rel = split + "/sharp/" + name;
    save_image(sample.blurry, (root / blur_rel).string());
    save_image(sample.sharp, (root / sharp_rel).string());
    pairs.push_back({{"index", i},
                     {"split", split},
                     {"frames", K},
                     {"blur", blur_rel},
                     {"sharp", sharp_rel}});
  }

  nlohmann::json manifest = {
      {"count", opt.count},
      {"size", {opt.height, opt.width}},
      {"seed", opt.seed},
      {"frames", {opt.frames_min, opt.frames_max}},
      {"d_max", opt.d_max},
      {"train_ratio", opt.train_ratio},
      {"train_count", train_count},
      {"pairs", pairs},
  };
  const std::string manifest_path = (root / "manifest.json").string();
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + manifest_path);
  out << manifest.dump(2) << "\n";
  return manifest_path;
}

std::vector<PairPaths> list_pairs(const std::string& root,
                                  const std::string& split) {
  const fs::path base(root);
  std::vector<PairPaths> out;
  const fs::path manifest = base / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    nlohmann::json j;
    in >> j;
    for (const auto& p : j.at("pairs")) {
      if (p.at("split").get<std::string>() != split) continue;
      out.push_back({(base / p.at("blur").get<std::string>()).string(),
                     (base / p.at("sharp").get<std::string>()).string()});
    }
    return out;
  }
  // fall back to a directory scan over paired filenames
  const fs::path blur_dir = base / split / "blur";
  const fs::path sharp_dir = base / split / "sharp";
  if (!fs::exists(blur_dir)) return out;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(blur_dir)) {
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    const fs::path s = sharp_dir / n;
    if (fs::exists(s)) out.push_back({(blur_dir / n).string(), s.string()});
  }
  return out;
}

}  // namespace dmphn
