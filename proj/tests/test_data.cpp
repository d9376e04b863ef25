#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmphn/data.hpp"
#include "dmphn/metrics.hpp"

using namespace dmphn;
namespace fs = std::filesystem;

namespace {

// --- a deliberately independent PNG writer used to probe the decoder ---

void be32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

void chunk(std::vector<unsigned char>& out, const char* type,
           const std::vector<unsigned char>& data) {
  be32(out, static_cast<std::uint32_t>(data.size()));
  std::size_t at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  be32(out, static_cast<std::uint32_t>(
                crc32(0, out.data() + at, uInt(out.size() - at))));
}

int paeth_ref(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

// pixels: h*w*bpp bytes; filter_of(y) picks the per-row filter type.
template <typename FilterOf>
std::vector<unsigned char> make_png(std::int64_t h, std::int64_t w, int bpp,
                                    const std::vector<unsigned char>& pixels,
                                    FilterOf filter_of, int bit_depth = 8,
                                    int color_type_override = -1) {
  const unsigned char sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<unsigned char> out(sig, sig + 8);
  std::vector<unsigned char> ihdr;
  be32(ihdr, std::uint32_t(w));
  be32(ihdr, std::uint32_t(h));
  ihdr.push_back(static_cast<unsigned char>(bit_depth));
  const int ct = color_type_override >= 0 ? color_type_override
                                          : (bpp == 3 ? 2 : 6);
  ihdr.push_back(static_cast<unsigned char>(ct));
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  chunk(out, "IHDR", ihdr);

  const std::int64_t stride = w * bpp;
  std::vector<unsigned char> raw;
  for (std::int64_t y = 0; y < h; ++y) {
    const int f = filter_of(y);
    raw.push_back(static_cast<unsigned char>(f));
    const unsigned char* cur = pixels.data() + y * stride;
    const unsigned char* up = y > 0 ? pixels.data() + (y - 1) * stride : nullptr;
    for (std::int64_t x = 0; x < stride; ++x) {
      const int a = x >= bpp ? cur[x - bpp] : 0;
      const int b = up ? up[x] : 0;
      const int c = (up && x >= bpp) ? up[x - bpp] : 0;
      int pred = 0;
      switch (f) {
        case 0: pred = 0; break;
        case 1: pred = a; break;
        case 2: pred = b; break;
        case 3: pred = (a + b) / 2; break;
        case 4: pred = paeth_ref(a, b, c); break;
      }
      raw.push_back(static_cast<unsigned char>((cur[x] - pred) & 0xff));
    }
  }
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<unsigned char> z(bound);
  REQUIRE(compress2(z.data(), &bound, raw.data(), uLong(raw.size()), 6) == Z_OK);
  z.resize(bound);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", {});
  return out;
}

std::vector<unsigned char> random_pixels(std::int64_t n, Rng& rng) {
  std::vector<unsigned char> v(static_cast<std::size_t>(n));
  for (auto& b : v) b = static_cast<unsigned char>(rng.uniform_int(0, 255));
  return v;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_file_bytes(const fs::path& a, const fs::path& b) {
  const auto ba = read_file(a.string());
  const auto bb = read_file(b.string());
  return ba == bb;
}

template <typename T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("png round-trip preserves pixel bytes and is deterministic") {
  Rng rng(1);
  ImageU8 img;
  img.h = 13;
  img.w = 21;  // non-multiple sizes on purpose
  img.rgb = random_pixels(3 * img.h * img.w, rng);

  const auto bytes = encode_png(img);
  const auto back = decode_png(bytes);
  CHECK(back.h == img.h);
  CHECK(back.w == img.w);
  CHECK(back.rgb == img.rgb);
  CHECK(encode_png(img) == bytes);

  const auto dir = fresh_dir("dmphn_png_rt");
  auto t = to_tensor(img);
  save_image(t, (dir / "a.png").string());
  auto loaded = load_image((dir / "a.png").string());
  CHECK(bit_equal(loaded, t));
  save_image(loaded, (dir / "b.png").string());
  CHECK(same_file_bytes(dir / "a.png", dir / "b.png"));
}

TEST_CASE("png decoder handles every filter type from a foreign encoder") {
  Rng rng(2);
  const std::int64_t h = 16, w = 11;

  for (int f = 0; f <= 4; ++f) {
    auto pixels = random_pixels(h * w * 3, rng);
    auto bytes = make_png(h, w, 3, pixels, [&](std::int64_t) { return f; });
    const auto img = decode_png(bytes);
    CAPTURE(f);
    CHECK(img.rgb == pixels);
  }

  // mixed filters across rows
  auto pixels = random_pixels(h * w * 3, rng);
  auto bytes =
      make_png(h, w, 3, pixels, [](std::int64_t y) { return int(y % 5); });
  CHECK(decode_png(bytes).rgb == pixels);
}

TEST_CASE("png decoder reads rgba and drops alpha") {
  Rng rng(3);
  const std::int64_t h = 7, w = 9;
  auto rgba = random_pixels(h * w * 4, rng);
  auto bytes =
      make_png(h, w, 4, rgba, [](std::int64_t y) { return int((y + 2) % 5); });
  const auto img = decode_png(bytes);
  REQUIRE(img.rgb.size() == std::size_t(h * w * 3));
  for (std::int64_t i = 0; i < h * w; ++i) {
    for (int c = 0; c < 3; ++c) {
      REQUIRE(img.rgb[size_t(3 * i + c)] == rgba[size_t(4 * i + c)]);
    }
  }
}

TEST_CASE("png decoder rejects what it does not support, distinctly") {
  Rng rng(4);
  auto pixels = random_pixels(8 * 8 * 3, rng);
  auto ok = make_png(8, 8, 3, pixels, [](std::int64_t) { return 0; });

  // 16-bit depth
  auto deep = make_png(8, 8, 3, pixels, [](std::int64_t) { return 0; }, 16);
  CHECK_THROWS_WITH_AS(decode_png(deep),
                       doctest::Contains("unsupported format"),
                       std::runtime_error);
  // palette color type
  auto pal = make_png(8, 8, 3, pixels, [](std::int64_t) { return 0; }, 8, 3);
  CHECK_THROWS_WITH_AS(decode_png(pal),
                       doctest::Contains("unsupported format"),
                       std::runtime_error);
  // grayscale
  auto gray = make_png(8, 8, 3, pixels, [](std::int64_t) { return 0; }, 8, 0);
  CHECK_THROWS_WITH_AS(decode_png(gray),
                       doctest::Contains("unsupported format"),
                       std::runtime_error);

  // truncation at several depths (signature kept, content cut)
  for (std::size_t keep : {9u, 20u, 40u}) {
    std::vector<unsigned char> cut(ok.begin(), ok.begin() + keep);
    CHECK_THROWS_WITH_AS(decode_png(cut), doctest::Contains("truncated"),
                         std::runtime_error);
  }
  std::vector<unsigned char> no_end(ok.begin(), ok.end() - 12);
  CHECK_THROWS_WITH_AS(decode_png(no_end), doctest::Contains("truncated"),
                       std::runtime_error);

  // flipped bit inside IDAT -> crc mismatch
  auto bad = ok;
  bad[bad.size() - 20] ^= 0x40;
  CHECK_THROWS_WITH_AS(decode_png(bad), doctest::Contains("crc"),
                       std::runtime_error);

  // not a PNG at all
  std::vector<unsigned char> junk = {'h', 'e', 'l', 'l', 'o'};
  CHECK_THROWS_WITH_AS(decode_png(junk), doctest::Contains("unsupported"),
                       std::runtime_error);
}

TEST_CASE("ppm codec: known bytes, comments, and failure modes") {
  const std::string header = "P6\n# a comment\n2 2\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  const unsigned char px[12] = {0, 51, 102, 153, 204, 255, 10, 20, 30, 40, 50, 60};
  bytes.insert(bytes.end(), px, px + 12);

  const auto img = decode_ppm(bytes);
  CHECK(img.h == 2);
  CHECK(img.w == 2);
  auto t = to_tensor(img);
  CHECK(t.shape() == Shape{1, 3, 2, 2});
  CHECK(t.at(0, 0, 0, 0) == 0.0f);
  CHECK(t.at(0, 1, 0, 0) == doctest::Approx(51.0f / 255.0f));
  CHECK(t.at(0, 2, 0, 0) == doctest::Approx(102.0f / 255.0f));
  CHECK(t.at(0, 0, 0, 1) == doctest::Approx(153.0f / 255.0f));
  CHECK(t.at(0, 2, 1, 1) == doctest::Approx(60.0f / 255.0f));

  const auto rt = decode_ppm(encode_ppm(img));
  CHECK(rt.rgb == img.rgb);

  std::vector<unsigned char> gray = {'P', '5', '\n'};
  CHECK_THROWS_WITH_AS(decode_ppm(gray), doctest::Contains("unsupported"),
                       std::runtime_error);

  std::string wide = "P6\n2 2\n65535\n";
  std::vector<unsigned char> wide_b(wide.begin(), wide.end());
  CHECK_THROWS_WITH_AS(decode_ppm(wide_b), doctest::Contains("unsupported"),
                       std::runtime_error);

  std::vector<unsigned char> cut(bytes.begin(), bytes.end() - 5);
  CHECK_THROWS_WITH_AS(decode_ppm(cut), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("quantization clamps and rounds half to even") {
  Tensor<float> t({1, 3, 1, 2}, {-0.1f, 0.5f, 1.3f, 0.0f, 1.0f, 0.25f});
  const auto img = to_u8(t);
  CHECK(img.rgb[0] == 0);    // -0.1 clamps
  CHECK(img.rgb[1] == 255);  // 1.3 clamps
  CHECK(img.rgb[3] == 128);  // 0.5*255 = 127.5, ties to even 128
  CHECK(img.rgb[4] == 0);
  CHECK(img.rgb[2] == 255);
  // 0.25*255 = 63.75 -> 64
  CHECK(img.rgb[5] == 64);

  // hunt exact .5 products and confirm banker's rounding on each
  int ties = 0;
  for (int k = 0; k < 255; ++k) {
    const float v = float((k + 0.5) / 255.0);
    if (double(v) * 255.0 != k + 0.5) continue;
    ++ties;
    Tensor<float> one({1, 3, 1, 1}, {v, v, v});
    const int want = (k % 2 == 0) ? k : k + 1;
    CHECK(int(to_u8(one).rgb[0]) == want);
  }
  CHECK(ties >= 1);
}

TEST_CASE("synth_blur static and single-frame cases are exact") {
  Rng rng(5);
  auto sharp = procedural_image(16, 16, rng);

  Trajectory still;
  still.offsets.assign(5, {0.0, 0.0});
  auto s5 = synth_blur(sharp, still);
  CHECK(bit_equal(s5.blurry, sharp));
  CHECK(bit_equal(s5.sharp, sharp));

  auto s1 = synth_blur(sharp, 1, 2.0, rng);
  CHECK(bit_equal(s1.blurry, sharp));
  CHECK(s1.frames == 1);

  Trajectory empty;
  CHECK_THROWS_AS(synth_blur(sharp, empty), std::invalid_argument);
  CHECK_THROWS_AS(synth_blur(sharp, 0, 2.0, rng), std::invalid_argument);
}

TEST_CASE("synth_blur 3-tap horizontal equals the hand average") {
  // vertical step edge: columns 0..3 dark, 4..7 bright
  Tensor<float> sharp({1, 3, 8, 8});
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < 8; ++y) {
      for (std::int64_t x = 0; x < 8; ++x) {
        sharp.data()[(c * 8 + y) * 8 + x] = x < 4 ? 0.2f : 0.8f;
      }
    }
  }
  Trajectory t;
  t.offsets = {{{0.0, -1.0}}, {{0.0, 0.0}}, {{0.0, 1.0}}};
  const auto sample = synth_blur(sharp, t);
  CHECK(bit_equal(sample.sharp, sharp));

  auto reflect = [](std::int64_t i, std::int64_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
  };
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < 8; ++y) {
      for (std::int64_t x = 0; x < 8; ++x) {
        const double want = (sharp.at(0, c, y, reflect(x - 1, 8)) +
                             sharp.at(0, c, y, x) +
                             sharp.at(0, c, y, reflect(x + 1, 8))) /
                            3.0;
        REQUIRE(sample.blurry.at(0, c, y, x) ==
                doctest::Approx(want).epsilon(1e-7));
      }
    }
  }
}

TEST_CASE("random-walk trajectories are centered and bounded") {
  Rng rng(6);
  for (int K : {1, 2, 7, 13}) {
    auto t = random_walk_trajectory(K, 2.0, rng);
    REQUIRE(int(t.offsets.size()) == K);
    const auto mid = t.offsets[size_t((K - 1) / 2)];
    CHECK(mid[0] == 0.0);
    CHECK(mid[1] == 0.0);
    for (int i = 1; i < K; ++i) {
      const double dy = t.offsets[size_t(i)][0] - t.offsets[size_t(i - 1)][0];
      const double dx = t.offsets[size_t(i)][1] - t.offsets[size_t(i - 1)][1];
      CHECK(std::hypot(dy, dx) <= 2.0 + 1e-9);
    }
  }

  // recentered walk means the blur target equals the input bitwise
  auto sharp = procedural_image(24, 24, rng);
  auto sample = synth_blur(sharp, 9, 2.0, rng);
  CHECK(bit_equal(sample.sharp, sharp));
  CHECK(!bit_equal(sample.blurry, sharp));  // some motion with prob ~1
}

TEST_CASE("averaging conserves intensity on constant images") {
  auto c = Tensor<float>::full({1, 3, 12, 12}, 0.42f);
  Rng rng(7);
  auto sample = synth_blur(c, 11, 2.0, rng);
  for (std::int64_t i = 0; i < sample.blurry.numel(); ++i) {
    REQUIRE(sample.blurry.data()[i] == doctest::Approx(0.42f).epsilon(1e-6));
  }
}

TEST_CASE("psnr degrades monotonically with displacement") {
  Rng rng(8);
  auto sharp = procedural_image(48, 48, rng);
  double prev = 1e9;
  for (double total : {0.0, 1.0, 2.0, 4.0}) {
    auto traj = linear_trajectory(7, total, 0.3, 1.0);
    auto sample = synth_blur(sharp, traj);
    const double p = psnr(sample.blurry, sample.sharp);
    CAPTURE(total);
    CHECK(p <= prev + 1e-9);
    prev = p;
  }
  CHECK(prev < 100.0);  // the largest displacement really blurred
}

TEST_CASE("procedural images are seeded and well-ranged") {
  Rng a(9), b(9), c(10);
  auto ia = procedural_image(32, 32, a);
  auto ib = procedural_image(32, 32, b);
  auto ic = procedural_image(32, 32, c);
  CHECK(bit_equal(ia, ib));
  CHECK(!bit_equal(ia, ic));

  double mean = 0, var = 0;
  for (std::int64_t i = 0; i < ia.numel(); ++i) {
    REQUIRE(ia.data()[i] >= 0.0f);
    REQUIRE(ia.data()[i] <= 1.0f);
    mean += ia.data()[i];
  }
  mean /= double(ia.numel());
  for (std::int64_t i = 0; i < ia.numel(); ++i) {
    var += (ia.data()[i] - mean) * (ia.data()[i] - mean);
  }
  var /= double(ia.numel());
  CHECK(var > 1e-4);  // not a flat card
}

TEST_CASE("gen_dataset is reproducible and correctly laid out") {
  DatasetOptions opt;
  opt.count = 8;
  opt.height = 32;
  opt.width = 32;
  opt.seed = 1;

  const auto d1 = fresh_dir("dmphn_ds_a");
  const auto d2 = fresh_dir("dmphn_ds_b");
  gen_dataset(d1.string(), opt);
  gen_dataset(d2.string(), opt);

  std::ifstream m1(d1 / "manifest.json");
  nlohmann::json j;
  m1 >> j;
  CHECK(j.at("count") == 8);
  CHECK(j.at("train_count") == 6);  // 0.75 split
  CHECK(j.at("pairs").size() == 8);
  CHECK(j.at("frames")[0] == 7);
  CHECK(j.at("frames")[1] == 13);
  for (const auto& p : j.at("pairs")) {
    const int k = p.at("frames").get<int>();
    CHECK(k >= 7);
    CHECK(k <= 13);
  }

  auto train = list_pairs(d1.string(), "train");
  auto test = list_pairs(d1.string(), "test");
  REQUIRE(train.size() == 6);
  REQUIRE(test.size() == 2);
  auto img = load_image(train[0].blur);
  CHECK(img.shape() == Shape{1, 3, 32, 32});

  for (const auto& pair : {train[0], train[5], test[0], test[1]}) {
    const fs::path rel_b = fs::relative(pair.blur, d1);
    const fs::path rel_s = fs::relative(pair.sharp, d1);
    CHECK(same_file_bytes(pair.blur, d2 / rel_b));
    CHECK(same_file_bytes(pair.sharp, d2 / rel_s));
  }
  CHECK(same_file_bytes(d1 / "manifest.json", d2 / "manifest.json"));

  // scan fallback agrees with the manifest listing
  fs::remove(d1 / "manifest.json");
  auto scanned = list_pairs(d1.string(), "train");
  REQUIRE(scanned.size() == 6);
  CHECK(scanned[0].blur == train[0].blur);

  // K = 1 everywhere -> blurry equals sharp, file for file
  DatasetOptions still = opt;
  still.count = 3;
  still.frames_min = still.frames_max = 1;
  const auto d3 = fresh_dir("dmphn_ds_c");
  gen_dataset(d3.string(), still);
  for (const auto& pair : list_pairs(d3.string(), "train")) {
    CHECK(same_file_bytes(pair.blur, pair.sharp));
  }
}
