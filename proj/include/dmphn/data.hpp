#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dmphn/rng.hpp"
#include "dmphn/tensor.hpp"

namespace dmphn {

// ---------------------------------------------------------------------------
// Image I/O. Two formats: 8-bit RGB PNG (own codec over zlib) and binary PPM.
// load_image sniffs the magic bytes; save_image picks the codec from the
// file extension (.png / .ppm). Tensors are [1,3,H,W] in [0,1], RGB order.
// ---------------------------------------------------------------------------

struct ImageU8 {
  std::int64_t h = 0, w = 0;
  std::vector<unsigned char> rgb;  // packed row-major RGB, 3 bytes/pixel
};

Tensor<float> load_image(const std::string& path);
void save_image(const Tensor<float>& t, const std::string& path);

// Byte-level codecs, exposed so tests can exercise foreign encodings.
ImageU8 decode_png(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_png(const ImageU8& img);
ImageU8 decode_ppm(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> encode_ppm(const ImageU8& img);

// Quantization: clamp to [0,1], scale by 255, round half to even.
ImageU8 to_u8(const Tensor<float>& t);
Tensor<float> to_tensor(const ImageU8& img);

std::vector<unsigned char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<unsigned char>& b);

// ---------------------------------------------------------------------------
// Synthetic blur: average K sub-frames obtained by bilinearly translating the
// sharp image along a camera trajectory (reflect boundary). The middle
// sub-frame (1-based index ceil(K/2)) is the ground-truth sharp target, so a
// recentered trajectory reproduces the input exactly.
// ---------------------------------------------------------------------------

struct Trajectory {
  std::vector<std::array<double, 2>> offsets;  // (dy, dx) per sub-frame
};

// Random-walk velocity, per-frame displacement capped at d_max pixels,
// recentered so the middle sub-frame sits at (0,0).
Trajectory random_walk_trajectory(int K, double d_max, Rng& rng);

// Straight-line trajectory covering `total` pixels along (dy,dx) direction.
Trajectory linear_trajectory(int K, double total, double dy, double dx);

Tensor<float> translate_bilinear(const Tensor<float>& x, double dy, double dx);

struct BlurSample {
  Tensor<float> blurry;
  Tensor<float> sharp;
  int frames = 0;
  Trajectory trajectory;
};

BlurSample synth_blur(const Tensor<float>& sharp, const Trajectory& traj);
BlurSample synth_blur(const Tensor<float>& sharp, int K, double d_max,
                      Rng& rng);

// ---------------------------------------------------------------------------
// Dataset generation: procedural sharp images (gradients, shapes, strokes)
// blurred per the protocol above, laid out as
//   root/{train,test}/{blur,sharp}/NNNNNN.png  +  manifest.json
// Every sample draws from its own RNG stream, so generation is reproducible
// per index regardless of ordering.
// ---------------------------------------------------------------------------

struct DatasetOptions {
  int count = 32;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::uint64_t seed = 0;
  int frames_min = 7;
  int frames_max = 13;
  double d_max = 2.0;
  double train_ratio = 0.75;
};

// Returns the manifest path.
std::string gen_dataset(const std::string& out_dir, const DatasetOptions& opt);

struct PairPaths {
  std::string blur, sharp;
};

// Pairs of a split ("train"/"test"), via manifest.json when present, else a
// directory scan; paths come back joined to root.
std::vector<PairPaths> list_pairs(const std::string& root,
                                  const std::string& split);

Tensor<float> procedural_image(std::int64_t h, std::int64_t w, Rng& rng);

}  // namespace dmphn
