#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmphn/tensor.hpp"

namespace dmphn {

// Binary checkpoint container, little-endian throughout:
//   magic "DMPN" | u32 version | u64 metadata length | JSON metadata |
//   u32 tensor count | per tensor: u16 name length, name, u8 dtype,
//   u8 ndim, ndim x u64 dims, raw payload | trailing u32 CRC32 of
//   everything after the magic.

struct NamedTensor {
  std::string name;
  std::uint8_t dtype = 0;  // 0 = f32, 1 = f64
  std::vector<std::uint64_t> dims;
  std::vector<unsigned char> payload;
};

struct Checkpoint {
  std::uint32_t version = 1;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);
// Distinct errors: "bad magic", "unsupported checkpoint version",
// "truncated checkpoint", "checkpoint dimension overflow",
// "checkpoint checksum mismatch".
Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

template <typename T>
NamedTensor pack_tensor(const std::string& name, const Tensor<T>& t);
template <typename T>
Tensor<T> unpack_tensor(const NamedTensor& nt);  // throws on dtype/rank issues

}  // namespace dmphn
