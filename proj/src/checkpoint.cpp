#include "dmphn/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace dmphn {

namespace {

constexpr char kMagic[4] = {'D', 'M', 'P', 'N'};
// sanity cap on a single tensor (Table-1 scale models are ~90 MB total)
constexpr std::uint64_t kMaxElems = std::uint64_t(1) << 33;

template <typename U>
void put_le(std::vector<unsigned char>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
}

struct Reader {
  const std::vector<unsigned char>& b;
  std::size_t pos = 0;
  std::size_t end = 0;  // exclusive; excludes the trailing crc

  void need(std::size_t n) const {
    if (end - pos < n) throw std::runtime_error("truncated checkpoint");
  }
  template <typename U>
  U get_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= U(b[pos + i]) << (8 * i);
    }
    pos += sizeof(U);
    return v;
  }
  std::string get_str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b.data() + pos), n);
    pos += n;
    return s;
  }
};

std::size_t dtype_size(std::uint8_t dt) {
  if (dt == 0) return 4;
  if (dt == 1) return 8;
  throw std::runtime_error("checkpoint: unknown dtype " + std::to_string(dt));
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, ckpt.version);

  const std::string meta = ckpt.meta.dump();
  put_le<std::uint64_t>(out, meta.size());
  out.insert(out.end(), meta.begin(), meta.end());

  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("checkpoint: tensor name too long");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(t.dtype);
    out.push_back(static_cast<unsigned char>(t.dims.size()));
    std::uint64_t elems = 1;
    for (const auto d : t.dims) {
      put_le<std::uint64_t>(out, d);
      elems *= d;
    }
    if (t.payload.size() != elems * dtype_size(t.dtype)) {
      throw std::invalid_argument("checkpoint: payload size mismatch for '" +
                                  t.name + "'");
    }
    out.insert(out.end(), t.payload.begin(), t.payload.end());
  }

  const auto crc = crc32(0, out.data() + 4, uInt(out.size() - 4));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(crc));
  return out;
}

Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error("bad magic: not a checkpoint file");
  }
  if (bytes.size() < 8) throw std::runtime_error("truncated checkpoint");

  const std::size_t crc_at = bytes.size() - 4;
  std::uint32_t want = 0;
  for (int i = 0; i < 4; ++i) want |= std::uint32_t(bytes[crc_at + i]) << (8 * i);
  const auto got = crc32(0, bytes.data() + 4, uInt(crc_at - 4));
  if (static_cast<std::uint32_t>(got) != want) {
    throw std::runtime_error("checkpoint checksum mismatch");
  }

  Reader r{bytes, 4, crc_at};
  Checkpoint ckpt;
  ckpt.version = r.get_le<std::uint32_t>();
  if (ckpt.version != 1) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(ckpt.version));
  }

  const auto meta_len = r.get_le<std::uint64_t>();
  if (meta_len > r.end - r.pos) throw std::runtime_error("truncated checkpoint");
  const std::string meta = r.get_str(static_cast<std::size_t>(meta_len));
  try {
    ckpt.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception&) {
    throw std::runtime_error("checkpoint: bad metadata JSON");
  }

  const auto count = r.get_le<std::uint32_t>();
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get_le<std::uint16_t>();
    t.name = r.get_str(name_len);
    t.dtype = r.get_le<std::uint8_t>();
    const auto ndim = r.get_le<std::uint8_t>();
    std::uint64_t elems = 1;
    for (int d = 0; d < ndim; ++d) {
      const auto dim = r.get_le<std::uint64_t>();
      if (dim != 0 && elems > kMaxElems / dim) {
        throw std::runtime_error("checkpoint dimension overflow in '" +
                                 t.name + "'");
      }
      elems *= dim;
      t.dims.push_back(dim);
    }
    const std::uint64_t nbytes = elems * dtype_size(t.dtype);
    r.need(static_cast<std::size_t>(nbytes));
    t.payload.assign(bytes.begin() + std::ptrdiff_t(r.pos),
                     bytes.begin() + std::ptrdiff_t(r.pos + nbytes));
    r.pos += static_cast<std::size_t>(nbytes);
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.pos != r.end) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

template <typename T>
NamedTensor pack_tensor(const std::string& name, const Tensor<T>& t) {
  NamedTensor nt;
  nt.name = name;
  nt.dtype = std::is_same_v<T, float> ? 0 : 1;
  const auto s = t.shape();
  nt.dims = {std::uint64_t(s.n), std::uint64_t(s.c), std::uint64_t(s.h),
             std::uint64_t(s.w)};
  nt.payload.resize(static_cast<std::size_t>(t.numel()) * sizeof(T));
  std::memcpy(nt.payload.data(), t.data(), nt.payload.size());
  return nt;
}

template <typename T>
Tensor<T> unpack_tensor(const NamedTensor& nt) {
  const std::uint8_t want = std::is_same_v<T, float> ? 0 : 1;
  if (nt.dtype != want) {
    throw std::runtime_error("checkpoint: dtype mismatch for '" + nt.name + "'");
  }
  if (nt.dims.size() != 4) {
    throw std::runtime_error("checkpoint: expected 4-d tensor '" + nt.name + "'");
  }
  const Shape s{std::int64_t(nt.dims[0]), std::int64_t(nt.dims[1]),
                std::int64_t(nt.dims[2]), std::int64_t(nt.dims[3])};
  Tensor<T> t(s);
  if (nt.payload.size() != static_cast<std::size_t>(t.numel()) * sizeof(T)) {
    throw std::runtime_error("checkpoint: payload size mismatch for '" +
                             nt.name + "'");
  }
  std::memcpy(t.data(), nt.payload.data(), nt.payload.size());
  return t;
}

template NamedTensor pack_tensor(const std::string&, const Tensor<float>&);
template NamedTensor pack_tensor(const std::string&, const Tensor<double>&);
template Tensor<float> unpack_tensor(const NamedTensor&);
template Tensor<double> unpack_tensor(const NamedTensor&);

}  // namespace dmphn
