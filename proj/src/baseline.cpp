#include "dmphn/baseline.hpp"

#include "dmphn/hierarchy.hpp"

namespace dmphn {

template <typename T>
DmsnModel<T> make_dmsn(int num_scales, const CodecConfig& config,
                       std::uint64_t seed) {
  if (num_scales < 1 || num_scales > 3) {
    throw std::invalid_argument("make_dmsn: scales must be 1..3");
  }
  DmsnModel<T> m;
  m.num_scales = num_scales;
  for (int s = 0; s < num_scales; ++s) {
    m.codecs.push_back(init_params<T>(config, derive_seed(seed, s)));
  }
  return m;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, double factor) {
  if (factor == 0.5) return downsample2x(x);
  if (factor == 2.0) return upsample2x(x);
  throw std::invalid_argument("resize_bilinear: factor must be 0.5 or 2");
}

template <typename T>
Tensor<T> dmsn_forward(const DmsnModel<T>& m, const Tensor<T>& b1,
                       DmsnTrace<T>* trace) {
  const int k = m.num_scales;
  if (static_cast<int>(m.codecs.size()) != k) {
    throw std::invalid_argument("dmsn_forward: codec count mismatch");
  }
  const Shape s = b1.shape();
  const std::int64_t div = 4ll << (k - 1);
  if (s.h % div != 0 || s.w % div != 0 || s.h < 2 * div || s.w < 2 * div) {
    throw std::invalid_argument("dmsn_forward: input " + s.str() +
                                " not divisible by " + std::to_string(div));
  }

  std::vector<Tensor<T>> inputs(static_cast<std::size_t>(k));
  inputs[0] = b1;
  for (int i = 1; i < k; ++i) {
    inputs[static_cast<std::size_t>(i)] =
        downsample2x(inputs[static_cast<std::size_t>(i - 1)]);
  }

  if (trace) {
    trace->inputs = inputs;
    trace->C.resize(static_cast<std::size_t>(k));
    trace->S.resize(static_cast<std::size_t>(k));
  }

  Tensor<T> s_coarse, c_coarse;
  Tensor<T> out;
  for (int i = k - 1; i >= 0; --i) {
    const std::size_t si = static_cast<std::size_t>(i);
    const CodecPair<T>& cp = m.codecs[si];
    Tensor<T> inp = inputs[si];
    if (i < k - 1) inp = add(inp, upsample2x(s_coarse));
    Tensor<T> c = encode(cp, inp);
    if (i < k - 1) c = add(c, upsample2x(c_coarse));
    Tensor<T> dec = decode(cp, c);
    if (trace) {
      trace->C[si] = c;
      trace->S[si] = dec;
    }
    s_coarse = dec;
    c_coarse = c;
  }
  out = m.top_residual ? add(s_coarse, b1) : s_coarse;
  return out;
}

template <typename T>
void for_each_param(
    DmsnModel<T>& m,
    const std::function<void(const std::string&, Tensor<std::type_identity_t<T>>&)>& fn) {
  for (std::size_t i = 0; i < m.codecs.size(); ++i) {
    const std::string head = "s" + std::to_string(i) + ".";
    for_each_param<T>(m.codecs[i], [&](const std::string& name, Tensor<T>& t) {
      fn(head + name, t);
    });
  }
}

template <typename T>
std::int64_t param_count(const DmsnModel<T>& m) {
  std::int64_t n = 0;
  for (const auto& c : m.codecs) n += param_count(c);
  return n;
}

template <typename T>
std::int64_t param_bytes(const DmsnModel<T>& m) {
  return param_count(m) * static_cast<std::int64_t>(sizeof(T));
}

#define DMPHN_INSTANTIATE(T)                                             \
  template DmsnModel<T> make_dmsn(int, const CodecConfig&,               \
                                  std::uint64_t);                        \
  template Tensor<T> resize_bilinear(const Tensor<T>&, double);          \
  template Tensor<T> dmsn_forward(const DmsnModel<T>&, const Tensor<T>&, \
                                  DmsnTrace<T>*);                        \
  template void for_each_param(                                          \
      DmsnModel<T>&,                                                     \
      const std::function<void(const std::string&, Tensor<T>&)>&);       \
  template std::int64_t param_count(const DmsnModel<T>&);                \
  template std::int64_t param_bytes(const DmsnModel<T>&);

DMPHN_INSTANTIATE(float)
DMPHN_INSTANTIATE(double)
#undef DMPHN_INSTANTIATE

}  // namespace dmphn
