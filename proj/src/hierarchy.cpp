#include "dmphn/hierarchy.hpp"

#include <algorithm>
#include <cstdlib>

namespace dmphn {

std::string HierarchySpec::pattern() const {
  std::string out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(counts[i]);
  }
  return out;
}

HierarchySpec parse_pattern(const std::string& text) {
  HierarchySpec spec;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t dash = std::min(text.find('-', pos), text.size());
    const std::string tok = text.substr(pos, dash - pos);
    if (tok.empty() || tok.size() > 5 ||
        tok.find_first_not_of("0123456789") != std::string::npos) {
      throw std::invalid_argument("bad pattern '" + text +
                                  "': expected dash-separated integers");
    }
    spec.counts.push_back(std::atoi(tok.c_str()));
    pos = dash + 1;
    if (dash == text.size()) break;
  }
  if (spec.counts.empty() || spec.counts[0] != 1) {
    throw std::invalid_argument("bad pattern '" + text +
                                "': first level must be 1");
  }
  GridDims g;
  bool split_height_next = true;
  for (std::size_t i = 0; i < spec.counts.size(); ++i) {
    if (i > 0) {
      const int prev = spec.counts[i - 1];
      const int cur = spec.counts[i];
      const int ratio = (prev > 0 && cur % prev == 0) ? cur / prev : 0;
      if (ratio == 1) {
        // grid unchanged
      } else if (ratio == 2) {
        (split_height_next ? g.rows : g.cols) *= 2;
        split_height_next = !split_height_next;
      } else if (ratio == 4) {
        g.rows *= 2;
        g.cols *= 2;
      } else {
        throw std::invalid_argument(
            "bad pattern '" + text + "': level ratio must be 1, 2, or 4, got " +
            std::to_string(prev) + " -> " + std::to_string(cur));
      }
    }
    spec.grids.push_back(g);
  }
  return spec;
}

template <typename T>
DmphnModel<T> make_dmphn(const HierarchySpec& spec, const CodecConfig& config,
                         std::uint64_t seed, bool weight_sharing,
                         bool top_residual, std::uint64_t seed_ordinal_base) {
  if (spec.levels() < 1) {
    throw std::invalid_argument("make_dmphn: empty hierarchy spec");
  }
  DmphnModel<T> m;
  m.spec = spec;
  m.weight_sharing = weight_sharing;
  m.top_residual = top_residual;
  const int pairs = weight_sharing ? 1 : spec.levels();
  for (int i = 0; i < pairs; ++i) {
    m.codecs.push_back(
        init_params<T>(config, derive_seed(seed, seed_ordinal_base + i)));
  }
  return m;
}

namespace {

template <typename T>
const std::vector<Tensor<T>>* level_extra(
    const std::vector<std::vector<Tensor<T>>>& per_level, int i) {
  if (i >= static_cast<int>(per_level.size())) return nullptr;
  const auto& v = per_level[static_cast<std::size_t>(i)];
  return v.empty() ? nullptr : &v;
}

}  // namespace

template <typename T>
Tensor<T> forward(const DmphnModel<T>& m, const Tensor<T>& b1,
                  LevelTrace<T>* trace, const LevelExtras<T>* extras) {
  const HierarchySpec& spec = m.spec;
  const int L = spec.levels();
  if (L < 1) throw std::invalid_argument("forward: empty hierarchy spec");
  if (!m.weight_sharing && static_cast<int>(m.codecs.size()) != L) {
    throw std::invalid_argument("forward: " + std::to_string(m.codecs.size()) +
                                " codecs for " + std::to_string(L) +
                                " levels");
  }
  const GridDims fine = spec.grids.back();
  const Shape bs = b1.shape();
  if (bs.h % (fine.rows * 4) != 0 || bs.w % (fine.cols * 4) != 0 ||
      bs.h < fine.rows * 8 || bs.w < fine.cols * 8) {
    throw std::invalid_argument("forward: input " + bs.str() +
                                " not divisible for pattern " +
                                spec.pattern());
  }

  if (trace) {
    trace->B.assign(static_cast<std::size_t>(L), {});
    trace->C.assign(static_cast<std::size_t>(L), {});
    trace->Cstar.assign(static_cast<std::size_t>(L), {});
    trace->S.assign(static_cast<std::size_t>(L), {});
  }

  std::vector<Tensor<T>> s_below, cstar_below;  // from level i+1, per patch j
  Tensor<T> out;
  for (int i = L - 1; i >= 0; --i) {
    const std::size_t li = static_cast<std::size_t>(i);
    const CodecPair<T>& cp = m.codec(i);
    const GridDims grid = spec.grids[li];
    const int count = spec.counts[li];
    std::vector<Tensor<T>> patches = split_grid(b1, grid.rows, grid.cols);

    const std::vector<Tensor<T>>* extra_in =
        extras ? level_extra(extras->add_to_input, i) : nullptr;
    const std::vector<Tensor<T>>* extra_feat =
        extras ? level_extra(extras->add_to_feat, i) : nullptr;
    if ((extra_in && static_cast<int>(extra_in->size()) != count) ||
        (extra_feat && static_cast<int>(extra_feat->size()) != count)) {
      throw std::invalid_argument("forward: extras at level " +
                                  std::to_string(i + 1) +
                                  " do not match patch count");
    }

    std::vector<Tensor<T>> C(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
      const std::size_t lj = static_cast<std::size_t>(j);
      Tensor<T> inp = patches[lj];
      if (i < L - 1) inp = add(inp, s_below[lj]);
      if (extra_in) inp = add(inp, (*extra_in)[lj]);
      Tensor<T> c = encode(cp, inp);
      if (i < L - 1) c = add(c, cstar_below[lj]);
      if (extra_feat) c = add(c, (*extra_feat)[lj]);
      C[lj] = c;
    }

    // concat siblings per parent patch, then decode
    const GridDims pg = (i == 0) ? GridDims{1, 1} : spec.grids[li - 1];
    const int vr = grid.rows / pg.rows;
    const int vc = grid.cols / pg.cols;
    const int parents = pg.rows * pg.cols;
    std::vector<Tensor<T>> cstar(static_cast<std::size_t>(parents));
    std::vector<Tensor<T>> S(static_cast<std::size_t>(parents));
    for (int p = 0; p < parents; ++p) {
      const int pr = p / pg.cols, pc = p % pg.cols;
      std::vector<Tensor<T>> sibs;
      sibs.reserve(static_cast<std::size_t>(vr) * vc);
      for (int dr = 0; dr < vr; ++dr) {
        for (int dc = 0; dc < vc; ++dc) {
          sibs.push_back(
              C[static_cast<std::size_t>((pr * vr + dr) * grid.cols +
                                         pc * vc + dc)]);
        }
      }
      cstar[static_cast<std::size_t>(p)] = concat_grid(sibs, vr, vc);
      S[static_cast<std::size_t>(p)] =
          decode(cp, cstar[static_cast<std::size_t>(p)]);
    }

    if (i == 0) {
      out = m.top_residual ? add(S[0], b1) : S[0];
    }
    if (trace) {
      trace->B[li] = std::move(patches);
      trace->C[li] = std::move(C);
      trace->Cstar[li] = cstar;
      trace->S[li] = S;
    }
    s_below = std::move(S);
    cstar_below = std::move(cstar);
  }
  return out;
}

namespace {
// Reflected source index for out-of-range t (mirror without edge repeat).
std::int64_t fold_index(std::int64_t t, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * n - 2;
  std::int64_t m = t % period;
  return m < n ? m : period - m;
}
}  // namespace

template <typename T>
std::pair<Tensor<T>, CropBox> pad_to_valid(const Tensor<T>& x,
                                           std::int64_t div_h,
                                           std::int64_t div_w,
                                           std::int64_t min_h,
                                           std::int64_t min_w) {
  const Shape s = x.shape();
  const std::int64_t th =
      std::max<std::int64_t>((s.h + div_h - 1) / div_h * div_h, min_h);
  const std::int64_t tw =
      std::max<std::int64_t>((s.w + div_w - 1) / div_w * div_w, min_w);
  const CropBox box{s.h, s.w};
  if (th == s.h && tw == s.w) return {x, box};
  Tensor<T> out({s.n, s.c, th, tw});
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const T* xp = px + nc * s.h * s.w;
    T* op = po + nc * th * tw;
    for (std::int64_t h = 0; h < th; ++h) {
      const T* xrow = xp + fold_index(h, s.h) * s.w;
      for (std::int64_t w = 0; w < tw; ++w) {
        op[h * tw + w] = xrow[fold_index(w, s.w)];
      }
    }
  }
  return {out, box};
}

template <typename T>
std::pair<Tensor<T>, CropBox> pad_to_valid(const Tensor<T>& x,
                                           const HierarchySpec& spec) {
  const GridDims fine = spec.grids.back();
  return pad_to_valid(x, std::int64_t(fine.rows) * 4,
                      std::int64_t(fine.cols) * 4, std::int64_t(fine.rows) * 8,
                      std::int64_t(fine.cols) * 8);
}

template <typename T>
Tensor<T> crop_to(const Tensor<T>& x, const CropBox& box) {
  const Shape s = x.shape();
  if (box.h > s.h || box.w > s.w || box.h < 1 || box.w < 1) {
    throw std::invalid_argument("crop_to: box exceeds tensor " + s.str());
  }
  if (box.h == s.h && box.w == s.w) return x;
  Tensor<T> out({s.n, s.c, box.h, box.w});
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    for (std::int64_t h = 0; h < box.h; ++h) {
      const T* src = px + (nc * s.h + h) * s.w;
      T* dst = po + (nc * box.h + h) * box.w;
      std::copy(src, src + box.w, dst);
    }
  }
  return out;
}

template <typename T>
void for_each_param(
    DmphnModel<T>& m,
    const std::function<void(const std::string&, Tensor<std::type_identity_t<T>>&)>& fn,
    const std::string& prefix) {
  for (std::size_t i = 0; i < m.codecs.size(); ++i) {
    const std::string head =
        prefix + (m.weight_sharing ? "shared" : "l" + std::to_string(i)) + ".";
    for_each_param<T>(m.codecs[i], [&](const std::string& name, Tensor<T>& t) {
      fn(head + name, t);
    });
  }
}

template <typename T>
std::int64_t param_count(const DmphnModel<T>& m) {
  std::int64_t n = 0;
  for (const auto& c : m.codecs) n += param_count(c);
  return n;
}

template <typename T>
std::int64_t param_bytes(const DmphnModel<T>& m) {
  return param_count(m) * static_cast<std::int64_t>(sizeof(T));
}

#define DMPHN_INSTANTIATE(T)                                                  \
  template DmphnModel<T> make_dmphn(const HierarchySpec&, const CodecConfig&, \
                                    std::uint64_t, bool, bool,                \
                                    std::uint64_t);                           \
  template Tensor<T> forward(const DmphnModel<T>&, const Tensor<T>&,          \
                             LevelTrace<T>*, const LevelExtras<T>*);          \
  template std::pair<Tensor<T>, CropBox> pad_to_valid(const Tensor<T>&,       \
                                                      const HierarchySpec&);  \
  template std::pair<Tensor<T>, CropBox> pad_to_valid(                        \
      const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t,             \
      std::int64_t);                                                          \
  template Tensor<T> crop_to(const Tensor<T>&, const CropBox&);               \
  template void for_each_param(                                               \
      DmphnModel<T>&,                                                         \
      const std::function<void(const std::string&, Tensor<T>&)>&,             \
      const std::string&);                                                    \
  template std::int64_t param_count(const DmphnModel<T>&);                    \
  template std::int64_t param_bytes(const DmphnModel<T>&);

DMPHN_INSTANTIATE(float)
DMPHN_INSTANTIATE(double)
#undef DMPHN_INSTANTIATE

}  // namespace dmphn
