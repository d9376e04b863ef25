#include "dmphn/stacking.hpp"

namespace dmphn {

namespace {

// Features a finished unit hands to the next one: its S and C* from level
// i+1 enter level i of the successor, the same slots the intra-unit pass
// uses. The bottom level receives nothing (the predecessor has no level
// below its bottom).
template <typename T>
LevelExtras<T> stack_connection(const LevelTrace<T>& prev) {
  LevelExtras<T> e;
  const std::size_t L = prev.S.size();
  e.add_to_input.resize(L);
  e.add_to_feat.resize(L);
  for (std::size_t i = 0; i + 1 < L; ++i) {
    e.add_to_input[i] = prev.S[i + 1];
    e.add_to_feat[i] = prev.Cstar[i + 1];
  }
  return e;
}

// Elementwise-add two extras (down-arm features plus cross-unit features).
template <typename T>
std::vector<std::vector<Tensor<T>>> merge_extra(
    const std::vector<std::vector<Tensor<T>>>& a,
    const std::vector<std::vector<Tensor<T>>>& b) {
  std::vector<std::vector<Tensor<T>>> out(std::max(a.size(), b.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto* av = i < a.size() && !a[i].empty() ? &a[i] : nullptr;
    const auto* bv = i < b.size() && !b[i].empty() ? &b[i] : nullptr;
    if (av && bv) {
      out[i].reserve(av->size());
      for (std::size_t j = 0; j < av->size(); ++j) {
        out[i].push_back(add((*av)[j], (*bv)[j]));
      }
    } else if (av) {
      out[i] = *av;
    } else if (bv) {
      out[i] = *bv;
    }
  }
  return out;
}

}  // namespace

template <typename T>
StackModel<T> make_stack(StackKind kind, const HierarchySpec& spec,
                         const CodecConfig& config, std::uint64_t seed,
                         int stack_n, bool weight_sharing, bool top_residual) {
  if (stack_n < 1) {
    throw std::invalid_argument("make_stack: stack size must be >= 1");
  }
  if (kind == StackKind::vmphn && stack_n != 1) {
    throw std::invalid_argument("make_stack: vmphn is a single unit");
  }
  StackModel<T> m;
  m.kind = kind;
  m.spec = spec;
  const std::uint64_t L = static_cast<std::uint64_t>(spec.levels());
  if (kind == StackKind::stack_dmphn) {
    for (int u = 0; u < stack_n; ++u) {
      m.dmphn_units.push_back(make_dmphn<T>(spec, config, seed, weight_sharing,
                                            top_residual, u * L));
    }
  } else {
    for (int u = 0; u < stack_n; ++u) {
      VmphnUnit<T> unit;
      unit.down = make_dmphn<T>(spec, config, seed, weight_sharing,
                                top_residual, 2 * u * L);
      unit.up = make_dmphn<T>(spec, config, seed, weight_sharing, top_residual,
                              2 * u * L + L);
      m.vmphn_units.push_back(std::move(unit));
    }
  }
  return m;
}

template <typename T>
Tensor<T> vmphn_forward(const VmphnUnit<T>& unit, const Tensor<T>& b1,
                        LevelTrace<T>* down_trace, LevelTrace<T>* up_trace,
                        const LevelExtras<T>* up_extras) {
  const HierarchySpec& spec = unit.down.spec;
  const int L = spec.levels();

  // Downward arm: start from the whole image, split progressively. Each
  // patch inherits its parent's decoded residual (added to the input) and
  // feature slice (added after encoding); no sibling concat on the way down.
  LevelTrace<T> down;
  down.B.resize(static_cast<std::size_t>(L));
  down.C.resize(static_cast<std::size_t>(L));
  down.S.resize(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) {
    const std::size_t li = static_cast<std::size_t>(i);
    const CodecPair<T>& cp = unit.down.codec(i);
    const GridDims grid = spec.grids[li];
    down.B[li] = split_grid(b1, grid.rows, grid.cols);
    const int count = spec.counts[li];
    down.C[li].resize(static_cast<std::size_t>(count));
    down.S[li].resize(static_cast<std::size_t>(count));
    if (i == 0) {
      down.C[0][0] = encode(cp, down.B[0][0]);
      down.S[0][0] = decode(cp, down.C[0][0]);
      continue;
    }
    const GridDims pg = spec.grids[li - 1];
    const int vr = grid.rows / pg.rows;
    const int vc = grid.cols / pg.cols;
    for (int p = 0; p < pg.rows * pg.cols; ++p) {
      const int pr = p / pg.cols, pc = p % pg.cols;
      const auto s_pieces =
          split_grid(down.S[li - 1][static_cast<std::size_t>(p)], vr, vc);
      const auto c_pieces =
          split_grid(down.C[li - 1][static_cast<std::size_t>(p)], vr, vc);
      for (int dr = 0; dr < vr; ++dr) {
        for (int dc = 0; dc < vc; ++dc) {
          const std::size_t j = static_cast<std::size_t>(
              (pr * vr + dr) * grid.cols + pc * vc + dc);
          const std::size_t piece = static_cast<std::size_t>(dr * vc + dc);
          Tensor<T> inp = add(down.B[li][j], s_pieces[piece]);
          down.C[li][j] = add(encode(cp, inp), c_pieces[piece]);
          down.S[li][j] = decode(cp, down.C[li][j]);
        }
      }
    }
  }

  // Upward arm: a standard bottom-to-top pass that additionally receives the
  // down arm's per-patch residuals and features at every level.
  LevelExtras<T> extras;
  extras.add_to_input = down.S;
  extras.add_to_feat = down.C;
  if (up_extras) {
    extras.add_to_input = merge_extra(extras.add_to_input,
                                      up_extras->add_to_input);
    extras.add_to_feat = merge_extra(extras.add_to_feat, up_extras->add_to_feat);
  }
  Tensor<T> out = forward(unit.up, b1, up_trace, &extras);
  if (down_trace) *down_trace = std::move(down);
  return out;
}

template <typename T>
std::vector<Tensor<T>> stack_forward(const StackModel<T>& m,
                                     const Tensor<T>& b1,
                                     StackTrace<T>* trace) {
  const int N = m.num_units();
  if (N < 1) throw std::invalid_argument("stack_forward: empty stack");
  std::vector<Tensor<T>> outputs;
  outputs.reserve(static_cast<std::size_t>(N));
  Tensor<T> input = b1;
  LevelTrace<T> prev;
  for (int u = 0; u < N; ++u) {
    LevelTrace<T> unit_trace;
    LevelTrace<T> down_trace;
    LevelExtras<T> extras;
    const LevelExtras<T>* ep = nullptr;
    if (u > 0) {
      extras = stack_connection(prev);
      ep = &extras;
    }
    const auto ui = static_cast<std::size_t>(u);
    Tensor<T> out = (m.kind == StackKind::stack_dmphn)
                        ? forward(m.dmphn_units[ui], input, &unit_trace, ep)
                        : vmphn_forward(m.vmphn_units[ui], input, &down_trace,
                                        &unit_trace, ep);
    outputs.push_back(out);
    input = out;
    if (trace) {
      trace->units.push_back(unit_trace);
      if (m.kind != StackKind::stack_dmphn) {
        trace->down_units.push_back(std::move(down_trace));
      }
      trace->outputs.push_back(out);
    }
    prev = std::move(unit_trace);
  }
  return outputs;
}

template <typename T>
Tensor<T> stacked_loss(const std::vector<Tensor<T>>& outputs,
                       const Tensor<T>& g) {
  if (outputs.empty()) {
    throw std::invalid_argument("stacked_loss: no outputs");
  }
  Tensor<T> total = mse_half(outputs[0], g);
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    total = add(total, mse_half(outputs[i], g));
  }
  return total;
}

template <typename T>
void for_each_param(
    StackModel<T>& m,
    const std::function<void(const std::string&, Tensor<std::type_identity_t<T>>&)>& fn) {
  if (m.kind == StackKind::stack_dmphn) {
    for (std::size_t u = 0; u < m.dmphn_units.size(); ++u) {
      for_each_param(m.dmphn_units[u], fn, "u" + std::to_string(u) + ".");
    }
  } else {
    for (std::size_t u = 0; u < m.vmphn_units.size(); ++u) {
      const std::string head = "u" + std::to_string(u) + ".";
      for_each_param(m.vmphn_units[u].down, fn, head + "down.");
      for_each_param(m.vmphn_units[u].up, fn, head + "up.");
    }
  }
}

template <typename T>
std::int64_t param_count(const StackModel<T>& m) {
  std::int64_t n = 0;
  for (const auto& u : m.dmphn_units) n += param_count(u);
  for (const auto& u : m.vmphn_units) {
    n += param_count(u.down) + param_count(u.up);
  }
  return n;
}

template <typename T>
std::int64_t param_bytes(const StackModel<T>& m) {
  return param_count(m) * static_cast<std::int64_t>(sizeof(T));
}

#define DMPHN_INSTANTIATE(T)                                                   \
  template StackModel<T> make_stack(StackKind, const HierarchySpec&,           \
                                    const CodecConfig&, std::uint64_t, int,    \
                                    bool, bool);                               \
  template Tensor<T> vmphn_forward(const VmphnUnit<T>&, const Tensor<T>&,      \
                                   LevelTrace<T>*, LevelTrace<T>*,             \
                                   const LevelExtras<T>*);                     \
  template std::vector<Tensor<T>> stack_forward(const StackModel<T>&,          \
                                                const Tensor<T>&,              \
                                                StackTrace<T>*);               \
  template Tensor<T> stacked_loss(const std::vector<Tensor<T>>&,               \
                                  const Tensor<T>&);                           \
  template void for_each_param(                                                \
      StackModel<T>&,                                                          \
      const std::function<void(const std::string&, Tensor<T>&)>&);             \
  template std::int64_t param_count(const StackModel<T>&);                     \
  template std::int64_t param_bytes(const StackModel<T>&);

DMPHN_INSTANTIATE(float)
DMPHN_INSTANTIATE(double)
#undef DMPHN_INSTANTIATE

}  // namespace dmphn
