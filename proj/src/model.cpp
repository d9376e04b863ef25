#include "dmphn/model.hpp"

#include <stdexcept>

namespace dmphn {

const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::dmphn: return "dmphn";
    case ModelKind::stack_dmphn: return "stack-dmphn";
    case ModelKind::vmphn: return "vmphn";
    case ModelKind::stack_vmphn: return "stack-vmphn";
    case ModelKind::dmsn: return "dmsn";
  }
  throw std::logic_error("kind_name: bad enum");
}

ModelKind parse_kind(const std::string& name) {
  if (name == "dmphn") return ModelKind::dmphn;
  if (name == "stack-dmphn") return ModelKind::stack_dmphn;
  if (name == "vmphn") return ModelKind::vmphn;
  if (name == "stack-vmphn") return ModelKind::stack_vmphn;
  if (name == "dmsn") return ModelKind::dmsn;
  throw std::invalid_argument(
      "unknown model kind '" + name +
      "' (expected dmphn, stack-dmphn, vmphn, stack-vmphn or dmsn)");
}

template <typename T>
AnyModel<T> make_any_model(ModelKind kind, const std::string& pattern,
                           int stack_n, int scales, const CodecConfig& config,
                           std::uint64_t seed, bool weight_sharing,
                           bool top_residual) {
  AnyModel<T> m;
  m.kind = kind;
  m.stack_n = stack_n;
  m.scales = scales;
  m.weight_sharing = weight_sharing;
  m.top_residual = top_residual;
  m.config = config;
  m.seed = seed;

  const bool stacked =
      kind == ModelKind::stack_dmphn || kind == ModelKind::stack_vmphn;
  if (!stacked && kind != ModelKind::dmsn && stack_n != 1) {
    throw std::invalid_argument(std::string(kind_name(kind)) +
                                " does not take a stack size");
  }
  if (kind != ModelKind::dmsn && scales != 1) {
    throw std::invalid_argument("scales applies to dmsn only");
  }

  switch (kind) {
    case ModelKind::dmphn:
      m.spec = parse_pattern(pattern);
      m.dmphn = make_dmphn<T>(m.spec, config, seed, weight_sharing,
                              top_residual);
      break;
    case ModelKind::stack_dmphn:
      m.spec = parse_pattern(pattern);
      m.stack = make_stack<T>(StackKind::stack_dmphn, m.spec, config, seed,
                              stack_n, weight_sharing, top_residual);
      break;
    case ModelKind::vmphn:
      m.spec = parse_pattern(pattern);
      m.stack = make_stack<T>(StackKind::vmphn, m.spec, config, seed, 1,
                              weight_sharing, top_residual);
      break;
    case ModelKind::stack_vmphn:
      m.spec = parse_pattern(pattern);
      m.stack = make_stack<T>(StackKind::stack_vmphn, m.spec, config, seed,
                              stack_n, weight_sharing, top_residual);
      break;
    case ModelKind::dmsn:
      if (weight_sharing) {
        throw std::invalid_argument("dmsn does not support weight sharing");
      }
      if (stack_n != 1) {
        throw std::invalid_argument("dmsn does not take a stack size");
      }
      m.dmsn = make_dmsn<T>(scales, config, seed);
      m.dmsn->top_residual = top_residual;
      break;
  }
  return m;
}

template <typename T>
std::vector<Tensor<T>> model_outputs(const AnyModel<T>& m,
                                     const Tensor<T>& b1) {
  switch (m.kind) {
    case ModelKind::dmphn:
      return {forward(*m.dmphn, b1)};
    case ModelKind::stack_dmphn:
    case ModelKind::vmphn:
    case ModelKind::stack_vmphn:
      return stack_forward(*m.stack, b1);
    case ModelKind::dmsn:
      return {dmsn_forward(*m.dmsn, b1)};
  }
  throw std::logic_error("model_outputs: bad enum");
}

template <typename T>
Tensor<T> model_forward(const AnyModel<T>& m, const Tensor<T>& b1) {
  auto outs = model_outputs(m, b1);
  return outs.back();
}

template <typename T>
void for_each_param(
    AnyModel<T>& m,
    const std::function<void(const std::string&,
                             Tensor<std::type_identity_t<T>>&)>& fn) {
  if (m.dmphn) {
    for_each_param<T>(*m.dmphn, fn);
  } else if (m.stack) {
    for_each_param<T>(*m.stack, fn);
  } else {
    for_each_param<T>(*m.dmsn, fn);
  }
}

template <typename T>
std::int64_t param_count(const AnyModel<T>& m) {
  if (m.dmphn) return param_count(*m.dmphn);
  if (m.stack) return param_count(*m.stack);
  return param_count(*m.dmsn);
}

template <typename T>
std::int64_t param_bytes(const AnyModel<T>& m) {
  if (m.dmphn) return param_bytes(*m.dmphn);
  if (m.stack) return param_bytes(*m.stack);
  return param_bytes(*m.dmsn);
}

template <typename T>
InputGeometry input_geometry(const AnyModel<T>& m) {
  InputGeometry g;
  if (m.kind == ModelKind::dmsn) {
    // Each extra scale halves the input once; the coarsest grid still must
    // pass through the codec's two stride-2 stages.
    const std::int64_t d = std::int64_t(4) << (m.scales - 1);
    g.div_h = g.div_w = d;
    g.min_h = g.min_w = 2 * d;
  } else {
    const GridDims fine = m.spec.grids.back();
    g.div_h = fine.rows * 4;
    g.div_w = fine.cols * 4;
    g.min_h = fine.rows * 8;
    g.min_w = fine.cols * 8;
  }
  return g;
}

namespace {

// Per-level FLOPs of one bottom-to-top (or top-to-bottom) arm. The standard
// arm decodes once per parent patch (sibling features are concatenated
// first); the v-model's downward arm decodes every patch separately.
template <typename T>
std::vector<std::int64_t> arm_level_flops(const DmphnModel<T>& arm,
                                          std::int64_t H, std::int64_t W,
                                          bool per_patch_decode) {
  const HierarchySpec& spec = arm.spec;
  std::vector<std::int64_t> out(std::size_t(spec.levels()), 0);
  for (int i = 0; i < spec.levels(); ++i) {
    const std::size_t li = std::size_t(i);
    const GridDims g = spec.grids[li];
    const std::int64_t ph = H / g.rows, pw = W / g.cols;
    out[li] += spec.counts[li] * conv_chain_flops(arm.codec(i).enc, ph, pw);
    if (per_patch_decode) {
      out[li] +=
          spec.counts[li] * conv_chain_flops(arm.codec(i).dec, ph / 4, pw / 4);
    } else {
      const GridDims pg = i == 0 ? GridDims{1, 1} : spec.grids[li - 1];
      const int pcount = i == 0 ? 1 : spec.counts[li - 1];
      out[li] += pcount * conv_chain_flops(arm.codec(i).dec, H / pg.rows / 4,
                                           W / pg.cols / 4);
    }
  }
  return out;
}

void add_into(std::vector<std::int64_t>& acc,
              const std::vector<std::int64_t>& inc) {
  if (acc.empty()) acc.assign(inc.size(), 0);
  for (std::size_t i = 0; i < inc.size(); ++i) acc[i] += inc[i];
}

}  // namespace

template <typename T>
std::vector<std::int64_t> level_flops(const AnyModel<T>& m, std::int64_t h,
                                      std::int64_t w) {
  std::vector<std::int64_t> out;
  switch (m.kind) {
    case ModelKind::dmphn:
      out = arm_level_flops(*m.dmphn, h, w, false);
      break;
    case ModelKind::stack_dmphn:
      for (const auto& u : m.stack->dmphn_units) {
        add_into(out, arm_level_flops(u, h, w, false));
      }
      break;
    case ModelKind::vmphn:
    case ModelKind::stack_vmphn:
      for (const auto& u : m.stack->vmphn_units) {
        add_into(out, arm_level_flops(u.down, h, w, true));
        add_into(out, arm_level_flops(u.up, h, w, false));
      }
      break;
    case ModelKind::dmsn:
      for (int s = 0; s < m.scales; ++s) {
        const std::int64_t sh = h >> s, sw = w >> s;
        const auto& pair = m.dmsn->codecs[std::size_t(s)];
        out.push_back(conv_chain_flops(pair.enc, sh, sw) +
                      conv_chain_flops(pair.dec, sh / 4, sw / 4));
      }
      break;
  }
  return out;
}

template <typename T>
std::int64_t model_flops(const AnyModel<T>& m, std::int64_t h, std::int64_t w) {
  std::int64_t total = 0;
  for (const auto f : level_flops(m, h, w)) total += f;
  return total;
}

nlohmann::json config_to_json(const CodecConfig& c) {
  return nlohmann::json{{"base_channels", c.base_channels},
                        {"stage_channels", c.stage_channels},
                        {"res_blocks_per_stage", c.res_blocks_per_stage},
                        {"kernel_size", c.kernel_size},
                        {"in_channels", c.in_channels},
                        {"out_channels", c.out_channels}};
}

CodecConfig config_from_json(const nlohmann::json& j) {
  CodecConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  const auto sc = j.at("stage_channels");
  if (!sc.is_array() || sc.size() != 3) {
    throw std::runtime_error("config: stage_channels must have 3 entries");
  }
  for (int i = 0; i < 3; ++i) c.stage_channels[std::size_t(i)] = sc[std::size_t(i)].get<int>();
  c.res_blocks_per_stage = j.at("res_blocks_per_stage").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  return c;
}

template <typename T>
Checkpoint model_to_checkpoint(const AnyModel<T>& m,
                               const nlohmann::json& extra) {
  Checkpoint ckpt;
  ckpt.meta = extra.is_null() ? nlohmann::json::object() : extra;
  ckpt.meta["model"] = {
      {"kind", kind_name(m.kind)},
      {"pattern", m.kind == ModelKind::dmsn ? "" : m.spec.pattern()},
      {"stack_n", m.stack_n},
      {"scales", m.scales},
      {"weight_sharing", m.weight_sharing},
      {"top_residual", m.top_residual},
      {"config", config_to_json(m.config)},
      {"seed", m.seed},
      {"dtype", std::is_same_v<T, float> ? "f32" : "f64"},
  };
  auto& mut = const_cast<AnyModel<T>&>(m);
  for_each_param<T>(mut, [&](const std::string& name, Tensor<T>& t) {
    ckpt.tensors.push_back(pack_tensor(name, t));
  });
  return ckpt;
}

template <typename T>
AnyModel<T> model_from_checkpoint(const Checkpoint& ckpt) {
  const auto& j = ckpt.meta.at("model");
  const std::string dtype = j.at("dtype").get<std::string>();
  const std::string want = std::is_same_v<T, float> ? "f32" : "f64";
  if (dtype != want) {
    throw std::runtime_error("checkpoint holds " + dtype + " params, not " +
                             want);
  }
  AnyModel<T> m = make_any_model<T>(
      parse_kind(j.at("kind").get<std::string>()),
      j.at("pattern").get<std::string>(), j.at("stack_n").get<int>(),
      j.at("scales").get<int>(), config_from_json(j.at("config")),
      j.at("seed").get<std::uint64_t>(), j.at("weight_sharing").get<bool>(),
      j.at("top_residual").get<bool>());
  load_params(m, ckpt);
  return m;
}

template <typename T>
void load_params(AnyModel<T>& m, const Checkpoint& ckpt) {
  for_each_param<T>(m, [&](const std::string& name, Tensor<T>& t) {
    const NamedTensor* nt = ckpt.find(name);
    if (!nt) {
      throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
    }
    Tensor<T> loaded = unpack_tensor<T>(*nt);
    if (!(loaded.shape() == t.shape())) {
      throw std::runtime_error("checkpoint shape mismatch for '" + name + "'");
    }
    t = std::move(loaded);
  });
}

#define DMPHN_INSTANTIATE(T)                                                   \
  template AnyModel<T> make_any_model(ModelKind, const std::string&, int, int, \
                                      const CodecConfig&, std::uint64_t, bool, \
                                      bool);                                   \
  template std::vector<Tensor<T>> model_outputs(const AnyModel<T>&,            \
                                                const Tensor<T>&);             \
  template Tensor<T> model_forward(const AnyModel<T>&, const Tensor<T>&);      \
  template void for_each_param(                                                \
      AnyModel<T>&,                                                            \
      const std::function<void(const std::string&, Tensor<T>&)>&);             \
  template std::int64_t param_count(const AnyModel<T>&);                       \
  template std::int64_t param_bytes(const AnyModel<T>&);                       \
  template InputGeometry input_geometry(const AnyModel<T>&);                   \
  template std::vector<std::int64_t> level_flops(const AnyModel<T>&,           \
                                                 std::int64_t, std::int64_t);  \
  template std::int64_t model_flops(const AnyModel<T>&, std::int64_t,          \
                                    std::int64_t);                             \
  template Checkpoint model_to_checkpoint(const AnyModel<T>&,                  \
                                          const nlohmann::json&);              \
  template AnyModel<T> model_from_checkpoint(const Checkpoint&);               \
  template void load_params(AnyModel<T>&, const Checkpoint&);

DMPHN_INSTANTIATE(float)
DMPHN_INSTANTIATE(double)
#undef DMPHN_INSTANTIATE

}  // namespace dmphn
