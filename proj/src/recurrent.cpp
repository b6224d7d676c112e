#include "stacktag/recurrent.hpp"

namespace stacktag {

const std::array<SkipVariant, 7>& all_skip_variants() {
  static const std::array<SkipVariant, 7> all = {
      SkipVariant::NoSkip,          SkipVariant::ToGates,
      SkipVariant::ToInternal,      SkipVariant::ToInternalGated,
      SkipVariant::ToOutput,        SkipVariant::ToOutputGated,
      SkipVariant::ToOutputGatedSigmoidMap,
  };
  return all;
}

const char* to_string(SkipVariant v) {
  switch (v) {
    case SkipVariant::NoSkip: return "NoSkip";
    case SkipVariant::ToGates: return "ToGates";
    case SkipVariant::ToInternal: return "ToInternal";
    case SkipVariant::ToInternalGated: return "ToInternalGated";
    case SkipVariant::ToOutput: return "ToOutput";
    case SkipVariant::ToOutputGated: return "ToOutputGated";
    case SkipVariant::ToOutputGatedSigmoidMap: return "ToOutputGatedSigmoidMap";
  }
  return "?";
}

SkipVariant parse_skip_variant(const std::string& name) {
  for (SkipVariant v : all_skip_variants())
    if (name == to_string(v)) return v;
  throw ConfigError("unknown skip variant '" + name + "'");
}

bool is_gated(SkipVariant v) {
  return v == SkipVariant::ToInternalGated || v == SkipVariant::ToOutputGated ||
         v == SkipVariant::ToOutputGatedSigmoidMap;
}

const char* to_string(GateInputs g) {
  return g == GateInputs::PrevAndSkip ? "prev_and_skip" : "below_and_prev";
}

GateInputs parse_gate_inputs(const std::string& name) {
  if (name == "prev_and_skip") return GateInputs::PrevAndSkip;
  if (name == "below_and_prev") return GateInputs::BelowAndPrev;
  throw ConfigError("unknown gate_inputs '" + name + "'");
}

void LayerParams::zero_grads() {
  gW.setZero();
  gb.setZero();
  if (has_gate()) {
    gWg.setZero();
    gUg.setZero();
  }
  if (has_gate_bias()) gbg.setZero();
}

LayerParams make_layer_params(Index input_width, Index hidden, bool gated,
                              bool gate_bias) {
  if (input_width < 1 || hidden < 1)
    throw DimError("make_layer_params: invalid widths " +
                   shape_str(input_width, hidden));
  LayerParams p;
  p.W = Mat::Zero(4 * hidden, input_width + hidden);
  p.b = Mat::Zero(4 * hidden, 1);
  p.gW = Mat::Zero(4 * hidden, input_width + hidden);
  p.gb = Mat::Zero(4 * hidden, 1);
  if (gated) {
    p.Wg = Mat::Zero(hidden, hidden);
    p.Ug = Mat::Zero(hidden, hidden);
    p.gWg = Mat::Zero(hidden, hidden);
    p.gUg = Mat::Zero(hidden, hidden);
    if (gate_bias) {
      p.bg = Mat::Zero(hidden, 1);
      p.gbg = Mat::Zero(hidden, 1);
    }
  }
  return p;
}

namespace {

// The vector paired with h_prev inside the skip gate.
const Vec& gate_partner(const StepCache& cache, GateInputs gate_inputs) {
  return gate_inputs == GateInputs::PrevAndSkip ? cache.skip_in : cache.x;
}

void check_cell_args(const Vec& x, const Vec& h_prev, const Vec& c_prev,
                     const Vec* skip_in, const LayerParams& p,
                     SkipVariant variant, GateInputs gate_inputs) {
  const Index n = p.hidden();
  const Index m = p.input_width();
  if (x.size() != m)
    throw DimError("cell_forward: input width " + std::to_string(x.size()) +
                   ", layer expects " + std::to_string(m));
  if (h_prev.size() != n || c_prev.size() != n)
    throw DimError("cell_forward: state width mismatch");
  if (skip_in) {
    if (variant == SkipVariant::NoSkip)
      throw ConfigError("cell_forward: NoSkip cell given a skip input");
    if (skip_in->size() != n)
      throw DimError("cell_forward: skip width " + std::to_string(skip_in->size()) +
                     ", hidden is " + std::to_string(n));
    if (is_gated(variant)) {
      if (!p.has_gate())
        throw ConfigError(std::string("cell_forward: variant ") + to_string(variant) +
                          " requires gate weights the layer lacks");
      if (gate_inputs == GateInputs::BelowAndPrev && m != n)
        throw DimError("cell_forward: below_and_prev gating needs input width == hidden");
    }
  }
}

}  // namespace

CellOut cell_forward(const Vec& x, const Vec& h_prev, const Vec& c_prev,
                     const Vec* skip_in, const LayerParams& p,
                     SkipVariant variant, GateInputs gate_inputs) {
  check_cell_args(x, h_prev, c_prev, skip_in, p, variant, gate_inputs);
  const Index n = p.hidden();
  const Index m = p.input_width();
  const bool has_skip = skip_in != nullptr;

  Vec xh(m + n);
  xh << x, h_prev;
  Vec a = p.W * xh + p.b.col(0);
  if (has_skip && variant == SkipVariant::ToGates) {
    // fixed identity mapping [I;I;I;I] onto every preactivation block
    for (int k = 0; k < 4; ++k) a.segment(k * n, n) += *skip_in;
  }

  CellOut out;
  StepCache& c = out.cache;
  c.x = x;
  c.h_prev = h_prev;
  c.c_prev = c_prev;
  if (has_skip) c.skip_in = *skip_in;
  c.has_skip = has_skip;
  c.i = sigm(a.segment(0, n));
  c.f = sigm(a.segment(n, n));
  c.o = sigm(a.segment(2 * n, n));
  c.s = tanh_m(a.segment(3 * n, n));

  c.c = c.f.cwiseProduct(c_prev) + c.i.cwiseProduct(c.s);

  if (has_skip && is_gated(variant)) {
    Vec zg = p.Wg * h_prev + p.Ug * gate_partner(c, gate_inputs);
    if (p.has_gate_bias()) zg += p.bg.col(0);
    c.g = sigm(zg);
  }

  switch (variant) {
    case SkipVariant::ToInternal:
      if (has_skip) c.c += *skip_in;
      break;
    case SkipVariant::ToInternalGated:
      if (has_skip) c.c += c.g.cwiseProduct(*skip_in);
      break;
    default:
      break;
  }

  c.tanh_c = tanh_m(c.c);
  c.h = c.o.cwiseProduct(c.tanh_c);

  switch (variant) {
    case SkipVariant::ToOutput:
      if (has_skip) c.h += *skip_in;
      break;
    case SkipVariant::ToOutputGated:
      if (has_skip) c.h += c.g.cwiseProduct(*skip_in);
      break;
    case SkipVariant::ToOutputGatedSigmoidMap:
      if (has_skip) {
        c.sig_skip = sigm(*skip_in);
        c.h += c.g.cwiseProduct(c.sig_skip);
      }
      break;
    default:
      break;
  }

  c.valid = true;
  out.h = c.h;
  out.c = c.c;
  return out;
}

CellGrads cell_backward(const Vec& d_h, const Vec& d_c_in, const StepCache& cache,
                        LayerParams& p, SkipVariant variant,
                        GateInputs gate_inputs) {
  if (!cache.valid) throw Error("cell_backward: cache not produced by cell_forward");
  const Index n = p.hidden();
  const Index m = p.input_width();
  if (d_h.size() != n || d_c_in.size() != n)
    throw DimError("cell_backward: upstream gradient width mismatch");
  const bool has_skip = cache.has_skip;
  const bool gated = has_skip && is_gated(variant);

  CellGrads out;
  Vec d_skip = has_skip ? Vec(Vec::Zero(n)) : Vec();
  Vec d_g = gated ? Vec(Vec::Zero(n)) : Vec();

  // skip terms added to h
  if (has_skip) {
    switch (variant) {
      case SkipVariant::ToOutput:
        d_skip += d_h;  // identity path passes the gradient unchanged
        break;
      case SkipVariant::ToOutputGated:
        d_g += d_h.cwiseProduct(cache.skip_in);
        d_skip += d_h.cwiseProduct(cache.g);
        break;
      case SkipVariant::ToOutputGatedSigmoidMap:
        d_g += d_h.cwiseProduct(cache.sig_skip);
        d_skip += d_h.cwiseProduct(cache.g).cwiseProduct(sigm_d(cache.sig_skip));
        break;
      default:
        break;
    }
  }

  // h = o . tanh(c)
  const Vec d_o = d_h.cwiseProduct(cache.tanh_c);
  Vec d_c = d_c_in + d_h.cwiseProduct(cache.o).cwiseProduct(tanh_d(cache.tanh_c));

  // skip terms added to c
  if (has_skip) {
    if (variant == SkipVariant::ToInternal) {
      d_skip += d_c;
    } else if (variant == SkipVariant::ToInternalGated) {
      d_g += d_c.cwiseProduct(cache.skip_in);
      d_skip += d_c.cwiseProduct(cache.g);
    }
  }

  // c = f . c_prev + i . s
  const Vec d_f = d_c.cwiseProduct(cache.c_prev);
  const Vec d_i = d_c.cwiseProduct(cache.s);
  const Vec d_s = d_c.cwiseProduct(cache.i);
  out.d_c_prev = d_c.cwiseProduct(cache.f);

  Vec da(4 * n);
  da.segment(0, n) = d_i.cwiseProduct(sigm_d(cache.i));
  da.segment(n, n) = d_f.cwiseProduct(sigm_d(cache.f));
  da.segment(2 * n, n) = d_o.cwiseProduct(sigm_d(cache.o));
  da.segment(3 * n, n) = d_s.cwiseProduct(tanh_d(cache.s));

  Vec xh(m + n);
  xh << cache.x, cache.h_prev;
  p.gW.noalias() += da * xh.transpose();
  p.gb.col(0) += da;

  const Vec d_xh = p.W.transpose() * da;
  out.d_x = d_xh.head(m);
  out.d_h_prev = d_xh.tail(n);

  if (has_skip && variant == SkipVariant::ToGates) {
    for (int k = 0; k < 4; ++k) d_skip += da.segment(k * n, n);
  }

  if (gated) {
    const Vec dzg = d_g.cwiseProduct(sigm_d(cache.g));
    p.gWg.noalias() += dzg * cache.h_prev.transpose();
    p.gUg.noalias() += dzg * gate_partner(cache, gate_inputs).transpose();
    if (p.has_gate_bias()) p.gbg.col(0) += dzg;
    out.d_h_prev += p.Wg.transpose() * dzg;
    if (gate_inputs == GateInputs::PrevAndSkip)
      d_skip += p.Ug.transpose() * dzg;
    else
      out.d_x += p.Ug.transpose() * dzg;
  }

  out.d_skip_in = std::move(d_skip);
  return out;
}

LayerForwardOut directional_layer_forward(const Seq& inputs, const Seq* skip_inputs,
                                          const LayerParams& p, SkipVariant variant,
                                          GateInputs gate_inputs, Direction dir) {
  if (inputs.empty()) throw Error("directional_layer_forward: empty sequence");
  if (skip_inputs && skip_inputs->size() != inputs.size())
    throw DimError("directional_layer_forward: skip sequence length " +
                   std::to_string(skip_inputs->size()) + " vs inputs " +
                   std::to_string(inputs.size()));
  const Index n = p.hidden();
  const Index T = static_cast<Index>(inputs.size());

  LayerForwardOut out;
  out.outputs.resize(T);
  out.caches.resize(T);

  Vec h = Vec::Zero(n);
  Vec c = Vec::Zero(n);
  for (Index step = 0; step < T; ++step) {
    const Index t = dir == Direction::Forward ? step : T - 1 - step;
    const Vec* skip = skip_inputs ? &(*skip_inputs)[t] : nullptr;
    CellOut cell = cell_forward(inputs[t], h, c, skip, p, variant, gate_inputs);
    h = cell.h;
    c = cell.c;
    out.outputs[t] = std::move(cell.h);
    out.caches[t] = std::move(cell.cache);
  }
  return out;
}

LayerBackwardOut directional_layer_backward(const Seq& d_outputs,
                                            const std::vector<StepCache>& caches,
                                            LayerParams& p, SkipVariant variant,
                                            GateInputs gate_inputs, Direction dir) {
  const Index T = static_cast<Index>(d_outputs.size());
  if (caches.size() != d_outputs.size() || T == 0)
    throw Error("directional_layer_backward: caches do not match the forward pass");
  const Index n = p.hidden();
  const bool has_skip = caches.front().has_skip;

  LayerBackwardOut out;
  out.d_inputs.resize(T);
  if (has_skip) out.d_skip_inputs.resize(T);

  Vec d_h_carry = Vec::Zero(n);
  Vec d_c_carry = Vec::Zero(n);
  // walk the recurrence in reverse processing order
  for (Index step = T - 1; step >= 0; --step) {
    const Index t = dir == Direction::Forward ? step : T - 1 - step;
    const Vec d_h = d_outputs[t] + d_h_carry;
    CellGrads g = cell_backward(d_h, d_c_carry, caches[t], p, variant, gate_inputs);
    out.d_inputs[t] = std::move(g.d_x);
    if (has_skip) out.d_skip_inputs[t] = std::move(g.d_skip_in);
    d_h_carry = std::move(g.d_h_prev);
    d_c_carry = std::move(g.d_c_prev);
  }
  return out;
}

DirStackOut dir_stack_forward(const Seq& inputs,
                              const std::vector<LayerParams>& layers,
                              SkipVariant variant, GateInputs gate_inputs,
                              Direction dir, const Seq* first_layer_masks) {
  const std::size_t L = layers.size();
  if (L == 0) throw Error("dir_stack_forward: no layers");
  if (first_layer_masks) {
    if (L < 2)
      throw ConfigError("dir_stack_forward: first-layer mask needs at least 2 layers");
    if (first_layer_masks->size() != inputs.size())
      throw DimError("dir_stack_forward: mask length mismatch");
  }

  DirStackOut out;
  out.outputs.resize(L);
  out.caches.resize(L);

  const Seq* below = &inputs;
  for (std::size_t l = 0; l < L; ++l) {
    const Seq* skip = (l >= 2 && variant != SkipVariant::NoSkip) ? &out.outputs[l - 2] : nullptr;
    LayerForwardOut lo = directional_layer_forward(*below, skip, layers[l], variant,
                                                   gate_inputs, dir);
    out.caches[l] = std::move(lo.caches);
    out.outputs[l] = std::move(lo.outputs);
    if (l == 0 && first_layer_masks) {
      for (std::size_t t = 0; t < out.outputs[0].size(); ++t)
        out.outputs[0][t] = out.outputs[0][t].cwiseProduct((*first_layer_masks)[t]);
      out.first_layer_masks = *first_layer_masks;
    }
    below = &out.outputs[l];
  }
  return out;
}

Seq dir_stack_backward(const Seq& d_top, const DirStackOut& fwd,
                       std::vector<LayerParams>& layers, SkipVariant variant,
                       GateInputs gate_inputs, Direction dir) {
  const std::size_t L = layers.size();
  if (fwd.caches.size() != L || L == 0)
    throw Error("dir_stack_backward: caches do not match the layer stack");
  const std::size_t T = d_top.size();
  if (T == 0 || fwd.caches[0].size() != T)
    throw Error("dir_stack_backward: upstream gradient length mismatch");

  // per-layer accumulators for gradients w.r.t. each layer's (consumed) outputs
  std::vector<Seq> d_out(L);
  for (std::size_t l = 0; l + 1 < L; ++l)
    d_out[l].assign(T, Vec::Zero(layers[l].hidden()));
  d_out[L - 1] = d_top;

  Seq d_inputs;
  for (std::size_t li = L; li-- > 0;) {
    Seq d_this = std::move(d_out[li]);
    if (li == 0 && fwd.first_layer_masks.size() == T) {
      // convert gradients w.r.t. masked outputs into raw-output gradients
      for (std::size_t t = 0; t < T; ++t)
        d_this[t] = d_this[t].cwiseProduct(fwd.first_layer_masks[t]);
    }
    LayerBackwardOut lb = directional_layer_backward(d_this, fwd.caches[li], layers[li],
                                                     variant, gate_inputs, dir);
    if (li > 0) {
      for (std::size_t t = 0; t < T; ++t) d_out[li - 1][t] += lb.d_inputs[t];
    } else {
      d_inputs = std::move(lb.d_inputs);
    }
    if (li >= 2 && !lb.d_skip_inputs.empty()) {
      for (std::size_t t = 0; t < T; ++t) d_out[li - 2][t] += lb.d_skip_inputs[t];
    }
  }
  return d_inputs;
}

StackOut stack_forward(const Seq& embedded,
                       const std::vector<LayerParams>& fwd_layers,
                       const std::vector<LayerParams>& bwd_layers,
                       SkipVariant variant, GateInputs gate_inputs,
                       const Seq* fwd_first_masks, const Seq* bwd_first_masks) {
  if (fwd_layers.size() != bwd_layers.size())
    throw DimError("stack_forward: directional stacks differ in depth");
  StackOut out;
  out.fwd = dir_stack_forward(embedded, fwd_layers, variant, gate_inputs,
                              Direction::Forward, fwd_first_masks);
  out.bwd = dir_stack_forward(embedded, bwd_layers, variant, gate_inputs,
                              Direction::Backward, bwd_first_masks);
  return out;
}

Seq stack_backward(const Seq& d_top_fwd, const Seq& d_top_bwd,
                   const StackOut& fwd_out,
                   std::vector<LayerParams>& fwd_layers,
                   std::vector<LayerParams>& bwd_layers, SkipVariant variant,
                   GateInputs gate_inputs) {
  Seq d_embedded = dir_stack_backward(d_top_fwd, fwd_out.fwd, fwd_layers, variant,
                                      gate_inputs, Direction::Forward);
  Seq d_bwd = dir_stack_backward(d_top_bwd, fwd_out.bwd, bwd_layers, variant,
                                 gate_inputs, Direction::Backward);
  for (std::size_t t = 0; t < d_embedded.size(); ++t) d_embedded[t] += d_bwd[t];
  return d_embedded;
}

}  // namespace stacktag
