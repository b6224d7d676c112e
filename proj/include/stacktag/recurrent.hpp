#pragma once

#include "stacktag/numerics.hpp"

#include <array>
#include <vector>

namespace stacktag {

// Cell wiring options for the skip path from layer l-2 into layer l.
enum class SkipVariant {
  NoSkip,
  ToGates,
  ToInternal,
  ToInternalGated,
  ToOutput,
  ToOutputGated,
  ToOutputGatedSigmoidMap,
};

const std::array<SkipVariant, 7>& all_skip_variants();
const char* to_string(SkipVariant v);
SkipVariant parse_skip_variant(const std::string& name);
bool is_gated(SkipVariant v);

// Inputs feeding the skip gate g: the previous hidden state paired with
// either the skip source (default) or the layer input from below.
enum class GateInputs { PrevAndSkip, BelowAndPrev };

const char* to_string(GateInputs g);
GateInputs parse_gate_inputs(const std::string& name);

struct LayerParams {
  Mat W;       // [4n x (m+n)], fused i/f/o/s blocks over [x; h_prev]
  Mat b;       // [4n x 1]
  Mat Wg, Ug;  // [n x n] skip-gate weights; 0x0 on ungated layers
  Mat bg;      // [n x 1] optional skip-gate bias; 0x0 when disabled

  Mat gW, gb, gWg, gUg, gbg;  // paired gradient accumulators

  Index hidden() const { return W.rows() / 4; }
  Index input_width() const { return W.cols() - hidden(); }
  bool has_gate() const { return Wg.size() > 0; }
  bool has_gate_bias() const { return bg.size() > 0; }
  void zero_grads();
};

// Zero-valued parameters and gradient buffers of the right shapes.
LayerParams make_layer_params(Index input_width, Index hidden, bool gated,
                              bool gate_bias);

struct StepCache {
  Vec x, h_prev, c_prev;
  Vec skip_in;     // size 0 when the step had no skip input
  Vec i, f, o, s;  // activated gate / candidate values
  Vec c, tanh_c;
  Vec g;         // skip gate output; size 0 when inactive
  Vec sig_skip;  // sigm(skip_in), sigmoid-mapped variant only
  Vec h;
  bool has_skip = false;
  bool valid = false;
};

struct CellOut {
  Vec h, c;
  StepCache cache;
};

// One LSTM step. skip_in must be non-null exactly when the layer has a skip
// source and the variant uses one; it is added per the variant's wiring.
CellOut cell_forward(const Vec& x, const Vec& h_prev, const Vec& c_prev,
                     const Vec* skip_in, const LayerParams& p,
                     SkipVariant variant, GateInputs gate_inputs);

struct CellGrads {
  Vec d_x, d_h_prev, d_c_prev;
  Vec d_skip_in;  // size 0 when the step had no skip input
};

// Exact reverse of cell_forward. Parameter gradients accumulate (+=) into
// p's buffers; input gradients are returned.
CellGrads cell_backward(const Vec& d_h, const Vec& d_c_in, const StepCache& cache,
                        LayerParams& p, SkipVariant variant,
                        GateInputs gate_inputs);

enum class Direction { Forward, Backward };

using Seq = std::vector<Vec>;

struct LayerForwardOut {
  Seq outputs;                    // aligned to input positions
  std::vector<StepCache> caches;  // aligned to input positions
};

// Runs the recurrence over a sequence, t ascending for Forward and descending
// for Backward, starting from h = c = 0.
LayerForwardOut directional_layer_forward(const Seq& inputs, const Seq* skip_inputs,
                                          const LayerParams& p, SkipVariant variant,
                                          GateInputs gate_inputs, Direction dir);

struct LayerBackwardOut {
  Seq d_inputs;
  Seq d_skip_inputs;  // empty when the layer had no skip inputs
};

LayerBackwardOut directional_layer_backward(const Seq& d_outputs,
                                            const std::vector<StepCache>& caches,
                                            LayerParams& p, SkipVariant variant,
                                            GateInputs gate_inputs, Direction dir);

// One direction of the stacked model. Layer l >= 2 (0-based) receives the same
// direction's layer l-2 outputs as skip input; layers 0 and 1 get none.
struct DirStackOut {
  std::vector<Seq> outputs;                    // [L][T], as consumed upward
  std::vector<std::vector<StepCache>> caches;  // [L][T]
  Seq first_layer_masks;                       // empty when none was applied
};

// first_layer_masks, when given, multiply layer 0's outputs before any upper
// layer (main or skip path) consumes them. Only allowed for L >= 2.
DirStackOut dir_stack_forward(const Seq& inputs,
                              const std::vector<LayerParams>& layers,
                              SkipVariant variant, GateInputs gate_inputs,
                              Direction dir, const Seq* first_layer_masks);

// d_top is w.r.t. the (unmasked) top-layer outputs. Skip-path gradients are
// routed to both layer l-1 and layer l-2. Returns gradients w.r.t. inputs.
Seq dir_stack_backward(const Seq& d_top, const DirStackOut& fwd,
                       std::vector<LayerParams>& layers, SkipVariant variant,
                       GateInputs gate_inputs, Direction dir);

// Bidirectional assembly: two independent directional stacks over the same
// embedded inputs, combined only at the output layer.
struct StackOut {
  DirStackOut fwd, bwd;
  const Seq& top_fwd() const { return fwd.outputs.back(); }
  const Seq& top_bwd() const { return bwd.outputs.back(); }
};

StackOut stack_forward(const Seq& embedded,
                       const std::vector<LayerParams>& fwd_layers,
                       const std::vector<LayerParams>& bwd_layers,
                       SkipVariant variant, GateInputs gate_inputs,
                       const Seq* fwd_first_masks = nullptr,
                       const Seq* bwd_first_masks = nullptr);

// Returns d_embedded, summed over both directions.
Seq stack_backward(const Seq& d_top_fwd, const Seq& d_top_bwd,
                   const StackOut& fwd_out,
                   std::vector<LayerParams>& fwd_layers,
                   std::vector<LayerParams>& bwd_layers, SkipVariant variant,
                   GateInputs gate_inputs);

}  // namespace stacktag
