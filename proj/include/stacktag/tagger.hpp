#pragma once

#include "stacktag/features.hpp"
#include "stacktag/recurrent.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stacktag {

struct TaggerConfig {
  int layers = 7;
  int hidden = 512;
  SkipVariant variant = SkipVariant::ToOutputGated;
  int window = 3;
  int word_dim = 200;
  int char_dim = 5;
  int cap_dim = 5;
  Scalar forget_bias = 0.0;
  Scalar dropout_embed = 0.25;
  Scalar dropout_hidden = 0.5;
  GateInputs gate_inputs = GateInputs::PrevAndSkip;
  bool gate_bias = false;
  GaussianSpread init_spread = GaussianSpread::Variance;
  std::uint64_t seed = 1;

  void validate() const;
  Index token_width() const {
    return static_cast<Index>(window) * word_dim + 10 * char_dim + cap_dim;
  }
  // true when layer l (0-based) has a skip source under this config
  bool layer_has_skip(int l) const {
    return variant != SkipVariant::NoSkip && l >= 2;
  }
};

struct TaggerModel {
  TaggerConfig config;
  Vocab vocab;
  EmbeddingTables tables;
  std::vector<LayerParams> fwd_layers, bwd_layers;
  Mat W_hy;  // [K x 2n]
  Mat b_y;   // [K x 1]
  Mat g_W_hy, g_b_y;

  Index tag_count() const { return W_hy.rows(); }
  void zero_grads();
};

// Allocates every parameter (zero-valued) with shapes driven by config+vocab.
TaggerModel make_model_shell(const TaggerConfig& cfg, const Vocab& vocab);

// Stable enumeration of every trainable parameter with its gradient buffer.
struct ParamRef {
  std::string name;
  Mat* value;
  Mat* grad;
};
std::vector<ParamRef> list_params(TaggerModel& m);

std::int64_t param_count(TaggerModel& m);
// Closed-form count, asserted against list_params in tests.
std::int64_t expected_param_count(const TaggerConfig& cfg, Index vocab_words,
                                  Index vocab_chars, Index tags);

enum class Mode { Train, Eval };

struct ForwardCaches {
  std::vector<EmbedCache> embed;
  StackOut stack;
  Seq top_mask_fwd, top_mask_bwd;  // factors applied to top outputs; empty = ones
  Seq concat;                      // masked [fwd;bwd] top states feeding W_hy
  Seq dist;                        // per-token softmax outputs
  Mode mode = Mode::Eval;
};

// Runs features -> stacked bidirectional core -> softmax. Train mode draws a
// fresh window dropout mask per token and fresh hidden masks (first and last
// layer outputs, independent per direction); eval mode scales the same sites
// by (1-p) instead.
std::vector<Vec> forward(const TaggerModel& model,
                         const std::vector<TokenFeatures>& sentence, Mode mode,
                         Rng& rng, ForwardCaches* caches = nullptr);

// -(1/N) sum log y[gold]; probabilities are clamped at 1e-300 before the log.
Scalar nll_loss(const std::vector<Vec>& distributions, const std::vector<int>& gold);

// Gradients of nll_loss w.r.t. every parameter, accumulated into the model's
// buffers. Requires caches from a train-mode forward; the recorded dropout
// masks are applied identically on the way back.
void backward(TaggerModel& model, const ForwardCaches& caches,
              const std::vector<int>& gold);

// Per-token argmax of eval-mode distributions; ties break to the lowest id.
std::vector<int> predict(const TaggerModel& model,
                         const std::vector<TokenFeatures>& sentence);

// Full-model finite-difference check of backward() against the NLL on one
// sentence. Requires both dropout rates to be zero so the loss is
// deterministic. Returns the max relative error over every parameter entry.
Scalar model_grad_check(TaggerModel& model, const std::vector<TokenFeatures>& sentence,
                        const std::vector<int>& gold, Scalar eps = 1e-5);

}  // namespace stacktag
