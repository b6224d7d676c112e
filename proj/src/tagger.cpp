#include "stacktag/tagger.hpp"

#include <cmath>

namespace stacktag {

void TaggerConfig::validate() const {
  if (layers < 1) throw ConfigError("config: layers must be >= 1");
  if (hidden < 1) throw ConfigError("config: hidden must be >= 1");
  if (window < 1 || window % 2 == 0) throw ConfigError("config: window must be odd");
  if (word_dim < 1 || char_dim < 1 || cap_dim < 1)
    throw ConfigError("config: embedding dims must be >= 1");
  if (dropout_embed < 0 || dropout_embed >= 1 || dropout_hidden < 0 || dropout_hidden >= 1)
    throw ConfigError("config: dropout rates must be in [0,1)");
}

void TaggerModel::zero_grads() {
  tables.zero_grads();
  for (auto& l : fwd_layers) l.zero_grads();
  for (auto& l : bwd_layers) l.zero_grads();
  g_W_hy.setZero();
  g_b_y.setZero();
}

TaggerModel make_model_shell(const TaggerConfig& cfg, const Vocab& vocab) {
  cfg.validate();
  TaggerModel m;
  m.config = cfg;
  m.vocab = vocab;
  m.tables = make_embedding_tables(vocab.word_count(), vocab.char_count(),
                                   cfg.word_dim, cfg.char_dim, cfg.cap_dim,
                                   cfg.window);
  const Index n = cfg.hidden;
  for (int l = 0; l < cfg.layers; ++l) {
    const Index in_width = l == 0 ? cfg.token_width() : n;
    const bool gated = cfg.layer_has_skip(l) && is_gated(cfg.variant);
    m.fwd_layers.push_back(make_layer_params(in_width, n, gated, cfg.gate_bias));
    m.bwd_layers.push_back(make_layer_params(in_width, n, gated, cfg.gate_bias));
  }
  const Index K = vocab.tag_count();
  m.W_hy = Mat::Zero(K, 2 * n);
  m.b_y = Mat::Zero(K, 1);
  m.g_W_hy = Mat::Zero(K, 2 * n);
  m.g_b_y = Mat::Zero(K, 1);
  return m;
}

std::vector<ParamRef> list_params(TaggerModel& m) {
  std::vector<ParamRef> out;
  out.push_back({"word_table", &m.tables.word, &m.tables.g_word});
  out.push_back({"char_table", &m.tables.chars, &m.tables.g_chars});
  out.push_back({"cap_table", &m.tables.cap, &m.tables.g_cap});
  out.push_back({"window_gate_W", &m.tables.Wr, &m.tables.g_Wr});
  out.push_back({"window_gate_b", &m.tables.br, &m.tables.g_br});
  auto add_layers = [&out](std::vector<LayerParams>& layers, const char* dir) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      LayerParams& p = layers[l];
      const std::string base = std::string(dir) + std::to_string(l) + "_";
      out.push_back({base + "W", &p.W, &p.gW});
      out.push_back({base + "b", &p.b, &p.gb});
      if (p.has_gate()) {
        out.push_back({base + "Wg", &p.Wg, &p.gWg});
        out.push_back({base + "Ug", &p.Ug, &p.gUg});
        if (p.has_gate_bias()) out.push_back({base + "bg", &p.bg, &p.gbg});
      }
    }
  };
  add_layers(m.fwd_layers, "fwd");
  add_layers(m.bwd_layers, "bwd");
  out.push_back({"W_hy", &m.W_hy, &m.g_W_hy});
  out.push_back({"b_y", &m.b_y, &m.g_b_y});
  return out;
}

std::int64_t param_count(TaggerModel& m) {
  std::int64_t total = 0;
  for (const ParamRef& p : list_params(m)) total += p.value->size();
  return total;
}

std::int64_t expected_param_count(const TaggerConfig& cfg, Index vocab_words,
                                  Index vocab_chars, Index tags) {
  const std::int64_t n = cfg.hidden;
  const std::int64_t mw = cfg.token_width();
  std::int64_t total = 0;
  total += vocab_words * cfg.word_dim;
  total += vocab_chars * cfg.char_dim;
  total += 2 * cfg.cap_dim;
  total += cfg.window * cfg.word_dim + cfg.window;  // Wr + br
  for (int l = 0; l < cfg.layers; ++l) {
    const std::int64_t in_width = l == 0 ? mw : n;
    std::int64_t per_dir = 4 * n * (in_width + n) + 4 * n;
    if (cfg.layer_has_skip(l) && is_gated(cfg.variant)) {
      per_dir += 2 * n * n;            // Wg + Ug
      if (cfg.gate_bias) per_dir += n; // bg
    }
    total += 2 * per_dir;
  }
  total += tags * 2 * n + tags;  // W_hy + b_y
  return total;
}

namespace {

Seq make_hidden_masks(Index n, std::size_t T, Scalar rate, Mode mode, Rng& rng) {
  Seq masks(T);
  for (std::size_t t = 0; t < T; ++t)
    masks[t] = mode == Mode::Train ? bernoulli_mask(n, rate, rng)
                                   : Vec(Vec::Constant(n, 1 - rate));
  return masks;
}

}  // namespace

std::vector<Vec> forward(const TaggerModel& model,
                         const std::vector<TokenFeatures>& sentence, Mode mode,
                         Rng& rng, ForwardCaches* caches) {
  if (sentence.empty()) throw Error("forward: empty sentence");
  const TaggerConfig& cfg = model.config;
  const Index n = cfg.hidden;
  const std::size_t T = sentence.size();
  const bool train = mode == Mode::Train;

  ForwardCaches local;
  ForwardCaches& cc = caches ? *caches : local;
  cc = ForwardCaches{};
  cc.mode = mode;

  // token embeddings, with the window-block dropout site
  Seq embedded(T);
  cc.embed.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    Vec mask;
    if (cfg.dropout_embed > 0)
      mask = train ? bernoulli_mask(cfg.window, cfg.dropout_embed, rng)
                   : Vec(Vec::Constant(cfg.window, 1 - cfg.dropout_embed));
    embedded[t] = embed_token(sentence[t], model.tables, mask.size() ? &mask : nullptr,
                              &cc.embed[t]);
  }

  // dropout on the first hidden layer's outputs (fed to layer 2 and to the
  // layer-3 skip edge); when L == 1 that layer is also the last, and only the
  // output-side mask below applies
  Seq fwd_first, bwd_first;
  const bool mask_first = cfg.dropout_hidden > 0 && cfg.layers >= 2;
  if (mask_first) {
    fwd_first = make_hidden_masks(n, T, cfg.dropout_hidden, mode, rng);
    bwd_first = make_hidden_masks(n, T, cfg.dropout_hidden, mode, rng);
  }
  cc.stack = stack_forward(embedded, model.fwd_layers, model.bwd_layers, cfg.variant,
                           cfg.gate_inputs, mask_first ? &fwd_first : nullptr,
                           mask_first ? &bwd_first : nullptr);

  // dropout on the last hidden layer's outputs, feeding W_hy
  if (cfg.dropout_hidden > 0) {
    cc.top_mask_fwd = make_hidden_masks(n, T, cfg.dropout_hidden, mode, rng);
    cc.top_mask_bwd = make_hidden_masks(n, T, cfg.dropout_hidden, mode, rng);
  }

  const Seq& top_f = cc.stack.top_fwd();
  const Seq& top_b = cc.stack.top_bwd();
  cc.concat.resize(T);
  cc.dist.resize(T);
  std::vector<Vec> dist(T);
  for (std::size_t t = 0; t < T; ++t) {
    Vec ct(2 * n);
    ct.head(n) = cc.top_mask_fwd.empty() ? top_f[t]
                                         : Vec(top_f[t].cwiseProduct(cc.top_mask_fwd[t]));
    ct.tail(n) = cc.top_mask_bwd.empty() ? top_b[t]
                                         : Vec(top_b[t].cwiseProduct(cc.top_mask_bwd[t]));
    dist[t] = softmax(Vec(model.W_hy * ct + model.b_y.col(0)));
    cc.concat[t] = std::move(ct);
    cc.dist[t] = dist[t];
  }
  return dist;
}

Scalar nll_loss(const std::vector<Vec>& distributions, const std::vector<int>& gold) {
  if (distributions.size() != gold.size())
    throw DimError("nll_loss: " + std::to_string(distributions.size()) +
                   " distributions vs " + std::to_string(gold.size()) + " tags");
  if (distributions.empty()) throw Error("nll_loss: empty sequence");
  Scalar total = 0;
  for (std::size_t t = 0; t < distributions.size(); ++t) {
    const Vec& y = distributions[t];
    if (gold[t] < 0 || gold[t] >= y.size())
      throw Error("nll_loss: gold tag id out of range");
    total += std::log(std::max(y(gold[t]), Scalar(1e-300)));
  }
  return -total / static_cast<Scalar>(distributions.size());
}

void backward(TaggerModel& model, const ForwardCaches& caches,
              const std::vector<int>& gold) {
  const std::size_t T = caches.dist.size();
  if (caches.mode != Mode::Train)
    throw Error("backward: caches must come from a train-mode forward");
  if (T == 0 || gold.size() != T)
    throw Error("backward: caches do not match the tag sequence");
  const Index n = model.config.hidden;
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(T);

  Seq d_top_f(T), d_top_b(T);
  for (std::size_t t = 0; t < T; ++t) {
    // softmax + NLL composite gradient
    Vec d_logits = caches.dist[t] * inv_n;
    d_logits(gold[t]) -= inv_n;
    model.g_W_hy.noalias() += d_logits * caches.concat[t].transpose();
    model.g_b_y.col(0) += d_logits;
    const Vec d_concat = model.W_hy.transpose() * d_logits;
    d_top_f[t] = caches.top_mask_fwd.empty()
                     ? Vec(d_concat.head(n))
                     : Vec(d_concat.head(n).cwiseProduct(caches.top_mask_fwd[t]));
    d_top_b[t] = caches.top_mask_bwd.empty()
                     ? Vec(d_concat.tail(n))
                     : Vec(d_concat.tail(n).cwiseProduct(caches.top_mask_bwd[t]));
  }

  Seq d_embedded = stack_backward(d_top_f, d_top_b, caches.stack, model.fwd_layers,
                                  model.bwd_layers, model.config.variant,
                                  model.config.gate_inputs);
  for (std::size_t t = 0; t < T; ++t)
    embed_backward(d_embedded[t], caches.embed[t], model.tables);
}

std::vector<int> predict(const TaggerModel& model,
                         const std::vector<TokenFeatures>& sentence) {
  Rng rng(0);  // eval mode draws nothing
  const std::vector<Vec> dist = forward(model, sentence, Mode::Eval, rng);
  std::vector<int> out(sentence.size());
  for (std::size_t t = 0; t < dist.size(); ++t) {
    int best = 0;
    for (Index k = 1; k < dist[t].size(); ++k)
      if (dist[t](k) > dist[t](best)) best = static_cast<int>(k);
    out[t] = best;
  }
  return out;
}

Scalar model_grad_check(TaggerModel& model, const std::vector<TokenFeatures>& sentence,
                        const std::vector<int>& gold, Scalar eps) {
  if (model.config.dropout_embed != 0 || model.config.dropout_hidden != 0)
    throw ConfigError("model_grad_check: dropout must be disabled");
  model.zero_grads();
  Rng rng(0);
  ForwardCaches caches;
  const std::vector<Vec> dist = forward(model, sentence, Mode::Train, rng, &caches);
  (void)nll_loss(dist, gold);
  backward(model, caches, gold);

  const std::vector<ParamRef> refs = list_params(model);
  std::vector<Mat> analytic;
  analytic.reserve(refs.size());
  for (const ParamRef& p : refs) analytic.push_back(*p.grad);
  std::vector<Mat*> values;
  std::vector<const Mat*> grads;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    values.push_back(refs[k].value);
    grads.push_back(&analytic[k]);
  }
  auto loss = [&]() {
    Rng r(0);
    return nll_loss(forward(model, sentence, Mode::Train, r), gold);
  };
  return grad_check(loss, values, grads, eps);
}

}  // namespace stacktag
