#include "stacktag/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace stacktag {

void TrainConfig::validate() const {
  // zero is tolerated (a no-op trainer); negative rates are rejected
  if (learning_rate < 0) throw ConfigError("train config: learning_rate must be >= 0");
  if (epochs < 0) throw ConfigError("train config: epochs must be >= 0");
  if (dev_every < 1) throw ConfigError("train config: dev_every must be >= 1");
  if (min_count < 1) throw ConfigError("train config: min_count must be >= 1");
}

namespace {

// Per-gate recurrent blocks are independently orthogonal.
void init_layer(LayerParams& p, const TaggerConfig& cfg, Rng& rng) {
  const Index n = p.hidden();
  const Index m = p.input_width();
  p.W.leftCols(m) = gaussian_init(4 * n, m, m, rng, cfg.init_spread);
  for (int k = 0; k < 4; ++k)
    p.W.block(k * n, m, n, n) = orthogonal_init(n, n, rng);
  p.b.setZero();
  p.b.block(n, 0, n, 1).setConstant(cfg.forget_bias);  // forget block
  if (p.has_gate()) {
    p.Wg = orthogonal_init(n, n, rng);  // multiplies h_{t-1}: recurrent
    p.Ug = gaussian_init(n, n, n, rng, cfg.init_spread);
    if (p.has_gate_bias()) p.bg.setZero();
  }
}

}  // namespace

TaggerModel init_model(const TaggerConfig& cfg, const Vocab& vocab,
                       const PretrainedMap* pretrained, Rng& rng) {
  TaggerModel m = make_model_shell(cfg, vocab);
  if (pretrained) {
    for (const auto& [token, vec] : *pretrained)
      if (vec.size() != cfg.word_dim)
        throw ConfigError("init_model: pretrained vector for '" + token + "' has " +
                          std::to_string(vec.size()) + " dims, expected " +
                          std::to_string(cfg.word_dim));
  }
  // word rows in vocab-id order: pretrained copied, the rest drawn
  for (Index i = 0; i < vocab.word_count(); ++i) {
    bool copied = false;
    if (pretrained) {
      auto it = pretrained->find(vocab.words[i]);
      if (it != pretrained->end()) {
        m.tables.word.row(i) = it->second.transpose();
        copied = true;
      }
    }
    if (!copied)
      m.tables.word.row(i) = gaussian_init(1, cfg.word_dim, cfg.word_dim, rng,
                                           cfg.init_spread);
  }
  m.tables.chars = gaussian_init(vocab.char_count(), cfg.char_dim, cfg.char_dim, rng,
                                 cfg.init_spread);
  m.tables.cap = gaussian_init(2, cfg.cap_dim, cfg.cap_dim, rng, cfg.init_spread);
  m.tables.Wr = gaussian_init(cfg.window, cfg.word_dim, cfg.word_dim, rng,
                              cfg.init_spread);
  m.tables.br.setZero();

  for (auto& p : m.fwd_layers) init_layer(p, cfg, rng);
  for (auto& p : m.bwd_layers) init_layer(p, cfg, rng);

  m.W_hy = gaussian_init(vocab.tag_count(), 2 * cfg.hidden, 2 * cfg.hidden, rng,
                         cfg.init_spread);
  m.b_y.setZero();
  return m;
}

void sgd_step(TaggerModel& model, Scalar lr) {
  for (const ParamRef& p : list_params(model)) {
    if (p.value->rows() != p.grad->rows() || p.value->cols() != p.grad->cols())
      throw DimError("sgd_step: gradient shape mismatch for " + p.name);
    *p.value -= lr * *p.grad;
    p.grad->setZero();
  }
}

namespace {

struct PreparedSentence {
  std::vector<TokenFeatures> feats;
  std::vector<int> gold;
};

std::vector<PreparedSentence> prepare(const Corpus& corpus, const TaggerModel& m) {
  std::vector<PreparedSentence> out;
  out.reserve(corpus.size());
  for (const Sentence& s : corpus) {
    PreparedSentence p;
    std::vector<std::string> words;
    words.reserve(s.size());
    for (const Token& t : s) {
      words.push_back(t.word);
      p.gold.push_back(m.vocab.tag_id(t.tag));
    }
    p.feats = featurize(words, m.vocab, m.config.window);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::size_t> shuffled_order(std::size_t count, Rng& rng) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  // Fisher-Yates on our own Rng; std::shuffle is implementation-defined
  for (std::size_t i = count; i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

TrainResult train(TaggerModel& model, const Corpus& train_corpus,
                  const Corpus& dev_corpus, const TrainConfig& tcfg) {
  tcfg.validate();
  if (train_corpus.empty()) throw DataError("train: empty training corpus");
  if (dev_corpus.empty()) throw DataError("train: empty dev corpus");

  const std::vector<PreparedSentence> prepared = prepare(train_corpus, model);
  Rng rng(tcfg.shuffle_seed);

  TrainResult result;
  result.best_model = model;
  TrainReport& report = result.report;
  Scalar best = -1;

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order = shuffled_order(prepared.size(), rng);
    Scalar loss_sum = 0;
    for (std::size_t idx : order) {
      const PreparedSentence& seq = prepared[idx];
      ForwardCaches caches;
      const std::vector<Vec> dist = forward(model, seq.feats, Mode::Train, rng, &caches);
      loss_sum += nll_loss(dist, seq.gold);
      backward(model, caches, seq.gold);
      sgd_step(model, tcfg.learning_rate);
      ++report.updates;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<Scalar>(prepared.size());
    if (epoch % tcfg.dev_every == 0 || epoch == tcfg.epochs) {
      stats.dev_acc = evaluate(model, dev_corpus);
      if (stats.dev_acc > best) {
        best = stats.dev_acc;
        report.best_epoch = epoch;
        report.best_dev_acc = stats.dev_acc;
        result.best_model = model;
      }
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
    report.epochs.push_back(stats);
  }
  return result;
}

Scalar evaluate(const TaggerModel& model, const Corpus& corpus) {
  if (corpus.empty()) throw DataError("evaluate: empty corpus");
  std::int64_t correct = 0, total = 0;
  for (const Sentence& s : corpus) {
    std::vector<std::string> words;
    std::vector<int> gold;
    for (const Token& t : s) {
      words.push_back(t.word);
      gold.push_back(model.vocab.tag_id(t.tag));
    }
    const std::vector<TokenFeatures> feats = featurize(words, model.vocab,
                                                       model.config.window);
    const std::vector<int> pred = predict(model, feats);
    for (std::size_t t = 0; t < pred.size(); ++t) {
      correct += pred[t] == gold[t] ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw DataError("evaluate: corpus has no tokens");
  return static_cast<Scalar>(correct) / static_cast<Scalar>(total);
}

namespace {

// %.17g round-trips doubles exactly, so reported numbers can be compared as text
std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_secs(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void write_train_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_loss,dev_acc,seconds\n";
  for (const EpochStats& e : report.epochs) {
    out << e.epoch << ',' << fmt_g(e.train_loss) << ','
        << (std::isnan(e.dev_acc) ? std::string() : fmt_g(e.dev_acc)) << ','
        << fmt_secs(e.seconds) << '\n';
  }
}

void print_train_report(std::ostream& out, const TrainReport& report) {
  for (const EpochStats& e : report.epochs) {
    out << "epoch=" << e.epoch << " train_loss=" << fmt_g(e.train_loss);
    if (!std::isnan(e.dev_acc)) out << " dev_acc=" << fmt_g(e.dev_acc);
    out << " seconds=" << fmt_secs(e.seconds) << '\n';
  }
  out << "best_epoch=" << report.best_epoch
      << " best_dev_acc=" << fmt_g(report.best_dev_acc)
      << " updates=" << report.updates << '\n';
}

}  // namespace stacktag
