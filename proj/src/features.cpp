#include "stacktag/features.hpp"

#include <algorithm>
#include <cctype>

namespace stacktag {

int Vocab::word_id(const std::string& canonical) const {
  auto it = word_ids.find(canonical);
  return it == word_ids.end() ? kRare : it->second;
}

int Vocab::char_id(char c) const {
  auto it = char_ids.find(c);
  return it == char_ids.end() ? kUnkChar : it->second;
}

int Vocab::tag_id(const std::string& tag) const {
  auto it = tag_ids.find(tag);
  return it == tag_ids.end() ? kRareTag : it->second;
}

NormalizedWord normalize(const std::string& raw) {
  if (raw.empty()) throw DataError("normalize: empty token");
  NormalizedWord out;
  out.cap_flag = false;
  out.canonical.reserve(raw.size());
  for (unsigned char ch : raw) {
    if (std::isupper(ch)) out.cap_flag = true;
    if (std::isdigit(ch))
      out.canonical.push_back('9');
    else
      out.canonical.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

CharIds extract_char_ids(const std::string& canonical, const Vocab& vocab) {
  if (canonical.empty()) throw DataError("extract_char_ids: empty word");
  CharIds out;
  const std::size_t len = canonical.size();
  for (std::size_t k = 0; k < 5; ++k) {
    out.prefix[k] = k < len ? vocab.char_id(canonical[k]) : Vocab::kPadChar;
    // suffix slot k holds the k-th-from-last-but-four character, left-padded
    const std::size_t back = 5 - k;
    out.suffix[k] = back <= len ? vocab.char_id(canonical[len - back]) : Vocab::kPadChar;
  }
  return out;
}

std::vector<TokenFeatures> featurize(const std::vector<std::string>& raw_words,
                                     const Vocab& vocab, int window) {
  if (window < 1 || window % 2 == 0)
    throw ConfigError("featurize: window must be odd and positive");
  const int T = static_cast<int>(raw_words.size());
  const int half = window / 2;

  std::vector<int> ids(T);
  std::vector<NormalizedWord> norm(T);
  for (int t = 0; t < T; ++t) {
    norm[t] = normalize(raw_words[t]);
    ids[t] = vocab.word_id(norm[t].canonical);
  }

  std::vector<TokenFeatures> out(T);
  for (int t = 0; t < T; ++t) {
    TokenFeatures& f = out[t];
    f.word_id = ids[t];
    f.window_ids.resize(window);
    for (int j = -half; j <= half; ++j) {
      const int pos = t + j;
      f.window_ids[j + half] = (pos < 0 || pos >= T) ? Vocab::kPad : ids[pos];
    }
    const CharIds cids = extract_char_ids(norm[t].canonical, vocab);
    f.prefix_ids = cids.prefix;
    f.suffix_ids = cids.suffix;
    f.cap_flag = norm[t].cap_flag;
  }
  return out;
}

void EmbeddingTables::zero_grads() {
  g_word.setZero();
  g_chars.setZero();
  g_cap.setZero();
  g_Wr.setZero();
  g_br.setZero();
}

EmbeddingTables make_embedding_tables(Index vocab_words, Index vocab_chars,
                                      Index word_dim, Index char_dim,
                                      Index cap_dim, Index window) {
  EmbeddingTables t;
  t.word = Mat::Zero(vocab_words, word_dim);
  t.chars = Mat::Zero(vocab_chars, char_dim);
  t.cap = Mat::Zero(2, cap_dim);
  t.Wr = Mat::Zero(window, word_dim);
  t.br = Mat::Zero(window, 1);
  t.g_word = Mat::Zero(vocab_words, word_dim);
  t.g_chars = Mat::Zero(vocab_chars, char_dim);
  t.g_cap = Mat::Zero(2, cap_dim);
  t.g_Wr = Mat::Zero(window, word_dim);
  t.g_br = Mat::Zero(window, 1);
  return t;
}

namespace {

void check_ids(const TokenFeatures& f, const EmbeddingTables& t) {
  const Index V = t.word.rows();
  const Index C = t.chars.rows();
  auto bad_word = [V](int id) { return id < 0 || id >= V; };
  auto bad_char = [C](int id) { return id < 0 || id >= C; };
  if (bad_word(f.word_id)) throw Error("embed_token: word id out of range");
  if (static_cast<Index>(f.window_ids.size()) != t.window())
    throw DimError("embed_token: window size mismatch");
  for (int id : f.window_ids)
    if (bad_word(id)) throw Error("embed_token: window id out of range");
  for (int id : f.prefix_ids)
    if (bad_char(id)) throw Error("embed_token: prefix char id out of range");
  for (int id : f.suffix_ids)
    if (bad_char(id)) throw Error("embed_token: suffix char id out of range");
}

}  // namespace

Vec embed_token(const TokenFeatures& f, const EmbeddingTables& t,
                const Vec* window_mask, EmbedCache* cache) {
  check_ids(f, t);
  const Index d = t.window();
  const Index ew = t.word_dim();
  const Index ec = t.char_dim();
  const Index ecap = t.cap_dim();
  if (window_mask && window_mask->size() != d)
    throw DimError("embed_token: window mask size mismatch");

  Mat window_embs(ew, d);
  for (Index j = 0; j < d; ++j)
    window_embs.col(j) = t.word.row(f.window_ids[j]).transpose();
  const Vec center = t.word.row(f.word_id).transpose();

  // one logistic gate per window position, conditioned on the center word
  const Vec r = sigm(Vec(t.Wr * center + t.br.col(0)));

  Vec out(d * ew + 10 * ec + ecap);
  for (Index j = 0; j < d; ++j) {
    const Scalar m = window_mask ? (*window_mask)(j) : Scalar(1);
    out.segment(j * ew, ew) = (r(j) * m) * window_embs.col(j);
  }
  Index off = d * ew;
  for (int k = 0; k < 5; ++k, off += ec)
    out.segment(off, ec) = t.chars.row(f.prefix_ids[k]).transpose();
  for (int k = 0; k < 5; ++k, off += ec)
    out.segment(off, ec) = t.chars.row(f.suffix_ids[k]).transpose();
  out.segment(off, ecap) = t.cap.row(f.cap_flag ? 1 : 0).transpose();

  if (cache) {
    cache->feats = f;
    cache->r = r;
    cache->mask = window_mask ? *window_mask : Vec();
    cache->window_embs = std::move(window_embs);
    cache->center = center;
    cache->valid = true;
  }
  return out;
}

void embed_backward(const Vec& d_out, const EmbedCache& cache, EmbeddingTables& t) {
  if (!cache.valid) throw Error("embed_backward: cache not produced by embed_token");
  const Index d = t.window();
  const Index ew = t.word_dim();
  const Index ec = t.char_dim();
  const Index ecap = t.cap_dim();
  if (d_out.size() != t.token_width())
    throw DimError("embed_backward: upstream gradient width mismatch");
  const TokenFeatures& f = cache.feats;

  Vec d_r = Vec::Zero(d);
  for (Index j = 0; j < d; ++j) {
    const Scalar m = cache.mask.size() ? cache.mask(j) : Scalar(1);
    const auto d_win = d_out.segment(j * ew, ew);
    t.g_word.row(f.window_ids[j]) += (cache.r(j) * m) * d_win.transpose();
    d_r(j) = m * cache.window_embs.col(j).dot(d_win);
  }
  const Vec dz_r = d_r.cwiseProduct(sigm_d(cache.r));
  t.g_Wr.noalias() += dz_r * cache.center.transpose();
  t.g_br.col(0) += dz_r;
  t.g_word.row(f.word_id) += (t.Wr.transpose() * dz_r).transpose();

  Index off = d * ew;
  for (int k = 0; k < 5; ++k, off += ec)
    t.g_chars.row(f.prefix_ids[k]) += d_out.segment(off, ec).transpose();
  for (int k = 0; k < 5; ++k, off += ec)
    t.g_chars.row(f.suffix_ids[k]) += d_out.segment(off, ec).transpose();
  t.g_cap.row(f.cap_flag ? 1 : 0) += d_out.segment(off, ecap).transpose();
}

Vocab build_vocab(const Corpus& corpus, int min_count,
                  const std::vector<std::string>* pretrained_words) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  if (min_count < 1) throw ConfigError("build_vocab: min_count must be >= 1");

  Vocab v;
  v.words = {"<pad>", "<rare>"};
  v.word_ids = {{v.words[0], Vocab::kPad}, {v.words[1], Vocab::kRare}};
  v.chars = {'\0', '\1'};  // placeholders for PAD_CHAR / UNK_CHAR
  v.char_ids = {};
  v.tags = {"<rare-tag>"};
  v.tag_ids = {{v.tags[0], Vocab::kRareTag}};

  // first-occurrence order keeps ids stable across runs
  std::vector<std::string> word_order;
  std::unordered_map<std::string, int> counts;
  for (const Sentence& s : corpus) {
    if (s.empty()) throw DataError("build_vocab: empty sentence in corpus");
    for (const Token& tok : s) {
      const NormalizedWord nw = normalize(tok.word);
      if (counts.emplace(nw.canonical, 0).second) word_order.push_back(nw.canonical);
      ++counts[nw.canonical];
      for (char c : nw.canonical) {
        if (v.char_ids.emplace(c, static_cast<int>(v.chars.size())).second)
          v.chars.push_back(c);
      }
      if (v.tag_ids.emplace(tok.tag, static_cast<int>(v.tags.size())).second)
        v.tags.push_back(tok.tag);
    }
  }
  for (const std::string& w : word_order) {
    if (counts[w] < min_count) continue;  // folded into RARE
    if (v.word_ids.emplace(w, static_cast<int>(v.words.size())).second)
      v.words.push_back(w);
  }
  if (pretrained_words) {
    for (const std::string& w : *pretrained_words) {
      if (v.word_ids.emplace(w, static_cast<int>(v.words.size())).second)
        v.words.push_back(w);
    }
  }
  return v;
}

}  // namespace stacktag
