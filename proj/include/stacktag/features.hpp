#pragma once

#include "stacktag/numerics.hpp"

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

namespace stacktag {

struct Token {
  std::string word, tag;
  bool operator==(const Token&) const = default;
};
using Sentence = std::vector<Token>;
using Corpus = std::vector<Sentence>;

// Word, character and tag inventories with dense, stable ids.
struct Vocab {
  static constexpr int kPad = 0;       // word id for out-of-sentence positions
  static constexpr int kRare = 1;      // word id for unknown / infrequent words
  static constexpr int kPadChar = 0;   // char id padding short words
  static constexpr int kUnkChar = 1;   // char id for characters unseen in training
  static constexpr int kRareTag = 0;   // extra output neuron for unseen tags

  std::vector<std::string> words;  // id -> canonical word; [0], [1] reserved
  std::unordered_map<std::string, int> word_ids;
  std::vector<char> chars;  // id -> character; [0], [1] reserved
  std::unordered_map<char, int> char_ids;
  std::vector<std::string> tags;  // id -> tag; [0] reserved for RARE_TAG
  std::unordered_map<std::string, int> tag_ids;

  int word_id(const std::string& canonical) const;
  int char_id(char c) const;
  int tag_id(const std::string& tag) const;
  Index word_count() const { return static_cast<Index>(words.size()); }
  Index char_count() const { return static_cast<Index>(chars.size()); }
  Index tag_count() const { return static_cast<Index>(tags.size()); }
};

struct NormalizedWord {
  std::string canonical;
  bool cap_flag;
};

// Lowercases, maps every decimal digit to '9', and reports whether the raw
// word contained an uppercase letter.
NormalizedWord normalize(const std::string& raw);

struct CharIds {
  std::array<int, 5> prefix, suffix;
};

// First five characters right-padded and last five left-padded with PAD_CHAR;
// characters missing from the inventory map to UNK_CHAR.
CharIds extract_char_ids(const std::string& canonical, const Vocab& vocab);

struct TokenFeatures {
  int word_id = Vocab::kRare;
  std::vector<int> window_ids;  // d ids centered on the token, PAD at edges
  std::array<int, 5> prefix_ids{};
  std::array<int, 5> suffix_ids{};
  bool cap_flag = false;
};

std::vector<TokenFeatures> featurize(const std::vector<std::string>& raw_words,
                                     const Vocab& vocab, int window);

// Trainable lookup tables plus the context-window gate weights.
struct EmbeddingTables {
  Mat word;   // [V x e_w]
  Mat chars;  // [C x e_c]
  Mat cap;    // [2 x e_cap]
  Mat Wr;     // [d x e_w] window gate weights, conditioned on the center word
  Mat br;     // [d x 1]

  Mat g_word, g_chars, g_cap, g_Wr, g_br;

  Index word_dim() const { return word.cols(); }
  Index char_dim() const { return chars.cols(); }
  Index cap_dim() const { return cap.cols(); }
  Index window() const { return Wr.rows(); }
  // d*e_w + 10*e_c + e_cap
  Index token_width() const {
    return window() * word_dim() + 10 * char_dim() + cap_dim();
  }
  void zero_grads();
};

EmbeddingTables make_embedding_tables(Index vocab_words, Index vocab_chars,
                                      Index word_dim, Index char_dim,
                                      Index cap_dim, Index window);

struct EmbedCache {
  TokenFeatures feats;
  Vec r;            // window gate values, in (0,1)^d
  Vec mask;         // window mask actually applied; size 0 means all-ones
  Mat window_embs;  // [e_w x d], the embeddings as looked up
  Vec center;       // center-word embedding feeding the gate
  bool valid = false;
};

// Token representation: per window position the gated (and optionally masked)
// word embedding, then the 10 character embeddings, then the capitalization
// embedding. window_mask, when given, multiplies the window block entrywise
// per position before the gate composition.
Vec embed_token(const TokenFeatures& f, const EmbeddingTables& t,
                const Vec* window_mask, EmbedCache* cache);

// Sparse accumulation into the table rows the forward pass touched.
void embed_backward(const Vec& d_out, const EmbedCache& cache, EmbeddingTables& t);

// Words below min_count map to RARE; pretrained words, when given, are
// force-included. The tag set is the training tags plus RARE_TAG.
Vocab build_vocab(const Corpus& corpus, int min_count,
                  const std::vector<std::string>* pretrained_words = nullptr);

}  // namespace stacktag
