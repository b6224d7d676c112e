#include "stacktag/toolkit.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

namespace stacktag {

// ---------------------------------------------------------------- corpus ----

Corpus parse_corpus_stream(std::istream& in, const std::string& name) {
  Corpus corpus;
  Sentence current;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!current.empty()) corpus.push_back(std::move(current));
      current.clear();
      continue;
    }
    if (line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size() ||
        line.find('\t', tab + 1) != std::string::npos)
      throw DataError(name + ":" + std::to_string(lineno) +
                      ": expected exactly one '<word>\\t<tag>' pair");
    current.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  if (!current.empty()) corpus.push_back(std::move(current));
  if (corpus.empty()) throw DataError(name + ": no sentences found");
  return corpus;
}

Corpus parse_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  return parse_corpus_stream(in, path);
}

void write_corpus_stream(std::ostream& out, const Corpus& corpus) {
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    for (const Token& t : corpus[s]) out << t.word << '\t' << t.tag << '\n';
    out << '\n';
  }
}

void write_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file '" + path + "'");
  write_corpus_stream(out, corpus);
}

// ------------------------------------------------------------ embeddings ----

PretrainedMap load_embeddings(const std::string& path, Index expected_dim,
                              const Vocab* filter, EmbeddingLoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file '" + path + "'");
  PretrainedMap map;
  EmbeddingLoadStats local;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<Scalar> values;
    Scalar v;
    while (ls >> v) values.push_back(v);
    if (!ls.eof())
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": non-numeric value for token '" + token + "'");
    if (static_cast<Index>(values.size()) != expected_dim)
      throw DataError(path + ":" + std::to_string(lineno) + ": token '" + token +
                      "' has " + std::to_string(values.size()) +
                      " dims, expected " + std::to_string(expected_dim));
    if (filter && filter->word_ids.find(token) == filter->word_ids.end()) {
      ++local.ignored;
      continue;
    }
    Vec vec = Eigen::Map<const Vec>(values.data(), expected_dim);
    auto [it, inserted] = map.insert_or_assign(token, std::move(vec));
    (void)it;
    if (inserted)
      ++local.loaded;
    else
      ++local.duplicates;
  }
  if (local.duplicates > 0)
    std::cerr << "warning: " << local.duplicates << " duplicate tokens in '" << path
              << "', last occurrence wins\n";
  if (stats) *stats = local;
  return map;
}

// ------------------------------------------------------------ checkpoint ----

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'C', 'K', 'T', 'A', 'G'};
constexpr std::uint32_t kVersion = 1;

// little-endian writers / readers

void put_bytes(std::ostream& out, const void* data, std::size_t len) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, 4);
}

void put_u8(std::ostream& out, std::uint8_t v) { put_bytes(out, &v, 1); }

void put_i64(std::ostream& out, std::int64_t v) {
  put_u64(out, static_cast<std::uint64_t>(v));
}

void put_f64(std::ostream& out, Scalar v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_str(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  put_bytes(out, s.data(), s.size());
}

void get_bytes(std::istream& in, void* data, std::size_t len) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
  if (static_cast<std::size_t>(in.gcount()) != len)
    throw DataError("checkpoint: truncated file");
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  get_bytes(in, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  get_bytes(in, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint8_t get_u8(std::istream& in) {
  std::uint8_t v;
  get_bytes(in, &v, 1);
  return v;
}

std::int64_t get_i64(std::istream& in) {
  return static_cast<std::int64_t>(get_u64(in));
}

Scalar get_f64(std::istream& in) { return std::bit_cast<Scalar>(get_u64(in)); }

std::string get_str(std::istream& in) {
  const std::uint64_t len = get_u64(in);
  if (len > (1ull << 32)) throw DataError("checkpoint: implausible string length");
  std::string s(len, '\0');
  if (len) get_bytes(in, s.data(), len);
  return s;
}

void put_config(std::ostream& out, const TaggerConfig& c) {
  put_i64(out, c.layers);
  put_i64(out, c.hidden);
  put_u32(out, static_cast<std::uint32_t>(c.variant));
  put_i64(out, c.window);
  put_i64(out, c.word_dim);
  put_i64(out, c.char_dim);
  put_i64(out, c.cap_dim);
  put_f64(out, c.forget_bias);
  put_f64(out, c.dropout_embed);
  put_f64(out, c.dropout_hidden);
  put_u32(out, static_cast<std::uint32_t>(c.gate_inputs));
  put_u8(out, c.gate_bias ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(c.init_spread));
  put_u64(out, c.seed);
}

TaggerConfig get_config(std::istream& in) {
  TaggerConfig c;
  c.layers = static_cast<int>(get_i64(in));
  c.hidden = static_cast<int>(get_i64(in));
  const std::uint32_t variant = get_u32(in);
  if (variant >= all_skip_variants().size())
    throw DataError("checkpoint: unknown skip variant code");
  c.variant = static_cast<SkipVariant>(variant);
  c.window = static_cast<int>(get_i64(in));
  c.word_dim = static_cast<int>(get_i64(in));
  c.char_dim = static_cast<int>(get_i64(in));
  c.cap_dim = static_cast<int>(get_i64(in));
  c.forget_bias = get_f64(in);
  c.dropout_embed = get_f64(in);
  c.dropout_hidden = get_f64(in);
  const std::uint32_t gi = get_u32(in);
  if (gi > 1) throw DataError("checkpoint: unknown gate_inputs code");
  c.gate_inputs = static_cast<GateInputs>(gi);
  c.gate_bias = get_u8(in) != 0;
  const std::uint32_t spread = get_u32(in);
  if (spread > 1) throw DataError("checkpoint: unknown init_spread code");
  c.init_spread = static_cast<GaussianSpread>(spread);
  c.seed = get_u64(in);
  return c;
}

void put_vocab(std::ostream& out, const Vocab& v) {
  put_u64(out, v.words.size());
  for (const std::string& w : v.words) put_str(out, w);
  put_u64(out, v.chars.size());
  for (char c : v.chars) put_u8(out, static_cast<std::uint8_t>(c));
  put_u64(out, v.tags.size());
  for (const std::string& t : v.tags) put_str(out, t);
}

Vocab get_vocab(std::istream& in) {
  Vocab v;
  const std::uint64_t nwords = get_u64(in);
  v.words.reserve(nwords);
  for (std::uint64_t i = 0; i < nwords; ++i) {
    v.words.push_back(get_str(in));
    v.word_ids[v.words.back()] = static_cast<int>(i);
  }
  const std::uint64_t nchars = get_u64(in);
  v.chars.reserve(nchars);
  for (std::uint64_t i = 0; i < nchars; ++i) {
    v.chars.push_back(static_cast<char>(get_u8(in)));
    if (i >= 2) v.char_ids[v.chars.back()] = static_cast<int>(i);
  }
  const std::uint64_t ntags = get_u64(in);
  v.tags.reserve(ntags);
  for (std::uint64_t i = 0; i < ntags; ++i) {
    v.tags.push_back(get_str(in));
    v.tag_ids[v.tags.back()] = static_cast<int>(i);
  }
  if (v.words.size() < 2 || v.chars.size() < 2 || v.tags.empty())
    throw DataError("checkpoint: vocabulary lacks reserved entries");
  return v;
}

}  // namespace

void save_checkpoint(const TaggerModel& model, const std::string& path,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  put_bytes(out, kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_config(out, model.config);
  put_vocab(out, model.vocab);
  put_i64(out, meta.epochs);
  put_i64(out, meta.best_epoch);
  put_i64(out, meta.updates);
  put_f64(out, meta.best_dev_acc);

  // enumeration is read-only; list_params needs a mutable reference
  auto params = list_params(const_cast<TaggerModel&>(model));
  put_u64(out, params.size());
  for (const ParamRef& p : params) {
    put_str(out, p.name);
    const Mat& m = *p.value;
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
  }
  if (!out) throw DataError("write error on checkpoint '" + path + "'");
}

TaggerModel load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  get_bytes(in, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError("checkpoint '" + path + "': bad magic, not a checkpoint file");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw DataError("checkpoint '" + path + "': format version " +
                    std::to_string(version) + ", expected " + std::to_string(kVersion));

  const TaggerConfig cfg = get_config(in);
  const Vocab vocab = get_vocab(in);
  CheckpointMeta local;
  local.epochs = get_i64(in);
  local.best_epoch = get_i64(in);
  local.updates = get_i64(in);
  local.best_dev_acc = get_f64(in);
  if (meta) *meta = local;

  TaggerModel model = make_model_shell(cfg, vocab);
  auto params = list_params(model);
  const std::uint64_t count = get_u64(in);
  if (count != params.size())
    throw DataError("checkpoint '" + path + "': parameter count " +
                    std::to_string(count) + ", expected " +
                    std::to_string(params.size()));
  for (const ParamRef& p : params) {
    const std::string name = get_str(in);
    if (name != p.name)
      throw DataError("checkpoint '" + path + "': parameter '" + name +
                      "' where '" + p.name + "' was expected");
    const std::uint64_t rows = get_u64(in);
    const std::uint64_t cols = get_u64(in);
    if (rows != static_cast<std::uint64_t>(p.value->rows()) ||
        cols != static_cast<std::uint64_t>(p.value->cols()))
      throw DataError("checkpoint '" + path + "': shape mismatch for '" + p.name + "'");
    for (Index r = 0; r < p.value->rows(); ++r)
      for (Index c = 0; c < p.value->cols(); ++c) (*p.value)(r, c) = get_f64(in);
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError("checkpoint '" + path + "': trailing bytes");
  return model;
}

// ----------------------------------------------------------------- config ---

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' has non-integer value '" + value + "'");
  }
}

Scalar parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const Scalar v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' has non-numeric value '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' has non-boolean value '" + value + "'");
}

}  // namespace

FullConfig parse_config_stream(std::istream& in, const std::string& name) {
  FullConfig fc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "layers") fc.tagger.layers = static_cast<int>(parse_int(key, value));
    else if (key == "hidden") fc.tagger.hidden = static_cast<int>(parse_int(key, value));
    else if (key == "variant") fc.tagger.variant = parse_skip_variant(value);
    else if (key == "window") fc.tagger.window = static_cast<int>(parse_int(key, value));
    else if (key == "word_dim") fc.tagger.word_dim = static_cast<int>(parse_int(key, value));
    else if (key == "char_dim") fc.tagger.char_dim = static_cast<int>(parse_int(key, value));
    else if (key == "cap_dim") fc.tagger.cap_dim = static_cast<int>(parse_int(key, value));
    else if (key == "forget_bias") fc.tagger.forget_bias = parse_real(key, value);
    else if (key == "dropout_embed") fc.tagger.dropout_embed = parse_real(key, value);
    else if (key == "dropout_hidden") fc.tagger.dropout_hidden = parse_real(key, value);
    else if (key == "gate_inputs") fc.tagger.gate_inputs = parse_gate_inputs(value);
    else if (key == "gate_bias") fc.tagger.gate_bias = parse_bool(key, value);
    else if (key == "init_spread") {
        if (value == "variance") fc.tagger.init_spread = GaussianSpread::Variance;
        else if (value == "stddev") fc.tagger.init_spread = GaussianSpread::Stddev;
        else throw ConfigError("config: init_spread must be 'variance' or 'stddev'");
      }
    else if (key == "seed") fc.tagger.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "learning_rate") fc.train.learning_rate = parse_real(key, value);
    else if (key == "epochs") fc.train.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "shuffle_seed") fc.train.shuffle_seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "dev_every") fc.train.dev_every = static_cast<int>(parse_int(key, value));
    else if (key == "min_count") fc.train.min_count = static_cast<int>(parse_int(key, value));
    else if (key == "include_pretrained") fc.train.include_pretrained = parse_bool(key, value);
    else throw ConfigError(name + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  fc.tagger.validate();
  fc.train.validate();
  return fc;
}

FullConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  return parse_config_stream(in, path);
}

}  // namespace stacktag
