#pragma once

#include "stacktag/training.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace stacktag {

// Two-column corpus: one "<word>\t<tag>" line per token, blank line between
// sentences, "#" lines ignored.
Corpus parse_corpus(const std::string& path);
Corpus parse_corpus_stream(std::istream& in, const std::string& name);
void write_corpus(const std::string& path, const Corpus& corpus);
void write_corpus_stream(std::ostream& out, const Corpus& corpus);

struct EmbeddingLoadStats {
  int loaded = 0;
  int ignored = 0;     // tokens filtered out (not in the vocab)
  int duplicates = 0;  // repeated tokens; last occurrence wins
};

// "<token> v1 ... vD" per line, constant D enforced. When `filter` is given,
// tokens outside the vocab are skipped and counted in stats.
PretrainedMap load_embeddings(const std::string& path, Index expected_dim,
                              const Vocab* filter = nullptr,
                              EmbeddingLoadStats* stats = nullptr);

struct CheckpointMeta {
  std::int64_t epochs = 0;
  std::int64_t best_epoch = -1;
  std::int64_t updates = 0;
  Scalar best_dev_acc = 0;
};

// Versioned little-endian binary checkpoint: magic, version, config, vocab,
// training metadata, then every parameter matrix as dims + row-major 64-bit
// values. The round trip is bit-exact.
void save_checkpoint(const TaggerModel& model, const std::string& path,
                     const CheckpointMeta& meta = {});
TaggerModel load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

struct FullConfig {
  TaggerConfig tagger;
  TrainConfig train;
};

// key=value lines with "#" comments; unknown keys are errors.
FullConfig load_config(const std::string& path);
FullConfig parse_config_stream(std::istream& in, const std::string& name);

// Tiny self-contained model + random sentence for finite-difference runs.
struct GradCheckSetup {
  TaggerModel model;
  std::vector<TokenFeatures> sentence;
  std::vector<int> gold;
};

GradCheckSetup make_gradcheck_setup(SkipVariant variant, int layers, int hidden,
                                    int time_steps, std::uint64_t seed,
                                    GateInputs gate_inputs = GateInputs::PrevAndSkip,
                                    bool gate_bias = false);

// Subcommands: train, eval, tag, gradcheck, compare-variants, depth-sweep.
// Exit codes: 0 success, 1 usage, 2 data/format error, 3 numerical failure.
int cli(const std::vector<std::string>& args);

}  // namespace stacktag
