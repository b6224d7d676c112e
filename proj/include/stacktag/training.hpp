#pragma once

#include "stacktag/tagger.hpp"

#include <iosfwd>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace stacktag {

struct TrainConfig {
  Scalar learning_rate = 0.02;
  int epochs = 10;
  std::uint64_t shuffle_seed = 1;
  int dev_every = 1;   // dev-set evaluation cadence, in epochs
  int min_count = 1;   // vocabulary frequency threshold
  bool include_pretrained = false;  // force pretrained tokens into the vocab

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  Scalar train_loss = 0;
  Scalar dev_acc = std::numeric_limits<Scalar>::quiet_NaN();  // NaN = not evaluated
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  Scalar best_dev_acc = 0;
  std::int64_t updates = 0;
};

using PretrainedMap = std::map<std::string, Vec>;

// Initialization policy: h-to-gate blocks (the four per-gate n x n recurrent
// blocks and the skip-gate Wg) are random orthogonal via SVD; every other
// weight is scaled-Gaussian; biases are zero except the forget block, which is
// set to forget_bias; word rows found in `pretrained` are copied verbatim.
TaggerModel init_model(const TaggerConfig& cfg, const Vocab& vocab,
                       const PretrainedMap* pretrained, Rng& rng);

// theta <- theta - lr * grad for every parameter, then zeroes the gradients.
// No clipping or decay of any kind.
void sgd_step(TaggerModel& model, Scalar lr);

struct TrainResult {
  TaggerModel best_model;
  TrainReport report;
};

// Online SGD: one update per training sequence, epoch-level seeded shuffling,
// dev evaluation per `dev_every` epochs, best-dev model retained.
TrainResult train(TaggerModel& model, const Corpus& train_corpus,
                  const Corpus& dev_corpus, const TrainConfig& tcfg);

// 1-best token accuracy in eval mode. Unseen gold tags map to RARE_TAG.
Scalar evaluate(const TaggerModel& model, const Corpus& corpus);

// "epoch,train_loss,dev_acc,seconds" rows; dev_acc is left empty on epochs
// without a dev evaluation.
void write_train_report_csv(std::ostream& out, const TrainReport& report);

// One "epoch= train_loss= dev_acc= seconds=" line per epoch plus a summary.
void print_train_report(std::ostream& out, const TrainReport& report);

}  // namespace stacktag
