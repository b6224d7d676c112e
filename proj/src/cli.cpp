#include "stacktag/toolkit.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace stacktag {

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr Scalar kGradCheckThreshold = 1e-4;

// ------------------------------------------------------------------ train ---

struct TrainArgs {
  std::string train, dev, config, embeddings, out, report;
};

int run_train(const TrainArgs& a) {
  const FullConfig fc = load_config(a.config);
  const Corpus train_c = parse_corpus(a.train);
  const Corpus dev_c = parse_corpus(a.dev);

  PretrainedMap pretrained;
  bool has_pretrained = false;
  Vocab vocab;
  if (!a.embeddings.empty() && fc.train.include_pretrained) {
    pretrained = load_embeddings(a.embeddings, fc.tagger.word_dim);
    std::vector<std::string> tokens;
    tokens.reserve(pretrained.size());
    for (const auto& [tok, vec] : pretrained) tokens.push_back(tok);
    vocab = build_vocab(train_c, fc.train.min_count, &tokens);
    has_pretrained = true;
  } else {
    vocab = build_vocab(train_c, fc.train.min_count);
    if (!a.embeddings.empty()) {
      EmbeddingLoadStats stats;
      pretrained = load_embeddings(a.embeddings, fc.tagger.word_dim, &vocab, &stats);
      std::cout << "embeddings: loaded " << stats.loaded << ", ignored "
                << stats.ignored << " not in vocabulary\n";
      has_pretrained = true;
    }
  }

  Rng rng(fc.tagger.seed);
  TaggerModel model = init_model(fc.tagger, vocab,
                                 has_pretrained ? &pretrained : nullptr, rng);
  TrainResult res = train(model, train_c, dev_c, fc.train);
  print_train_report(std::cout, res.report);

  CheckpointMeta meta;
  meta.epochs = static_cast<std::int64_t>(res.report.epochs.size());
  meta.best_epoch = res.report.best_epoch;
  meta.updates = res.report.updates;
  meta.best_dev_acc = res.report.best_dev_acc;
  save_checkpoint(res.best_model, a.out, meta);

  const std::string report_path = a.report.empty() ? a.out + ".csv" : a.report;
  std::ofstream csv(report_path);
  if (!csv) throw DataError("cannot write report '" + report_path + "'");
  write_train_report_csv(csv, res.report);
  std::cout << "checkpoint=" << a.out << " report=" << report_path << '\n';
  return 0;
}

// ------------------------------------------------------------------- eval ---

int run_eval(const std::string& model_path, const std::string& corpus_path) {
  TaggerModel model = load_checkpoint(model_path);
  const Corpus corpus = parse_corpus(corpus_path);
  std::cout << fmt_g(evaluate(model, corpus)) << '\n';
  return 0;
}

// -------------------------------------------------------------------- tag ---

int run_tag(const std::string& model_path, const std::string& input_path,
            const std::string& out_path) {
  TaggerModel model = load_checkpoint(model_path);
  std::ifstream in(input_path);
  if (!in) throw DataError("cannot open input '" + input_path + "'");
  std::ofstream file_out;
  if (!out_path.empty()) {
    file_out.open(out_path);
    if (!file_out) throw DataError("cannot write output '" + out_path + "'");
  }
  std::ostream& out = out_path.empty() ? std::cout : file_out;

  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::vector<std::string> words;
    std::string w;
    while (ls >> w) words.push_back(w);
    if (!words.empty()) {
      const auto feats = featurize(words, model.vocab, model.config.window);
      const std::vector<int> tags = predict(model, feats);
      for (std::size_t t = 0; t < words.size(); ++t)
        out << words[t] << '\t' << model.vocab.tags[tags[t]] << '\n';
    }
    out << '\n';
  }
  return 0;
}

// -------------------------------------------------------------- gradcheck ---

int run_gradcheck(const std::string& variant_name, int layers, int hidden,
                  std::uint64_t seed) {
  const SkipVariant variant = parse_skip_variant(variant_name);
  GradCheckSetup s = make_gradcheck_setup(variant, layers, hidden, /*time_steps=*/5, seed);
  const Scalar err = model_grad_check(s.model, s.sentence, s.gold);
  std::printf("max_rel_err=%.3e\n", err);
  return err < kGradCheckThreshold ? 0 : 3;
}

// ------------------------------------------------- comparison harnesses -----

struct HarnessRow {
  std::string label;
  Scalar dev_acc = 0, test_acc = 0;
};

// Trains one independent job per config; jobs share nothing but read-only data.
template <typename MakeConfig>
std::vector<HarnessRow> run_jobs(const std::vector<std::string>& labels,
                                 MakeConfig make_config, const Corpus& train_c,
                                 const Corpus& dev_c, const Corpus& test_c,
                                 const Vocab& vocab, const TrainConfig& tcfg,
                                 const PretrainedMap* pretrained) {
  std::vector<HarnessRow> rows(labels.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= labels.size()) return;
      try {
        const TaggerConfig cfg = make_config(i);
        Rng rng(cfg.seed);
        TaggerModel model = init_model(cfg, vocab, pretrained, rng);
        TrainResult res = train(model, train_c, dev_c, tcfg);
        rows[i] = {labels[i], res.report.best_dev_acc,
                   evaluate(res.best_model, test_c)};
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(labels.size(),
                            std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

void emit_rows(const std::string& out_path, const std::string& key_column,
               const std::vector<HarnessRow>& rows) {
  std::ofstream csv(out_path);
  if (!csv) throw DataError("cannot write '" + out_path + "'");
  csv << key_column << ",dev_acc,test_acc\n";
  for (const HarnessRow& r : rows) {
    csv << r.label << ',' << fmt_g(r.dev_acc) << ',' << fmt_g(r.test_acc) << '\n';
    std::cout << r.label << '\t' << fmt_g(r.dev_acc) << '\t' << fmt_g(r.test_acc)
              << '\n';
  }
}

struct HarnessArgs {
  std::string train, dev, test, config, out, embeddings;
};

struct HarnessData {
  FullConfig fc;
  Corpus train_c, dev_c, test_c;
  Vocab vocab;
  PretrainedMap pretrained;
  bool has_pretrained = false;
};

HarnessData load_harness_data(const HarnessArgs& a) {
  HarnessData d;
  d.fc = load_config(a.config);
  d.train_c = parse_corpus(a.train);
  d.dev_c = parse_corpus(a.dev);
  d.test_c = parse_corpus(a.test);
  d.vocab = build_vocab(d.train_c, d.fc.train.min_count);
  if (!a.embeddings.empty()) {
    d.pretrained = load_embeddings(a.embeddings, d.fc.tagger.word_dim, &d.vocab);
    d.has_pretrained = true;
  }
  return d;
}

int run_compare_variants(const HarnessArgs& a) {
  const HarnessData d = load_harness_data(a);
  std::vector<std::string> labels;
  for (SkipVariant v : all_skip_variants()) labels.push_back(to_string(v));
  // one shared seed across variants: differences are attributable to wiring
  auto make_config = [&d](std::size_t i) {
    TaggerConfig cfg = d.fc.tagger;
    cfg.variant = all_skip_variants()[i];
    return cfg;
  };
  const auto rows = run_jobs(labels, make_config, d.train_c, d.dev_c, d.test_c,
                             d.vocab, d.fc.train,
                             d.has_pretrained ? &d.pretrained : nullptr);
  emit_rows(a.out, "variant", rows);
  return 0;
}

int run_depth_sweep(const HarnessArgs& a, const std::vector<int>& layer_list) {
  if (layer_list.empty()) throw ConfigError("depth-sweep: empty layer list");
  const HarnessData d = load_harness_data(a);
  std::vector<std::string> labels;
  for (int l : layer_list) labels.push_back(std::to_string(l));
  auto make_config = [&d, &layer_list](std::size_t i) {
    TaggerConfig cfg = d.fc.tagger;
    cfg.layers = layer_list[i];
    return cfg;
  };
  const auto rows = run_jobs(labels, make_config, d.train_c, d.dev_c, d.test_c,
                             d.vocab, d.fc.train,
                             d.has_pretrained ? &d.pretrained : nullptr);
  emit_rows(a.out, "layers", rows);
  return 0;
}

}  // namespace

GradCheckSetup make_gradcheck_setup(SkipVariant variant, int layers, int hidden,
                                    int time_steps, std::uint64_t seed,
                                    GateInputs gate_inputs, bool gate_bias) {
  if (layers < 1 || hidden < 1 || time_steps < 1)
    throw ConfigError("make_gradcheck_setup: layers, hidden and time_steps must be >= 1");
  static const std::vector<std::string> kWords = {
      "Paris", "is", "big", "b2b", "cat", "sat", "dogs", "99"};
  static const std::vector<std::string> kTags = {"A", "B", "C"};
  Corpus toy;
  Sentence s;
  for (std::size_t i = 0; i < kWords.size(); ++i) {
    s.push_back({kWords[i], kTags[i % kTags.size()]});
    if (s.size() == 4) {
      toy.push_back(s);
      s.clear();
    }
  }
  const Vocab vocab = build_vocab(toy, 1);

  TaggerConfig cfg;
  cfg.layers = layers;
  cfg.hidden = hidden;
  cfg.variant = variant;
  cfg.window = 3;
  cfg.word_dim = 4;
  cfg.char_dim = 2;
  cfg.cap_dim = 2;
  cfg.dropout_embed = 0;
  cfg.dropout_hidden = 0;
  cfg.forget_bias = 0;
  cfg.gate_inputs = gate_inputs;
  cfg.gate_bias = gate_bias;
  cfg.seed = seed;

  GradCheckSetup out;
  Rng rng(seed);
  out.model = make_model_shell(cfg, vocab);
  // Healthy O(0.5) weight scales keep touched gradients well above the
  // finite-difference noise floor; the training init policy has its own tests.
  for (const ParamRef& p : list_params(out.model)) {
    const Scalar scale = p.value->cols() == 1 ? 0.2 : 0.5;
    for (Index i = 0; i < p.value->size(); ++i)
      p.value->data()[i] = scale * rng.gaussian();
  }
  std::vector<std::string> sentence_words;
  for (int t = 0; t < time_steps; ++t)
    sentence_words.push_back(kWords[rng.uniform_int(kWords.size())]);
  out.sentence = featurize(sentence_words, vocab, cfg.window);

  // Probe at a moderately confident point: the model's own argmax as gold and
  // a mildly sharpened output layer keep the loss value (whose ulp bounds the
  // rounding error of each central difference) down without driving curvature
  // up, which would trade rounding error for truncation error.
  out.model.W_hy *= 8.0;
  out.gold = predict(out.model, out.sentence);
  return out;
}

int cli(const std::vector<std::string>& args) {
  CLI::App app{"stacktag: stacked bidirectional LSTM sequence tagger"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a tagger, keep the best-dev checkpoint");
  train_cmd->add_option("--train", train_args.train, "training corpus")->required();
  train_cmd->add_option("--dev", train_args.dev, "development corpus")->required();
  train_cmd->add_option("--config", train_args.config, "key=value config file")->required();
  train_cmd->add_option("--embeddings", train_args.embeddings, "pretrained embedding file");
  train_cmd->add_option("--out", train_args.out, "checkpoint output path")->required();
  train_cmd->add_option("--report", train_args.report, "CSV report path (default <out>.csv)");

  std::string eval_model, eval_corpus;
  CLI::App* eval_cmd = app.add_subcommand("eval", "print token accuracy of a checkpoint");
  eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
  eval_cmd->add_option("--corpus", eval_corpus, "corpus to score")->required();

  std::string tag_model, tag_input, tag_out;
  CLI::App* tag_cmd = app.add_subcommand("tag", "tag sentences (one per line, space-tokenized)");
  tag_cmd->add_option("--model", tag_model, "checkpoint path")->required();
  tag_cmd->add_option("--input", tag_input, "input sentences")->required();
  tag_cmd->add_option("--out", tag_out, "output path (default stdout)");

  std::string gc_variant = "ToOutputGated";
  int gc_layers = 3, gc_hidden = 4;
  std::uint64_t gc_seed = 1;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  gc_cmd->add_option("--variant", gc_variant, "skip variant name");
  gc_cmd->add_option("--layers", gc_layers, "stack depth");
  gc_cmd->add_option("--hidden", gc_hidden, "hidden size");
  gc_cmd->add_option("--seed", gc_seed, "rng seed");

  HarnessArgs cmp_args;
  CLI::App* cmp_cmd = app.add_subcommand("compare-variants",
                                         "train all 7 variants with a shared seed");
  cmp_cmd->add_option("--train", cmp_args.train, "training corpus")->required();
  cmp_cmd->add_option("--dev", cmp_args.dev, "development corpus")->required();
  cmp_cmd->add_option("--test", cmp_args.test, "test corpus")->required();
  cmp_cmd->add_option("--config", cmp_args.config, "config file")->required();
  cmp_cmd->add_option("--out", cmp_args.out, "CSV output path")->required();
  cmp_cmd->add_option("--embeddings", cmp_args.embeddings, "pretrained embedding file");

  HarnessArgs sweep_args;
  std::vector<int> sweep_layers;
  CLI::App* sweep_cmd = app.add_subcommand("depth-sweep", "train one model per stack depth");
  sweep_cmd->add_option("--train", sweep_args.train, "training corpus")->required();
  sweep_cmd->add_option("--dev", sweep_args.dev, "development corpus")->required();
  sweep_cmd->add_option("--test", sweep_args.test, "test corpus")->required();
  sweep_cmd->add_option("--config", sweep_args.config, "config file")->required();
  sweep_cmd->add_option("--out", sweep_args.out, "CSV output path")->required();
  sweep_cmd->add_option("--embeddings", sweep_args.embeddings, "pretrained embedding file");
  sweep_cmd->add_option("--layers-list", sweep_layers, "depths to sweep")
      ->required()
      ->delimiter(',');

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_model, eval_corpus);
    if (tag_cmd->parsed()) return run_tag(tag_model, tag_input, tag_out);
    if (gc_cmd->parsed()) return run_gradcheck(gc_variant, gc_layers, gc_hidden, gc_seed);
    if (cmp_cmd->parsed()) return run_compare_variants(cmp_args);
    if (sweep_cmd->parsed()) return run_depth_sweep(sweep_args, sweep_layers);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace stacktag
