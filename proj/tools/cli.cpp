#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "pfn/data.hpp"
#include "pfn/error.hpp"
#include "pfn/evaluation.hpp"
#include "pfn/grad_check.hpp"
#include "pfn/model.hpp"
#include "pfn/training.hpp"
#include "run_config.hpp"

#ifndef PFN_VERSION
#define PFN_VERSION "0.0.0"
#endif

namespace pfn::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class MissingFileError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

void log(std::ostream& err, const std::string& msg) { err << "[pfn] " << msg << "\n"; }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is required");
  if (!fs::exists(path)) throw MissingFileError(what + " not found: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

// ---------------------------------------------------------------------------
// Corpora

struct Corpus {
  Dataset data;
  std::vector<Tensor> vectors;
  std::vector<PreparedExample> examples;
};

// Examples point into `vectors`, so corpora live behind a stable pointer.
using CorpusPtr = std::unique_ptr<Corpus>;

CorpusPtr make_corpus(Dataset data, const Vocabulary* vocab, const std::string& embeddings_path) {
  auto c = std::make_unique<Corpus>();
  c->data = std::move(data);
  if (!embeddings_path.empty()) {
    require_file(embeddings_path, "embeddings file");
    c->vectors = load_precomputed_embeddings(embeddings_path, c->data);
    c->examples = prepare_examples(c->data, nullptr, &c->vectors);
  } else {
    c->examples = prepare_examples(c->data, vocab, nullptr);
  }
  return c;
}

Dataset load_data(const std::string& path, const std::string& what, AnnotationMode mode, const LabelSet* labels) {
  require_file(path, what);
  return load_dataset(path, mode, labels);
}

std::size_t embedding_width(const Corpus& c, std::size_t fallback) {
  return c.vectors.empty() ? fallback : c.vectors.front().cols();
}

ModelConfig model_config(const RunConfig& cfg, const LabelSet& labels, std::size_t vocab_size,
                         std::size_t input_dim) {
  ModelConfig m = cfg.model;
  m.encoder.input_dim = input_dim;
  m.vocab_size = vocab_size;
  m.entity_types = labels.entity_types.size();
  m.relation_types = labels.relation_types.size();
  if (m.entity_types == 0 || m.relation_types == 0) {
    throw DataError("training data declares no entity types or no relation types");
  }
  return m;
}

std::size_t thread_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PFN_NUM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("PFN_NUM_THREADS must be a positive integer");
    n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// Sentences are independent, so results do not depend on the thread count.
std::vector<DecodedResult> predict_all(const PfnModel& model, std::span<const PreparedExample> examples,
                                       Thresholds thresholds) {
  std::vector<DecodedResult> out(examples.size());
  const std::size_t threads = thread_count(examples.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) out[i] = model.predict(examples[i].input, thresholds);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < examples.size(); i += threads) {
          out[i] = model.predict(examples[i].input, thresholds);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& artifacts) {
  const std::string config_text = cfg.to_json();
  ordered_json m;
  m["command"] = command;
  m["config_hash"] = fnv1a_hex(config_text);
  m["seed"] = cfg.train.seed;
  m["versions"] = {{"pfn", PFN_VERSION}, {"checkpoint_format", 1}, {"compiler", __VERSION__},
                   {"cxx_standard", __cplusplus}};
  m["config"] = ordered_json::parse(config_text);
  m["artifacts"] = artifacts;
  write_text(dir / "manifest.json", m.dump(2));
}

// ---------------------------------------------------------------------------
// Training shared by train and ablate

struct Fitted {
  TrainResult result;
  std::unique_ptr<PfnModel> best;
};

Fitted fit(const RunConfig& cfg, const Corpus& train, const Corpus* dev, const Vocabulary* vocab,
           std::ostream& err, const std::string& tag) {
  const std::size_t vocab_size = vocab != nullptr ? vocab->size() : 0;
  const ModelConfig mc =
      model_config(cfg, train.data.labels, vocab_size, embedding_width(train, cfg.model.encoder.input_dim));
  PfnModel model(mc);
  std::mt19937_64 init(cfg.train.seed);
  model.initialize(init);
  TrainConfig tc = cfg.train;
  tc.selection = cfg.criteria();

  std::span<const PreparedExample> dev_examples;
  if (dev != nullptr) dev_examples = dev->examples;
  Fitted f;
  f.result = train_loop(model, train.examples, dev_examples, tc, [&](const EpochRecord& r) {
    std::string line = tag + "epoch " + std::to_string(r.epoch) + " loss=" + fmt(r.loss);
    if (r.dev) line += " dev_ner_f1=" + fmt(r.dev->ner.f1) + " dev_re_f1=" + fmt(r.dev->re.f1);
    log(err, line);
  });
  for (const auto& w : f.result.warnings) log(err, "warning: " + w);
  if (vocab != nullptr) f.result.best.vocabulary = vocab->tokens();
  f.result.best.labels = train.data.labels;
  f.best = std::make_unique<PfnModel>(restore_model(f.result.best));
  return f;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::optional<LabelSet> labels;
  if (!cfg.labels_path.empty()) {
    require_file(cfg.labels_path, "labels file");
    labels = load_labels(cfg.labels_path);
  }
  Dataset train_data = load_data(cfg.train_path, "training data (--train)", cfg.mode, labels ? &*labels : nullptr);
  const LabelSet train_labels = train_data.labels;
  std::optional<Vocabulary> vocab;
  if (cfg.embeddings_path.empty()) vocab = Vocabulary::build(train_data);
  auto train = make_corpus(std::move(train_data), vocab ? &*vocab : nullptr, cfg.embeddings_path);

  CorpusPtr dev;
  if (!cfg.dev_path.empty()) {
    if (!cfg.embeddings_path.empty() && cfg.dev_embeddings_path.empty()) {
      throw ConfigError("dev_embeddings_path is required with precomputed embeddings and a dev set");
    }
    dev = make_corpus(load_data(cfg.dev_path, "dev data (--dev)", cfg.mode, &train_labels),
                      vocab ? &*vocab : nullptr, cfg.dev_embeddings_path);
  }
  log(err, "training on " + std::to_string(train->examples.size()) + " sentences" +
               (dev ? ", dev " + std::to_string(dev->examples.size()) : std::string(", no dev set")));

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  Fitted f = fit(cfg, *train, dev.get(), vocab ? &*vocab : nullptr, err, "");
  save_checkpoint(dir / "checkpoint.json", f.result.best);
  write_text(dir / "history.json", history_to_json(f.result.history));
  save_labels(dir / "labels.json", train_labels);
  write_manifest(dir, "train", cfg, {"checkpoint.json", "history.json", "labels.json"});

  out << "best_epoch " << f.result.best_epoch;
  if (f.result.best.dev) {
    out << " dev_ner_f1 " << fmt(f.result.best.dev->ner.f1) << " dev_re_f1 " << fmt(f.result.best.dev->re.f1);
  }
  out << "\ncheckpoint " << (dir / "checkpoint.json").string() << "\n";
  return kOk;
}

struct Loaded {
  Checkpoint checkpoint;
  std::unique_ptr<PfnModel> model;
  std::optional<Vocabulary> vocab;
};

Loaded load_model(const RunConfig& cfg) {
  require_file(cfg.checkpoint_path, "checkpoint (--checkpoint)");
  Loaded l;
  l.checkpoint = load_checkpoint(cfg.checkpoint_path);
  l.model = std::make_unique<PfnModel>(restore_model(l.checkpoint));
  if (l.checkpoint.model.vocab_size > 0) {
    l.vocab = Vocabulary(l.checkpoint.vocabulary);
    if (l.vocab->size() != l.checkpoint.model.vocab_size) throw DataError("checkpoint vocabulary size mismatch");
  }
  return l;
}

CorpusPtr corpus_for_model(const Loaded& l, const RunConfig& cfg, const std::string& path, const std::string& what) {
  Dataset data = load_data(path, what, cfg.mode, &l.checkpoint.labels);
  if (data.labels.entity_types.size() != l.checkpoint.model.entity_types) {
    throw ConfigError("annotation mode " + std::string(to_string(cfg.mode)) +
                      " does not match the checkpoint's entity types");
  }
  if (l.vocab) return make_corpus(std::move(data), &*l.vocab, "");
  if (cfg.embeddings_path.empty()) throw ConfigError("this checkpoint needs precomputed embeddings (--embeddings)");
  return make_corpus(std::move(data), nullptr, cfg.embeddings_path);
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Loaded l = load_model(cfg);
  auto test = corpus_for_model(l, cfg, cfg.test_path, "evaluation data (--test)");
  log(err, "evaluating " + std::to_string(test->examples.size()) + " sentences");
  const auto predictions = predict_all(*l.model, test->examples, cfg.train.thresholds);
  const EvalReport report = evaluate(predictions, test->data, cfg.criteria());

  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_text(dir / "report.json", report_to_json(report));
  write_text(dir / "report.csv", report_to_csv(report));
  write_manifest(dir, "eval", cfg, {"report.json", "report.csv"});
  out << "ner precision " << fmt(report.ner.precision) << " recall " << fmt(report.ner.recall) << " f1 "
      << fmt(report.ner.f1) << "\n";
  out << "re precision " << fmt(report.re.precision) << " recall " << fmt(report.re.recall) << " f1 "
      << fmt(report.re.f1) << "\n";
  return kOk;
}

ordered_json span_json(const EntitySpan& e, const LabelSet& labels) {
  return {{"start", e.start}, {"end", e.end}, {"type", labels.entity_types.at(static_cast<std::size_t>(e.type))}};
}

int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Loaded l = load_model(cfg);
  auto input = corpus_for_model(l, cfg, cfg.input_path, "input data (--input)");
  log(err, "predicting " + std::to_string(input->examples.size()) + " sentences");
  const auto predictions = predict_all(*l.model, input->examples, cfg.train.thresholds);
  const LabelSet& labels = l.checkpoint.labels;

  std::ostringstream lines;
  std::size_t n_triples = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    ordered_json j;
    j["sid"] = i;
    j["entities"] = ordered_json::array();
    for (const auto& e : p.entities) j["entities"].push_back(span_json(e, labels));
    j["triples"] = ordered_json::array();
    for (const auto& t : p.triples) {
      j["triples"].push_back({{"subject", span_json(t.subject, labels)},
                              {"relation", labels.relation_types.at(static_cast<std::size_t>(t.relation))},
                              {"object", span_json(t.object, labels)}});
    }
    j["head_triples"] = ordered_json::array();
    for (const auto& h : p.head_only()) {
      j["head_triples"].push_back({{"subject_start", h.subject_start},
                                   {"relation", labels.relation_types.at(static_cast<std::size_t>(h.relation))},
                                   {"object_start", h.object_start}});
    }
    n_triples += p.triples.size();
    lines << j.dump() << "\n";
  }
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "predictions.jsonl", std::ios::binary);
    if (!f) throw Error("cannot write predictions");
    f << lines.str();
  }
  write_manifest(dir, "predict", cfg, {"predictions.jsonl"});
  out << "sentences " << predictions.size() << " triples " << n_triples << "\n";
  return kOk;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Dataset ds = generate_synthetic(cfg.train.seed, cfg.synth_sentences);
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  save_dataset(dir / "dataset.jsonl", ds);
  save_labels(dir / "labels.json", ds.labels);
  write_manifest(dir, "synth", cfg, {"dataset.jsonl", "labels.json"});
  std::map<std::string, std::size_t> counts;
  for (auto p : ds.pattern_tags) ++counts[std::string(to_string(p))];
  log(err, "wrote " + (dir / "dataset.jsonl").string());
  out << "sentences " << ds.sentences.size();
  for (const auto& [k, v] : counts) out << " " << k << " " << v;
  out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string ablation;
  std::string setting;
  std::function<void(RunConfig&)> apply;
};

std::size_t coarse_chunks(const RunConfig& cfg) {
  if (cfg.coarse_chunks != 0) return cfg.coarse_chunks;
  const std::size_t h = cfg.model.encoder.hidden_dim;
  for (std::size_t c = std::min<std::size_t>(10, h); c > 1; --c)
    if (h % c == 0) return c;
  return 1;
}

std::vector<AblationRow> sweep_rows(const std::string& sweep, const RunConfig& base) {
  std::vector<AblationRow> rows;
  const bool all = sweep == "all";
  if (all || sweep == "layers") {
    for (std::size_t n = 1; n <= 3; ++n) {
      rows.push_back({"Layers", "N=" + std::to_string(n), [n](RunConfig& c) { c.model.encoder.num_layers = n; }});
    }
  }
  if (all || sweep == "direction") {
    const std::string a = "Bidirection Vs Unidirection";
    for (auto dir : {Direction::unidirectional, Direction::bidirectional}) {
      const std::string name = dir == Direction::unidirectional ? "Unidirection" : "Bidirection";
      for (bool global : {true, false}) {
        rows.push_back({a, global ? name : name + " (w/o gl.)", [dir, global](RunConfig& c) {
                          c.model.encoder.direction = dir;
                          c.model.encoder.use_global = global;
                        }});
      }
    }
  }
  if (all || sweep == "scheme") {
    rows.push_back({"Encoding Scheme", "Joint", [](RunConfig& c) { c.model.encoder.scheme = EncodingScheme::joint; }});
    rows.push_back(
        {"Encoding Scheme", "Sequential", [](RunConfig& c) { c.model.encoder.scheme = EncodingScheme::sequential; }});
    rows.push_back(
        {"Encoding Scheme", "Parallel", [](RunConfig& c) { c.model.encoder.scheme = EncodingScheme::parallel; }});
  }
  if (all || sweep == "chunking") {
    const std::size_t coarse = coarse_chunks(base);
    rows.push_back({"Partition Granularity", "Fine-grained", [](RunConfig& c) { c.model.encoder.chunk_count = 1; }});
    rows.push_back(
        {"Partition Granularity", "Coarse", [coarse](RunConfig& c) { c.model.encoder.chunk_count = coarse; }});
  }
  if (all || sweep == "decoding") {
    rows.push_back(
        {"Decoding Strategy", "Universal", [](RunConfig& c) { c.model.decoding = DecodingStrategy::universal; }});
    rows.push_back(
        {"Decoding Strategy", "Selective", [](RunConfig& c) { c.model.decoding = DecodingStrategy::selective; }});
  }
  if (rows.empty()) {
    throw UsageError("unknown sweep \"" + sweep + "\" (layers, direction, scheme, chunking, decoding, all)");
  }
  return rows;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

int cmd_ablate(const RunConfig& cfg, const std::string& sweep, std::ostream& out, std::ostream& err) {
  const auto rows = sweep_rows(sweep, cfg);

  Dataset train_data = cfg.train_path.empty() ? generate_synthetic(cfg.train.seed, cfg.synth_sentences)
                                              : load_data(cfg.train_path, "training data", cfg.mode, nullptr);
  const LabelSet labels = train_data.labels;
  Dataset dev_data;
  if (!cfg.dev_path.empty()) {
    dev_data = load_data(cfg.dev_path, "dev data", cfg.mode, &labels);
  } else if (cfg.train_path.empty()) {
    dev_data = generate_synthetic(cfg.train.seed + 1, cfg.synth_sentences);
  } else {
    log(err, "warning: no dev set; scoring on the training data");
    dev_data = train_data;
  }
  std::optional<Vocabulary> vocab;
  if (cfg.embeddings_path.empty()) vocab = Vocabulary::build(train_data);
  auto train = make_corpus(std::move(train_data), vocab ? &*vocab : nullptr, cfg.embeddings_path);
  const std::string dev_vectors = cfg.dev_path.empty() ? cfg.embeddings_path : cfg.dev_embeddings_path;
  auto dev = make_corpus(std::move(dev_data), vocab ? &*vocab : nullptr, dev_vectors);

  std::ostringstream csv;
  csv << "ablation,setting,precision,recall,f1\n";
  for (const auto& row : rows) {
    RunConfig variant = cfg;
    row.apply(variant);
    variant.validate();
    const std::string tag = row.ablation + " / " + row.setting + ": ";
    log(err, tag + "training");
    Fitted f = fit(variant, *train, dev.get(), vocab ? &*vocab : nullptr, err, tag);
    const auto predictions = predict_all(*f.best, dev->examples, variant.train.thresholds);
    const EvalReport report = evaluate(predictions, dev->data, variant.criteria());
    csv << csv_field(row.ablation) << ',' << csv_field(row.setting) << ',' << fmt(report.re.precision * 100.0, 1)
        << ',' << fmt(report.re.recall * 100.0, 1) << ',' << fmt(report.re.f1 * 100.0, 1) << "\n";
  }
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_text(dir / "ablation.csv", csv.str());
  write_manifest(dir, "ablate", cfg, {"ablation.csv"});
  out << csv.str();
  return kOk;
}

// ---------------------------------------------------------------------------
// Gradient check

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Dataset data = cfg.train_path.empty() ? generate_synthetic(cfg.train.seed, cfg.gradcheck_sentences)
                                        : load_data(cfg.train_path, "training data", cfg.mode, nullptr);
  if (data.sentences.size() > cfg.gradcheck_sentences) data.sentences.resize(cfg.gradcheck_sentences);
  data.pattern_tags.clear();
  if (data.sentences.empty()) throw DataError("gradient check needs at least one sentence");
  std::optional<Vocabulary> vocab;
  if (cfg.embeddings_path.empty()) vocab = Vocabulary::build(data);
  auto corpus = make_corpus(std::move(data), vocab ? &*vocab : nullptr, cfg.embeddings_path);

  const ModelConfig mc = model_config(cfg, corpus->data.labels, vocab ? vocab->size() : 0,
                                      embedding_width(*corpus, cfg.model.encoder.input_dim));
  PfnModel model(mc);
  std::mt19937_64 init(cfg.train.seed);
  model.initialize(init);
  log(err, "checking " + std::to_string(model.parameters().scalar_count()) + " parameters over " +
               std::to_string(corpus->examples.size()) + " sentences");

  const ScalarObjective objective = [&](Tape& tape) {
    std::optional<Var> total;
    for (const auto& ex : corpus->examples) {
      if (ex.input.length() == 0) continue;
      const Var l = model.loss(tape, ex.input, ex.gold, ex.entities);
      total = total ? tape.add(*total, l) : l;
    }
    if (!total) throw DataError("gradient check sentences are all empty");
    return *total;
  };
  GradCheckOptions options;
  options.eps = cfg.gradcheck_eps;
  options.tolerance = cfg.gradcheck_tolerance;
  options.max_entries_per_tensor = cfg.gradcheck_max_entries;
  const GradCheckReport report = grad_check(objective, model.parameters(), options);

  ordered_json j;
  j["tolerance"] = report.tolerance;
  j["deterministic"] = report.deterministic;
  j["passed"] = report.passed();
  j["max_rel_error"] = report.max_rel_error();
  j["parameters"] = ordered_json::array();
  for (const auto& e : report.entries) {
    out << (e.passed ? "PASS " : "FAIL ") << e.name << " checked " << e.checked << " max_rel_error "
        << e.max_rel_error << "\n";
    j["parameters"].push_back({{"name", e.name},
                               {"checked", e.checked},
                               {"max_rel_error", e.max_rel_error},
                               {"worst_index", e.worst_index},
                               {"analytic", e.analytic_at_worst},
                               {"numeric", e.numeric_at_worst},
                               {"passed", e.passed}});
  }
  if (!report.deterministic) out << "FAIL objective is not deterministic\n";
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  write_text(dir / "gradcheck.json", j.dump(2));
  write_manifest(dir, "gradcheck", cfg, {"gradcheck.json"});
  out << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << " max_rel_error " << report.max_rel_error()
      << "\n";
  return report.passed() ? kOk : kGradCheckFailed;
}

// ---------------------------------------------------------------------------
// Flags

struct Flags {
  std::string config, out, mode, embeddings, dev_embeddings, train, dev, test, input, checkpoint, labels;
  std::string sweep = "all";
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold_entity, threshold_relation;
  std::optional<std::size_t> epochs, sentences;
  std::vector<std::string> overrides;
};

void add_common(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "Flat JSON config file");
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--mode", f.mode, "Annotation mode: exact or partial");
  app.add_option("--threshold-entity", f.threshold_entity, "Entity threshold");
  app.add_option("--threshold-relation", f.threshold_relation, "Relation threshold");
  app.add_option("--embeddings", f.embeddings, "Precomputed embeddings (JSONL)");
  app.add_option("--dev-embeddings", f.dev_embeddings, "Precomputed embeddings for --dev");
  app.add_option("--train", f.train, "Training data (JSONL)");
  app.add_option("--dev", f.dev, "Dev data (JSONL)");
  app.add_option("--test", f.test, "Evaluation data (JSONL)");
  app.add_option("--input", f.input, "Sentences to predict (JSONL)");
  app.add_option("--checkpoint", f.checkpoint, "Checkpoint file");
  app.add_option("--labels", f.labels, "Label set (JSON)");
  app.add_option("--epochs", f.epochs, "Training epochs");
  app.add_option("--sentences", f.sentences, "Synthetic corpus size");
  app.add_option("--set", f.overrides, "Config override key=value (repeatable)");
}

RunConfig resolve(const CLI::App& app, const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw MissingFileError("config file not found: " + f.config);
    cfg = load_run_config(f.config);
  }
  auto given = [&](const char* name) { return app.count(name) > 0; };
  if (given("--seed")) cfg.train.seed = *f.seed;
  if (given("--out")) cfg.out_dir = f.out;
  if (given("--mode")) cfg.mode = parse_annotation_mode(f.mode);
  if (given("--threshold-entity")) cfg.train.thresholds.entity = *f.threshold_entity;
  if (given("--threshold-relation")) cfg.train.thresholds.relation = *f.threshold_relation;
  if (given("--embeddings")) cfg.embeddings_path = f.embeddings;
  if (given("--dev-embeddings")) cfg.dev_embeddings_path = f.dev_embeddings;
  if (given("--train")) cfg.train_path = f.train;
  if (given("--dev")) cfg.dev_path = f.dev;
  if (given("--test")) cfg.test_path = f.test;
  if (given("--input")) cfg.input_path = f.input;
  if (given("--checkpoint")) cfg.checkpoint_path = f.checkpoint;
  if (given("--labels")) cfg.labels_path = f.labels;
  if (given("--epochs")) cfg.train.epochs = *f.epochs;
  if (given("--sentences")) cfg.synth_sentences = *f.sentences;
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got \"" + kv + "\"");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

const std::vector<std::string> kCommands = {"train", "eval", "predict", "synth", "ablate", "gradcheck"};

}  // namespace

std::string usage() {
  return "usage: pfn <command> [flags]\n"
         "commands:\n"
         "  train      train a model (--train, optional --dev)\n"
         "  eval       score a checkpoint (--checkpoint, --test)\n"
         "  predict    decode sentences (--checkpoint, --input)\n"
         "  synth      write a synthetic corpus (--seed, --sentences)\n"
         "  ablate     run an ablation sweep (--sweep layers|direction|scheme|chunking|decoding|all)\n"
         "  gradcheck  finite-difference check of the full loss\n"
         "run 'pfn <command> --help' for flags\n";
}

int run(const std::string& command, const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (command == "--help" || command == "-h" || command == "help") {
    out << usage();
    return kOk;
  }
  if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
    err << "pfn: unknown command \"" << command << "\"\n" << usage();
    return kUsageError;
  }
  CLI::App app{"pfn " + command};
  app.name("pfn " + command);
  Flags flags;
  add_common(app, flags);
  if (command == "ablate") app.add_option("--sweep", flags.sweep, "layers|direction|scheme|chunking|decoding|all");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "pfn " << command << ": " << e.what() << "\n";
    return kUsageError;
  }

  try {
    const RunConfig cfg = resolve(app, flags);
    if (command == "train") return cmd_train(cfg, out, err);
    if (command == "eval") return cmd_eval(cfg, out, err);
    if (command == "predict") return cmd_predict(cfg, out, err);
    if (command == "synth") return cmd_synth(cfg, out, err);
    if (command == "ablate") return cmd_ablate(cfg, flags.sweep, out, err);
    return cmd_gradcheck(cfg, out, err);
  } catch (const UsageError& e) {
    err << "pfn " << command << ": " << e.what() << "\n";
    return kUsageError;
  } catch (const MissingFileError& e) {
    err << "pfn " << command << ": " << e.what() << "\n";
    return kMissingFile;
  } catch (const ConfigError& e) {
    err << "pfn " << command << ": invalid config: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    err << "pfn " << command << ": data error: " << e.what() << "\n";
    return kDataError;
  } catch (const DimensionError& e) {
    err << "pfn " << command << ": data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    err << "pfn " << command << ": numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    err << "pfn " << command << ": " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace pfn::cli
