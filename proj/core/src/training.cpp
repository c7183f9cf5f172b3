#include "pfn/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pfn/error.hpp"

namespace pfn {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  for (double t : {thresholds.entity, thresholds.relation}) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("thresholds must lie in (0, 1)");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

void adam_step(ParameterStore& params, AdamState& state, const AdamOptions& o) {
  auto& all = params.all();
  if (state.m.size() != all.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : all) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto g = std::as_const(all[i].tensor).grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        throw NumericError("non-finite gradient in " + all[i].name + " at entry " + std::to_string(k));
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& tensor = all[i].tensor;
    auto values = tensor.values();
    const auto g = std::as_const(tensor).grad();
    if (g.empty()) continue;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != values.size()) throw DimensionError("Adam state does not match " + all[i].name);
    for (std::size_t k = 0; k < values.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      values[k] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

double global_grad_norm(const ParameterStore& params) {
  double sq = 0.0;
  for (const auto& p : params.all())
    for (double g : p.tensor.grad()) sq += g * g;
  return std::sqrt(sq);
}

double clip_gradients(ParameterStore& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (std::isfinite(max_norm) && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params.all())
      for (auto& g : p.tensor.grad()) g *= factor;
  }
  return norm;
}

std::vector<PreparedExample> prepare_examples(const Dataset& dataset, const Vocabulary* vocabulary,
                                              const std::vector<Tensor>* embeddings) {
  if ((vocabulary == nullptr) == (embeddings == nullptr)) {
    throw ConfigError("prepare_examples needs exactly one of a vocabulary or precomputed embeddings");
  }
  if (embeddings != nullptr && embeddings->size() != dataset.sentences.size()) {
    throw DataError("embeddings cover " + std::to_string(embeddings->size()) + " sentences, dataset has " +
                    std::to_string(dataset.sentences.size()));
  }
  std::vector<PreparedExample> out;
  out.reserve(dataset.sentences.size());
  for (std::size_t i = 0; i < dataset.sentences.size(); ++i) {
    const auto& s = dataset.sentences[i];
    PreparedExample ex;
    if (vocabulary != nullptr) {
      ex.input.token_ids = vocabulary->encode(s.tokens);
    } else {
      ex.input.embeddings = &(*embeddings)[i];
      if (ex.input.embeddings->rows() != s.length()) {
        throw DataError("embeddings for sentence " + std::to_string(i) + " do not match its length");
      }
    }
    ex.gold = build_gold_tables(s, dataset.labels.entity_types.size(), dataset.labels.relation_types.size());
    ex.entities = s.entities;
    ex.triples = s.gold_triples();
    out.push_back(std::move(ex));
  }
  return out;
}

StepResult train_step(PfnModel& model, AdamState& state, std::span<const PreparedExample* const> batch,
                      const TrainConfig& config, std::mt19937_64& rng) {
  auto& params = model.parameters();
  params.zero_grads();
  StepResult result;
  const ForwardNoise noise{config.dropout, config.dropout > 0.0 ? &rng : nullptr};
  for (const PreparedExample* ex : batch) {
    if (ex->input.length() == 0) continue;
    Tape tape;
    const Var loss = model.loss(tape, ex->input, ex->gold, ex->entities, noise);
    const double value = tape.scalar(loss);
    if (!std::isfinite(value)) throw NumericError("non-finite training loss");
    result.loss += value;
    tape.backward(loss);
  }
  result.grad_norm = clip_gradients(params, config.clip_norm);
  adam_step(params, state, {config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps});
  return result;
}

DevScores score_examples(const PfnModel& model, std::span<const PreparedExample> examples,
                         Thresholds thresholds, MatchCriteria criteria) {
  std::vector<std::vector<EntitySpan>> pe, ge;
  std::vector<std::vector<Triple>> pt, gt;
  for (const auto& ex : examples) {
    const DecodedResult r = model.predict(ex.input, thresholds);
    pe.push_back(r.entities);
    pt.push_back(r.triples);
    ge.push_back(ex.entities);
    gt.push_back(ex.triples);
  }
  DevScores d;
  d.ner = ner_f1_corpus(pe, ge, criteria);
  d.re = re_f1_corpus(pt, gt, criteria);
  d.mean_f1 = 0.5 * (d.ner.f1 + d.re.f1);
  return d;
}

Checkpoint make_checkpoint(const PfnModel& model, const TrainConfig& train, const AdamState& optimizer,
                           std::size_t epoch) {
  Checkpoint c;
  c.model = model.config();
  c.train = train;
  c.epoch = epoch;
  c.parameters = model.parameters().all();
  for (auto& p : c.parameters) p.tensor.zero_grad();
  c.optimizer = optimizer;
  return c;
}

PfnModel restore_model(const Checkpoint& checkpoint) {
  PfnModel model(checkpoint.model);
  auto& params = model.parameters();
  if (params.size() != checkpoint.parameters.size()) {
    throw DataError("checkpoint has " + std::to_string(checkpoint.parameters.size()) + " parameters, model expects " +
                    std::to_string(params.size()));
  }
  for (const auto& saved : checkpoint.parameters) {
    const ParamId id = params.find(saved.name);
    if (!id.valid()) throw DataError("checkpoint parameter " + saved.name + " is not part of the model");
    auto& dst = params[id].tensor;
    if (dst.shape() != saved.tensor.shape()) {
      throw DataError("checkpoint parameter " + saved.name + " has shape " + shape_string(saved.tensor.shape()) +
                      ", model expects " + shape_string(dst.shape()));
    }
    std::copy(saved.tensor.values().begin(), saved.tensor.values().end(), dst.values().begin());
  }
  return model;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr std::string_view kFormat = "pfn-checkpoint";
constexpr int kVersion = 1;

ordered_json prf_json(const Prf& p) {
  return ordered_json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1},
                      {"tp", p.tp},               {"fp", p.fp},         {"fn", p.fn}};
}

Prf prf_parse(const json& j) {
  Prf p = prf_from_counts(j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
                          j.at("fn").get<std::size_t>());
  p.precision = j.at("precision").get<double>();
  p.recall = j.at("recall").get<double>();
  p.f1 = j.at("f1").get<double>();
  return p;
}

ordered_json dev_json(const DevScores& d) {
  return ordered_json{{"ner", prf_json(d.ner)}, {"re", prf_json(d.re)}, {"mean_f1", d.mean_f1}};
}

DevScores dev_parse(const json& j) {
  return {prf_parse(j.at("ner")), prf_parse(j.at("re")), j.at("mean_f1").get<double>()};
}

ordered_json model_json(const ModelConfig& c) {
  ordered_json j;
  j["input_dim"] = c.encoder.input_dim;
  j["hidden_dim"] = c.encoder.hidden_dim;
  j["num_layers"] = c.encoder.num_layers;
  j["direction"] = to_string(c.encoder.direction);
  j["use_global"] = c.encoder.use_global;
  j["chunk_count"] = c.encoder.chunk_count;
  j["scheme"] = to_string(c.encoder.scheme);
  j["span_dim"] = c.span_dim;
  j["vocab_size"] = c.vocab_size;
  j["entity_types"] = c.entity_types;
  j["relation_types"] = c.relation_types;
  j["mask_lower_triangle"] = c.loss.mask_lower_triangle;
  j["normalize_loss"] = c.loss.normalize;
  j["clamp_eps"] = c.loss.clamp_eps;
  j["decoding"] = to_string(c.decoding);
  return j;
}

ModelConfig model_parse(const json& j) {
  ModelConfig c;
  c.encoder.input_dim = j.at("input_dim").get<std::size_t>();
  c.encoder.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.encoder.num_layers = j.at("num_layers").get<std::size_t>();
  c.encoder.direction = parse_direction(j.at("direction").get<std::string>());
  c.encoder.use_global = j.at("use_global").get<bool>();
  c.encoder.chunk_count = j.at("chunk_count").get<std::size_t>();
  c.encoder.scheme = parse_scheme(j.at("scheme").get<std::string>());
  c.span_dim = j.at("span_dim").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.entity_types = j.at("entity_types").get<std::size_t>();
  c.relation_types = j.at("relation_types").get<std::size_t>();
  c.loss.mask_lower_triangle = j.at("mask_lower_triangle").get<bool>();
  c.loss.normalize = j.at("normalize_loss").get<bool>();
  c.loss.clamp_eps = j.at("clamp_eps").get<double>();
  c.decoding = parse_decoding(j.at("decoding").get<std::string>());
  return c;
}

ordered_json train_json(const TrainConfig& c) {
  ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["dropout"] = c.dropout;
  // JSON has no infinity; null means clipping is off.
  j["clip_norm"] = std::isfinite(c.clip_norm) ? ordered_json(c.clip_norm) : ordered_json(nullptr);
  j["seed"] = c.seed;
  j["threshold_entity"] = c.thresholds.entity;
  j["threshold_relation"] = c.thresholds.relation;
  j["selection_span_mode"] = to_string(c.selection.span_mode);
  j["selection_averaging"] = to_string(c.selection.averaging);
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  return j;
}

TrainConfig train_parse(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.clip_norm = j.at("clip_norm").is_null() ? std::numeric_limits<double>::infinity()
                                            : j.at("clip_norm").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.thresholds.entity = j.at("threshold_entity").get<double>();
  c.thresholds.relation = j.at("threshold_relation").get<double>();
  c.selection.span_mode = parse_span_mode(j.at("selection_span_mode").get<std::string>());
  c.selection.averaging = parse_averaging(j.at("selection_averaging").get<std::string>());
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  return c;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& c) {
  ordered_json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["model"] = model_json(c.model);
  j["train"] = train_json(c.train);
  j["epoch"] = c.epoch;
  j["dev"] = c.dev ? dev_json(*c.dev) : ordered_json(nullptr);
  j["vocabulary"] = c.vocabulary;
  j["labels"] = {{"entity_types", c.labels.entity_types}, {"relation_types", c.labels.relation_types}};
  j["parameters"] = ordered_json::array();
  for (const auto& p : c.parameters) {
    ordered_json jp;
    jp["name"] = p.name;
    jp["shape"] = p.tensor.shape();
    jp["values"] = std::vector<double>(p.tensor.values().begin(), p.tensor.values().end());
    j["parameters"].push_back(std::move(jp));
  }
  j["optimizer"] = {{"step", c.optimizer.step}, {"m", c.optimizer.m}, {"v", c.optimizer.v}};
  return j.dump();
}

Checkpoint checkpoint_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormat) throw DataError("not a checkpoint file");
    if (j.at("version").get<int>() != kVersion) {
      throw DataError("unsupported checkpoint version " + std::to_string(j.at("version").get<int>()));
    }
    Checkpoint c;
    c.model = model_parse(j.at("model"));
    c.train = train_parse(j.at("train"));
    c.epoch = j.at("epoch").get<std::size_t>();
    if (!j.at("dev").is_null()) c.dev = dev_parse(j.at("dev"));
    c.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    c.labels.entity_types = j.at("labels").at("entity_types").get<std::vector<std::string>>();
    c.labels.relation_types = j.at("labels").at("relation_types").get<std::vector<std::string>>();
    for (const auto& jp : j.at("parameters")) {
      Parameter p{jp.at("name").get<std::string>(),
                  Tensor(jp.at("shape").get<Shape>(), jp.at("values").get<std::vector<double>>())};
      c.parameters.push_back(std::move(p));
    }
    c.optimizer.step = j.at("optimizer").at("step").get<std::uint64_t>();
    c.optimizer.m = j.at("optimizer").at("m").get<std::vector<std::vector<double>>>();
    c.optimizer.v = j.at("optimizer").at("v").get<std::vector<std::vector<double>>>();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(checkpoint) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Loop

TrainResult train_loop(PfnModel& model, std::span<const PreparedExample> train,
                       std::span<const PreparedExample> dev, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw DataError("training set is empty");
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState state;
  TrainResult result;
  if (dev.empty()) result.warnings.push_back("dev set is empty; keeping the final-epoch checkpoint");

  std::vector<const PreparedExample*> order;
  for (const auto& ex : train) order.push_back(&ex);
  std::optional<double> best_score;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - b);
      const StepResult step = train_step(model, state, std::span(order).subspan(b, n), config, rng);
      rec.loss += step.loss;
      rec.max_grad_norm = std::max(rec.max_grad_norm, step.grad_norm);
    }
    bool keep = false;
    if (!dev.empty()) {
      rec.dev = score_examples(model, dev, config.thresholds, config.selection);
      if (!best_score || rec.dev->mean_f1 > *best_score) {
        best_score = rec.dev->mean_f1;
        keep = true;
      }
    } else {
      keep = epoch == config.epochs;
    }
    if (keep) {
      result.best = make_checkpoint(model, config, state, epoch);
      result.best.dev = rec.dev;
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

std::string history_to_json(const std::vector<EpochRecord>& history) {
  ordered_json j = ordered_json::array();
  for (const auto& r : history) {
    ordered_json e;
    e["epoch"] = r.epoch;
    e["loss"] = r.loss;
    e["max_grad_norm"] = r.max_grad_norm;
    e["dev"] = r.dev ? dev_json(*r.dev) : ordered_json(nullptr);
    j.push_back(std::move(e));
  }
  return j.dump(2);
}

}  // namespace pfn
