#include "run_config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "pfn/error.hpp"

namespace pfn::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Field {
  std::string key;
  std::function<ordered_json()> get;
  std::function<void(const json&)> set;
};

template <class T>
Field plain(std::string key, T& ref) {
  return {std::move(key), [&ref] { return ordered_json(ref); }, [&ref](const json& j) { ref = j.get<T>(); }};
}

template <class E, class Parse>
Field enumerated(std::string key, E& ref, Parse parse) {
  return {std::move(key), [&ref] { return ordered_json(std::string(to_string(ref))); },
          [&ref, parse](const json& j) { ref = parse(j.get<std::string>()); }};
}

std::vector<Field> fields(RunConfig& c) {
  auto& e = c.model.encoder;
  auto& t = c.train;
  std::vector<Field> f;
  f.push_back(plain("input_dim", e.input_dim));
  f.push_back(plain("hidden_dim", e.hidden_dim));
  f.push_back(plain("num_layers", e.num_layers));
  f.push_back(enumerated("direction", e.direction, parse_direction));
  f.push_back(plain("use_global", e.use_global));
  f.push_back(plain("chunk_count", e.chunk_count));
  f.push_back(enumerated("scheme", e.scheme, parse_scheme));
  f.push_back(plain("span_dim", c.model.span_dim));
  f.push_back(plain("mask_lower_triangle", c.model.loss.mask_lower_triangle));
  f.push_back(plain("normalize_loss", c.model.loss.normalize));
  f.push_back(plain("clamp_eps", c.model.loss.clamp_eps));
  f.push_back(enumerated("decoding", c.model.decoding, parse_decoding));
  f.push_back(plain("learning_rate", t.learning_rate));
  f.push_back(plain("batch_size", t.batch_size));
  f.push_back(plain("epochs", t.epochs));
  f.push_back(plain("dropout", t.dropout));
  f.push_back({"clip_norm",
               [&t] { return std::isfinite(t.clip_norm) ? ordered_json(t.clip_norm) : ordered_json(nullptr); },
               [&t](const json& j) {
                 t.clip_norm = j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
               }});
  f.push_back(plain("seed", t.seed));
  f.push_back(plain("threshold_entity", t.thresholds.entity));
  f.push_back(plain("threshold_relation", t.thresholds.relation));
  f.push_back(plain("adam_beta1", t.adam_beta1));
  f.push_back(plain("adam_beta2", t.adam_beta2));
  f.push_back(plain("adam_eps", t.adam_eps));
  f.push_back(enumerated("mode", c.mode, parse_annotation_mode));
  f.push_back(enumerated("averaging", c.averaging, parse_averaging));
  f.push_back(plain("train_path", c.train_path));
  f.push_back(plain("dev_path", c.dev_path));
  f.push_back(plain("test_path", c.test_path));
  f.push_back(plain("input_path", c.input_path));
  f.push_back(plain("labels_path", c.labels_path));
  f.push_back(plain("embeddings_path", c.embeddings_path));
  f.push_back(plain("dev_embeddings_path", c.dev_embeddings_path));
  f.push_back(plain("checkpoint_path", c.checkpoint_path));
  f.push_back(plain("out_dir", c.out_dir));
  f.push_back(plain("synth_sentences", c.synth_sentences));
  f.push_back(plain("coarse_chunks", c.coarse_chunks));
  f.push_back(plain("gradcheck_sentences", c.gradcheck_sentences));
  f.push_back(plain("gradcheck_max_entries", c.gradcheck_max_entries));
  f.push_back(plain("gradcheck_eps", c.gradcheck_eps));
  f.push_back(plain("gradcheck_tolerance", c.gradcheck_tolerance));
  return f;
}

void apply(RunConfig& c, const std::string& key, const json& value) {
  for (auto& f : fields(c)) {
    if (f.key != key) continue;
    try {
      f.set(value);
    } catch (const json::exception&) {
      throw ConfigError("config key \"" + key + "\" has an invalid value: " + value.dump());
    }
    return;
  }
  throw ConfigError("unknown config key \"" + key + "\"");
}

}  // namespace

std::string RunConfig::to_json() const {
  RunConfig copy = *this;
  ordered_json j;
  for (const auto& f : fields(copy)) j[f.key] = f.get();
  return j.dump(2);
}

void RunConfig::merge_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, value] : j.items()) apply(*this, key, value);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  json j = json::parse(value, nullptr, false);
  if (j.is_discarded()) j = std::string(value);
  apply(*this, std::string(key), j);
}

void RunConfig::validate() const {
  model.encoder.validate();
  train.validate();
  if (!(model.loss.clamp_eps > 0.0 && model.loss.clamp_eps < 0.5)) throw ConfigError("clamp_eps must lie in (0, 0.5)");
  if (!(gradcheck_eps > 0.0) || !(gradcheck_tolerance > 0.0)) {
    throw ConfigError("gradcheck_eps and gradcheck_tolerance must be positive");
  }
  if (coarse_chunks != 0 && model.encoder.hidden_dim % coarse_chunks != 0) {
    throw ConfigError("coarse_chunks must divide hidden_dim");
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  c.merge_json(ss.str());
  return c;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pfn::cli
