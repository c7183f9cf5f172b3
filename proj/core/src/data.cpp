#include "pfn/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pfn/error.hpp"

namespace pfn {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(AnnotationMode m) noexcept {
  return m == AnnotationMode::partial ? "partial" : "exact";
}

AnnotationMode parse_annotation_mode(std::string_view s) {
  if (s == "exact") return AnnotationMode::exact;
  if (s == "partial") return AnnotationMode::partial;
  throw ConfigError("unknown annotation mode: " + std::string(s));
}

std::vector<Triple> SentenceExample::gold_triples() const {
  std::vector<Triple> out;
  out.reserve(relations.size());
  for (const auto& r : relations) out.push_back({entities.at(r.subject), r.relation, entities.at(r.object)});
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

std::optional<int> index_of(const std::vector<std::string>& names, std::string_view name) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<int>(it - names.begin());
}

}  // namespace

std::optional<int> LabelSet::entity_id(std::string_view name) const {
  return index_of(entity_types, name);
}

std::optional<int> LabelSet::relation_id(std::string_view name) const {
  return index_of(relation_types, name);
}

std::string labels_to_json(const LabelSet& labels) {
  ordered_json j;
  j["entity_types"] = labels.entity_types;
  j["relation_types"] = labels.relation_types;
  return j.dump();
}

LabelSet labels_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("labels: ") + e.what());
  }
  if (!j.is_object() || !j.contains("entity_types") || !j.contains("relation_types")) {
    throw DataError("labels: expected {\"entity_types\":[...], \"relation_types\":[...]}");
  }
  LabelSet labels;
  try {
    labels.entity_types = j.at("entity_types").get<std::vector<std::string>>();
    labels.relation_types = j.at("relation_types").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("labels: ") + e.what());
  }
  for (const auto* names : {&labels.entity_types, &labels.relation_types}) {
    std::set<std::string> seen(names->begin(), names->end());
    if (seen.size() != names->size()) throw DataError("labels: duplicate label name");
  }
  return labels;
}

LabelSet load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return labels_from_json(ss.str());
}

void save_labels(const std::filesystem::path& path, const LabelSet& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write labels file " + path.string());
  out << labels_to_json(labels) << "\n";
}

// ---------------------------------------------------------------------------
// Dataset I/O

namespace {

struct RawEntity {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::string type;
};

struct RawRelation {
  std::int64_t subject = 0;
  std::string relation;
  std::int64_t object = 0;
};

struct RawSentence {
  std::size_t line = 0;
  std::vector<std::string> tokens;
  std::vector<RawEntity> entities;
  std::vector<RawRelation> relations;
};

RawSentence parse_record(const std::string& text, std::size_t line, AnnotationMode mode) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw DataError("record must be a JSON object", line);
  RawSentence s;
  s.line = line;
  try {
    s.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("entities")) {
      for (const auto& e : j.at("entities")) {
        RawEntity re;
        re.start = e.at("start").get<std::int64_t>();
        re.end = e.at("end").get<std::int64_t>();
        if (e.contains("type")) {
          re.type = e.at("type").get<std::string>();
        } else if (mode == AnnotationMode::exact) {
          throw DataError("entity without type", line);
        }
        s.entities.push_back(std::move(re));
      }
    }
    if (j.contains("relations")) {
      for (const auto& r : j.at("relations")) {
        s.relations.push_back({r.at("subject").get<std::int64_t>(), r.at("relation").get<std::string>(),
                               r.at("object").get<std::int64_t>()});
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed record: ") + e.what(), line);
  }
  for (const auto& t : s.tokens) {
    if (t.empty() || t.find_first_of(" \t\n\r") != std::string::npos) {
      throw DataError("tokens must be non-empty and whitespace-free", line);
    }
  }
  return s;
}

SentenceExample validate(const RawSentence& raw, AnnotationMode mode, const LabelSet& labels) {
  SentenceExample ex;
  ex.tokens = raw.tokens;
  const auto len = static_cast<std::int64_t>(raw.tokens.size());
  if (len == 0 && !raw.entities.empty()) throw DataError("entities in an empty sentence", raw.line);

  // Raw entity index -> validated entity index (partial mode may merge).
  std::vector<std::size_t> remap;
  std::map<EntitySpan, std::size_t> seen;
  for (std::size_t n = 0; n < raw.entities.size(); ++n) {
    const auto& e = raw.entities[n];
    if (e.end < e.start) {
      throw DataError("entity " + std::to_string(n) + ": end " + std::to_string(e.end) + " < start " +
                          std::to_string(e.start),
                      raw.line);
    }
    if (e.start < 0 || e.end >= len) {
      throw DataError("entity " + std::to_string(n) + ": span [" + std::to_string(e.start) + "," +
                          std::to_string(e.end) + "] out of range for " + std::to_string(len) + " tokens",
                      raw.line);
    }
    EntitySpan span;
    if (mode == AnnotationMode::partial) {
      span = {static_cast<std::size_t>(e.end), static_cast<std::size_t>(e.end), 0};
    } else {
      const auto type = labels.entity_id(e.type);
      if (!type) throw DataError("entity " + std::to_string(n) + ": unknown type \"" + e.type + "\"", raw.line);
      span = {static_cast<std::size_t>(e.start), static_cast<std::size_t>(e.end), *type};
    }
    auto [it, inserted] = seen.emplace(span, ex.entities.size());
    if (!inserted && mode == AnnotationMode::exact) {
      throw DataError("entity " + std::to_string(n) + ": duplicate entity", raw.line);
    }
    if (inserted) ex.entities.push_back(span);
    remap.push_back(it->second);
  }

  std::set<RelationMention> relations;
  for (std::size_t n = 0; n < raw.relations.size(); ++n) {
    const auto& r = raw.relations[n];
    for (auto idx : {r.subject, r.object}) {
      if (idx < 0 || idx >= static_cast<std::int64_t>(raw.entities.size())) {
        throw DataError("relation " + std::to_string(n) + ": references missing entity " +
                            std::to_string(idx),
                        raw.line);
      }
    }
    const auto rel = labels.relation_id(r.relation);
    if (!rel) {
      throw DataError("relation " + std::to_string(n) + ": unknown label \"" + r.relation + "\"", raw.line);
    }
    RelationMention m{remap[static_cast<std::size_t>(r.subject)], *rel,
                      remap[static_cast<std::size_t>(r.object)]};
    if (!relations.insert(m).second && mode == AnnotationMode::exact) {
      throw DataError("relation " + std::to_string(n) + ": duplicate relation", raw.line);
    }
    if (mode == AnnotationMode::exact || ex.relations.end() == std::find(ex.relations.begin(), ex.relations.end(), m)) {
      ex.relations.push_back(m);
    }
  }
  return ex;
}

}  // namespace

Dataset parse_dataset(std::istream& in, AnnotationMode mode, const LabelSet* labels) {
  std::vector<RawSentence> raw;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    raw.push_back(parse_record(text, line, mode));
  }

  Dataset ds;
  ds.mode = mode;
  if (labels != nullptr) {
    ds.labels = *labels;
  } else {
    std::set<std::string> ents, rels;
    for (const auto& s : raw) {
      for (const auto& e : s.entities) ents.insert(e.type);
      for (const auto& r : s.relations) rels.insert(r.relation);
    }
    ds.labels.entity_types.assign(ents.begin(), ents.end());
    ds.labels.relation_types.assign(rels.begin(), rels.end());
  }
  if (mode == AnnotationMode::partial) ds.labels.entity_types = {std::string(kNoneType)};

  ds.sentences.reserve(raw.size());
  for (const auto& s : raw) ds.sentences.push_back(validate(s, mode, ds.labels));
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, AnnotationMode mode, const LabelSet* labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return parse_dataset(in, mode, labels);
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  for (std::size_t n = 0; n < dataset.sentences.size(); ++n) {
    const auto& s = dataset.sentences[n];
    ordered_json j;
    j["tokens"] = s.tokens;
    j["entities"] = ordered_json::array();
    for (const auto& e : s.entities) {
      ordered_json je;
      je["start"] = e.start;
      je["end"] = e.end;
      je["type"] = dataset.labels.entity_types.at(static_cast<std::size_t>(e.type));
      j["entities"].push_back(std::move(je));
    }
    j["relations"] = ordered_json::array();
    for (const auto& r : s.relations) {
      ordered_json jr;
      jr["subject"] = r.subject;
      jr["relation"] = dataset.labels.relation_types.at(static_cast<std::size_t>(r.relation));
      jr["object"] = r.object;
      j["relations"].push_back(std::move(jr));
    }
    if (n < dataset.pattern_tags.size()) j["pattern"] = to_string(dataset.pattern_tags[n]);
    out << j.dump() << "\n";
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset " + path.string());
  write_dataset(out, dataset);
}

ScoreTables build_gold_tables(const SentenceExample& example, std::size_t entity_types,
                              std::size_t relation_types) {
  ScoreTables t(example.length(), entity_types, relation_types);
  for (const auto& e : example.entities) t.entity_at(e.start, e.end, static_cast<std::size_t>(e.type)) = 1.0;
  for (const auto& r : example.relations) {
    const auto& s = example.entities.at(r.subject);
    const auto& o = example.entities.at(r.object);
    t.relation_at(s.start, o.start, static_cast<std::size_t>(r.relation)) = 1.0;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens.front() != kUnknownToken) {
    tokens.insert(tokens.begin(), std::string(kUnknownToken));
  }
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw DataError("vocabulary: duplicate token " + tokens_[i]);
  }
}

Vocabulary Vocabulary::build(const Dataset& dataset) {
  std::set<std::string> unique;
  for (const auto& s : dataset.sentences) unique.insert(s.tokens.begin(), s.tokens.end());
  unique.erase(std::string(kUnknownToken));
  return Vocabulary(std::vector<std::string>(unique.begin(), unique.end()));
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

SyntheticGrammar default_grammar() {
  using P = OverlapPattern;
  SyntheticGrammar g;
  g.labels.entity_types = {"LOC", "ORG", "PER"};
  g.labels.relation_types = {"born_in", "lives_in"};
  g.fillers["PER"] = {"Adam", "Joe", "Maria", "Chen", "Olga", "Ravi", "Lena", "Omar",
                      "Sara", "John Smith", "Anna Berg", "Li Wei", "Tom Hall"};
  g.fillers["LOC"] = {"Paris", "Oslo", "Lima", "Cairo", "Kyoto", "Rome", "Delhi",
                      "New York", "Buenos Aires", "Cape Town"};
  g.fillers["ORG"] = {"Acme", "Globex", "Initech", "Hooli", "Umbrella Corp", "Red Cross"};
  g.templates = {
      {P::normal, "{PER:0} was born in {LOC:0} .", {{"PER:0", "born_in", "LOC:0"}}},
      {P::normal, "{PER:0} lives in {LOC:0} .", {{"PER:0", "lives_in", "LOC:0"}}},
      {P::normal, "{PER:0} , who works at {ORG:0} , was born in {LOC:0} .", {{"PER:0", "born_in", "LOC:0"}}},
      {P::normal, "{ORG:0} hired {PER:0} , who lives in {LOC:0} .", {{"PER:0", "lives_in", "LOC:0"}}},
      {P::single_entity_overlap,
       "{PER:0} and {PER:1} were born in {LOC:0} .",
       {{"PER:0", "born_in", "LOC:0"}, {"PER:1", "born_in", "LOC:0"}}},
      {P::single_entity_overlap,
       "{PER:0} was born in {LOC:0} and lives in {LOC:1} .",
       {{"PER:0", "born_in", "LOC:0"}, {"PER:0", "lives_in", "LOC:1"}}},
      {P::single_entity_overlap,
       "{PER:0} and {PER:1} live in {LOC:0} .",
       {{"PER:0", "lives_in", "LOC:0"}, {"PER:1", "lives_in", "LOC:0"}}},
      {P::entity_pair_overlap,
       "{PER:0} was born in {LOC:0} and lived there ever since .",
       {{"PER:0", "born_in", "LOC:0"}, {"PER:0", "lives_in", "LOC:0"}}},
      {P::entity_pair_overlap,
       "{LOC:0} is where {PER:0} was born and still lives .",
       {{"PER:0", "born_in", "LOC:0"}, {"PER:0", "lives_in", "LOC:0"}}},
  };
  return g;
}

namespace {

// Portable draws: mt19937_64 output is fixed by the standard, distributions are not.
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool is_slot(const std::string& tok) { return tok.size() > 2 && tok.front() == '{' && tok.back() == '}'; }

}  // namespace

Dataset generate_synthetic(std::uint64_t seed, std::size_t n_sentences, const SyntheticGrammar& grammar) {
  if (grammar.templates.empty()) throw ConfigError("synthetic grammar has no templates");
  if (grammar.pattern_cycle.empty()) throw ConfigError("synthetic grammar has an empty pattern cycle");
  std::map<OverlapPattern, std::vector<const SentenceTemplate*>> by_pattern;
  for (const auto& t : grammar.templates) by_pattern[t.pattern].push_back(&t);
  for (auto p : grammar.pattern_cycle) {
    if (by_pattern[p].empty()) {
      throw ConfigError("synthetic grammar has no template for pattern " + std::string(to_string(p)));
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<OverlapPattern> schedule;
  for (std::size_t i = 0; i < n_sentences; ++i) schedule.push_back(grammar.pattern_cycle[i % grammar.pattern_cycle.size()]);
  for (std::size_t i = schedule.size(); i > 1; --i) std::swap(schedule[i - 1], schedule[draw(rng, i)]);

  Dataset ds;
  ds.labels = grammar.labels;
  ds.mode = AnnotationMode::exact;
  for (auto pattern : schedule) {
    const auto& options = by_pattern[pattern];
    const SentenceTemplate& tpl = *options[draw(rng, options.size())];

    SentenceExample ex;
    std::map<std::string, std::size_t> slot_entity;
    std::map<std::string, std::set<std::size_t>> used;
    for (const auto& tok : split_ws(tpl.text)) {
      if (!is_slot(tok)) {
        ex.tokens.push_back(tok);
        continue;
      }
      const std::string slot = tok.substr(1, tok.size() - 2);
      const std::string type = slot.substr(0, slot.find(':'));
      const auto type_id = grammar.labels.entity_id(type);
      const auto fill_it = grammar.fillers.find(type);
      if (!type_id || fill_it == grammar.fillers.end() || fill_it->second.empty()) {
        throw ConfigError("synthetic grammar: no fillers for slot type " + type);
      }
      if (slot_entity.count(slot) != 0) throw ConfigError("synthetic grammar: slot repeated: " + slot);
      const auto& pool = fill_it->second;
      if (used[type].size() >= pool.size()) throw ConfigError("synthetic grammar: too few fillers for " + type);
      std::size_t pick = draw(rng, pool.size());
      while (used[type].count(pick) != 0) pick = (pick + 1) % pool.size();
      used[type].insert(pick);
      const auto words = split_ws(pool[pick]);
      const std::size_t start = ex.tokens.size();
      ex.tokens.insert(ex.tokens.end(), words.begin(), words.end());
      slot_entity[slot] = ex.entities.size();
      ex.entities.push_back({start, ex.tokens.size() - 1, *type_id});
    }
    for (const auto& link : tpl.links) {
      const auto rel = grammar.labels.relation_id(link.relation);
      if (!rel || slot_entity.count(link.subject_slot) == 0 || slot_entity.count(link.object_slot) == 0) {
        throw ConfigError("synthetic grammar: bad link in template \"" + tpl.text + "\"");
      }
      ex.relations.push_back({slot_entity[link.subject_slot], *rel, slot_entity[link.object_slot]});
    }
    ds.sentences.push_back(std::move(ex));
    ds.pattern_tags.push_back(pattern);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Precomputed embeddings

std::vector<Tensor> parse_precomputed_embeddings(std::istream& in, const Dataset& dataset) {
  std::vector<std::optional<Tensor>> slots(dataset.sentences.size());
  std::optional<std::size_t> dim;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::int64_t sid = 0;
    std::vector<std::vector<double>> vectors;
    try {
      const json j = json::parse(text);
      sid = j.at("sid").get<std::int64_t>();
      vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
      throw DataError(std::string("embeddings: malformed record: ") + e.what(), line);
    }
    if (sid < 0 || static_cast<std::size_t>(sid) >= slots.size()) {
      throw DataError("embeddings: sentence id " + std::to_string(sid) + " not in dataset", line);
    }
    auto& slot = slots[static_cast<std::size_t>(sid)];
    if (slot) throw DataError("embeddings: duplicate sentence id " + std::to_string(sid), line);
    const auto len = dataset.sentences[static_cast<std::size_t>(sid)].length();
    if (vectors.size() < len) {
      throw DataError("embeddings: sentence " + std::to_string(sid) + " missing vector for token " +
                          std::to_string(vectors.size()),
                      line);
    }
    if (vectors.size() > len) {
      throw DataError("embeddings: sentence " + std::to_string(sid) + " has " + std::to_string(vectors.size()) +
                          " vectors for " + std::to_string(len) + " tokens",
                      line);
    }
    if (len == 0) throw DataError("embeddings: sentence " + std::to_string(sid) + " is empty", line);
    std::vector<double> flat;
    for (std::size_t t = 0; t < vectors.size(); ++t) {
      if (!dim) dim = vectors[t].size();
      if (vectors[t].size() != *dim || *dim == 0) {
        throw DataError("embeddings: sentence " + std::to_string(sid) + " token " + std::to_string(t) +
                            " has dimension " + std::to_string(vectors[t].size()) + ", expected " +
                            std::to_string(*dim),
                        line);
      }
      flat.insert(flat.end(), vectors[t].begin(), vectors[t].end());
    }
    slot = Tensor::matrix(len, *dim, std::move(flat));
  }
  std::vector<Tensor> out;
  out.reserve(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (!slots[s]) throw DataError("embeddings: missing vectors for sentence " + std::to_string(s));
    out.push_back(std::move(*slots[s]));
  }
  return out;
}

std::vector<Tensor> load_precomputed_embeddings(const std::filesystem::path& path, const Dataset& dataset) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file " + path.string());
  return parse_precomputed_embeddings(in, dataset);
}

}  // namespace pfn
