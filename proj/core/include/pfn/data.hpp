#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pfn/tensor.hpp"
#include "pfn/types.hpp"
#include "pfn/units.hpp"

namespace pfn {

// exact: full spans with types. partial: only the tail token is annotated and
// every entity carries the single type "NONE".
enum class AnnotationMode { exact, partial };

std::string_view to_string(AnnotationMode m) noexcept;
AnnotationMode parse_annotation_mode(std::string_view s);

inline constexpr std::string_view kNoneType = "NONE";

struct RelationMention {
  std::size_t subject = 0;  // index into SentenceExample::entities
  int relation = 0;
  std::size_t object = 0;

  auto operator<=>(const RelationMention&) const = default;
};

struct SentenceExample {
  std::vector<std::string> tokens;
  std::vector<EntitySpan> entities;
  std::vector<RelationMention> relations;

  std::size_t length() const noexcept { return tokens.size(); }
  std::vector<Triple> gold_triples() const;

  bool operator==(const SentenceExample&) const = default;
};

struct LabelSet {
  std::vector<std::string> entity_types;
  std::vector<std::string> relation_types;

  std::optional<int> entity_id(std::string_view name) const;
  std::optional<int> relation_id(std::string_view name) const;

  bool operator==(const LabelSet&) const = default;
};

std::string labels_to_json(const LabelSet& labels);
LabelSet labels_from_json(std::string_view text);
LabelSet load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const LabelSet& labels);

struct Dataset {
  LabelSet labels;
  AnnotationMode mode = AnnotationMode::exact;
  std::vector<SentenceExample> sentences;
  // Generator-assigned overlap pattern per sentence (synthetic corpora only).
  std::vector<OverlapPattern> pattern_tags;
};

// JSON Lines, one sentence per line:
//   {"tokens":[...], "entities":[{"start":0,"end":1,"type":"PER"}],
//    "relations":[{"subject":0,"relation":"born_in","object":1}]}
// Indices are 0-based inclusive. Without `labels`, label sets are inferred
// (sorted); with them, unknown labels are rejected. Errors carry line numbers.
Dataset parse_dataset(std::istream& in, AnnotationMode mode, const LabelSet* labels = nullptr);
Dataset load_dataset(const std::filesystem::path& path, AnnotationMode mode,
                     const LabelSet* labels = nullptr);
void write_dataset(std::ostream& out, const Dataset& dataset);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

// Binary gold tables. The relation table marks start-token pairs.
ScoreTables build_gold_tables(const SentenceExample& example, std::size_t entity_types,
                              std::size_t relation_types);

// Token -> row of the trainable embedding table; row 0 is UNK.
class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);
  static Vocabulary build(const Dataset& dataset);

  std::size_t id(std::string_view token) const;
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Sentence templates with typed slots written as "{TYPE:n}".
struct SentenceTemplate {
  struct Link {
    std::string subject_slot;  // e.g. "PER:0"
    std::string relation;
    std::string object_slot;
  };
  OverlapPattern pattern = OverlapPattern::normal;
  std::string text;
  std::vector<Link> links;
};

struct SyntheticGrammar {
  LabelSet labels;
  std::vector<SentenceTemplate> templates;
  // Surface forms per entity type; multi-word fillers give multi-token spans.
  std::unordered_map<std::string, std::vector<std::string>> fillers;
  // Patterns drawn in rotation, so each listed pattern appears once every
  // pattern_cycle.size() sentences.
  std::vector<OverlapPattern> pattern_cycle = {OverlapPattern::normal,
                                               OverlapPattern::single_entity_overlap,
                                               OverlapPattern::entity_pair_overlap};
};

// PER/LOC/ORG entities, born_in/lives_in relations, Normal/SEO/EPO templates.
SyntheticGrammar default_grammar();

// Deterministic for a given seed and grammar; fills Dataset::pattern_tags.
Dataset generate_synthetic(std::uint64_t seed, std::size_t n_sentences,
                           const SyntheticGrammar& grammar = default_grammar());

// JSON Lines {"sid": int, "vectors": [[f64; d]; L]}, one line per sentence.
std::vector<Tensor> parse_precomputed_embeddings(std::istream& in, const Dataset& dataset);
std::vector<Tensor> load_precomputed_embeddings(const std::filesystem::path& path,
                                                const Dataset& dataset);

}  // namespace pfn
