#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "pfn/data.hpp"
#include "pfn/evaluation.hpp"
#include "pfn/model.hpp"
#include "pfn/training.hpp"

namespace pfn::cli {

// Everything a run needs, serialized as one flat JSON object. Vocabulary size
// and label counts in `model` are filled from the data at run time.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  AnnotationMode mode = AnnotationMode::exact;
  Averaging averaging = Averaging::micro;

  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string input_path;
  std::string labels_path;
  std::string embeddings_path;
  std::string dev_embeddings_path;
  std::string checkpoint_path;
  std::string out_dir = "out";

  std::size_t synth_sentences = 50;
  // Chunk count for the coarse ablation row; 0 picks the largest divisor of
  // hidden_dim that is at most 10.
  std::size_t coarse_chunks = 0;

  std::size_t gradcheck_sentences = 2;
  std::size_t gradcheck_max_entries = 16;
  double gradcheck_eps = 1e-4;
  double gradcheck_tolerance = 1e-4;

  std::string to_json() const;
  // Applies the keys of a flat JSON object on top of *this; unknown keys and
  // ill-typed values raise ConfigError.
  void merge_json(std::string_view text);
  // Flag override; `value` is parsed as JSON when possible, else taken as a string.
  void set(std::string_view key, std::string_view value);

  MatchCriteria criteria() const {
    return {mode == AnnotationMode::partial ? SpanMode::partial : SpanMode::exact, averaging};
  }
  void validate() const;
};

RunConfig load_run_config(const std::string& path);

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view text);

}  // namespace pfn::cli
