#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfn/data.hpp"
#include "pfn/evaluation.hpp"
#include "pfn/model.hpp"
#include "pfn/parameters.hpp"

namespace pfn {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 4;
  std::size_t epochs = 100;
  double dropout = 0.1;
  // Global gradient-norm bound; infinity disables clipping.
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  Thresholds thresholds;
  // Dev selection maximizes (NER F1 + RE F1) / 2 under these criteria.
  MatchCriteria selection;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  bool operator==(const AdamState&) const = default;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over every parameter's accumulated gradient. Throws
// NumericError naming the parameter when a gradient is not finite.
void adam_step(ParameterStore& params, AdamState& state, const AdamOptions& options);

double global_grad_norm(const ParameterStore& params);
// Rescales gradients so their global norm is at most max_norm; returns the
// norm before clipping.
double clip_gradients(ParameterStore& params, double max_norm);

// A sentence ready for the model: input, gold tables and gold sets.
struct PreparedExample {
  ModelInput input;
  ScoreTables gold;
  std::vector<EntitySpan> entities;
  std::vector<Triple> triples;
};

// `embeddings` (precomputed mode) must outlive the returned examples.
std::vector<PreparedExample> prepare_examples(const Dataset& dataset, const Vocabulary* vocabulary,
                                              const std::vector<Tensor>* embeddings);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

// Summed loss over the batch, backward, clip, Adam update.
StepResult train_step(PfnModel& model, AdamState& state, std::span<const PreparedExample* const> batch,
                      const TrainConfig& config, std::mt19937_64& rng);

struct DevScores {
  Prf ner;
  Prf re;
  double mean_f1 = 0.0;
};

DevScores score_examples(const PfnModel& model, std::span<const PreparedExample> examples,
                         Thresholds thresholds, MatchCriteria criteria);

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::size_t epoch = 0;
  std::optional<DevScores> dev;
  std::vector<std::string> vocabulary;
  LabelSet labels;
  std::vector<Parameter> parameters;
  AdamState optimizer;
};

Checkpoint make_checkpoint(const PfnModel& model, const TrainConfig& train, const AdamState& optimizer,
                           std::size_t epoch);
// Rebuilds the model and copies parameters by name, checking shapes.
PfnModel restore_model(const Checkpoint& checkpoint);

std::string checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(std::string_view text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double max_grad_norm = 0.0;
  std::optional<DevScores> dev;
};

struct TrainResult {
  Checkpoint best;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  std::vector<std::string> warnings;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Shuffles per epoch, scores dev after each epoch and keeps the checkpoint
// with the highest mean dev F1 (earliest on ties). With an empty dev set the
// final epoch is kept and a warning recorded.
TrainResult train_loop(PfnModel& model, std::span<const PreparedExample> train,
                       std::span<const PreparedExample> dev, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

std::string history_to_json(const std::vector<EpochRecord>& history);

}  // namespace pfn
