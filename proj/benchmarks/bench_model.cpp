#include <benchmark/benchmark.h>

#include <random>

#include "pfn/data.hpp"
#include "pfn/model.hpp"
#include "pfn/training.hpp"

namespace {

pfn::ModelConfig config(std::size_t hidden, pfn::EncodingScheme scheme, std::size_t vocab) {
  pfn::ModelConfig c;
  c.encoder.input_dim = 32;
  c.encoder.hidden_dim = hidden;
  c.encoder.scheme = scheme;
  c.vocab_size = vocab;
  c.entity_types = 3;
  c.relation_types = 2;
  return c;
}

std::vector<std::size_t> sentence(std::size_t len, std::size_t vocab) {
  std::vector<std::size_t> ids(len);
  for (std::size_t i = 0; i < len; ++i) ids[i] = (i * 7 + 1) % vocab;
  return ids;
}

void BM_Forward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto hidden = static_cast<std::size_t>(state.range(1));
  pfn::PfnModel model(config(hidden, pfn::EncodingScheme::joint, 100));
  std::mt19937_64 rng(1);
  model.initialize(rng);
  pfn::ModelInput input{sentence(len, 100), nullptr};
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict_tables(input));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_Forward)->Args({10, 64})->Args({20, 64})->Args({40, 64})->Args({20, 128});

void BM_ForwardScheme(benchmark::State& state) {
  const auto scheme = static_cast<pfn::EncodingScheme>(state.range(0));
  pfn::PfnModel model(config(64, scheme, 100));
  std::mt19937_64 rng(1);
  model.initialize(rng);
  pfn::ModelInput input{sentence(20, 100), nullptr};
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict_tables(input));
  }
}
BENCHMARK(BM_ForwardScheme)->Arg(0)->Arg(1)->Arg(2);

void BM_TrainEpoch(benchmark::State& state) {
  const pfn::Dataset ds = pfn::generate_synthetic(7, 50);
  const pfn::Vocabulary vocab = pfn::Vocabulary::build(ds);
  const auto examples = pfn::prepare_examples(ds, &vocab, nullptr);
  pfn::PfnModel model(config(64, pfn::EncodingScheme::joint, vocab.size()));
  std::mt19937_64 rng(1);
  model.initialize(rng);
  pfn::TrainConfig tc;
  pfn::AdamState adam;
  std::vector<const pfn::PreparedExample*> batch;
  for (const auto& ex : examples) batch.push_back(&ex);
  for (auto _ : state) {
    for (std::size_t b = 0; b < batch.size(); b += tc.batch_size) {
      const std::size_t n = std::min(tc.batch_size, batch.size() - b);
      benchmark::DoNotOptimize(pfn::train_step(model, adam, std::span(batch).subspan(b, n), tc, rng));
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
