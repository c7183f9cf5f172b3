// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cli.hpp"
#include "fixtures.hpp"
#include "pfn/evaluation.hpp"
#include "pfn/training.hpp"
#include "support.hpp"

namespace pfn {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && passed) detail = what;
    passed = passed && ok;
  }
};

std::vector<double> values_of(const Tape& tape, Var v) {
  const auto s = tape.value(v);
  return {s.begin(), s.end()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------------------

Outcome gate_partition_invariants() {
  Outcome o;
  const auto start = Clock::now();
  std::mt19937_64 rng(101);
  std::size_t inputs = 0;

  // cummax on raw logits of varying length and scale.
  for (int trial = 0; trial < 1000; ++trial, ++inputs) {
    const std::size_t n = 1 + rng() % 40;
    const double scale = std::pow(10.0, test::uniform(1, rng, -2.0, 2.0)[0]);
    Tape tape;
    const auto g = values_of(tape, tape.cummax(tape.constant(test::uniform(n, rng, -scale, scale))));
    for (std::size_t i = 0; i < n; ++i) {
      o.require(g[i] >= 0.0 && g[i] <= 1.0, "cummax outside [0,1]");
      if (i > 0) o.require(g[i] >= g[i - 1], "cummax decreased");
    }
    o.require(std::abs(g[n - 1] - 1.0) <= 1e-12, "cummax last entry not 1");
  }

  // Full cell steps, fine and coarse.
  std::size_t filter_max_ulps = 0;
  for (std::size_t chunks : {1u, 2u, 5u}) {
    const std::size_t h = 10;
    const std::size_t width = h / chunks;
    ParameterStore store;
    const PfnCellParams params = PfnCellParams::create(store, "cell", 4, h, width);
    for (int trial = 0; trial < 400; ++trial, ++inputs) {
      if (trial % 20 == 0) test::randomize(store, rng, 3.0);
      Tape tape;
      const BoundPfnCell cell = bind(tape, std::as_const(store), params, chunks);
      const StepState s = pfn_step(tape, cell, tape.constant(test::uniform(4, rng, -3, 3)),
                                   tape.constant(test::uniform(h, rng)), tape.constant(test::uniform(h, rng, -4, 4)));
      for (const auto& [gates, coef] : {std::pair{s.previous_gates, s.partitions.previous},
                                        std::pair{s.candidate_gates, s.partitions.candidate}}) {
        const auto e = values_of(tape, gates.entity);
        const auto r = values_of(tape, gates.relation);
        const auto re = values_of(tape, coef.entity);
        const auto rr = values_of(tape, coef.relation);
        const auto rs = values_of(tape, coef.shared);
        for (std::size_t i = 0; i < h; ++i) {
          o.require(e[i] >= 0.0 && e[i] <= 1.0 && r[i] >= 0.0 && r[i] <= 1.0, "gate outside [0,1]");
          if (i % width != 0) o.require(e[i] >= e[i - 1] && r[i] <= r[i - 1], "gate not monotone within chunk");
          if (i % width == width - 1) o.require(std::abs(e[i] - 1.0) <= 1e-12, "entity gate chunk end not 1");
          if (i % width == width - 1) o.require(std::abs(r[i]) <= 1e-12, "relation gate chunk end not 0");
          const double identity = re[i] + rr[i] + rs[i] - (1.0 - (1.0 - e[i]) * (1.0 - r[i]));
          o.require(std::abs(identity) <= 1e-10, "coefficient identity off by " + std::to_string(identity));
        }
      }
      const auto pe = values_of(tape, s.partitions.entity);
      const auto pr = values_of(tape, s.partitions.relation);
      const auto ps = values_of(tape, s.partitions.shared);
      const auto me = values_of(tape, s.memories.entity);
      const auto mr = values_of(tape, s.memories.relation);
      const auto ms = values_of(tape, s.memories.shared);
      for (std::size_t i = 0; i < h; ++i) {
        o.require(ms[i] == ps[i], "shared memory differs from shared partition");
        o.require(me[i] == pe[i] + ps[i] && mr[i] == pr[i] + ps[i], "task memory is not partition sum");
        // Recovering rho from the stored memories costs at most the rounding
        // of the one addition.
        for (auto [m, p] : {std::pair{me[i], pe[i]}, std::pair{mr[i], pr[i]}}) {
          const double diff = std::abs((m - ms[i]) - p);
          const double ulp = std::nextafter(std::abs(m), std::numeric_limits<double>::infinity()) - std::abs(m);
          const auto ulps = static_cast<std::size_t>(std::ceil(diff / ulp));
          filter_max_ulps = std::max(filter_max_ulps, ulps);
          o.require(diff <= ulp, "memory difference off by more than one ulp");
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  o.require(inputs >= 1000, "too few inputs");
  o.require(elapsed < 10.0, "runtime over 10 s");
  std::ostringstream d;
  d << inputs << " inputs, memory difference within " << filter_max_ulps << " ulp, " << elapsed << " s";
  if (o.passed) o.detail = d.str();
  else o.detail += "; " + d.str();
  return o;
}

// ---------------------------------------------------------------------------

struct CheckSentence {
  ModelInput input;
  SentenceExample example;
};

CheckSentence gradient_check_sentence(std::mt19937_64& rng, std::size_t vocab, std::size_t entity_types,
                                      std::size_t relation_types) {
  CheckSentence s;
  const std::size_t length = 3 + rng() % 4;
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t id = rng() % vocab;
    s.input.token_ids.push_back(id);
    s.example.tokens.push_back("w" + std::to_string(id));
  }
  s.example.entities.push_back({0, rng() % 2, static_cast<int>(rng() % entity_types)});
  s.example.entities.push_back({2, 2 + rng() % (length - 2), static_cast<int>(rng() % entity_types)});
  s.example.relations.push_back({0, static_cast<int>(rng() % relation_types), 1});
  return s;
}

Outcome gradient_check() {
  Outcome o;
  const auto start = Clock::now();
  std::ostringstream d;
  double worst = 0.0;
  std::size_t failing = 0;
  std::size_t checked = 0;
  for (auto direction : {Direction::unidirectional, Direction::bidirectional}) {
    for (std::size_t chunks : {1u, 10u}) {
      ModelConfig mc;
      mc.encoder.input_dim = 8;
      mc.encoder.hidden_dim = 20;
      mc.encoder.chunk_count = chunks;
      mc.encoder.direction = direction;
      mc.vocab_size = 12;
      mc.entity_types = 3;
      mc.relation_types = 2;
      PfnModel model(mc);
      std::mt19937_64 rng(1);
      model.initialize(rng);
      double corner_worst = 0.0;
      std::size_t corner_failing = 0;
      for (int n = 0; n < 5;) {
        const CheckSentence s = gradient_check_sentence(rng, mc.vocab_size, mc.entity_types, mc.relation_types);
        {
          Tape tape;
          const EncodedFeatures f = model.features(tape, s.input);
          if (pool_margin(tape, *f.global) < 1e-3) continue;
        }
        ++n;
        const ScoreTables gold = build_gold_tables(s.example, mc.entity_types, mc.relation_types);
        GradCheckOptions options;
        options.eps = 1e-4;
        options.tolerance = 1e-4;
        const GradCheckReport report = grad_check(
            [&](Tape& t) { return model.loss(t, s.input, gold, s.example.entities); }, model.parameters(), options);
        for (const auto& e : report.entries) {
          ++checked;
          corner_worst = std::max(corner_worst, e.max_rel_error);
          if (!e.passed) {
            ++corner_failing;
            d << "\n    " << to_string(direction) << " C=" << chunks << " sentence " << n << ' ' << e.name << '['
              << e.worst_index << "] analytic " << e.analytic_at_worst << " numeric " << e.numeric_at_worst;
          }
        }
      }
      worst = std::max(worst, corner_worst);
      failing += corner_failing;
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream head;
  head << checked << " groups over 4 corners, " << failing << " above 1e-4, worst rel " << worst << ", " << elapsed
       << " s";
  o.require(failing == 0, "");
  o.require(elapsed < 300.0, "");
  o.detail = head.str() + d.str();
  return o;
}

// ---------------------------------------------------------------------------

Outcome interaction_structure() {
  Outcome o;
  std::mt19937_64 rng(202);
  std::ostringstream d;
  for (auto direction : {Direction::unidirectional, Direction::bidirectional}) {
    for (auto scheme : {EncodingScheme::joint, EncodingScheme::sequential, EncodingScheme::parallel}) {
      EncoderConfig c;
      c.input_dim = 5;
      c.hidden_dim = 8;
      c.scheme = scheme;
      c.direction = direction;
      ParameterStore store;
      const Encoder enc(c, store);
      test::randomize(store, rng, 0.5);
      const Tensor x = test::random_tensor({4, 5}, rng);
      const auto ent_from_rel = test::sensitivity(enc, store, x, true, enc.relation_side_params());
      const auto rel_from_ent = test::sensitivity(enc, store, x, false, enc.entity_side_params());
      const std::string tag = std::string(to_string(scheme)) + "/" + std::string(to_string(direction));
      const bool ent_dep = ent_from_rel.forward_change > 0.0 && ent_from_rel.gradient > 0.0;
      const bool rel_dep = rel_from_ent.forward_change > 0.0 && rel_from_ent.gradient > 0.0;
      const bool ent_zero = ent_from_rel.forward_change == 0.0 && ent_from_rel.gradient == 0.0;
      const bool rel_zero = rel_from_ent.forward_change == 0.0 && rel_from_ent.gradient == 0.0;
      switch (scheme) {
        case EncodingScheme::joint:
          o.require(ent_dep && rel_dep, tag + " lacks a cross-task dependence");
          break;
        case EncodingScheme::sequential:
          o.require(rel_dep && ent_zero, tag + " is not one-way");
          break;
        case EncodingScheme::parallel:
          o.require(ent_zero && rel_zero, tag + " has cross-task dependence");
          break;
      }
      d << ' ' << tag << " e<-r " << ent_from_rel.gradient << " r<-e " << rel_from_ent.gradient << ';';
    }
  }
  if (o.passed) o.detail = "max |grad|:" + d.str();
  return o;
}

// ---------------------------------------------------------------------------

Outcome decoding_oracle() {
  Outcome o;
  const auto start = Clock::now();
  std::mt19937_64 rng(303);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t length = 1 + rng() % 6;
    const std::size_t entity_types = 1 + rng() % 3;
    const std::size_t relation_types = 1 + rng() % 3;
    const ScoreTables t = test::random_tables(rng, length, entity_types, relation_types);
    const Thresholds th{test::uniform(1, rng, 0.3, 0.9)[0], test::uniform(1, rng, 0.3, 0.9)[0]};
    const DecodedResult universal = decode_universal(t, th);
    const DecodedResult brute = test::brute_force_decode(t, th);
    o.require(universal.entities == brute.entities && universal.triples == brute.triples,
              "universal differs from enumeration at trial " + std::to_string(trial));
    std::vector<EntitySpan> all_spans;
    for (std::size_t i = 0; i < length; ++i)
      for (std::size_t j = i; j < length; ++j)
        for (std::size_t k = 0; k < entity_types; ++k) all_spans.push_back({i, j, static_cast<int>(k)});
    const DecodedResult selective = decode_selective(t, all_spans, th);
    o.require(selective.entities == universal.entities && selective.triples == universal.triples,
              "selective with all spans differs at trial " + std::to_string(trial));
  }
  const double elapsed = seconds_since(start);
  o.require(elapsed < 30.0, "runtime over 30 s");
  if (o.passed) o.detail = "200 tables, " + std::to_string(elapsed) + " s";
  return o;
}

// ---------------------------------------------------------------------------

Outcome overfit() {
  Outcome o;
  const auto start = Clock::now();
  const Dataset data = generate_synthetic(1, 50);
  std::set<OverlapPattern> patterns(data.pattern_tags.begin(), data.pattern_tags.end());
  o.require(patterns.size() == 3, "corpus lacks a pattern");
  o.require(data.labels.entity_types.size() == 3 && data.labels.relation_types.size() == 2, "wrong label counts");
  const Vocabulary vocabulary = Vocabulary::build(data);
  const auto examples = prepare_examples(data, &vocabulary, nullptr);

  ModelConfig mc;
  mc.encoder.input_dim = 32;
  mc.encoder.hidden_dim = 64;
  mc.vocab_size = vocabulary.size();
  mc.entity_types = 3;
  mc.relation_types = 2;
  PfnModel model(mc);
  TrainConfig tc;
  tc.dropout = 0.0;
  std::mt19937_64 rng(tc.seed);
  model.initialize(rng);
  AdamState state;

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  DevScores scores;
  bool overlaps_exact = false;
  std::size_t epoch = 0;
  while (epoch < 200) {
    ++epoch;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
      std::vector<const PreparedExample*> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + tc.batch_size); ++k) batch.push_back(&examples[order[k]]);
      train_step(model, state, batch, tc, rng);
    }
    scores = score_examples(model, examples, tc.thresholds, {});
    if (scores.ner.f1 < 0.99 || scores.re.f1 < 0.95) continue;
    overlaps_exact = true;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (data.pattern_tags[i] == OverlapPattern::normal) continue;
      const DecodedResult r = model.predict(examples[i].input, tc.thresholds);
      overlaps_exact = overlaps_exact && r.entities == examples[i].entities && r.triples == examples[i].triples;
    }
    if (overlaps_exact) break;
  }
  const double elapsed = seconds_since(start);
  o.require(scores.ner.f1 >= 0.99, "NER F1 below 0.99");
  o.require(scores.re.f1 >= 0.95, "RE F1 below 0.95");
  o.require(overlaps_exact, "an SEO/EPO sentence is decoded wrongly");
  o.require(elapsed < 600.0, "runtime over 10 min");
  std::ostringstream d;
  d << "epoch " << epoch << ", NER F1 " << scores.ner.f1 << ", RE F1 " << scores.re.f1 << ", " << elapsed << " s";
  o.detail = o.passed ? d.str() : o.detail + "; " + d.str();
  return o;
}

// ---------------------------------------------------------------------------

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int invoke(const std::string& command, const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(command, args, o, e);
  if (out != nullptr) *out = o.str();
  if (code != cli::kOk) std::cerr << e.str();
  return code;
}

Outcome ablation_structure() {
  Outcome o;
  TempDir dir("pfn_acceptance_ablate");
  std::string csv;
  const int code = invoke("ablate",
                          {"--sweep", "all", "--sentences", "9", "--epochs", "1", "--set", "hidden_dim=20", "--set",
                           "input_dim=8", "--out", (dir.path / "out").string()},
                          &csv);
  o.require(code == cli::kOk, "ablate exited with " + std::to_string(code));
  const std::vector<std::pair<std::string, std::string>> expected = {
      {"Layers", "N=1"},
      {"Layers", "N=2"},
      {"Layers", "N=3"},
      {"Bidirection Vs Unidirection", "Unidirection"},
      {"Bidirection Vs Unidirection", "Unidirection (w/o gl.)"},
      {"Bidirection Vs Unidirection", "Bidirection"},
      {"Bidirection Vs Unidirection", "Bidirection (w/o gl.)"},
      {"Encoding Scheme", "Joint"},
      {"Encoding Scheme", "Sequential"},
      {"Encoding Scheme", "Parallel"},
      {"Partition Granularity", "Fine-grained"},
      {"Partition Granularity", "Coarse"},
      {"Decoding Strategy", "Universal"},
      {"Decoding Strategy", "Selective"},
  };
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  o.require(line == "ablation,setting,precision,recall,f1", "unexpected header");
  std::vector<std::pair<std::string, std::string>> rows;
  std::set<std::string> sweeps;
  while (std::getline(lines, line)) {
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    rows.emplace_back(line.substr(0, a), line.substr(a + 1, b - a - 1));
    sweeps.insert(rows.back().first);
    o.require(std::count(line.begin(), line.end(), ',') == 4, "row without three scores: " + line);
  }
  o.require(sweeps.size() == 5, "expected five sweeps");
  o.require(rows == expected, "row labels differ");
  o.require(read_file(dir.path / "out" / "ablation.csv") == csv, "csv file differs from stdout");
  if (o.passed) o.detail = "5 sweeps, " + std::to_string(rows.size()) + " rows";
  return o;
}

// ---------------------------------------------------------------------------

Outcome metric_fixtures() {
  Outcome o;
  for (const auto& row : test::published_group_rows()) {
    Prf in, out;
    in.precision = row.in_p;
    in.recall = row.in_r;
    in.f1 = row.in_f;
    out.precision = row.out_p;
    out.recall = row.out_r;
    out.f1 = row.out_f;
    const MetricDiff d = metric_diff(in, out);
    o.require(std::abs(d.precision - row.diff_p) <= 1e-9 && std::abs(d.recall - row.diff_r) <= 1e-9 &&
                  std::abs(d.f1 - row.diff_f) <= 1e-9,
              row.dataset + " diff row mismatch");
  }
  const test::ScoredFixture f = test::hand_scored_entities();
  const Prf micro = ner_f1(f.predicted, f.gold, {SpanMode::exact, Averaging::micro});
  const Prf macro = ner_f1(f.predicted, f.gold, {SpanMode::exact, Averaging::macro});
  o.require(std::abs(micro.precision - f.micro_p) <= 1e-9 && std::abs(micro.recall - f.micro_r) <= 1e-9 &&
                std::abs(micro.f1 - f.micro_f) <= 1e-9,
            "micro fixture mismatch");
  o.require(std::abs(macro.precision - f.macro_p) <= 1e-9 && std::abs(macro.recall - f.macro_r) <= 1e-9 &&
                std::abs(macro.f1 - f.macro_f) <= 1e-9,
            "macro fixture mismatch");

  // The report's Diff row is In - Out of its own group scores.
  const Dataset data = generate_synthetic(4, 30);
  std::vector<DecodedResult> predictions;
  std::mt19937_64 rng(404);
  for (const auto& s : data.sentences) {
    DecodedResult r;
    for (const auto& e : s.entities)
      if (rng() % 3 != 0) r.entities.push_back(e);
    r.entities.push_back({0, 0, 0});
    std::sort(r.entities.begin(), r.entities.end());
    r.entities.erase(std::unique(r.entities.begin(), r.entities.end()), r.entities.end());
    predictions.push_back(r);
  }
  const EvalReport report = evaluate(predictions, data, {});
  o.require(report.diff.has_value(), "report has no Diff row");
  if (report.diff) {
    const MetricDiff expect = metric_diff(report.in_triple.scores, report.out_triple.scores);
    o.require(report.diff->precision == expect.precision && report.diff->recall == expect.recall &&
                  report.diff->f1 == expect.f1,
              "report Diff row is not In - Out");
  }
  if (o.passed) o.detail = "published In/Out Diff rows and micro/macro fixtures within 1e-9";
  return o;
}

// ---------------------------------------------------------------------------

Outcome reproducibility() {
  Outcome o;
  TempDir dir("pfn_acceptance_repro");
  const std::string data = (dir.path / "data" / "dataset.jsonl").string();
  o.require(invoke("synth", {"--seed", "11", "--sentences", "12", "--out", (dir.path / "data").string()}) == cli::kOk,
            "synth failed");
  for (const std::string run : {"a", "b"}) {
    const fs::path root = dir.path / run;
    o.require(invoke("train", {"--train", data, "--dev", data, "--epochs", "3", "--seed", "5", "--set",
                               "hidden_dim=12", "--set", "input_dim=8", "--out", (root / "model").string()}) ==
                  cli::kOk,
              "train failed");
    o.require(invoke("eval", {"--checkpoint", (root / "model" / "checkpoint.json").string(), "--test", data, "--out",
                              (root / "eval").string()}) == cli::kOk,
              "eval failed");
  }
  std::size_t compared = 0;
  for (const char* file :
       {"model/checkpoint.json", "model/history.json", "model/labels.json", "eval/report.json", "eval/report.csv"}) {
    const std::string a = read_file(dir.path / "a" / file);
    const std::string b = read_file(dir.path / "b" / file);
    o.require(!a.empty(), std::string(file) + " missing");
    o.require(a == b, std::string(file) + " differs between runs");
    ++compared;
  }
  if (o.passed) o.detail = std::to_string(compared) + " artifacts byte-identical";
  return o;
}

}  // namespace
}  // namespace pfn

int main() {
  using namespace pfn;
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria = {
      {"gate-partition-invariants", gate_partition_invariants},
      {"gradient-check", gradient_check},
      {"interaction-structure", interaction_structure},
      {"decoding-oracle", decoding_oracle},
      {"overfit", overfit},
      {"ablation-structure", ablation_structure},
      {"metric-fixtures", metric_fixtures},
      {"reproducibility", reproducibility},
  };
  bool all = true;
  for (const auto& [name, check] : criteria) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome.passed = false;
      outcome.detail = std::string("threw: ") + e.what();
    }
    std::cout << (outcome.passed ? "PASS " : "FAIL ") << name << ": " << outcome.detail << std::endl;
    all = all && outcome.passed;
  }
  return all ? 0 : 1;
}
