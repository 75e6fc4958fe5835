#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"
#include "xmlc/errors.hpp"
#include "xmlc/metrics.hpp"
#include "xmlc/pipeline.hpp"
#include "xmlc/train.hpp"

using namespace xmlc;

namespace {

using testing::MetricInstance;

void check_against_oracle(const MetricInstance& in, double threshold) {
  const MetricsReport r = compute_metrics(in.scores, in.gold, threshold);
  const std::string diff = testing::metrics_mismatch(r, in, threshold, kDefaultKs, 1e-9);
  CHECK_MESSAGE(diff.empty(), diff);
}

PreparedData tiny_planted(std::size_t L, std::size_t n, std::uint64_t seed) {
  auto spec = planted_spec(L, n, seed);
  spec.train_fraction = 1.0;
  spec.val_fraction = 0.0;
  return prepare_synthetic(generate(spec));
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.dim = 16;
  c.encoder.kernel = 5;
  c.encoder.dropout = 0.1;
  c.skipgram_epochs = 1;
  c.train.lr = 3e-3;
  c.train.batch_size = 8;
  c.train.max_epochs = 3;
  c.train.prediction_threshold = 0.5;
  return c;
}

}  // namespace

TEST_CASE("Adam matches a scalar reference update") {
  // Minimise (w - 3)^2 from w = 0 with a hand-rolled bias-corrected Adam.
  Parameter p("w", Tensor::vector({0.0}));
  Adam opt;
  double w = 0.0, m = 0.0, v = 0.0;
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 200; ++t) {
    p.grad = Tensor::vector({2.0 * (p.value[0] - 3.0)});
    opt.step({&p}, lr);
    const double g = 2.0 * (w - 3.0);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
    REQUIRE(std::abs(p.value[0] - w) <= 1e-12);
  }
  CHECK(opt.steps() == 200);
  CHECK(std::abs(w - 3.0) < 0.1);
}

TEST_CASE("global-norm clipping") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Parameter> ps;
    for (int k = 0; k < 3; ++k) {
      Parameter p("p" + std::to_string(k), Tensor({2 + rng.below(4)}));
      p.grad = xmlc::testing::random_tensor(p.value.shape(), rng, rng.uniform(0.01, 10.0));
      ps.push_back(std::move(p));
    }
    std::vector<Parameter*> ptrs;
    for (auto& p : ps) ptrs.push_back(&p);
    std::vector<Tensor> before;
    double sq = 0.0;
    for (auto& p : ps) {
      before.push_back(p.grad);
      for (double g : p.grad.data()) sq += g * g;
    }
    const double norm = clip_global_norm(ptrs, 5.0);
    CHECK(norm == doctest::Approx(std::sqrt(sq)).epsilon(1e-14));
    double after = 0.0;
    for (auto& p : ps)
      for (double g : p.grad.data()) after += g * g;
    CHECK(std::sqrt(after) <= 5.0 + 1e-9);
    if (std::sqrt(sq) <= 5.0)
      for (std::size_t k = 0; k < ps.size(); ++k) CHECK(ps[k].grad == before[k]);
  }
}

TEST_CASE("learning-rate decay") {
  TrainConfig c;
  CHECK(lr_at_epoch(c, 0) == 1e-4);
  CHECK(lr_at_epoch(c, 3) == doctest::Approx(7.29e-5).epsilon(1e-12));
  c.lr_decay = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("metrics match brute-force references on random instances") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const MetricInstance in = testing::random_metric_instance(rng);
    check_against_oracle(in, trial % 2 ? 0.5 : 0.0005);
  }
}

TEST_CASE("metric hand cases") {
  // Perfect scores.
  std::vector<std::vector<double>> s{{1, 0, 0}, {0, 1, 1}, {1, 1, 0}};
  std::vector<std::vector<int>> g{{0}, {1, 2}, {0, 1}};
  const auto r = compute_metrics(s, g, 0.5, std::vector<int>{1});
  CHECK(r.micro_f1 == 1.0);
  CHECK(r.macro_f1 == 1.0);
  CHECK(r.micro_auc == 1.0);
  CHECK(r.macro_auc == 1.0);
  CHECK(r.p_at_k.at(1) == 1.0);

  // Ranking [b, a, c] with gold {a}.
  const auto one = compute_metrics({{0.5, 0.9, 0.1}}, {{0}}, 0.5, std::vector<int>{1, 2});
  CHECK(one.p_at_k.at(1) == 0.0);
  CHECK(one.p_at_k.at(2) == 0.5);
  CHECK(one.p_at_k.size() == 2);

  CHECK(compute_metrics(s, g, 0.5).p_at_k.size() == 3);
  CHECK_THROWS_AS(compute_metrics(s, {{}, {}, {}}, 0.5), EvaluationError);
  CHECK_THROWS_AS(compute_metrics(s, g, 0.5, std::vector<int>{0}), ArgumentError);
  CHECK_THROWS_AS(compute_metrics(s, {{0}}, 0.5), DimensionError);
  CHECK_THROWS_AS(auc_score(std::vector<double>{1, 2}, std::vector<char>{1, 1}), EvaluationError);
}

TEST_CASE("P@K depends only on the ranking") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    MetricInstance in = testing::random_metric_instance(rng);
    const auto base = compute_metrics(in.scores, in.gold, 0.5);
    for (auto& row : in.scores)
      for (double& v : row) v = std::exp(3.0 * v) + 7.0;
    const auto moved = compute_metrics(in.scores, in.gold, 0.5);
    for (int k : kDefaultKs) CHECK(moved.p_at_k.at(k) == base.p_at_k.at(k));
    CHECK(moved.micro_auc == doctest::Approx(base.micro_auc).epsilon(1e-12));
  }
}

TEST_CASE("metrics report serialisation") {
  const auto r = compute_metrics({{0.9, 0.1}, {0.2, 0.8}}, {{0}, {0, 1}}, 0.5);
  const std::string j = r.to_json();
  for (const char* key : {"\"micro_f1\"", "\"macro_f1\"", "\"micro_auc\"", "\"macro_auc\"", "\"p_at_5\"",
                          "\"p_at_8\"", "\"p_at_15\""})
    CHECK(j.find(key) != std::string::npos);
  const std::string tsv = r.per_label_tsv();
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 3);
  // Label 0 is positive on both documents, so its AUC is undefined.
  CHECK(tsv.find("\tnan\n") != std::string::npos);
}

TEST_CASE("training overfits a small corpus") {
  const PreparedData data = tiny_planted(20, 50, 1);
  REQUIRE(data.train.size() == 50);
  ExperimentConfig cfg = desk_experiment();
  cfg.train.lr_decay = 1.0;
  cfg.train.max_epochs = 100;
  cfg.train.patience = 100;
  const auto graph = build_cooccurrence(data.train, 20, 1.0);
  const auto index = build_mask_index(data.train, 20, cfg.tau);
  Model model = build_model(data, graph, initial_embeddings(data, cfg), cfg);
  // Training documents double as the selection set: the best epoch is kept.
  const auto result = train(model, data.train, data.train, index, cfg.train);
  const auto ev = evaluate(model, data.train, index, 0.5);
  INFO("best epoch " << result.best_epoch);
  CHECK(ev.report.micro_f1 >= 0.95);
  CHECK(ev.report.micro_f1 == result.best_val_micro_f1);
  CHECK(result.history.front().train_loss > result.history.back().train_loss);
}

TEST_CASE("training is deterministic under a seed") {
  const PreparedData data = prepare_synthetic(generate(planted_spec(20, 60, 2)));
  const ExperimentConfig cfg = tiny_config();
  const RunResult a = run_experiment(data, cfg), b = run_experiment(data, cfg);
  REQUIRE(a.training.history.size() == b.training.history.size());
  for (std::size_t e = 0; e < a.training.history.size(); ++e)
    CHECK(a.training.history[e].train_loss == b.training.history[e].train_loss);
  CHECK(a.test.to_json() == b.test.to_json());
  CHECK(history_csv(a.training.history) == history_csv(b.training.history));

  ExperimentConfig other = cfg;
  other.train.seed = 2;
  CHECK(run_experiment(data, other).training.history[0].train_loss != a.training.history[0].train_loss);
}

TEST_CASE("early stopping keeps the best validation epoch") {
  auto spec = planted_spec(20, 80, 6);
  const PreparedData data = prepare_synthetic(generate(spec));
  ExperimentConfig cfg = tiny_config();
  cfg.train.max_epochs = 12;
  cfg.train.patience = 2;
  const RunResult r = run_experiment(data, cfg);
  const auto& h = r.training.history;
  double best = -1;
  std::size_t best_epoch = 0;
  for (const auto& e : h)
    if (e.val_micro_f1 > best) {
      best = e.val_micro_f1;
      best_epoch = e.epoch;
    }
  CHECK(r.training.best_epoch == best_epoch);
  CHECK(r.training.best_val_micro_f1 == best);
  // Stopped exactly `patience` epochs after the best one, or ran out of epochs.
  CHECK((h.size() == cfg.train.max_epochs || h.back().epoch == best_epoch + cfg.train.patience));
  for (std::size_t e = 0; e < h.size(); ++e) CHECK(h[e].lr == doctest::Approx(lr_at_epoch(cfg.train, e)).epsilon(1e-15));
}

TEST_CASE("checkpoint round-trip reproduces evaluation exactly") {
  const PreparedData data = tiny_planted(20, 40, 3);
  ExperimentConfig cfg = tiny_config();
  const auto graph = build_cooccurrence(data.train, 20, 1.0);
  const auto index = build_mask_index(data.train, 20, cfg.tau);
  Model model = build_model(data, graph, initial_embeddings(data, cfg), cfg);
  auto result = train(model, data.train, {}, index, cfg.train);
  const auto before = evaluate(model, data.train, index, 0.5);

  const std::string bytes = serialize_checkpoint(model, result.optimizer, {"cfg", data.vocab.hash(), 2});
  const LoadedCheckpoint ck = parse_checkpoint(bytes);
  CHECK(ck.meta.config_hash == "cfg");
  CHECK(ck.meta.vocab_hash == data.vocab.hash());
  CHECK(ck.meta.epoch == 2);
  CHECK(ck.optimizer.steps() == result.optimizer.steps());
  CHECK(ck.model_config.serialize() == model.config().serialize());

  Model fresh(ck.model_config, propagation_matrix(graph.adjacency, ck.model_config.norm),
              data.catalog.descriptor_ids(data.vocab), Tensor({data.vocab.size(), cfg.dim}));
  restore_parameters(fresh, ck.params);
  const auto after = evaluate(fresh, data.train, index, 0.5);
  CHECK(after.report.to_json() == before.report.to_json());
  CHECK(after.scores == before.scores);
  Adam reloaded = ck.optimizer;
  CHECK(serialize_checkpoint(fresh, reloaded, ck.meta) == bytes);

  CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(parse_checkpoint(bytes + "x"), FormatError);
  CHECK_THROWS_AS(parse_checkpoint("NOTACKPT" + bytes.substr(8)), FormatError);
  auto params = ck.params;
  params.pop_back();
  CHECK_THROWS_AS(restore_parameters(fresh, params), FormatError);
}

TEST_CASE("divergence names the offending parameter") {
  const PreparedData data = tiny_planted(20, 20, 4);
  ExperimentConfig cfg = tiny_config();
  const auto graph = build_cooccurrence(data.train, 20, 1.0);
  const auto index = build_mask_index(data.train, 20, cfg.tau);
  Model model = build_model(data, graph, initial_embeddings(data, cfg), cfg);
  model.find("gcn.w1")->value[3] = std::nan("");
  try {
    train(model, data.train, {}, index, cfg.train);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("gcn.w1") != std::string::npos);
  }
}

TEST_CASE("training input validation") {
  const PreparedData data = tiny_planted(20, 20, 4);
  ExperimentConfig cfg = tiny_config();
  const auto graph = build_cooccurrence(data.train, 20, 1.0);
  const auto index = build_mask_index(data.train, 20, cfg.tau);
  Model model = build_model(data, graph, initial_embeddings(data, cfg), cfg);
  CHECK_THROWS_AS(train(model, {}, {}, index, cfg.train), InputError);
  auto docs = data.train;
  docs[0].tokens.clear();
  CHECK_THROWS_AS(train(model, docs, {}, index, cfg.train), InputError);
  auto bad = cfg.train;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(model, data.train, {}, index, bad), ConfigError);
}

TEST_CASE("ablation report pairs variants by seed") {
  auto spec = planted_spec(20, 60, 8);
  const PreparedData data = prepare_synthetic(generate(spec));
  ExperimentConfig cfg = tiny_config();
  cfg.train.max_epochs = 1;
  const std::vector<Variant> vs{Variant::Full, Variant::NoMask};
  const std::vector<std::uint64_t> seeds{1, 2};
  const AblationReport rep = ablate(data, cfg, vs, seeds);
  CHECK(rep.rows.size() == 4);
  const auto diff = rep.paired_differences(Variant::NoMask);
  REQUIRE(diff.size() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(diff[i] == rep.at(Variant::Full, seeds[i]).micro_f1 - rep.at(Variant::NoMask, seeds[i]).micro_f1);
  CHECK(rep.to_json().find("paired_diff_full_minus_variant") != std::string::npos);
  // Same seed, same variant: identical report.
  const AblationReport again = ablate(data, cfg, std::vector<Variant>{Variant::Full}, seeds);
  CHECK(again.at(Variant::Full, 1).to_json() == rep.at(Variant::Full, 1).to_json());
  CHECK_THROWS_AS(ablate(data, cfg, std::vector<Variant>{}, seeds), ArgumentError);
}

TEST_CASE("models start at the smoothed training label prior") {
  const PreparedData data = prepare_synthetic(generate(planted_spec(20, 60, 4)));
  const auto rates = label_rates(data.train, 20);
  for (std::size_t l = 0; l < 20; ++l) {
    std::size_t c = 0;
    for (const auto& d : data.train) c += std::count(d.labels.begin(), d.labels.end(), static_cast<int>(l));
    CHECK(rates[l] == doctest::Approx((c + 1.0) / (data.train.size() + 2.0)).epsilon(1e-15));
  }
  const ExperimentConfig cfg = tiny_config();
  Model m = build_model(data, build_cooccurrence(data.train, 20, 1.0), initial_embeddings(data, cfg), cfg);
  const auto b = m.find("classifier.b")->value.data();
  for (std::size_t l = 0; l < 20; ++l) CHECK(b[l] == doctest::Approx(std::log(rates[l] / (1 - rates[l]))));
}
