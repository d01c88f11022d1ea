#include "doctest.h"
#include "fixtures.hpp"

#include "profinet/trainer.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

using namespace profinet;
using profinet::testing::tiny_train_config;
using profinet::testing::trainable_dataset;
using profinet::testing::TempDir;

namespace {

std::vector<double> losses(const std::vector<EpochStats>& h) {
  std::vector<double> out;
  for (const auto& e : h) out.push_back(e.mean_loss);
  return out;
}

// Every record of a label gets the same constant amplitude.
GestureDataset constant_class_dataset(int n_classes, int per_class) {
  auto ds = profinet::testing::tiny_dataset(n_classes, per_class, 0);
  ds.split.test_labels = ds.label_space;
  for (auto& r : ds.records) {
    auto copy = std::make_shared<CsiRecord>(*r);
    copy->amplitude.setConstant(float(1 + copy->label));
    r = std::move(copy);
  }
  return ds;
}

}  // namespace

TEST_CASE("optimizers converge on a one-dimensional quadratic") {
  for (OptimizerKind kind : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
    Optimizer<double> opt(kind, 1e-2, 1);
    Vec<double> x = Vec<double>::Constant(1, -2.0);
    const double target = 1.5;
    int steps = 0;
    while (std::abs(x(0) - target) >= 1e-3 && steps < 2000) {
      const Vec<double> g = Vec<double>::Constant(1, 2.0 * (x(0) - target));
      opt.step(x, g);
      ++steps;
    }
    MESSAGE(to_string(kind) << " converged in " << steps << " steps");
    CHECK(std::abs(x(0) - target) < 1e-3);
    CHECK(steps <= 2000);
  }
}

TEST_CASE("optimizer and mode names round trip") {
  for (auto k : {OptimizerKind::kAdam, OptimizerKind::kSgd}) CHECK(optimizer_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(optimizer_from_string("rmsprop"), ConfigError);
  for (auto m : {AblationMode::kProto, AblationMode::kProtoA, AblationMode::kProtoB, AblationMode::kProtoBplus,
                 AblationMode::kProtoABplus})
    CHECK(ablation_from_string(to_string(m)) == m);
  CHECK(to_string(AblationMode::kProtoABplus) == "proto_A_Bplus");
  CHECK_THROWS_AS(ablation_from_string("proto_C"), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.n_way = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.n_test_episodes = 50;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  CHECK(train_config_from_json(to_json(c)).learning_rate == c.learning_rate);
  CHECK(to_json(train_config_from_json(to_json(c))) == to_json(c));
}

TEST_CASE("noise schedules of the ablation modes") {
  TrainConfig c;
  c.epochs = 600;
  c.ablation_mode = AblationMode::kProtoABplus;
  CHECK(noise_schedule(c) == stage_table(600));
  c.ablation_mode = AblationMode::kProtoBplus;
  CHECK(noise_schedule(c) == stage_table(600));
  c.ablation_mode = AblationMode::kProtoB;
  const auto fixed = noise_schedule(c);
  REQUIRE(fixed.size() == 6);
  CHECK(fixed[0].noise_fraction == 0.0);
  for (int s = 1; s < 6; ++s) CHECK(fixed[std::size_t(s)].noise_fraction == 0.3);
  for (auto m : {AblationMode::kProto, AblationMode::kProtoA}) {
    c.ablation_mode = m;
    const auto clean = noise_schedule(c);
    for (int e = 1; e <= 600; e += 37) CHECK(noise_stage(clean, e).noise_fraction == 0.0);
  }
  CHECK(uses_attention(AblationMode::kProtoA));
  CHECK(uses_attention(AblationMode::kProtoABplus));
  CHECK_FALSE(uses_attention(AblationMode::kProtoBplus));
}

TEST_CASE("six-epoch curriculum run walks the whole noise ladder") {
  const auto ds = trainable_dataset();
  auto cfg = tiny_train_config(AblationMode::kProtoABplus);
  cfg.episodes_per_epoch = 2;
  const auto [state, report] = train(ds, cfg);
  REQUIRE(report.stage_table.size() == 6);
  REQUIRE(report.epochs.size() == 6);
  for (int e = 0; e < 6; ++e) {
    CHECK(report.stage_table[std::size_t(e)].noise_fraction == doctest::Approx(0.1 * e));
    CHECK(report.epochs[std::size_t(e)].noise_fraction == doctest::Approx(0.1 * e));
    CHECK(report.epochs[std::size_t(e)].stage == e + 1);
  }
  const auto j = to_json(report);
  CHECK(j.at("stage_table").size() == 6);
  CHECK(j.at("stage_table")[0].at("snr_db").is_null());
  CHECK(j.at("stage_table")[1].at("snr_db").get<double>() == doctest::Approx(20.0));
  CHECK(j.at("config").at("ablation_mode") == "proto_A_Bplus");
  CHECK(j.at("config").at("seed") == cfg.seed);
}

TEST_CASE("training is deterministic under a seed") {
  const auto ds = trainable_dataset();
  const auto cfg = tiny_train_config(AblationMode::kProtoABplus);
  const auto a = train(ds, cfg);
  const auto b = train(ds, cfg);
  CHECK(losses(a.second.epochs) == losses(b.second.epochs));
  CHECK(a.first.model.params.values() == b.first.model.params.values());
  CHECK(a.second.test.accuracy == b.second.test.accuracy);
  auto other = cfg;
  other.seed += 1;
  CHECK(losses(train(ds, other).second.epochs) != losses(a.second.epochs));
}

TEST_CASE("proto training lowers the loss on synthetic 5-way 1-shot") {
  const auto ds = trainable_dataset(3, 16);
  auto cfg = tiny_train_config();
  cfg.epochs = 20;
  cfg.episodes_per_epoch = 20;
  const auto [state, report] = train(ds, cfg);
  REQUIRE(report.epochs.size() == 20);
  MESSAGE("first " << report.epochs.front().mean_loss << " last " << report.epochs.back().mean_loss);
  CHECK(report.epochs.back().mean_loss < report.epochs.front().mean_loss);
  for (const auto& e : report.epochs) {
    CHECK(e.mean_accuracy >= 0.0);
    CHECK(e.mean_accuracy <= 1.0);
  }
  CHECK(report.test.accuracy >= 0.0);
  CHECK(report.test.accuracy <= 1.0);
  CHECK(report.test.ci95 > 0.0);
  CHECK(report.train_seconds > 0.0);
}

TEST_CASE("untrained model is at chance on a corpus without class structure") {
  // Labels are reassigned at random, so no embedding can beat chance.
  auto ds = trainable_dataset(4, 20);
  std::vector<Label> labels;
  for (const auto& r : ds.records) labels.push_back(r->label);
  Rng rng(11);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto copy = std::make_shared<CsiRecord>(*ds.records[i]);
    copy->label = labels[i];
    ds.records[i] = std::move(copy);
  }
  auto cfg = tiny_train_config();
  auto state = initial_state(ds, cfg);
  const auto r = evaluate(state.model, ds, cfg, 200);
  // 3-sigma band of a Bernoulli(0.2) mean over 200 episodes (one query each).
  const double half = 3.0 * std::sqrt(0.2 * 0.8 / 200.0);
  MESSAGE("accuracy " << r.accuracy << " +- " << r.ci95 << ", band 0.2 +- " << half);
  CHECK(std::abs(half - 0.085) < 0.001);
  CHECK(r.accuracy >= 0.14);
  CHECK(r.accuracy <= 0.26);
  CHECK(r.episodes == 200);
}

TEST_CASE("identity-like embedder separates constant classes perfectly") {
  const auto ds = constant_class_dataset(8, 12);
  const Embedder mean_value = [](std::span<const CsiRecord* const> recs) {
    Mat<float> out(Eigen::Index(recs.size()), 1);
    for (std::size_t i = 0; i < recs.size(); ++i) out(Eigen::Index(i), 0) = recs[i]->amplitude.mean();
    return out;
  };
  nn::ParameterSet<float> none;
  TrainConfig cfg;
  const auto r = evaluate_with(mean_value, nullptr, none, ds, cfg, 50);
  CHECK(r.accuracy == 1.0);
  CHECK(r.ci95 == 0.0);
  CHECK_THROWS_AS(evaluate_with(mean_value, nullptr, none, ds, cfg, 0), ConfigError);
}

TEST_CASE("evaluation needs enough test classes") {
  auto ds = trainable_dataset();
  ds.split.test_labels.resize(3);
  auto cfg = tiny_train_config();
  auto state = initial_state(ds, cfg);
  CHECK_THROWS_AS(evaluate(state.model, ds, cfg, 10), EpisodeError);
}

TEST_CASE("attention with uniform weights reproduces plain prototype logits") {
  const auto ds = trainable_dataset();
  auto cfg = tiny_train_config();
  auto [state, report] = train(ds, cfg);
  Model<float>& model = state.model;
  // The projection of the attention module is still zero: weights are uniform.
  for (const auto& spec : model.params.specs())
    if (spec.name.rfind("attention.proj", 0) == 0) REQUIRE(model.params.view(*model.params.find(spec.name)).isZero());
  Rng rng(4);
  for (int i = 0; i < 5; ++i) {
    const Episode ep = sample_episode(ds, cfg.episode_config(Phase::kMetaTest), rng);
    model.use_attention = false;
    const Mat<float> plain = episode_probabilities(model, ep);
    model.use_attention = true;
    const Mat<float> attended = episode_probabilities(model, ep);
    CHECK((plain - attended).cwiseAbs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("divergence is reported with epoch and episode") {
  const auto ds = trainable_dataset();
  auto cfg = tiny_train_config();
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 1e30;
  cfg.n_test_episodes = 0;
  try {
    train(ds, cfg);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("episode") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip restores the full training state") {
  TempDir dir("ckpt");
  const auto ds = trainable_dataset();
  auto cfg = tiny_train_config(AblationMode::kProtoABplus);
  cfg.episodes_per_epoch = 1;
  cfg.n_test_episodes = 0;
  auto [state, report] = train(ds, cfg);
  save_checkpoint(state, cfg, dir / "a.ckpt");
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  CHECK(loaded.state.model.params.values() == state.model.params.values());
  CHECK(loaded.state.optimizer.first_moment() == state.optimizer.first_moment());
  CHECK(loaded.state.optimizer.second_moment() == state.optimizer.second_moment());
  CHECK(loaded.state.optimizer.steps() == state.optimizer.steps());
  CHECK(loaded.state.epochs_done == 6);
  CHECK(loaded.state.history == state.history);
  CHECK(loaded.state.model.use_attention);
  for (std::size_t b = 0; b < 4; ++b) {
    CHECK(loaded.state.model.backbone.bn_state()[b].running_mean == state.model.backbone.bn_state()[b].running_mean);
    CHECK(loaded.state.model.backbone.bn_state()[b].running_var == state.model.backbone.bn_state()[b].running_var);
  }
  CHECK(to_json(loaded.config) == to_json(report.config));
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  TempDir dir("resume");
  const auto ds = trainable_dataset();
  auto cfg = tiny_train_config(AblationMode::kProtoABplus);
  const auto full = train(ds, cfg);

  // Interrupt the same run after two epochs.
  auto state = initial_state(ds, cfg);
  struct Stop {};
  try {
    train(ds, cfg, state, [&](const TrainState& s) {
      if (s.epochs_done == 2) {
        save_checkpoint(s, cfg, dir / "mid.ckpt");
        throw Stop{};
      }
    });
  } catch (const Stop&) {
  }
  auto resumed = load_checkpoint(dir / "mid.ckpt");
  CHECK(resumed.state.epochs_done == 2);
  const auto report = train(ds, resumed.config, resumed.state);
  const auto a = losses(full.second.epochs), b = losses(report.epochs);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
  CHECK((resumed.state.model.params.values() - full.first.model.params.values()).cwiseAbs().maxCoeff() < 1e-6f);
  CHECK(report.test.accuracy == full.second.test.accuracy);
}

TEST_CASE("damaged or foreign checkpoints are rejected") {
  TempDir dir("ckpt_bad");
  const auto ds = trainable_dataset();
  auto cfg = tiny_train_config();
  auto state = initial_state(ds, cfg);
  save_checkpoint(state, cfg, dir / "a.ckpt");
  std::filesystem::resize_file(dir / "a.ckpt", std::filesystem::file_size(dir / "a.ckpt") - 4);
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt"), ParseError);
  save_dataset(ds, dir / "d.pfcsi");
  CHECK_THROWS_AS(load_checkpoint(dir / "d.pfcsi"), ParseError);
  save_checkpoint(state, cfg, dir / "b.ckpt");
  {
    std::fstream f(dir / "b.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = kCheckpointFormatVersion + 7;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "b.ckpt"), VersionError);
}

TEST_CASE("ablation rows follow the ladder and the CSV schema") {
  const auto ds = trainable_dataset(1, 16);
  auto cfg = tiny_train_config();
  cfg.epochs = 6;
  cfg.episodes_per_epoch = 1;
  const auto rows = run_ablation(ds, cfg, {AblationMode::kProtoABplus, AblationMode::kProto}, {1, 2, 3}, {1});
  REQUIRE(rows.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(rows[i].mode == (i < 3 ? AblationMode::kProto : AblationMode::kProtoABplus));
    CHECK(rows[i].seed == 1 + i % 3);
    REQUIRE(rows[i].reports.size() == 1);
    CHECK(rows[i].reports[0].config.seed == rows[i].seed);
    CHECK(rows[i].reports[0].config.ablation_mode == rows[i].mode);
  }
  const std::string csv = ablation_csv(rows);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "mode,seed,1shot_acc,5shot_acc,train_seconds");
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
    CHECK(line.find(",NA,") != std::string::npos);
  }
  CHECK(n == 6);
  CHECK(csv.find("proto,1,") == 0 + csv.find('\n') + 1);

  const auto single = run_ablation(ds, cfg, {AblationMode::kProtoB}, {9}, {1, 5});
  REQUIRE(single.size() == 1);
  CHECK(single[0].reports.size() == 2);
  CHECK(single[0].reports[1].config.k_shot == 5);
  CHECK_THROWS_AS(run_ablation(ds, cfg, {}, {1}), ConfigError);
}
