#include "profinet/trainer.hpp"

#include "profinet/container.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace profinet {

namespace {

constexpr io::Magic kCheckpointMagic = {'P', 'F', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint64_t kAugmentStream = 17;

struct ModeName {
  AblationMode mode;
  const char* name;
};
constexpr ModeName kModes[] = {{AblationMode::kProto, "proto"},
                               {AblationMode::kProtoA, "proto_A"},
                               {AblationMode::kProtoB, "proto_B"},
                               {AblationMode::kProtoBplus, "proto_Bplus"},
                               {AblationMode::kProtoABplus, "proto_A_Bplus"}};

std::string norm_name(InputNorm n) { return n == InputNorm::kNone ? "none" : "relative"; }
InputNorm norm_from(const std::string& s) {
  if (s == "none") return InputNorm::kNone;
  if (s == "relative") return InputNorm::kRelative;
  throw ConfigError("input_norm: expected none or relative, got '" + s + "'");
}

std::vector<int> query_targets(const Episode& ep) {
  std::vector<int> targets;
  targets.reserve(ep.query.size());
  for (const auto& item : ep.query) {
    auto it = std::find(ep.class_ids.begin(), ep.class_ids.end(), item.label);
    if (it == ep.class_ids.end())
      throw EpisodeError("query label " + std::to_string(item.label) + " is not one of the episode's classes");
    targets.push_back(int(it - ep.class_ids.begin()));
  }
  return targets;
}

std::vector<const CsiRecord*> episode_records(const Episode& ep) {
  std::vector<const CsiRecord*> recs;
  recs.reserve(ep.support.size() + ep.query.size());
  for (const auto& s : ep.support) recs.push_back(s.record.get());
  for (const auto& q : ep.query) recs.push_back(q.record.get());
  return recs;
}

double row_accuracy(const Mat<float>& probs, std::span<const int> targets) {
  int hits = 0;
  for (Eigen::Index q = 0; q < probs.rows(); ++q) {
    Eigen::Index best;
    probs.row(q).maxCoeff(&best);
    hits += int(best) == targets[std::size_t(q)];
  }
  return double(hits) / double(probs.rows());
}

int shape_k(const Episode& ep) { return int(ep.support.size() / ep.class_ids.size()); }

}  // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("optimizer: expected adam or sgd, got '" + name + "'");
}

std::string to_string(AblationMode mode) {
  for (const auto& m : kModes)
    if (m.mode == mode) return m.name;
  return "unknown";
}

AblationMode ablation_from_string(const std::string& name) {
  for (const auto& m : kModes)
    if (name == m.name) return m.mode;
  throw ConfigError("ablation_mode: unknown mode '" + name +
                    "' (expected proto, proto_A, proto_B, proto_Bplus or proto_A_Bplus)");
}

int ladder_rank(AblationMode mode) { return int(mode); }

bool uses_attention(AblationMode mode) {
  return mode == AblationMode::kProtoA || mode == AblationMode::kProtoABplus;
}

void BackboneConfig::validate() const {
  if (in_channels < 1 || height < 1 || width < 1)
    throw ConfigError("backbone input shape must be positive");
  for (int c : conv_channels)
    if (c < 1) throw ConfigError("conv_channels entries must be positive");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be positive, got " + std::to_string(embedding_dim));
  if (downsample_factor < 1) throw ConfigError("downsample_factor must be >= 1");
}

void TrainConfig::validate() const {
  episode_config(Phase::kMetaTrain).validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
  if (episodes_per_epoch < 1)
    throw ConfigError("episodes_per_epoch must be >= 1, got " + std::to_string(episodes_per_epoch));
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (!(fixed_noise_fraction >= 0)) throw ConfigError("fixed_noise_fraction must be >= 0");
  if (n_test_episodes != 0 && n_test_episodes < kMinReportedTestEpisodes)
    throw ConfigError("n_test_episodes must be 0 or >= " + std::to_string(kMinReportedTestEpisodes) + ", got " +
                      std::to_string(n_test_episodes));
  backbone.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"n_way", c.n_way},
          {"k_shot", c.k_shot},
          {"n_query", c.n_query},
          {"epochs", c.epochs},
          {"episodes_per_epoch", c.episodes_per_epoch},
          {"learning_rate", c.learning_rate},
          {"optimizer", to_string(c.optimizer)},
          {"ablation_mode", to_string(c.ablation_mode)},
          {"seed", c.seed},
          {"fixed_noise_fraction", c.fixed_noise_fraction},
          {"n_test_episodes", c.n_test_episodes},
          {"backbone",
           {{"in_channels", c.backbone.in_channels},
            {"height", c.backbone.height},
            {"width", c.backbone.width},
            {"conv_channels", c.backbone.conv_channels},
            {"embedding_dim", c.backbone.embedding_dim},
            {"downsample_factor", c.backbone.downsample_factor},
            {"input_norm", norm_name(c.backbone.input_norm)}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.n_way = j.at("n_way").get<int>();
  c.k_shot = j.at("k_shot").get<int>();
  c.n_query = j.at("n_query").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.episodes_per_epoch = j.at("episodes_per_epoch").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  c.ablation_mode = ablation_from_string(j.at("ablation_mode").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.fixed_noise_fraction = j.at("fixed_noise_fraction").get<double>();
  c.n_test_episodes = j.at("n_test_episodes").get<int>();
  const auto& b = j.at("backbone");
  c.backbone.in_channels = b.at("in_channels").get<int>();
  c.backbone.height = b.at("height").get<int>();
  c.backbone.width = b.at("width").get<int>();
  c.backbone.conv_channels = b.at("conv_channels").get<std::array<int, 4>>();
  c.backbone.embedding_dim = b.at("embedding_dim").get<int>();
  c.backbone.downsample_factor = b.at("downsample_factor").get<int>();
  c.backbone.input_norm = norm_from(b.at("input_norm").get<std::string>());
  return c;
}

std::vector<CurriculumStage> noise_schedule(const TrainConfig& cfg) {
  switch (cfg.ablation_mode) {
    case AblationMode::kProtoBplus:
    case AblationMode::kProtoABplus:
      return stage_table(cfg.epochs);
    case AblationMode::kProtoB: {
      auto table = stage_table(cfg.epochs);
      for (std::size_t s = 1; s < table.size(); ++s) table[s].noise_fraction = cfg.fixed_noise_fraction;
      return table;
    }
    case AblationMode::kProto:
    case AblationMode::kProtoA:
      break;
  }
  CurriculumStage clean;
  clean.first_epoch = 1;
  clean.last_epoch = cfg.epochs;
  return {clean};
}

CurriculumStage noise_stage(const std::vector<CurriculumStage>& schedule, int epoch) {
  for (const auto& s : schedule)
    if (epoch >= s.first_epoch && epoch <= s.last_epoch) return s;
  throw ConfigError("epoch " + std::to_string(epoch) + " is outside the noise schedule");
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"mean_loss", e.mean_loss},
                      {"mean_accuracy", e.mean_accuracy},
                      {"stage", e.stage},
                      {"noise_fraction", e.noise_fraction}});
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stage_table)
    stages.push_back({{"stage", s.index},
                      {"noise_fraction", s.noise_fraction},
                      {"snr_db", std::isinf(snr_db(s.noise_fraction)) ? nlohmann::json(nullptr)
                                                                       : nlohmann::json(snr_db(s.noise_fraction))},
                      {"first_epoch", s.first_epoch},
                      {"last_epoch", s.last_epoch},
                      {"mix_augmented_to_original", {s.augmented_share, s.original_share}}});
  return {{"config", to_json(r.config)},
          {"epochs", epochs},
          {"stage_table", stages},
          {"test", {{"accuracy", r.test.accuracy}, {"ci95", r.test.ci95}, {"episodes", r.test.episodes}}},
          {"train_seconds", r.train_seconds}};
}

TrainState initial_state(const GestureDataset& ds, const TrainConfig& cfg) {
  if (ds.records.empty()) throw ConfigError("cannot train on an empty dataset");
  TrainConfig shaped = cfg;
  const CsiRecord& first = ds[0];
  shaped.backbone.in_channels = first.antennas;
  shaped.backbone.height = int(first.samples());
  shaped.backbone.width = first.subcarriers;
  shaped.validate();
  TrainState st{Model<float>(shaped.backbone, uses_attention(cfg.ablation_mode)),
                Optimizer<float>(), 0, {}};
  auto rng = make_rng(cfg.seed, {23});
  st.model.init(rng);
  st.optimizer = Optimizer<float>(cfg.optimizer, cfg.learning_rate, st.model.params.size());
  return st;
}

StepResult train_step(TrainState& state, const Episode& ep) {
  auto& model = state.model;
  const int n = int(ep.class_ids.size());
  const int k = shape_k(ep);
  const auto recs = episode_records(ep);
  const auto targets = query_targets(ep);
  const Eigen::Index nk = Eigen::Index(ep.support.size()), m = Eigen::Index(ep.query.size());

  const Mat<float> input = records_to_input<float>(recs, model.backbone.config());
  typename Backbone<float>::Cache cache;
  const Mat<float> emb = model.backbone.forward(model.params, input, Eigen::Index(recs.size()), Mode::kTrain, &cache);
  const Mat<float> zs = emb.topRows(nk), zq = emb.bottomRows(m);

  MetricHead<float> head(model.attention_or_null(), n, k);
  const HeadResult<float> r = head.forward(model.params, zs, zq, targets);
  if (!std::isfinite(r.loss)) throw DivergenceError("non-finite loss");

  Vec<float> grad = model.params.zeros();
  const HeadGradients<float> g = head.backward(model.params, zs, zq, targets, r, grad);
  Mat<float> d_emb(emb.rows(), emb.cols());
  d_emb.topRows(nk) = g.d_support;
  d_emb.bottomRows(m) = g.d_query;
  model.backbone.backward(model.params, cache, d_emb, grad);
  state.optimizer.step(model.params.values(), grad);
  return {double(r.loss), row_accuracy(r.probs, targets)};
}

RunReport train(const GestureDataset& ds, const TrainConfig& cfg, TrainState& state,
                const EpochCallback& on_epoch) {
  cfg.validate();
  RunReport report;
  report.config = cfg;
  report.config.backbone = state.model.backbone.config();
  report.stage_table = noise_schedule(cfg);
  const EpisodeConfig ecfg = cfg.episode_config(Phase::kMetaTrain);
  const LabelIndex index(ds);

  const auto start = std::chrono::steady_clock::now();
  for (int epoch = state.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    const CurriculumStage stage = noise_stage(report.stage_table, epoch);
    double loss_sum = 0, acc_sum = 0;
    for (int i = 1; i <= cfg.episodes_per_epoch; ++i) {
      Rng rng(episode_seed(cfg.seed, Phase::kMetaTrain, epoch, i));
      Episode ep = sample_episode(ds, index, ecfg, rng);
      auto aug_rng = make_rng(cfg.seed, {kAugmentStream, std::uint64_t(epoch), std::uint64_t(i)});
      ep.query = augment_query(ep.query, stage, aug_rng);
      StepResult step;
      try {
        step = train_step(state, ep);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", episode " +
                              std::to_string(i));
      }
      loss_sum += step.loss;
      acc_sum += step.accuracy;
    }
    state.history.push_back({epoch, loss_sum / cfg.episodes_per_epoch, acc_sum / cfg.episodes_per_epoch,
                             stage.index, stage.noise_fraction});
    state.epochs_done = epoch;
    if (on_epoch) on_epoch(state);
  }
  report.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.epochs = state.history;
  if (cfg.n_test_episodes > 0) report.test = evaluate(state.model, ds, cfg, cfg.n_test_episodes);
  return report;
}

std::pair<TrainState, RunReport> train(const GestureDataset& ds, const TrainConfig& cfg) {
  TrainState state = initial_state(ds, cfg);
  RunReport report = train(ds, cfg, state);
  return {std::move(state), std::move(report)};
}

EvalResult evaluate_with(const Embedder& embed, const AttentionModule<float>* attention,
                         const nn::ParameterSet<float>& params, const GestureDataset& ds,
                         const TrainConfig& cfg, int n_test_episodes) {
  if (n_test_episodes < 1)
    throw ConfigError("n_test_episodes must be >= 1, got " + std::to_string(n_test_episodes));
  const EpisodeConfig ecfg = cfg.episode_config(Phase::kMetaTest);
  const LabelIndex index(ds);
  std::vector<double> acc;
  acc.reserve(std::size_t(n_test_episodes));
  for (int e = 1; e <= n_test_episodes; ++e) {
    Rng rng(episode_seed(cfg.seed, Phase::kMetaTest, 1, e));
    const Episode ep = sample_episode(ds, index, ecfg, rng);
    const auto recs = episode_records(ep);
    const auto targets = query_targets(ep);
    const Mat<float> emb = embed(recs);
    const Eigen::Index nk = Eigen::Index(ep.support.size());
    MetricHead<float> head(attention, int(ep.class_ids.size()), shape_k(ep));
    const auto r = head.forward(params, emb.topRows(nk), emb.bottomRows(emb.rows() - nk), {});
    acc.push_back(row_accuracy(r.probs, targets));
  }
  EvalResult out;
  out.episodes = n_test_episodes;
  const double n = double(acc.size());
  for (double a : acc) out.accuracy += a;
  out.accuracy /= n;
  if (acc.size() >= 2) {
    double ss = 0;
    for (double a : acc) ss += (a - out.accuracy) * (a - out.accuracy);
    out.ci95 = 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(n);
  }
  return out;
}

EvalResult evaluate(Model<float>& model, const GestureDataset& ds, const TrainConfig& cfg, int n_test_episodes) {
  const Embedder embed = [&model](std::span<const CsiRecord* const> recs) {
    return embed_batch<float>(recs, model.backbone, model.params);
  };
  return evaluate_with(embed, model.attention_or_null(), model.params, ds, cfg, n_test_episodes);
}

Mat<float> episode_probabilities(Model<float>& model, const Episode& ep) {
  const auto recs = episode_records(ep);
  const Mat<float> emb = embed_batch<float>(recs, model.backbone, model.params);
  const Eigen::Index nk = Eigen::Index(ep.support.size());
  MetricHead<float> head(model.attention_or_null(), int(ep.class_ids.size()), shape_k(ep));
  return head.forward(model.params, emb.topRows(nk), emb.bottomRows(emb.rows() - nk), {}).probs;
}

std::vector<AblationRow> run_ablation(const GestureDataset& ds, const TrainConfig& base,
                                      std::vector<AblationMode> modes, const std::vector<std::uint64_t>& seeds,
                                      const std::vector<int>& shots) {
  if (modes.empty()) throw ConfigError("ablation needs at least one mode");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (shots.empty()) throw ConfigError("ablation needs at least one shot setting");
  std::sort(modes.begin(), modes.end(), [](AblationMode a, AblationMode b) { return ladder_rank(a) < ladder_rank(b); });
  modes.erase(std::unique(modes.begin(), modes.end()), modes.end());
  std::vector<AblationRow> rows;
  for (AblationMode mode : modes)
    for (std::uint64_t seed : seeds) {
      AblationRow row{mode, seed, {}};
      for (int shot : shots) {
        TrainConfig cfg = base;
        cfg.ablation_mode = mode;
        cfg.seed = seed;
        cfg.k_shot = shot;
        row.reports.push_back(train(ds, cfg).second);
      }
      rows.push_back(std::move(row));
    }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "mode,seed,1shot_acc,5shot_acc,train_seconds\n";
  out << std::fixed;
  for (const auto& row : rows) {
    std::string one = "NA", five = "NA";
    double seconds = 0;
    for (const auto& r : row.reports) {
      std::ostringstream acc;
      acc << std::fixed << std::setprecision(6) << r.test.accuracy;
      if (r.config.k_shot == 1) one = acc.str();
      if (r.config.k_shot == 5) five = acc.str();
      seconds += r.train_seconds;
    }
    out << to_string(row.mode) << ',' << row.seed << ',' << one << ',' << five << ','
        << std::setprecision(3) << seconds << '\n';
  }
  return out.str();
}

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& path) {
  const auto& model = state.model;
  TrainConfig echo = cfg;
  echo.backbone = model.backbone.config();
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["epochs_done"] = state.epochs_done;
  header["train_config"] = to_json(echo);
  header["use_attention"] = model.use_attention;
  auto& specs = header["parameters"] = nlohmann::json::array();
  for (const auto& s : model.params.specs()) specs.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  auto& bn = header["batchnorm_channels"] = nlohmann::json::array();
  for (const auto& b : model.backbone.bn_state()) bn.push_back(b.running_mean.size());
  header["optimizer"] = {{"kind", to_string(state.optimizer.kind())},
                         {"learning_rate", state.optimizer.learning_rate()},
                         {"steps", state.optimizer.steps()}};
  auto& hist = header["history"] = nlohmann::json::array();
  for (const auto& e : state.history)
    hist.push_back({e.epoch, e.mean_loss, e.mean_accuracy, e.stage, e.noise_fraction});

  io::ContainerWriter w(path, kCheckpointMagic, kCheckpointFormatVersion, header);
  w.write_floats({model.params.values().data(), std::size_t(model.params.size())});
  for (const auto& b : model.backbone.bn_state()) {
    w.write_floats({b.running_mean.data(), std::size_t(b.running_mean.size())});
    w.write_floats({b.running_var.data(), std::size_t(b.running_var.size())});
  }
  if (state.optimizer.kind() == OptimizerKind::kAdam) {
    const auto& m = state.optimizer.first_moment();
    const auto& v = state.optimizer.second_moment();
    w.write_floats({m.data(), std::size_t(m.size())});
    w.write_floats({v.data(), std::size_t(v.size())});
  }
  w.close();
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  io::ContainerReader r(path, kCheckpointMagic, kCheckpointFormatVersion, "checkpoint");
  const auto& h = r.header();
  try {
    TrainConfig cfg = train_config_from_json(h.at("train_config"));
    Model<float> model(cfg.backbone, h.at("use_attention").get<bool>());
    const auto& specs = h.at("parameters");
    if (specs.size() != model.params.specs().size())
      throw ParseError("checkpoint has " + std::to_string(specs.size()) + " parameter tensors, model expects " +
                           std::to_string(model.params.specs().size()),
                       r.offset());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = model.params.specs()[i];
      if (specs[i].at("name").get<std::string>() != s.name || specs[i].at("rows").get<Eigen::Index>() != s.rows ||
          specs[i].at("cols").get<Eigen::Index>() != s.cols)
        throw ParseError("checkpoint parameter '" + specs[i].at("name").get<std::string>() +
                             "' does not match model parameter '" + s.name + "'",
                         r.offset());
    }
    r.read_floats({model.params.values().data(), std::size_t(model.params.size())});
    for (auto& b : model.backbone.bn_state()) {
      r.read_floats({b.running_mean.data(), std::size_t(b.running_mean.size())});
      r.read_floats({b.running_var.data(), std::size_t(b.running_var.size())});
    }
    const auto& opt = h.at("optimizer");
    Optimizer<float> optimizer(optimizer_from_string(opt.at("kind").get<std::string>()),
                               opt.at("learning_rate").get<double>(), model.params.size());
    optimizer.set_steps(opt.at("steps").get<long long>());
    if (optimizer.kind() == OptimizerKind::kAdam) {
      r.read_floats({optimizer.first_moment().data(), std::size_t(optimizer.first_moment().size())});
      r.read_floats({optimizer.second_moment().data(), std::size_t(optimizer.second_moment().size())});
    }
    r.expect_end();
    std::vector<EpochStats> history;
    for (const auto& e : h.at("history"))
      history.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<int>(),
                         e.at(4).get<double>()});
    TrainState state{std::move(model), std::move(optimizer), h.at("epochs_done").get<int>(), std::move(history)};
    return {cfg, std::move(state)};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid checkpoint header: ") + e.what(), r.offset());
  }
}

}  // namespace profinet
