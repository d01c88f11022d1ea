#pragma once

#include "profinet/backbone.hpp"
#include "profinet/curriculum.hpp"
#include "profinet/episodes.hpp"
#include "profinet/optimizer.hpp"
#include "profinet/protometric.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace profinet {

/// Ablation ladder, in reporting order.
enum class AblationMode { kProto, kProtoA, kProtoB, kProtoBplus, kProtoABplus };

std::string to_string(AblationMode mode);
AblationMode ablation_from_string(const std::string& name);
int ladder_rank(AblationMode mode);
bool uses_attention(AblationMode mode);

/// Smallest meta-test run whose interval a RunReport may carry.
inline constexpr int kMinReportedTestEpisodes = 100;

struct TrainConfig {
  int n_way = 5;
  int k_shot = 1;
  int n_query = 10;
  int epochs = 600;
  int episodes_per_epoch = 100;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  AblationMode ablation_mode = AblationMode::kProtoABplus;
  std::uint64_t seed = 0;
  double fixed_noise_fraction = 0.3;
  int n_test_episodes = 600;  // 0 skips the final meta-test
  /// Shape fields are taken from the dataset at train time.
  BackboneConfig backbone;

  void validate() const;
  EpisodeConfig episode_config(Phase phase) const { return {n_way, k_shot, n_query, phase}; }
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Noise schedule of a mode: the curriculum table for the curriculum modes,
/// stage 1 clean then a fixed fraction for proto_B, one clean stage otherwise.
std::vector<CurriculumStage> noise_schedule(const TrainConfig& cfg);
CurriculumStage noise_stage(const std::vector<CurriculumStage>& schedule, int epoch);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;
  double mean_accuracy = 0;
  int stage = 1;
  double noise_fraction = 0;
  bool operator==(const EpochStats&) const = default;
};

struct EvalResult {
  double accuracy = 0;
  double ci95 = 0;
  int episodes = 0;
};

struct RunReport {
  std::vector<EpochStats> epochs;
  EvalResult test;
  double train_seconds = 0;
  TrainConfig config;
  std::vector<CurriculumStage> stage_table;
};

nlohmann::json to_json(const RunReport& report);

/// Backbone, attention module and their shared flat parameter vector.
template <typename T>
struct Model {
  nn::ParameterSet<T> params;
  Backbone<T> backbone;
  AttentionModule<T> attention;
  bool use_attention = false;

  Model(const BackboneConfig& cfg, bool attention_enabled)
      : backbone(cfg, params), attention(cfg.embedding_dim, params), use_attention(attention_enabled) {}

  void init(Rng& rng, bool random_attention_projection = false) {
    backbone.init(params, rng);
    attention.init(params, rng, random_attention_projection);
  }

  const AttentionModule<T>* attention_or_null() const { return use_attention ? &attention : nullptr; }
};

/// Everything needed to continue training bit-for-bit.
struct TrainState {
  Model<float> model;
  Optimizer<float> optimizer;
  int epochs_done = 0;
  std::vector<EpochStats> history;
};

/// Fresh model and optimizer for `cfg` on a dataset whose records already
/// have the backbone input shape.
TrainState initial_state(const GestureDataset& ds, const TrainConfig& cfg);

/// Loss and accuracy of one training step.
struct StepResult {
  double loss = 0;
  double accuracy = 0;
};

/// Forward, backward and one optimizer step on a single episode.
StepResult train_step(TrainState& state, const Episode& episode);

using EpochCallback = std::function<void(const TrainState&)>;

/// Meta-training from `state` (fresh or resumed) up to cfg.epochs, then
/// meta-testing on cfg.n_test_episodes clean test-split episodes.
RunReport train(const GestureDataset& ds, const TrainConfig& cfg, TrainState& state,
                const EpochCallback& on_epoch = {});

/// Convenience overload starting from initial_state.
std::pair<TrainState, RunReport> train(const GestureDataset& ds, const TrainConfig& cfg);

/// Row i of the result embeds record i.
using Embedder = std::function<Mat<float>(std::span<const CsiRecord* const>)>;

/// Mean query accuracy over clean meta-test episodes with 95% interval
/// 1.96 * standard error.
EvalResult evaluate_with(const Embedder& embed, const AttentionModule<float>* attention,
                         const nn::ParameterSet<float>& params, const GestureDataset& ds,
                         const TrainConfig& cfg, int n_test_episodes);

EvalResult evaluate(Model<float>& model, const GestureDataset& ds, const TrainConfig& cfg,
                    int n_test_episodes);

/// Query logits of one episode in inference mode (rows follow episode.query).
Mat<float> episode_probabilities(Model<float>& model, const Episode& episode);

struct AblationRow {
  AblationMode mode;
  std::uint64_t seed = 0;
  std::vector<RunReport> reports;  // one per shot setting
};

/// Trains and evaluates every (mode, seed, shot). Rows follow ladder order,
/// then seed order.
std::vector<AblationRow> run_ablation(const GestureDataset& ds, const TrainConfig& base,
                                      std::vector<AblationMode> modes,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::vector<int>& shots = {1, 5});

/// CSV with columns mode,seed,1shot_acc,5shot_acc,train_seconds.
std::string ablation_csv(const std::vector<AblationRow>& rows);

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::filesystem::path& path);

struct LoadedCheckpoint {
  TrainConfig config;
  TrainState state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace profinet
