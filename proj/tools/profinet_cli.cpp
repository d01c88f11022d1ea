// profinet: generate, preprocess, train, eval and ablate from the command line.
//
// Configuration is layered: built-in defaults < --config file (key = value
// text or a previous run manifest) < PROFINET_OUT_DIR < --set key=value and
// per-key flags. Every command writes one manifest into out_dir.

#include "profinet/config.hpp"
#include "profinet/container.hpp"
#include "profinet/csi.hpp"
#include "profinet/preprocess.hpp"
#include "profinet/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace profinet;

namespace {

constexpr int kManifestVersion = 1;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string fnv1a_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

json file_entry(const fs::path& path) {
  return {{"path", path.string()}, {"bytes", fs::file_size(path)}, {"fnv1a64", fnv1a_hex(path)}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

/// One command invocation: resolved config, output directory, manifest.
class Run {
 public:
  Run(std::string command, Config config) : command_(std::move(command)), config_(std::move(config)) {
    started_ = utc_now();
    out_dir_ = config_.get("out_dir");
    fs::create_directories(out_dir_);
  }

  const Config& config() const { return config_; }
  fs::path out(const std::string& name) const { return out_dir_ / name; }

  void input(const std::string& role, const fs::path& path) { inputs_[role] = file_entry(path); }
  void output(const std::string& role, const fs::path& path) { outputs_[role] = file_entry(path); }
  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void finish() {
    json sources = json::object();
    for (const auto& k : config_.keys()) sources[k] = config_.source_of(k);
    json m = {{"command", command_},
              {"manifest_version", kManifestVersion},
              {"format_versions", {{"dataset", kDatasetFormatVersion}, {"checkpoint", kCheckpointFormatVersion}}},
              {"seed", config_.get_u64("seed")},
              {"started_at", started_},
              {"finished_at", utc_now()},
              {"config", config_.to_json()},
              {"config_sources", sources},
              {"inputs", inputs_},
              {"outputs", outputs_}};
    for (const auto& [k, v] : extra_.items()) m[k] = v;
    write_text(out(command_ + ".manifest.json"), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  Config config_;
  fs::path out_dir_;
  std::string started_;
  json inputs_ = json::object(), outputs_ = json::object(), extra_ = json::object();
};

GestureDataset load_input_dataset(Run& run) {
  const fs::path path = run.config().get("dataset");
  if (!fs::exists(path)) throw Error("dataset file not found: " + path.string());
  run.input("dataset", path);
  return load_dataset(path);
}

void log_epoch(const TrainConfig& cfg, const EpochStats& e) {
  std::cerr << "epoch " << e.epoch << "/" << cfg.epochs << " loss " << std::setprecision(5) << e.mean_loss
            << " acc " << e.mean_accuracy << " stage " << e.stage << " noise " << e.noise_fraction << "\n";
}

std::string stage_table_csv(const std::vector<CurriculumStage>& table) {
  std::ostringstream out;
  out << "stage,first_epoch,last_epoch,noise_fraction,snr_db,augmented_share,original_share\n";
  for (const auto& s : table) {
    const double snr = snr_db(s.noise_fraction);
    out << s.index << ',' << s.first_epoch << ',' << s.last_epoch << ',' << s.noise_fraction << ','
        << (std::isinf(snr) ? std::string("inf") : std::to_string(snr)) << ',' << s.augmented_share << ','
        << s.original_share << '\n';
  }
  return out.str();
}

// --- commands ---

void cmd_generate(Run& run) {
  const auto& c = run.config();
  const SyntheticConfig sc = synthetic_config(c);
  GestureDataset ds = generate_synthetic(sc);
  if (c.get("n_train") != "auto") ds = split_labels(ds, c.get_int("n_train"), sc.seed);
  const fs::path path = run.out("dataset.pfcsi");
  save_dataset(ds, path);
  run.output("dataset", path);
  run.note("dataset", {{"records", ds.size()},
                       {"classes", ds.label_space.size()},
                       {"train_labels", ds.split.train_labels},
                       {"test_labels", ds.split.test_labels}});
  std::cout << path.string() << "\n";
}

void cmd_preprocess(Run& run) {
  const PreprocessConfig pc = preprocess_config(run.config());
  const GestureDataset raw = load_input_dataset(run);
  const auto start = std::chrono::steady_clock::now();
  const GestureDataset ds = prepare_dataset(raw, pc);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path path = run.out("preprocessed.pfcsi");
  save_dataset(ds, path);
  run.output("preprocessed", path);

  double removed = 0, total = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const CsiRecord reduced = downsample_record(raw[i], pc.downsample_factor);
    removed += (reduced.amplitude - ds[i].amplitude).cast<double>().squaredNorm();
    total += reduced.amplitude.cast<double>().squaredNorm();
  }
  const json summary = {{"records", ds.size()},
                        {"input_shape", {raw[0].samples(), raw[0].subcarriers, raw[0].antennas}},
                        {"output_shape", {ds[0].samples(), ds[0].subcarriers, ds[0].antennas}},
                        {"removed_energy_fraction", total > 0 ? removed / total : 0.0},
                        {"seconds", seconds}};
  write_text(run.out("preprocess.json"), summary.dump(2) + "\n");
  run.output("summary", run.out("preprocess.json"));
  std::cout << summary.dump() << "\n";
}

void cmd_train(Run& run) {
  const auto& c = run.config();
  TrainConfig cfg = train_config(c);
  const PreprocessConfig pc = preprocess_config(c);
  const GestureDataset ds = prepare_dataset(load_input_dataset(run), pc);
  const int checkpoint_every = c.get_int("checkpoint_every");
  if (checkpoint_every < 0) throw ConfigError("config key 'checkpoint_every' must be >= 0");
  const fs::path ckpt = c.get("checkpoint").empty() ? run.out("checkpoint.pfckpt") : fs::path(c.get("checkpoint"));

  TrainState state = initial_state(ds, cfg);
  int resumed_from = 0;
  if (!c.get("resume").empty()) {
    const fs::path from = c.get("resume");
    if (!fs::exists(from)) throw Error("checkpoint file not found: " + from.string());
    run.input("resume", from);
    LoadedCheckpoint loaded = load_checkpoint(from);
    // Only the run length and the meta-test size may change on resume.
    TrainConfig stored = loaded.config, wanted = cfg;
    wanted.backbone = state.model.backbone.config();
    stored.epochs = wanted.epochs = 0;
    stored.n_test_episodes = wanted.n_test_episodes = 0;
    if (to_json(stored) != to_json(wanted))
      throw ConfigError("config differs from the checkpoint being resumed (only epochs and n_test_episodes may change)");
    state = std::move(loaded.state);
    if (state.epochs_done > cfg.epochs)
      throw ConfigError("checkpoint is at epoch " + std::to_string(state.epochs_done) + ", beyond epochs = " +
                        std::to_string(cfg.epochs));
    resumed_from = state.epochs_done;
    std::cerr << "resuming after epoch " << resumed_from << "\n";
  }

  const RunReport report = train(ds, cfg, state, [&](const TrainState& s) {
    log_epoch(cfg, s.history.back());
    if (checkpoint_every > 0 && s.epochs_done % checkpoint_every == 0) {
      const fs::path periodic = run.out("checkpoint_e" + std::to_string(s.epochs_done) + ".pfckpt");
      save_checkpoint(s, cfg, periodic);
      run.output("checkpoint_e" + std::to_string(s.epochs_done), periodic);
    }
  });
  save_checkpoint(state, cfg, ckpt);
  run.output("checkpoint", ckpt);

  json j = to_json(report);
  j["resumed_from_epoch"] = resumed_from;
  write_text(run.out("report.json"), j.dump(2) + "\n");
  run.output("report", run.out("report.json"));
  write_text(run.out("stage_table.csv"), stage_table_csv(report.stage_table));
  run.output("stage_table", run.out("stage_table.csv"));
  if (report.test.episodes > 0)
    std::cout << "test accuracy " << report.test.accuracy << " +- " << report.test.ci95 << " over "
              << report.test.episodes << " episodes\n";
  else
    std::cout << "meta-test skipped\n";
}

void cmd_eval(Run& run) {
  const auto& c = run.config();
  if (c.get("checkpoint").empty()) throw ConfigError("config key 'checkpoint' must name a checkpoint file");
  const fs::path ckpt = c.get("checkpoint");
  if (!fs::exists(ckpt)) throw Error("checkpoint file not found: " + ckpt.string());
  run.input("checkpoint", ckpt);
  const TrainConfig cfg = train_config(c);
  const PreprocessConfig pc = preprocess_config(c);
  const GestureDataset ds = prepare_dataset(load_input_dataset(run), pc);
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const int n = cfg.n_test_episodes;
  if (n < 1) throw ConfigError("config key 'n_test_episodes' must be >= 1 for eval");
  const EvalResult r = evaluate(loaded.state.model, ds, cfg, n);
  const json j = {{"accuracy", r.accuracy},
                  {"ci95", r.ci95},
                  {"episodes", r.episodes},
                  {"n_way", cfg.n_way},
                  {"k_shot", cfg.k_shot},
                  {"n_query", cfg.n_query},
                  {"trained_config", to_json(loaded.config)}};
  write_text(run.out("eval.json"), j.dump(2) + "\n");
  run.output("eval", run.out("eval.json"));
  std::cout << "accuracy " << r.accuracy << " +- " << r.ci95 << " over " << r.episodes << " episodes\n";
}

void cmd_ablate(Run& run) {
  const auto& c = run.config();
  const auto modes = ablation_modes(c);
  const auto seeds = ablation_seeds(c);
  const auto shots = ablation_shots(c);
  const TrainConfig base = train_config(c);
  const PreprocessConfig pc = preprocess_config(c);
  const GestureDataset ds = prepare_dataset(load_input_dataset(run), pc);
  const auto rows = run_ablation(ds, base, modes, seeds, shots);
  write_text(run.out("ablation.csv"), ablation_csv(rows));
  run.output("table", run.out("ablation.csv"));
  json reports = json::array();
  for (const auto& row : rows)
    for (const auto& r : row.reports) reports.push_back(to_json(r));
  write_text(run.out("ablation.json"), reports.dump(2) + "\n");
  run.output("reports", run.out("ablation.json"));
  std::cout << ablation_csv(rows);
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot CSI gesture recognition: synthetic data, preprocessing, training, evaluation"};
  app.require_subcommand(1);

  std::string config_file;
  std::vector<std::string> overrides;
  const Config defaults;
  std::map<std::string, std::string> flag_values;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "key = value config file or a previous manifest");
    sub->add_option("--set", overrides, "override key=value (repeatable)");
    for (const auto& key : defaults.keys()) {
      std::string names = "--" + key;
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key) names += ",--" + dashed;
      sub->add_option(names, flag_values[key], "config key (default: " + defaults.get(key) + ")");
    }
  };

  struct Verb {
    const char* name;
    const char* help;
    void (*fn)(Run&);
  };
  const Verb verbs[] = {
      {"generate", "write a synthetic dataset", cmd_generate},
      {"preprocess", "denoise and downsample a dataset, with a summary", cmd_preprocess},
      {"train", "meta-train, meta-test, write checkpoint and report", cmd_train},
      {"eval", "meta-test a checkpoint", cmd_eval},
      {"ablate", "train every mode x seed x shot and write a CSV table", cmd_ablate},
  };
  std::vector<CLI::App*> subs;
  for (const auto& v : verbs) {
    auto* sub = app.add_subcommand(v.name, v.help);
    add_common(sub);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "profinet: error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    Config config;
    if (!config_file.empty()) config.load_file(config_file);
    if (const char* env = std::getenv("PROFINET_OUT_DIR"); env && *env) config.set("out_dir", env, "env");
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1), "command line");
    }
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      for (const auto& key : defaults.keys()) {
        std::string names = "--" + key;
        if (subs[i]->get_option(names)->count() > 0) config.set(key, flag_values[key], "command line");
      }
      Run run(verbs[i].name, config);
      verbs[i].fn(run);
      run.finish();
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "profinet: error: " << one_line(e.what()) << "\n";
    return 1;
  }
}
