// Acceptance run: prints one PASS/FAIL line per criterion 1-8.
// Usage: acceptance [criterion ...]   (default: all)

#include "gradcheck.hpp"
#include "oracles.hpp"

#include "profinet/csi.hpp"
#include "profinet/curriculum.hpp"
#include "profinet/episodes.hpp"
#include "profinet/preprocess.hpp"
#include "profinet/protometric.hpp"
#include "profinet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace profinet;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "failed: ";
      else detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Desk-scale corpus shared by criteria 7 and 8.
GestureDataset desk_dataset() {
  SyntheticConfig sc;
  sc.n_classes = 20;
  sc.samples_per_class = 20;
  sc.seed = 1;
  PreprocessConfig pc;
  pc.downsample_factor = 16;
  return prepare_dataset(generate_synthetic(sc), pc);
}

TrainConfig desk_config(AblationMode mode, std::uint64_t seed) {
  TrainConfig c;
  c.n_way = 5;
  c.k_shot = 1;
  c.n_query = 10;
  c.epochs = 60;
  c.episodes_per_epoch = 20;
  c.ablation_mode = mode;
  c.seed = seed;
  c.n_test_episodes = 200;
  c.backbone.conv_channels = {32, 32, 32, 32};
  c.backbone.embedding_dim = 32;
  return c;
}

// 1. SNR correspondence.
void snr_correspondence(Outcome& o) {
  const double s1 = snr_db(0.1), s2 = snr_db(0.2);
  o.require(s1 == 20.0, "snr_db(0.1) = " + std::to_string(s1));
  o.require(std::abs(s2 - 13.98) <= 0.01, "snr_db(0.2) = " + std::to_string(s2));
  SyntheticConfig sc;
  sc.n_classes = 2;
  sc.samples_per_class = 1;
  const auto ds = generate_synthetic(sc);
  const CsiRecord& rec = ds[0];
  o.require(rec.samples() == 2000 && rec.subcarriers == 30 && rec.antennas == 3, "record is not 2000x30x3");
  const double signal_var = std::pow(amplitude_std(rec), 2);
  double worst = 0;
  for (double p : {0.1, 0.2, 0.3, 0.4, 0.5}) {
    Rng rng(2024);
    const CsiRecord noisy = add_noise(rec, p, rng);
    const Eigen::ArrayXXd diff = (noisy.amplitude - rec.amplitude).cast<double>().array();
    const double noise_var = (diff - diff.mean()).square().mean();
    const double err = std::abs(10.0 * std::log10(signal_var / noise_var) - snr_db(p));
    worst = std::max(worst, err);
  }
  o.require(worst < 0.5, "empirical SNR off by " + std::to_string(worst) + " dB");
  o.detail << (o.pass ? "" : "; ") << "snr(0.1)=" << s1 << " snr(0.2)=" << s2 << " max empirical dev "
           << worst << " dB";
}

// 2. Schedule law and episode count.
void schedule_law(Outcome& o) {
  const double expected[] = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  for (int e = 1; e <= 600; ++e) {
    const auto st = stage_for_epoch(e, 600);
    const int block = (e - 1) / 100;
    if (st.noise_fraction != expected[block] || st.first_epoch != block * 100 + 1 || st.last_epoch != block * 100 + 100) {
      o.require(false, "epoch " + std::to_string(e) + " maps to noise " + std::to_string(st.noise_fraction));
      break;
    }
  }
  GestureDataset ds;
  for (int l = 0; l < 10; ++l) {
    ds.label_space.push_back(l);
    ds.split.train_labels.push_back(l);
    for (int i = 0; i < 11; ++i) ds.records.push_back(std::make_shared<CsiRecord>(4, 1, 1, l, "count", 1.0));
  }
  EpisodeStream stream(ds, EpisodeConfig{5, 1, 10, Phase::kMetaTrain}, 100, 600, 0);
  std::int64_t n = 0;
  while (stream.next()) ++n;
  o.require(n == 60000, "stream yielded " + std::to_string(n) + " episodes");
  o.detail << (o.pass ? "" : "; ") << "6 blocks of 100 epochs, " << n << " episodes";
}

// 3. Metric-core oracle suite.
void metric_core(Outcome& o) {
  Rng rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  double proto_err = 0, dist_err = 0, reduce_err = 0, sum_err = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 5, k = 1 + trial % 5, d = 8 + trial % 17, m = 10;
    Mat<double> s(n * k, d), q(m, d);
    for (auto& v : s.reshaped()) v = 10.0 * g(rng);
    for (auto& v : q.reshaped()) v = 10.0 * g(rng);
    std::vector<Label> labels(static_cast<std::size_t>(n * k)), ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n * k; ++i) labels[std::size_t(i)] = i % n;
    for (int c = 0; c < n; ++c) ids[std::size_t(c)] = c;
    const auto protos = compute_prototypes<double>(s, labels, ids);
    for (int c = 0; c < n; ++c)
      for (int j = 0; j < d; ++j) {
        double sum = 0;
        int cnt = 0;
        for (int i = 0; i < n * k; ++i)
          if (labels[std::size_t(i)] == c) sum += s(i, j), ++cnt;
        proto_err = std::max(proto_err, std::abs(protos[std::size_t(c)].values(j) - sum / cnt));
      }
    std::vector<AttentionScores<double>> att;
    for (int c = 0; c < n; ++c) {
      Vec<double> w(d);
      for (auto& v : w) v = u(rng);
      att.push_back({c, w});
    }
    Mat<double> plain(m, n);
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < n; ++c) {
        double oracle = 0, sq = 0;
        for (int j = 0; j < d; ++j) {
          const double diff = q(i, j) - protos[std::size_t(c)].values(j);
          oracle += att[std::size_t(c)].weights(j) * diff * diff;
          sq += diff * diff;
        }
        const double got = attended_distance<double>(q.row(i).transpose(), protos[std::size_t(c)].values,
                                                     att[std::size_t(c)].weights);
        dist_err = std::max(dist_err, std::abs(got - oracle) / std::max(1.0, std::abs(oracle)));
        plain(i, c) = sq;
      }
    // Uniform attention against plain prototypes, on logits (negative distances)
    // and on probabilities.
    const auto uni = uniform_attention(protos);
    Mat<double> uni_logits(m, n);
    for (int i = 0; i < m; ++i)
      for (int c = 0; c < n; ++c)
        uni_logits(i, c) = -attended_distance<double>(q.row(i).transpose(), protos[std::size_t(c)].values,
                                                      uni[std::size_t(c)].weights);
    reduce_err = std::max(reduce_err, (uni_logits + plain).cwiseAbs().maxCoeff() / std::max(1.0, plain.maxCoeff()));
    reduce_err = std::max(reduce_err, (classify<double>(q, protos, uni) - softmax_neg(plain)).cwiseAbs().maxCoeff());
    const Mat<double> p = classify<double>(q, protos, att);
    sum_err = std::max(sum_err, (p.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  bool exact_uniform = true;
  for (int n : {2, 3, 5, 7, 10}) {
    const Mat<double> p = softmax_neg<double>(Mat<double>::Constant(4, n, 3.25));
    exact_uniform &= (p.array() == 1.0 / n).all();
  }
  o.require(proto_err <= 1e-7, "prototype error " + std::to_string(proto_err));
  o.require(dist_err <= 1e-9, "distance error " + std::to_string(dist_err));
  o.require(reduce_err <= 1e-6, "uniform reduction error " + std::to_string(reduce_err));
  o.require(sum_err <= 1e-6, "row sum error " + std::to_string(sum_err));
  o.require(exact_uniform, "equal distances not exactly 1/N");
  std::ostringstream d;
  d << "proto " << proto_err << ", distance " << dist_err << ", reduction " << reduce_err << ", row sums "
    << sum_err << ", equal distances exact";
  o.detail << (o.pass ? "" : "; ") << d.str();
}

// 4. End-to-end gradient check on the tiny backbone.
void gradient_correctness(Outcome& o) {
  int checked = 0, attention = 0;
  double worst = 0;
  std::string worst_name;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    testing::TinyEpisodeProblem p(seed);
    for (const auto& e : testing::gradient_check(p, 2, 1e-6, seed + 100)) {
      ++checked;
      attention += e.name.rfind("attention.", 0) == 0;
      if (e.relative > worst) worst = e.relative, worst_name = e.name;
    }
  }
  o.require(checked >= 20, "only " + std::to_string(checked) + " parameters checked");
  o.require(attention > 0, "no attention parameters checked");
  o.require(worst < 1e-3, "relative error " + std::to_string(worst) + " at " + worst_name);
  o.detail << (o.pass ? "" : "; ") << checked << " parameters (" << attention << " attention), max relative error "
           << worst;
}

// 5. Sampler laws over 1000 random episodes.
void sampler_laws(Outcome& o) {
  GestureDataset ds;
  for (int l = 0; l < 30; ++l) {
    ds.label_space.push_back(l);
    (l < 20 ? ds.split.train_labels : ds.split.test_labels).push_back(l);
    for (int i = 0; i < 16; ++i) ds.records.push_back(std::make_shared<CsiRecord>(4, 1, 1, l, "s", 1.0));
  }
  Rng meta(5);
  std::uniform_int_distribution<int> way(2, 5), shot(1, 5), query(1, 10);
  int bad_counts = 0, overlaps = 0, leaks = 0, nondeterministic = 0;
  for (int i = 0; i < 1000; ++i) {
    EpisodeConfig cfg{way(meta), shot(meta), query(meta), i % 2 ? Phase::kMetaTest : Phase::kMetaTrain};
    cfg.n_query = std::min(cfg.n_query, 16 - cfg.k_shot);
    const std::uint64_t seed = meta();
    Rng a(seed), b(seed);
    const Episode ep = sample_episode(ds, cfg, a), again = sample_episode(ds, cfg, b);
    const auto& allowed = phase_labels(ds, cfg.phase);
    const std::set<Label> allowed_set(allowed.begin(), allowed.end());
    const std::set<Label> classes(ep.class_ids.begin(), ep.class_ids.end());
    if (int(classes.size()) != cfg.n_way || int(ep.class_ids.size()) != cfg.n_way ||
        int(ep.support.size()) != cfg.n_way * cfg.k_shot || int(ep.query.size()) != cfg.n_way * cfg.n_query)
      ++bad_counts;
    for (int c = 0; c < cfg.n_way; ++c) {
      int s = 0, q = 0;
      for (const auto& it : ep.support) s += it.label == ep.class_ids[std::size_t(c)];
      for (const auto& it : ep.query) q += it.label == ep.class_ids[std::size_t(c)];
      if (s != cfg.k_shot || q != cfg.n_query) ++bad_counts;
    }
    std::set<const CsiRecord*> support;
    for (const auto& it : ep.support) support.insert(it.record.get());
    for (const auto& it : ep.query) overlaps += support.count(it.record.get());
    for (Label l : ep.class_ids) leaks += allowed_set.count(l) == 0;
    for (const auto& it : ep.support) leaks += it.record->label != it.label;
    bool same = ep.class_ids == again.class_ids;
    for (std::size_t j = 0; same && j < ep.support.size(); ++j) same = ep.support[j].record == again.support[j].record;
    for (std::size_t j = 0; same && j < ep.query.size(); ++j) same = ep.query[j].record == again.query[j].record;
    nondeterministic += !same;
  }
  o.require(bad_counts == 0, std::to_string(bad_counts) + " count violations");
  o.require(overlaps == 0, std::to_string(overlaps) + " support/query overlaps");
  o.require(leaks == 0, std::to_string(leaks) + " phase leaks");
  o.require(nondeterministic == 0, std::to_string(nondeterministic) + " nondeterministic episodes");
  o.detail << (o.pass ? "" : "; ") << "1000 episodes: counts, disjointness, phase isolation, determinism";
}

// 6. Preprocessing laws.
void preprocessing_laws(Outcome& o) {
  Vec<double> impulse(7);
  impulse << 5, 5, 5, 100, 5, 5, 5;
  o.require(hampel_filter(impulse, HampelConfig{}) == Vec<double>::Constant(7, 5.0), "impulse not removed");
  std::vector<double> affine(100);
  for (int i = 0; i < 100; ++i) affine[std::size_t(i)] = -4.0 + 0.37 * i;
  const Vec<double> a = Eigen::Map<const Vec<double>>(affine.data(), 100);
  const auto ref = testing::reference_hampel(affine, 3, 3.0);
  o.require(hampel_filter(a, HampelConfig{}) == a, "affine series changed");
  o.require(hampel_filter(a, HampelConfig{}) == Eigen::Map<const Vec<double>>(ref.data(), 100),
            "disagrees with the scalar reference");

  Rng rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  double recon = 0;
  for (int n : {64, 125, 250, 2000}) {
    Vec<double> x(n);
    for (auto& v : x) v = g(rng);
    DwtConfig cfg;
    cfg.fixed_threshold = 0.0;
    recon = std::max(recon, (dwt_denoise(x, cfg) - x).cwiseAbs().maxCoeff());
  }
  o.require(recon <= 1e-8, "zero-threshold reconstruction error " + std::to_string(recon));

  const int n = 2000;
  Vec<double> clean(n);
  for (int i = 0; i < n; ++i) clean(i) = std::sin(2.0 * std::numbers::pi * 3.0 * i / n);
  std::normal_distribution<double> noise(0.0, std::sqrt(clean.squaredNorm() / n / 10.0));
  Vec<double> noisy = clean;
  for (auto& v : noisy) v += noise(rng);
  const double before = std::sqrt((noisy - clean).squaredNorm() / n);
  const double after = std::sqrt((dwt_denoise(noisy, DwtConfig{}) - clean).squaredNorm() / n);
  o.require(after < before, "denoising did not lower RMSE");
  o.detail << (o.pass ? "" : "; ") << "impulse removed, affine unchanged, reconstruction error " << recon
           << ", RMSE " << before << " -> " << after;
}

// 7. Learning smoke at desk scale.
void learning_smoke(Outcome& o) {
  const GestureDataset ds = desk_dataset();
  const TrainConfig cfg = desk_config(AblationMode::kProto, 1);
  const auto [state, report] = train(ds, cfg);
  const double first = report.epochs.front().mean_loss, last = report.epochs.back().mean_loss;
  o.require(last < first, "final loss " + std::to_string(last) + " >= first " + std::to_string(first));
  o.require(report.test.accuracy > 0.26, "test accuracy " + std::to_string(report.test.accuracy));
  o.detail << (o.pass ? "" : "; ") << "loss " << first << " -> " << last << ", meta-test accuracy "
           << report.test.accuracy << " +- " << report.test.ci95 << " (" << report.test.episodes << " episodes)";
}

// 8. Ablation direction over five seeds.
void ablation_direction(Outcome& o) {
  const GestureDataset ds = desk_dataset();
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const auto rows = run_ablation(ds, desk_config(AblationMode::kProto, 0),
                                 {AblationMode::kProto, AblationMode::kProtoABplus}, seeds, {1});
  double proto = 0, full = 0;
  std::ostringstream per_seed;
  for (const auto& row : rows) {
    const double acc = row.reports.front().test.accuracy;
    (row.mode == AblationMode::kProto ? proto : full) += acc / double(seeds.size());
    per_seed << ' ' << to_string(row.mode) << '/' << row.seed << '=' << acc;
  }
  std::cerr << ablation_csv(rows);
  o.require(full >= proto, "proto_A_Bplus mean " + std::to_string(full) + " < proto mean " + std::to_string(proto));
  o.detail << (o.pass ? "" : "; ") << "mean accuracy proto " << proto << ", proto_A_Bplus " << full << ";"
           << per_seed.str();
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<void(Outcome&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "SNR correspondence", 1.0, snr_correspondence},
      {2, "schedule law", 1.0, schedule_law},
      {3, "metric-core oracle suite", 10.0, metric_core},
      {4, "gradient correctness", 120.0, gradient_correctness},
      {5, "sampler laws", 30.0, sampler_laws},
      {6, "preprocessing laws", 10.0, preprocessing_laws},
      {7, "learning smoke", 15.0 * 60.0, learning_smoke},
      {8, "ablation direction", 2.0 * 3600.0, ablation_direction},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double elapsed = seconds_since(t0);
    if (elapsed > c.budget_seconds) {
      o.require(false, "runtime " + std::to_string(elapsed) + " s over budget " + std::to_string(c.budget_seconds) + " s");
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.str().c_str(),
                elapsed);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
