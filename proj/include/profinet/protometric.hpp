#pragma once

// Prototype metric head: class prototypes, feature-level attention, the
// attention-weighted squared distance, softmax over negative distances and
// the negative log-likelihood episode loss, each with its backward pass.

#include "profinet/nn.hpp"
#include "profinet/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace profinet {

template <typename T>
struct ClassPrototype {
  Label class_id = 0;
  Vec<T> values;
};

template <typename T>
struct AttentionScores {
  Label class_id = 0;
  Vec<T> weights;
};

/// Mean embedding per class. `labels[i]` is the label of row i of
/// `support`; prototypes follow the order of `class_ids`.
template <typename T>
std::vector<ClassPrototype<T>> compute_prototypes(const Mat<T>& support, std::span<const Label> labels,
                                                  std::span<const Label> class_ids) {
  if (Eigen::Index(labels.size()) != support.rows())
    throw ShapeError("compute_prototypes: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(support.rows()) + " embeddings");
  std::vector<ClassPrototype<T>> out;
  out.reserve(class_ids.size());
  for (Label c : class_ids) {
    Vec<T> sum = Vec<T>::Zero(support.cols());
    int count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) {
        sum += support.row(Eigen::Index(i)).transpose();
        ++count;
      }
    if (count == 0) throw EpisodeError("class " + std::to_string(c) + " has no support embeddings");
    out.push_back({c, sum / T(count)});
  }
  return out;
}

/// Sum_j weights[j] * (query[j] - proto[j])^2.
template <typename T>
T attended_distance(const VecRef<T>& query, const VecRef<T>& proto, const VecRef<T>& weights) {
  if (query.size() != proto.size() || query.size() != weights.size())
    throw ShapeError("attended_distance: dimensions " + std::to_string(query.size()) + ", " +
                     std::to_string(proto.size()) + ", " + std::to_string(weights.size()) + " differ");
  return (weights.array() * (query - proto).array().square()).sum();
}

/// Row-wise softmax of -distances, stabilized by subtracting the row minimum
/// distance.
template <typename T>
Mat<T> softmax_neg(const Mat<T>& distances) {
  if (distances.cols() == 0) throw EpisodeError("softmax over an empty class list");
  Mat<T> p(distances.rows(), distances.cols());
  for (Eigen::Index q = 0; q < distances.rows(); ++q) {
    const T shift = distances.row(q).minCoeff();
    p.row(q) = (-(distances.row(q).array() - shift)).exp();
    p.row(q) /= p.row(q).sum();
  }
  return p;
}

/// Mean over rows of -log p[row, target].
template <typename T>
T episode_loss(const Mat<T>& probs, std::span<const int> targets) {
  if (Eigen::Index(targets.size()) != probs.rows())
    throw ShapeError("episode_loss: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(probs.rows()) + " queries");
  if (targets.empty()) throw EpisodeError("episode_loss: empty query set");
  T total = 0;
  for (std::size_t q = 0; q < targets.size(); ++q) {
    if (targets[q] < 0 || targets[q] >= probs.cols())
      throw EpisodeError("episode_loss: target index " + std::to_string(targets[q]) + " is outside the episode's classes");
    total -= std::log(probs(Eigen::Index(q), targets[q]));
  }
  return total / T(targets.size());
}

/// Feature-level attention module. Each support embedding of a class is read
/// as a length-d, one-channel signal. Block 1 (conv1d k=3, ReLU) runs per
/// sample and is mean-pooled over the K samples; blocks 2 and 3 follow, and a
/// dense projection yields d raw scores. Weights are exp(raw) divided by
/// their mean, so they are positive with mean one.
template <typename T>
class AttentionModule {
 public:
  static constexpr std::array<int, 3> kWidths = {8, 8, 1};

  struct Cache {
    Eigen::Index k = 0;
    std::vector<Mat<T>> col1;  // per sample
    std::vector<Mat<T>> act1;
    Mat<T> pooled1, col2, act2, col3, act3;
    Vec<T> weights;
  };

  AttentionModule() = default;

  AttentionModule(int dim, nn::ParameterSet<T>& ps, const std::string& prefix = "attention.")
      : dim_(dim) {
    if (dim < 1) throw ConfigError("attention dimension must be positive");
    int cin = 1;
    for (int b = 0; b < 3; ++b) {
      const std::string tag = prefix + "block" + std::to_string(b + 1) + ".";
      w_[b] = ps.add(tag + "conv.weight", Eigen::Index(cin) * 3, kWidths[std::size_t(b)]);
      b_[b] = ps.add(tag + "conv.bias", kWidths[std::size_t(b)], 1);
      cin = kWidths[std::size_t(b)];
    }
    proj_w_ = ps.add(prefix + "proj.weight", dim, dim);
    proj_b_ = ps.add(prefix + "proj.bias", dim, 1);
  }

  /// Conv blocks get fan-in uniform weights and a small positive bias; the
  /// projection starts at zero (uniform attention) unless `random_projection`.
  void init(nn::ParameterSet<T>& ps, Rng& rng, bool random_projection = false) const {
    int cin = 1;
    for (int b = 0; b < 3; ++b) {
      nn::fan_in_uniform<T>(ps.view(w_[b]), Eigen::Index(cin) * 3, rng);
      ps.view(b_[b]).setConstant(T(0.01));
      cin = kWidths[std::size_t(b)];
    }
    if (random_projection) {
      nn::fan_in_uniform<T>(ps.view(proj_w_), dim_, rng);
      nn::fan_in_uniform<T>(ps.view(proj_b_), dim_, rng);
    } else {
      ps.view(proj_w_).setZero();
      ps.view(proj_b_).setZero();
    }
  }

  int dim() const { return dim_; }

  /// `support` is K x d (one class). Returns d positive weights with mean 1.
  Vec<T> forward(const nn::ParameterSet<T>& ps, const Mat<T>& support, Cache* cache = nullptr) const {
    if (support.cols() != dim_)
      throw ShapeError("attention input is " + shape_str(support.rows(), support.cols()) +
                       ", expected K x " + std::to_string(dim_));
    if (support.rows() < 1) throw ShapeError("attention needs at least one support embedding");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.k = support.rows();
    c.col1.clear();
    c.act1.clear();
    c.pooled1 = Mat<T>::Zero(dim_, kWidths[0]);
    for (Eigen::Index i = 0; i < c.k; ++i) {
      Mat<T> col = nn::im2col1d<T>(support.row(i).transpose());
      Mat<T> act = conv(ps, 0, col);
      c.pooled1 += act;
      c.col1.push_back(std::move(col));
      c.act1.push_back(std::move(act));
    }
    c.pooled1 /= T(c.k);
    c.col2 = nn::im2col1d(c.pooled1);
    c.act2 = conv(ps, 1, c.col2);
    c.col3 = nn::im2col1d(c.act2);
    c.act3 = conv(ps, 2, c.col3);
    Vec<T> raw = ps.view(proj_w_).transpose() * c.act3.col(0) + ps.view(proj_b_).col(0);
    Vec<T> e = (raw.array() - raw.maxCoeff()).exp();
    c.weights = e / e.mean();
    return c.weights;
  }

  /// Accumulates parameter gradients; returns d(loss)/d(support) (K x d).
  Mat<T> backward(const nn::ParameterSet<T>& ps, const Cache& c, const Vec<T>& d_weights,
                  Vec<T>& grad) const {
    // w = e / mean(e) with e = exp(raw - max); the shift cancels.
    const Vec<T>& w = c.weights;
    const T dot = d_weights.dot(w);
    const Vec<T> d_raw = (w.array() * (d_weights.array() - dot / T(dim_))).matrix();

    ps.view(grad, proj_w_) += c.act3.col(0) * d_raw.transpose();
    ps.view(grad, proj_b_) += d_raw;
    Mat<T> d_act3 = ps.view(proj_w_) * d_raw;

    Mat<T> d_act2 = nn::col2im1d(conv_backward(ps, 2, c.col3, c.act3, d_act3, grad), kWidths[1]);
    Mat<T> d_pooled1 = nn::col2im1d(conv_backward(ps, 1, c.col2, c.act2, d_act2, grad), kWidths[0]);
    const Mat<T> d_act1 = d_pooled1 / T(c.k);

    Mat<T> d_support(c.k, dim_);
    for (Eigen::Index i = 0; i < c.k; ++i) {
      const Mat<T> dcol = conv_backward(ps, 0, c.col1[std::size_t(i)], c.act1[std::size_t(i)], d_act1, grad);
      d_support.row(i) = nn::col2im1d(dcol, 1).col(0).transpose();
    }
    return d_support;
  }

 private:
  Mat<T> conv(const nn::ParameterSet<T>& ps, int b, const Mat<T>& col) const {
    Mat<T> z = col * ps.view(w_[b]);
    z.rowwise() += ps.view(b_[b]).col(0).transpose();
    return z.cwiseMax(T(0));
  }

  // Returns d(loss)/d(col).
  Mat<T> conv_backward(const nn::ParameterSet<T>& ps, int b, const Mat<T>& col, const Mat<T>& act,
                       const Mat<T>& d_act, Vec<T>& grad) const {
    const Mat<T> dz = (act.array() > T(0)).select(d_act, T(0));
    ps.view(grad, w_[b]) += col.transpose() * dz;
    ps.view(grad, b_[b]) += dz.colwise().sum().transpose();
    return dz * ps.view(w_[b]).transpose();
  }

  int dim_ = 0;
  std::array<std::size_t, 3> w_{}, b_{};
  std::size_t proj_w_ = 0, proj_b_ = 0;
};

/// One episode scored by the metric head. Support rows are class-major with
/// K rows per class (class i owns rows i*K .. i*K+K-1).
template <typename T>
struct HeadResult {
  Mat<T> prototypes;  // N x d
  Mat<T> weights;  // N x d
  Mat<T> distances;  // M x N
  Mat<T> probs;  // M x N
  T loss = 0;
};

template <typename T>
struct HeadGradients {
  Mat<T> d_support;  // NK x d
  Mat<T> d_query;  // M x d
};

/// Differentiable metric head. With `attention == nullptr` every class uses
/// unit weights (plain squared Euclidean distance).
template <typename T>
class MetricHead {
 public:
  MetricHead(const AttentionModule<T>* attention, int n_way, int k_shot)
      : attention_(attention), n_way_(n_way), k_shot_(k_shot) {}

  HeadResult<T> forward(const nn::ParameterSet<T>& ps, const Mat<T>& support, const Mat<T>& query,
                        std::span<const int> targets) {
    const Eigen::Index d = support.cols();
    if (support.rows() != Eigen::Index(n_way_) * k_shot_)
      throw ShapeError("support is " + shape_str(support.rows(), support.cols()) + ", expected " +
                       std::to_string(n_way_ * k_shot_) + " rows");
    if (query.cols() != d) throw ShapeError("query and support embedding widths differ");
    HeadResult<T> r;
    r.prototypes.resize(n_way_, d);
    r.weights = Mat<T>::Ones(n_way_, d);
    caches_.assign(std::size_t(n_way_), {});
    for (int c = 0; c < n_way_; ++c) {
      const Mat<T> block = support.middleRows(Eigen::Index(c) * k_shot_, k_shot_);
      r.prototypes.row(c) = block.colwise().mean();
      if (attention_) r.weights.row(c) = attention_->forward(ps, block, &caches_[std::size_t(c)]).transpose();
    }
    r.distances.resize(query.rows(), n_way_);
    for (Eigen::Index q = 0; q < query.rows(); ++q)
      for (int c = 0; c < n_way_; ++c)
        r.distances(q, c) = (r.weights.row(c).array() * (query.row(q) - r.prototypes.row(c)).array().square()).sum();
    r.probs = softmax_neg(r.distances);
    if (!targets.empty()) r.loss = episode_loss(r.probs, targets);
    return r;
  }

  /// Gradients of the mean NLL loss; accumulates attention parameter grads.
  HeadGradients<T> backward(const nn::ParameterSet<T>& ps, const Mat<T>& /*support*/, const Mat<T>& query,
                            std::span<const int> targets, const HeadResult<T>& r, Vec<T>& grad) const {
    const Eigen::Index m = query.rows(), d = query.cols();
    // d loss / d distance = (onehot - p) / M.
    Mat<T> d_dist = -r.probs;
    for (Eigen::Index q = 0; q < m; ++q) d_dist(q, targets[std::size_t(q)]) += T(1);
    d_dist /= T(m);

    HeadGradients<T> g;
    g.d_query = Mat<T>::Zero(m, d);
    Mat<T> d_proto = Mat<T>::Zero(n_way_, d);
    Mat<T> d_weights = Mat<T>::Zero(n_way_, d);
    for (Eigen::Index q = 0; q < m; ++q)
      for (int c = 0; c < n_way_; ++c) {
        const RowVec<T> diff = query.row(q) - r.prototypes.row(c);
        const T gd = d_dist(q, c);
        const RowVec<T> gz = T(2) * gd * r.weights.row(c).cwiseProduct(diff);
        g.d_query.row(q) += gz;
        d_proto.row(c) -= gz;
        d_weights.row(c) += gd * diff.array().square().matrix();
      }

    g.d_support.resize(Eigen::Index(n_way_) * k_shot_, d);
    for (int c = 0; c < n_way_; ++c) {
      auto rows = g.d_support.middleRows(Eigen::Index(c) * k_shot_, k_shot_);
      rows = d_proto.row(c).replicate(k_shot_, 1) / T(k_shot_);
      if (attention_)
        rows += attention_->backward(ps, caches_[std::size_t(c)], d_weights.row(c).transpose(), grad);
    }
    return g;
  }

 private:
  const AttentionModule<T>* attention_;
  int n_way_;
  int k_shot_;
  std::vector<typename AttentionModule<T>::Cache> caches_;
};

/// Plain-matrix classification: rows of `query` against prototype rows with
/// per-class weights; returns the M x N probability matrix.
template <typename T>
Mat<T> classify(const Mat<T>& query, const std::vector<ClassPrototype<T>>& prototypes,
                const std::vector<AttentionScores<T>>& attentions) {
  if (prototypes.empty()) throw EpisodeError("classify: no prototypes");
  if (attentions.size() != prototypes.size())
    throw EpisodeError("classify: " + std::to_string(attentions.size()) + " attention vectors for " +
                       std::to_string(prototypes.size()) + " prototypes");
  Mat<T> dist(query.rows(), Eigen::Index(prototypes.size()));
  for (Eigen::Index q = 0; q < query.rows(); ++q)
    for (std::size_t c = 0; c < prototypes.size(); ++c)
      dist(q, Eigen::Index(c)) = attended_distance<T>(query.row(q).transpose(), prototypes[c].values,
                                                      attentions[c].weights);
  return softmax_neg(dist);
}

/// Unit attention weights for every prototype.
template <typename T>
std::vector<AttentionScores<T>> uniform_attention(const std::vector<ClassPrototype<T>>& prototypes) {
  std::vector<AttentionScores<T>> out;
  for (const auto& p : prototypes) out.push_back({p.class_id, Vec<T>::Ones(p.values.size())});
  return out;
}

/// Attention weights for one class's K x d support embeddings.
template <typename T>
AttentionScores<T> attention_scores(const Mat<T>& support, Label class_id, const AttentionModule<T>& module,
                                    const nn::ParameterSet<T>& ps) {
  return {class_id, module.forward(ps, support)};
}

}  // namespace profinet
