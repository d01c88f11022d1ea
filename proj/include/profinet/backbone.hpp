#pragma once

// Conv-4 embedding network: four blocks of 3x3 convolution, batch
// normalization, ReLU and 2x2 max pooling, then global average pooling.
// A linear projection follows only when the embedding width differs from
// the last block's channel count.

#include "profinet/csi.hpp"
#include "profinet/nn.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace profinet {

enum class InputNorm { kNone, kRelative };
enum class Mode { kTrain, kInference };

struct BackboneConfig {
  int in_channels = 3;  // antennas
  int height = 250;  // downsampled time samples
  int width = 30;  // subcarriers
  std::array<int, 4> conv_channels = {64, 64, 64, 64};
  int embedding_dim = 64;
  int downsample_factor = 8;
  InputNorm input_norm = InputNorm::kRelative;

  void validate() const;
  bool projected() const { return embedding_dim != conv_channels[3]; }
};

/// Builds the (n*H*W) x A backbone input from records laid out as
/// [T' x S x A]. With relative normalization every channel is divided by its
/// temporal mean and shifted by -1, removing the static multipath level.
template <typename T>
Mat<T> records_to_input(std::span<const CsiRecord* const> records, const BackboneConfig& cfg) {
  const Eigen::Index h = cfg.height, w = cfg.width, n = Eigen::Index(records.size());
  Mat<T> in(n * h * w, cfg.in_channels);
  for (Eigen::Index i = 0; i < n; ++i) {
    const CsiRecord& r = *records[std::size_t(i)];
    if (r.samples() != h || r.subcarriers != w || r.antennas != cfg.in_channels)
      throw ShapeError("backbone expects records of shape [" + std::to_string(h) + " x " +
                       std::to_string(w) + " x " + std::to_string(cfg.in_channels) + "], got [" +
                       std::to_string(r.samples()) + " x " + std::to_string(r.subcarriers) + " x " +
                       std::to_string(r.antennas) + "]");
    for (int a = 0; a < cfg.in_channels; ++a)
      for (int s = 0; s < w; ++s) {
        const auto ch = r.channel(s, a);
        double scale = 1.0, offset = 0.0;
        if (cfg.input_norm == InputNorm::kRelative) {
          const double mean = ch.template cast<double>().mean();
          scale = mean > 1e-12 ? 1.0 / mean : 0.0;
          offset = mean > 1e-12 ? -1.0 : 0.0;
        }
        for (Eigen::Index t = 0; t < h; ++t)
          in((i * h + t) * w + s, a) = T(double(ch(t)) * scale + offset);
      }
  }
  return in;
}

template <typename T>
class Backbone {
 public:
  struct BlockCache {
    nn::Dims dims;
    Mat<T> col;
    nn::BatchNormCache<T> bn;
    Mat<T> activated;
    nn::PoolPlan pool;
    std::vector<Eigen::Index> argmax;
  };
  struct Cache {
    std::array<BlockCache, 4> blocks;
    nn::Dims final_dims;
    Mat<T> pooled;
  };

  Backbone() = default;

  /// Registers this network's parameters in `ps` under `prefix`.
  Backbone(const BackboneConfig& cfg, nn::ParameterSet<T>& ps, const std::string& prefix = "backbone.")
      : cfg_(cfg) {
    cfg_.validate();
    int cin = cfg.in_channels;
    for (int b = 0; b < 4; ++b) {
      const int cout = cfg.conv_channels[std::size_t(b)];
      const std::string tag = prefix + "block" + std::to_string(b + 1) + ".";
      conv_[b] = ps.add(tag + "conv.weight", Eigen::Index(cin) * 9, cout);
      gamma_[b] = ps.add(tag + "bn.weight", cout, 1);
      beta_[b] = ps.add(tag + "bn.bias", cout, 1);
      bn_[std::size_t(b)].running_mean = Vec<T>::Zero(cout);
      bn_[std::size_t(b)].running_var = Vec<T>::Ones(cout);
      cin = cout;
    }
    if (cfg.projected()) {
      proj_w_ = ps.add(prefix + "proj.weight", cin, cfg.embedding_dim);
      proj_b_ = ps.add(prefix + "proj.bias", cfg.embedding_dim, 1);
    }
  }

  void init(nn::ParameterSet<T>& ps, Rng& rng) {
    int cin = cfg_.in_channels;
    for (int b = 0; b < 4; ++b) {
      nn::fan_in_uniform<T>(ps.view(conv_[b]), Eigen::Index(cin) * 9, rng);
      ps.view(gamma_[b]).setOnes();
      ps.view(beta_[b]).setZero();
      bn_[std::size_t(b)].running_mean.setZero();
      bn_[std::size_t(b)].running_var.setOnes();
      cin = cfg_.conv_channels[std::size_t(b)];
    }
    if (cfg_.projected()) {
      nn::fan_in_uniform<T>(ps.view(proj_w_), cin, rng);
      ps.view(proj_b_).setZero();
    }
  }

  const BackboneConfig& config() const { return cfg_; }
  int embedding_dim() const { return cfg_.embedding_dim; }

  std::vector<nn::BatchNormState<T>>& bn_state() { return bn_; }
  const std::vector<nn::BatchNormState<T>>& bn_state() const { return bn_; }

  /// Embeds n inputs laid out as produced by records_to_input. In training
  /// mode batch statistics are used and running averages are updated.
  Mat<T> forward(const nn::ParameterSet<T>& ps, const Mat<T>& input, Eigen::Index n, Mode mode,
                 Cache* cache = nullptr) {
    nn::Dims d{n, cfg_.height, cfg_.width};
    if (input.rows() != d.positions() || input.cols() != cfg_.in_channels)
      throw ShapeError("backbone input is " + shape_str(input.rows(), input.cols()) + ", expected " +
                       shape_str(d.positions(), cfg_.in_channels));
    Mat<T> x = input;
    for (int b = 0; b < 4; ++b) {
      BlockCache local;
      BlockCache& bc = cache ? cache->blocks[std::size_t(b)] : local;
      bc.dims = d;
      bc.col = nn::im2col3x3(x, d);
      Mat<T> z = bc.col * ps.view(conv_[b]);
      if (!cache) bc.col.resize(0, 0);
      if (mode == Mode::kTrain)
        z = nn::batchnorm_train(z, ps.view(gamma_[b]), ps.view(beta_[b]), bn_[std::size_t(b)], bc.bn);
      else
        z = nn::batchnorm_eval(z, ps.view(gamma_[b]), ps.view(beta_[b]), bn_[std::size_t(b)]);
      z = z.cwiseMax(T(0));
      bc.pool = nn::plan_pool(d);
      x = nn::maxpool_forward(z, bc.pool, bc.argmax);
      if (cache) bc.activated = std::move(z);
      d = bc.pool.out;
    }
    Mat<T> pooled = nn::global_avg_pool(x, d);
    if (cache) cache->final_dims = d;
    if (!cfg_.projected()) {
      if (cache) cache->pooled = pooled;
      return pooled;
    }
    Mat<T> emb = pooled * ps.view(proj_w_);
    emb.rowwise() += ps.view(proj_b_).reshaped().transpose();
    if (cache) cache->pooled = std::move(pooled);
    return emb;
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(embeddings).
  void backward(const nn::ParameterSet<T>& ps, const Cache& cache, const Mat<T>& d_emb,
                Vec<T>& grad) const {
    Mat<T> d_pooled;
    if (cfg_.projected()) {
      ps.view(grad, proj_w_) += cache.pooled.transpose() * d_emb;
      ps.view(grad, proj_b_) += d_emb.colwise().sum().transpose();
      d_pooled = d_emb * ps.view(proj_w_).transpose();
    } else {
      d_pooled = d_emb;
    }
    Mat<T> dx = nn::global_avg_pool_backward(d_pooled, cache.final_dims);
    for (int b = 3; b >= 0; --b) {
      const BlockCache& bc = cache.blocks[std::size_t(b)];
      Mat<T> dz = nn::maxpool_backward(dx, bc.pool, bc.argmax);
      dz = (bc.activated.array() > T(0)).select(dz, T(0));
      dz = nn::batchnorm_backward(dz, bc.bn, ps.view(gamma_[b]), ps.view(grad, gamma_[b]),
                                  ps.view(grad, beta_[b]));
      ps.view(grad, conv_[b]).noalias() += bc.col.transpose() * dz;
      if (b > 0) {
        const Mat<T> dcol = dz * ps.view(conv_[b]).transpose();
        dx = nn::col2im3x3(dcol, bc.dims, ps.view(conv_[b]).rows() / 9);
      }
    }
  }

 private:
  BackboneConfig cfg_;
  std::array<std::size_t, 4> conv_{}, gamma_{}, beta_{};
  std::size_t proj_w_ = 0, proj_b_ = 0;
  std::vector<nn::BatchNormState<T>> bn_ = std::vector<nn::BatchNormState<T>>(4);
};

/// Inference-mode embedding of one record.
template <typename T>
Vec<T> embed(const CsiRecord& rec, Backbone<T>& net, const nn::ParameterSet<T>& ps) {
  const CsiRecord* one[] = {&rec};
  const Mat<T> in = records_to_input<T>(one, net.config());
  return net.forward(ps, in, 1, Mode::kInference).row(0).transpose();
}

/// Inference-mode embeddings, one row per record, computed in chunks.
template <typename T>
Mat<T> embed_batch(std::span<const CsiRecord* const> records, Backbone<T>& net,
                   const nn::ParameterSet<T>& ps, std::size_t chunk = 64) {
  Mat<T> out(Eigen::Index(records.size()), net.embedding_dim());
  for (std::size_t start = 0; start < records.size(); start += chunk) {
    const auto part = records.subspan(start, std::min(chunk, records.size() - start));
    const Mat<T> in = records_to_input<T>(part, net.config());
    out.middleRows(Eigen::Index(start), Eigen::Index(part.size())) =
        net.forward(ps, in, Eigen::Index(part.size()), Mode::kInference);
  }
  return out;
}

}  // namespace profinet
