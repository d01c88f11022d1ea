#pragma once

// Dense layer primitives with explicit backward passes.
//
// Feature maps are stored as (N*H*W) x C column-major matrices: each channel
// is one contiguous column, and row p = (n * H + y) * W + x.

#include "profinet/rng.hpp"
#include "profinet/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace profinet::nn {

using Index = Eigen::Index;

/// Flat parameter vector with named matrix-shaped slices.
template <typename T>
class ParameterSet {
 public:
  struct Spec {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    Index offset = 0;
  };

  std::size_t add(std::string name, Index rows, Index cols) {
    if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    specs_.push_back({std::move(name), rows, cols, values_.size()});
    const Index old = values_.size();
    values_.conservativeResize(old + rows * cols);
    values_.tail(rows * cols).setZero();
    return specs_.size() - 1;
  }

  Eigen::Map<Mat<T>> view(std::size_t id) { return view(values_, id); }
  Eigen::Map<const Mat<T>> view(std::size_t id) const { return view(values_, id); }

  /// Slice of any vector laid out like this set (e.g. a gradient).
  Eigen::Map<Mat<T>> view(Vec<T>& storage, std::size_t id) const {
    const auto& s = specs_.at(id);
    return {storage.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Mat<T>> view(const Vec<T>& storage, std::size_t id) const {
    const auto& s = specs_.at(id);
    return {storage.data() + s.offset, s.rows, s.cols};
  }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < specs_.size(); ++i)
      if (specs_[i].name == name) return i;
    return std::nullopt;
  }

  Vec<T>& values() { return values_; }
  const Vec<T>& values() const { return values_; }
  const std::vector<Spec>& specs() const { return specs_; }
  Index size() const { return values_.size(); }
  Vec<T> zeros() const { return Vec<T>::Zero(values_.size()); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& s : specs_) out.add(s.name, s.rows, s.cols);
    out.values() = values_.template cast<U>();
    return out;
  }

 private:
  std::vector<Spec> specs_;
  Vec<T> values_;
};

/// He-style uniform init, bound sqrt(6 / fan_in).
template <typename T, typename M>
void fan_in_uniform(M&& m, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = T(dist(rng));
}

struct Dims {
  Index n = 0, h = 0, w = 0;
  Index positions() const { return n * h * w; }
  bool operator==(const Dims&) const = default;
};

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero padding 1, no bias. Weights are
// (cin * 9) x cout with row index ci * 9 + ky * 3 + kx.

template <typename T>
Mat<T> im2col3x3(const Mat<T>& in, const Dims& d) {
  const Index cin = in.cols();
  Mat<T> col(d.positions(), cin * 9);
  for (Index ci = 0; ci < cin; ++ci) {
    const T* src = in.col(ci).data();
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col.col(ci * 9 + ky * 3 + kx).data();
        const Index dy = ky - 1, dx = kx - 1;
        const Index x0 = std::max<Index>(0, -dx), x1 = std::min(d.w, d.w - dx);
        for (Index n = 0; n < d.n; ++n)
          for (Index y = 0; y < d.h; ++y) {
            const Index sy = y + dy;
            T* out = dst + (n * d.h + y) * d.w;
            if (sy < 0 || sy >= d.h) {
              std::fill(out, out + d.w, T(0));
              continue;
            }
            const T* row = src + (n * d.h + sy) * d.w + dx;
            for (Index x = 0; x < x0; ++x) out[x] = T(0);
            for (Index x = x0; x < x1; ++x) out[x] = row[x];
            for (Index x = x1; x < d.w; ++x) out[x] = T(0);
          }
      }
  }
  return col;
}

template <typename T>
Mat<T> col2im3x3(const Mat<T>& col, const Dims& d, Index cin) {
  Mat<T> in = Mat<T>::Zero(d.positions(), cin);
  for (Index ci = 0; ci < cin; ++ci) {
    T* dst = in.col(ci).data();
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col.col(ci * 9 + ky * 3 + kx).data();
        const Index dy = ky - 1, dx = kx - 1;
        const Index x0 = std::max<Index>(0, -dx), x1 = std::min(d.w, d.w - dx);
        for (Index n = 0; n < d.n; ++n)
          for (Index y = 0; y < d.h; ++y) {
            const Index sy = y + dy;
            if (sy < 0 || sy >= d.h) continue;
            const Index row = (n * d.h + y) * d.w;
            const Index srow = (n * d.h + sy) * d.w + dx;
            for (Index x = x0; x < x1; ++x) dst[srow + x] += src[row + x];
          }
      }
  }
  return in;
}

// ---------------------------------------------------------------------------
// Batch normalization over all rows of each channel column.

template <typename T>
struct BatchNormCache {
  Mat<T> xhat;
  Vec<T> inv_std;
};

template <typename T>
struct BatchNormState {
  Vec<T> running_mean;
  Vec<T> running_var;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T, typename G, typename B>
Mat<T> batchnorm_train(const Mat<T>& x, const G& gamma, const B& beta, BatchNormState<T>& state,
                       BatchNormCache<T>& cache) {
  const Index m = x.rows(), c = x.cols();
  cache.xhat.resize(m, c);
  cache.inv_std.resize(c);
  Mat<T> y(m, c);
  const T mom = T(kBatchNormMomentum);
  const T unbias = m > 1 ? T(m) / T(m - 1) : T(1);
  for (Index ch = 0; ch < c; ++ch) {
    const auto xc = x.col(ch);
    const T mean = xc.mean();
    auto xh = cache.xhat.col(ch);
    xh = xc.array() - mean;
    const T var = xh.squaredNorm() / T(m);
    const T inv = T(1) / std::sqrt(var + T(kBatchNormEps));
    xh *= inv;
    cache.inv_std(ch) = inv;
    y.col(ch) = (xh.array() * gamma(ch) + beta(ch)).matrix();
    state.running_mean(ch) = (T(1) - mom) * state.running_mean(ch) + mom * mean;
    state.running_var(ch) = (T(1) - mom) * state.running_var(ch) + mom * unbias * var;
  }
  return y;
}

template <typename T, typename G, typename B>
Mat<T> batchnorm_eval(const Mat<T>& x, const G& gamma, const B& beta,
                      const BatchNormState<T>& state) {
  Mat<T> y(x.rows(), x.cols());
  for (Index ch = 0; ch < x.cols(); ++ch) {
    const T scale = gamma(ch) / std::sqrt(state.running_var(ch) + T(kBatchNormEps));
    const T shift = beta(ch) - scale * state.running_mean(ch);
    y.col(ch) = (x.col(ch).array() * scale + shift).matrix();
  }
  return y;
}

template <typename T, typename G, typename DG, typename DB>
Mat<T> batchnorm_backward(const Mat<T>& dy, const BatchNormCache<T>& cache, const G& gamma,
                          DG&& dgamma, DB&& dbeta) {
  const Index m = dy.rows();
  Mat<T> dx(m, dy.cols());
  for (Index ch = 0; ch < dy.cols(); ++ch) {
    const auto g = dy.col(ch);
    const auto xh = cache.xhat.col(ch);
    const T sum_dy = g.sum();
    const T sum_dy_xhat = g.dot(xh);
    dbeta(ch) += sum_dy;
    dgamma(ch) += sum_dy_xhat;
    const T scale = gamma(ch) * cache.inv_std(ch) / T(m);
    dx.col(ch) = ((g.array() * T(m) - sum_dy - xh.array() * sum_dy_xhat) * scale).matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling; an axis of extent 1 is left alone, odd extents floor.

struct PoolPlan {
  Dims in, out;
  Index ph = 1, pw = 1;
};

inline PoolPlan plan_pool(const Dims& d) {
  PoolPlan p;
  p.in = d;
  p.ph = d.h >= 2 ? 2 : 1;
  p.pw = d.w >= 2 ? 2 : 1;
  p.out = {d.n, d.h / p.ph, d.w / p.pw};
  return p;
}

template <typename T>
Mat<T> maxpool_forward(const Mat<T>& in, const PoolPlan& p, std::vector<Index>& argmax) {
  const Index c = in.cols();
  Mat<T> out(p.out.positions(), c);
  argmax.resize(std::size_t(out.size()));
  for (Index ch = 0; ch < c; ++ch) {
    const T* src = in.col(ch).data();
    for (Index n = 0; n < p.out.n; ++n)
      for (Index y = 0; y < p.out.h; ++y)
        for (Index x = 0; x < p.out.w; ++x) {
          Index best = (n * p.in.h + y * p.ph) * p.in.w + x * p.pw;
          for (Index ky = 0; ky < p.ph; ++ky)
            for (Index kx = 0; kx < p.pw; ++kx) {
              const Index idx = (n * p.in.h + y * p.ph + ky) * p.in.w + x * p.pw + kx;
              if (src[idx] > src[best]) best = idx;
            }
          const Index o = (n * p.out.h + y) * p.out.w + x;
          out(o, ch) = src[best];
          argmax[std::size_t(ch * out.rows() + o)] = best;
        }
  }
  return out;
}

template <typename T>
Mat<T> maxpool_backward(const Mat<T>& dout, const PoolPlan& p, const std::vector<Index>& argmax) {
  Mat<T> din = Mat<T>::Zero(p.in.positions(), dout.cols());
  for (Index ch = 0; ch < dout.cols(); ++ch)
    for (Index o = 0; o < dout.rows(); ++o)
      din(argmax[std::size_t(ch * dout.rows() + o)], ch) += dout(o, ch);
  return din;
}

// ---------------------------------------------------------------------------
// Global average pooling: (N*H*W) x C -> N x C.

template <typename T>
Mat<T> global_avg_pool(const Mat<T>& in, const Dims& d) {
  const Index hw = d.h * d.w;
  Mat<T> out(d.n, in.cols());
  for (Index n = 0; n < d.n; ++n) out.row(n) = in.middleRows(n * hw, hw).colwise().mean();
  return out;
}

template <typename T>
Mat<T> global_avg_pool_backward(const Mat<T>& dout, const Dims& d) {
  const Index hw = d.h * d.w;
  Mat<T> din(d.positions(), dout.cols());
  for (Index n = 0; n < d.n; ++n)
    din.middleRows(n * hw, hw) = (dout.row(n) / T(hw)).replicate(hw, 1);
  return din;
}

// ---------------------------------------------------------------------------
// 1-D convolution along rows, kernel 3, zero padding 1, with bias.
// Input L x Cin, weights (cin * 3) x cout with row index ci * 3 + k.

template <typename T>
Mat<T> im2col1d(const Mat<T>& in) {
  const Index l = in.rows(), cin = in.cols();
  Mat<T> col = Mat<T>::Zero(l, cin * 3);
  for (Index ci = 0; ci < cin; ++ci) {
    if (l > 1) col.col(ci * 3 + 0).tail(l - 1) = in.col(ci).head(l - 1);
    col.col(ci * 3 + 1) = in.col(ci);
    if (l > 1) col.col(ci * 3 + 2).head(l - 1) = in.col(ci).tail(l - 1);
  }
  return col;
}

template <typename T>
Mat<T> col2im1d(const Mat<T>& col, Index cin) {
  const Index l = col.rows();
  Mat<T> in = Mat<T>::Zero(l, cin);
  for (Index ci = 0; ci < cin; ++ci) {
    if (l > 1) in.col(ci).head(l - 1) += col.col(ci * 3 + 0).tail(l - 1);
    in.col(ci) += col.col(ci * 3 + 1);
    if (l > 1) in.col(ci).tail(l - 1) += col.col(ci * 3 + 2).head(l - 1);
  }
  return in;
}

}  // namespace profinet::nn
