#include "pdac/nn/network.hpp"

#include <Eigen/Core>
#include <cmath>

#include "pdac/error.hpp"

namespace pdac::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

ConvGeometry geometry_of(const LayerSpec& l) { return {l.kernel, l.stride, l.pad_lo, l.pad_hi}; }

Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

template <typename T>
void accumulate(Tensor<T>& dst, Tensor<T>&& src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

/// Copies channels [c0, c0 + cn) of every sample of `src`.
template <typename T>
Tensor<T> channel_slice(const Tensor<T>& src, std::size_t c0, std::size_t cn) {
  const auto& s = src.shape();
  const std::size_t sp = s.s.volume();
  Tensor<T> out(Shape5{s.n, cn, s.s});
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* from = src.sample(n).data() + c0 * sp;
    std::copy(from, from + cn * sp, out.sample(n).data());
  }
  return out;
}

}  // namespace

template <typename T>
Network<T>::Network(ModelGraph graph) : graph_(std::move(graph)) {
  shapes_ = graph_.infer_shapes();
  layers_.resize(graph_.layers.size());
  initialize();
}

template <typename T>
void Network<T>::initialize() {
  std::mt19937_64 rng(graph_.init_seed);
  auto fill_normal = [&](std::vector<T>& v, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : v) x = static_cast<T>(dist(rng));
  };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = graph_.layers[i];
    const auto in = graph_.input_shape_of(i, shapes_);
    auto& st = layers_[i];
    std::size_t fan_in = 0;
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::ConvTranspose:
        st.w.resize(l.channels * in.c * l.kernel.volume());
        st.b.assign(l.channels, T(0));
        fan_in = in.c * l.kernel.volume();
        break;
      case LayerKind::Dense:
        st.w.resize(l.channels * in.count());
        st.b.assign(l.channels, T(0));
        fan_in = in.count();
        break;
      case LayerKind::BatchNorm:
        st.w.assign(in.c, T(1));
        st.b.assign(in.c, T(0));
        st.running_mean.assign(in.c, T(0));
        st.running_var.assign(in.c, T(1));
        break;
      default:
        break;
    }
    if (fan_in > 0) {
      const double stddev =
          graph_.init == InitScheme::HeNormal ? std::sqrt(2.0 / static_cast<double>(fan_in)) : 0.02;
      fill_normal(st.w, stddev);
    }
    st.dw.assign(st.w.size(), T(0));
    st.db.assign(st.b.size(), T(0));
  }
}

template <typename T>
std::size_t Network<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& st : layers_) n += st.w.size() + st.b.size();
  return n;
}

template <typename T>
std::vector<ParamView<T>> Network<T>::parameters() {
  std::vector<ParamView<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& st = layers_[i];
    if (st.w.empty()) continue;
    const std::string base = std::to_string(i) + "." + std::string(to_string(graph_.layers[i].kind));
    const bool bn = graph_.layers[i].kind == LayerKind::BatchNorm;
    out.push_back({base + (bn ? ".gamma" : ".weight"), st.w, st.dw});
    out.push_back({base + (bn ? ".beta" : ".bias"), st.b, st.db});
  }
  return out;
}

template <typename T>
std::vector<std::span<T>> Network<T>::buffers() {
  std::vector<std::span<T>> out;
  for (auto& st : layers_) {
    if (st.running_mean.empty()) continue;
    out.emplace_back(st.running_mean);
    out.emplace_back(st.running_var);
  }
  return out;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& st : layers_) {
    std::fill(st.dw.begin(), st.dw.end(), T(0));
    std::fill(st.db.begin(), st.db.end(), T(0));
  }
}

template <typename T>
Tensor<T> Network<T>::gather_input(std::size_t i, const Tensor<T>& x) const {
  const Tensor<T>& prev = i == 0 ? x : layers_[i - 1].out;
  const int skip = graph_.layers[i].skip_from;
  if (skip < 0) return prev;
  const Tensor<T>& other = layers_[static_cast<std::size_t>(skip)].out;
  const auto& ps = prev.shape();
  const auto& os = other.shape();
  Tensor<T> out(Shape5{ps.n, ps.c + os.c, ps.s});
  for (std::size_t n = 0; n < ps.n; ++n) {
    auto dst = out.sample(n);
    std::copy(prev.sample(n).begin(), prev.sample(n).end(), dst.begin());
    std::copy(other.sample(n).begin(), other.sample(n).end(), dst.begin() + static_cast<long>(ps.per_sample()));
  }
  return out;
}

template <typename T>
const Tensor<T>& Network<T>::forward(const Tensor<T>& x, Mode mode, std::size_t stop) {
  const auto& s = x.shape();
  if (s.n == 0 || s.c != graph_.input.c || s.s != graph_.input.s) {
    throw Error(ErrorKind::ShapeMismatch, graph_.name + ": expected input " + to_string(graph_.input) +
                                              ", got " + to_string(s));
  }
  computed_ = std::min(stop, layers_.size());
  for (std::size_t i = 0; i < computed_; ++i) {
    layers_[i].in = gather_input(i, x);
    run_layer(i, mode);
  }
  if (computed_ == 0) {
    passthrough_ = x;
    return passthrough_;
  }
  return layers_[computed_ - 1].out;
}

template <typename T>
void Network<T>::run_layer(std::size_t i, Mode mode) {
  const auto& l = graph_.layers[i];
  auto& st = layers_[i];
  const Tensor<T>& in = st.in;
  const std::size_t n = in.shape().n;
  const Shape5 out_shape{n, shapes_[i].c, shapes_[i].s};
  st.mode = mode;
  switch (l.kind) {
    case LayerKind::Conv:
      st.out = Tensor<T>(out_shape);
      par::conv3d_forward<T>(in, st.w, st.b, geometry_of(l), st.out);
      break;
    case LayerKind::ConvTranspose: {
      st.out = Tensor<T>(out_shape);
      par::conv3d_backward_data<T>(in, st.w, geometry_of(l), st.out);
      const std::size_t sp = out_shape.s.volume();
      for (std::size_t k = 0; k < n; ++k) {
        T* p = st.out.sample(k).data();
        for (std::size_t c = 0; c < out_shape.c; ++c)
          for (std::size_t j = 0; j < sp; ++j) p[c * sp + j] += st.b[c];
      }
      break;
    }
    case LayerKind::MaxPool:
      par::maxpool3d_forward<T>(in, l.kernel, st.out, st.argmax);
      break;
    case LayerKind::BatchNorm: {
      const auto& s = in.shape();
      if (mode == Mode::Train) {
        par::batchnorm_forward_train<T>(in, st.w, st.b, static_cast<T>(kBatchNormEps), st.out, st.bn);
        const double m = static_cast<double>(s.n * s.s.volume());
        for (std::size_t c = 0; c < s.c; ++c) {
          const double inv = st.bn.invstd[c];
          const double var = std::max(0.0, 1.0 / (inv * inv) - kBatchNormEps);
          const double unbiased = m > 1 ? var * m / (m - 1) : var;
          st.running_mean[c] = static_cast<T>((1 - kBatchNormMomentum) * st.running_mean[c] +
                                              kBatchNormMomentum * st.bn.mean[c]);
          st.running_var[c] =
              static_cast<T>((1 - kBatchNormMomentum) * st.running_var[c] + kBatchNormMomentum * unbiased);
        }
      } else {
        st.out = Tensor<T>(s);
        const std::size_t sp = s.s.volume();
        for (std::size_t k = 0; k < s.n; ++k)
          for (std::size_t c = 0; c < s.c; ++c) {
            const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(st.running_var[c]) + kBatchNormEps));
            const T scale = st.w[c] * inv;
            const T shift = st.b[c] - st.running_mean[c] * scale;
            const T* src = in.sample(k).data() + c * sp;
            T* dst = st.out.sample(k).data() + c * sp;
            for (std::size_t j = 0; j < sp; ++j) dst[j] = src[j] * scale + shift;
          }
      }
      break;
    }
    case LayerKind::ReLU:
      st.out = Tensor<T>(in.shape());
      for (std::size_t j = 0; j < in.size(); ++j) st.out[j] = in[j] > T(0) ? in[j] : T(0);
      break;
    case LayerKind::Sigmoid:
      st.out = Tensor<T>(in.shape());
      for (std::size_t j = 0; j < in.size(); ++j) st.out[j] = T(1) / (T(1) + std::exp(-in[j]));
      break;
    case LayerKind::Flatten:
      st.out = in;
      st.out.reshape(out_shape);
      break;
    case LayerKind::Dense: {
      const std::size_t fin = in.shape().per_sample();
      st.out = Tensor<T>(out_shape);
      const MapConstMat<T> X(in.data(), ix(n), ix(fin));
      const MapConstMat<T> W(st.w.data(), ix(l.channels), ix(fin));
      MapMat<T> Y(st.out.data(), ix(n), ix(l.channels));
      Y.noalias() = X * W.transpose();
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t u = 0; u < l.channels; ++u) Y(ix(k), ix(u)) += st.b[u];
      break;
    }
    case LayerKind::Dropout:
      st.out = in;
      st.drop_mask.clear();
      if (mode == Mode::Train && l.rate > 0.0) {
        std::bernoulli_distribution keep(1.0 - l.rate);
        const T scale = static_cast<T>(1.0 / (1.0 - l.rate));
        st.drop_mask.resize(in.size());
        for (std::size_t j = 0; j < in.size(); ++j) {
          st.drop_mask[j] = keep(dropout_rng_) ? scale : T(0);
          st.out[j] *= st.drop_mask[j];
        }
      }
      break;
    case LayerKind::GlobalAvgPool: {
      st.out = Tensor<T>(out_shape);
      const std::size_t sp = in.shape().s.volume();
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t c = 0; c < out_shape.c; ++c) {
          const T* src = in.sample(k).data() + c * sp;
          double acc = 0.0;
          for (std::size_t j = 0; j < sp; ++j) acc += src[j];
          st.out.sample(k)[c] = static_cast<T>(acc / static_cast<double>(sp));
        }
      break;
    }
  }
}

template <typename T>
Tensor<T> Network<T>::layer_backward(std::size_t i, const Tensor<T>& dy) {
  const auto& l = graph_.layers[i];
  auto& st = layers_[i];
  const Tensor<T>& in = st.in;
  const auto& is = in.shape();
  const std::size_t n = is.n;
  Tensor<T> dx(is);
  switch (l.kind) {
    case LayerKind::Conv:
      if (!frozen_) par::conv3d_backward_weight<T>(in, dy, geometry_of(l), st.dw, st.db);
      par::conv3d_backward_data<T>(dy, st.w, geometry_of(l), dx);
      break;
    case LayerKind::ConvTranspose:
      if (!frozen_) {
        par::conv3d_backward_weight<T>(dy, in, geometry_of(l), st.dw, {});
        const std::size_t sp = dy.shape().s.volume();
        for (std::size_t c = 0; c < l.channels; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < n; ++k) {
            const T* p = dy.sample(k).data() + c * sp;
            for (std::size_t j = 0; j < sp; ++j) acc += p[j];
          }
          st.db[c] += static_cast<T>(acc);
        }
      }
      par::conv3d_forward<T>(dy, st.w, {}, geometry_of(l), dx);
      break;
    case LayerKind::MaxPool:
      par::maxpool3d_backward<T>(dy, st.argmax, dx);
      break;
    case LayerKind::BatchNorm: {
      if (st.mode == Mode::Train) {
        std::vector<T> scratch_g, scratch_b;
        std::span<T> dg = st.dw, dbt = st.db;
        if (frozen_) {
          scratch_g.assign(is.c, T(0));
          scratch_b.assign(is.c, T(0));
          dg = scratch_g;
          dbt = scratch_b;
        }
        par::batchnorm_backward_train<T>(dy, st.w, st.bn, dx, dg, dbt);
        break;
      }
      const std::size_t sp = is.s.volume();
      for (std::size_t c = 0; c < is.c; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(st.running_var[c]) + kBatchNormEps);
        double dg = 0.0, dbt = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const T* g = dy.sample(k).data() + c * sp;
          const T* x = in.sample(k).data() + c * sp;
          T* d = dx.sample(k).data() + c * sp;
          for (std::size_t j = 0; j < sp; ++j) {
            d[j] = static_cast<T>(g[j] * st.w[c] * inv);
            dg += g[j] * (x[j] - st.running_mean[c]) * inv;
            dbt += g[j];
          }
        }
        if (!frozen_) {
          st.dw[c] += static_cast<T>(dg);
          st.db[c] += static_cast<T>(dbt);
        }
      }
      break;
    }
    case LayerKind::ReLU:
      for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = in[j] > T(0) ? dy[j] : T(0);
      break;
    case LayerKind::Sigmoid:
      for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = dy[j] * st.out[j] * (T(1) - st.out[j]);
      break;
    case LayerKind::Flatten:
      std::copy(dy.values().begin(), dy.values().end(), dx.values().begin());
      break;
    case LayerKind::Dense: {
      const std::size_t fin = is.per_sample();
      const MapConstMat<T> X(in.data(), ix(n), ix(fin));
      const MapConstMat<T> W(st.w.data(), ix(l.channels), ix(fin));
      const MapConstMat<T> DY(dy.data(), ix(n), ix(l.channels));
      MapMat<T>(dx.data(), ix(n), ix(fin)).noalias() = DY * W;
      if (!frozen_) {
        MapMat<T>(st.dw.data(), ix(l.channels), ix(fin)).noalias() += DY.transpose() * X;
        for (std::size_t u = 0; u < l.channels; ++u) {
          double acc = 0.0;
          for (std::size_t k = 0; k < n; ++k) acc += DY(ix(k), ix(u));
          st.db[u] += static_cast<T>(acc);
        }
      }
      break;
    }
    case LayerKind::Dropout:
      for (std::size_t j = 0; j < dx.size(); ++j) dx[j] = st.drop_mask.empty() ? dy[j] : dy[j] * st.drop_mask[j];
      break;
    case LayerKind::GlobalAvgPool: {
      const std::size_t sp = is.s.volume();
      const T scale = static_cast<T>(1.0 / static_cast<double>(sp));
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t c = 0; c < is.c; ++c) {
          T* d = dx.sample(k).data() + c * sp;
          std::fill(d, d + sp, dy.sample(k)[c] * scale);
        }
      break;
    }
  }
  return dx;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& dy) {
  return backward(dy, {});
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& dy, std::span<const std::pair<std::size_t, Tensor<T>>> taps) {
  if (computed_ == 0) return dy;
  if (dy.shape() != layers_[computed_ - 1].out.shape()) {
    throw Error(ErrorKind::ShapeMismatch, graph_.name + ": gradient shape " + to_string(dy.shape()) +
                                              " does not match output " +
                                              to_string(layers_[computed_ - 1].out.shape()));
  }
  std::vector<Tensor<T>> dout(computed_);
  dout[computed_ - 1] = dy;
  for (const auto& [layer, g] : taps) {
    if (layer >= computed_ || g.shape() != layers_[layer].out.shape()) {
      throw Error(ErrorKind::ShapeMismatch, graph_.name + ": gradient tap at layer " + std::to_string(layer) +
                                                " does not match a computed activation");
    }
    accumulate(dout[layer], Tensor<T>(g));
  }
  Tensor<T> dx;
  for (std::size_t i = computed_; i-- > 0;) {
    Tensor<T> din = layer_backward(i, dout[i]);
    dout[i] = Tensor<T>();
    const int skip = graph_.layers[i].skip_from;
    Tensor<T>& prev_grad = i == 0 ? dx : dout[i - 1];
    if (skip < 0) {
      accumulate(prev_grad, std::move(din));
      continue;
    }
    const std::size_t prev_c = i == 0 ? graph_.input.c : shapes_[i - 1].c;
    const std::size_t total_c = din.shape().c;
    accumulate(prev_grad, channel_slice(din, 0, prev_c));
    accumulate(dout[static_cast<std::size_t>(skip)], channel_slice(din, prev_c, total_c - prev_c));
  }
  return dx;
}

template <typename T>
void Adam<T>::step(Network<T>& net) {
  auto params = net.parameters();
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "optimizer bound to another network");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p.value[j] = static_cast<T>(p.value[j] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

template class Network<float>;
template class Network<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace pdac::nn
