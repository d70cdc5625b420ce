// Parallel kernels: convolutions lower to im2col + GEMM (Eigen), samples or
// channels are spread over OpenMP threads. Every reduction runs in a fixed
// order so results do not depend on the thread count.

#include <Eigen/Core>
#include <cmath>

#include "pdac/error.hpp"
#include "pdac/nn/kernels.hpp"

namespace pdac::nn::par {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

void check_conv_shapes(const Shape5& x, std::size_t w_count, const ConvGeometry& g, const Shape5& y) {
  const auto out = g.output_extent(x.s);
  if (y.n != x.n || y.s != out || w_count != y.c * x.c * g.kernel.volume()) {
    throw Error(ErrorKind::ShapeMismatch, "conv3d: input " + to_string(x) + " output " + to_string(y));
  }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == Dim3{1, 1, 1} && g.stride == Dim3{1, 1, 1} && g.pad_lo == Dim3{0, 0, 0} &&
         g.pad_hi == Dim3{0, 0, 0};
}

/// Unfolds one sample into a (C*kvol) x P column matrix.
template <typename T>
void im2col(const T* x, std::size_t channels, const Dim3& in, const Dim3& out, const ConvGeometry& g, T* col,
            bool parallel) {
  const auto& k = g.kernel;
  const std::size_t plane = out.volume();
  const long rows = static_cast<long>(channels * k.volume());
#pragma omp parallel for schedule(static) if (parallel)
  for (long r = 0; r < rows; ++r) {
    const std::size_t row = static_cast<std::size_t>(r);
    const std::size_t kw = row % k.w;
    const std::size_t kh = (row / k.w) % k.h;
    const std::size_t kd = (row / (k.w * k.h)) % k.d;
    const std::size_t c = row / k.volume();
    const T* xc = x + c * in.volume();
    T* dst = col + row * plane;
    for (std::size_t od = 0; od < out.d; ++od) {
      const long id = static_cast<long>(od * g.stride.d + kd) - static_cast<long>(g.pad_lo.d);
      for (std::size_t oh = 0; oh < out.h; ++oh) {
        const long ih = static_cast<long>(oh * g.stride.h + kh) - static_cast<long>(g.pad_lo.h);
        T* d = dst + (od * out.h + oh) * out.w;
        if (id < 0 || id >= static_cast<long>(in.d) || ih < 0 || ih >= static_cast<long>(in.h)) {
          std::fill(d, d + out.w, T(0));
          continue;
        }
        const T* src = xc + (static_cast<std::size_t>(id) * in.h + static_cast<std::size_t>(ih)) * in.w;
        for (std::size_t ow = 0; ow < out.w; ++ow) {
          const long iw = static_cast<long>(ow * g.stride.w + kw) - static_cast<long>(g.pad_lo.w);
          d[ow] = (iw < 0 || iw >= static_cast<long>(in.w)) ? T(0) : src[iw];
        }
      }
    }
  }
}

/// Scatter-adds a column matrix back into one (zeroed) sample. Rows of the
/// same channel touch the same voxels, so threads split by channel.
template <typename T>
void col2im(const T* col, std::size_t channels, const Dim3& in, const Dim3& out, const ConvGeometry& g, T* x,
            bool parallel) {
  const auto& k = g.kernel;
  const std::size_t plane = out.volume();
#pragma omp parallel for schedule(static) if (parallel)
  for (long cl = 0; cl < static_cast<long>(channels); ++cl) {
    const std::size_t c = static_cast<std::size_t>(cl);
    T* xc = x + c * in.volume();
    for (std::size_t kd = 0; kd < k.d; ++kd)
      for (std::size_t kh = 0; kh < k.h; ++kh)
        for (std::size_t kw = 0; kw < k.w; ++kw) {
          const std::size_t row = ((c * k.d + kd) * k.h + kh) * k.w + kw;
          const T* src = col + row * plane;
          for (std::size_t od = 0; od < out.d; ++od) {
            const long id = static_cast<long>(od * g.stride.d + kd) - static_cast<long>(g.pad_lo.d);
            if (id < 0 || id >= static_cast<long>(in.d)) continue;
            for (std::size_t oh = 0; oh < out.h; ++oh) {
              const long ih = static_cast<long>(oh * g.stride.h + kh) - static_cast<long>(g.pad_lo.h);
              if (ih < 0 || ih >= static_cast<long>(in.h)) continue;
              T* dst = xc + (static_cast<std::size_t>(id) * in.h + static_cast<std::size_t>(ih)) * in.w;
              const T* s = src + (od * out.h + oh) * out.w;
              for (std::size_t ow = 0; ow < out.w; ++ow) {
                const long iw = static_cast<long>(ow * g.stride.w + kw) - static_cast<long>(g.pad_lo.w);
                if (iw >= 0 && iw < static_cast<long>(in.w)) dst[iw] += s[ow];
              }
            }
          }
        }
  }
}

}  // namespace

template <typename T>
void conv3d_forward(const Tensor<T>& x, std::span<const T> w, std::span<const T> b, const ConvGeometry& g,
                    Tensor<T>& y) {
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  check_conv_shapes(xs, w.size(), g, ys);
  const std::size_t K = xs.c * g.kernel.volume();
  const std::size_t P = ys.s.volume();
  const bool pointwise = is_pointwise(g);
  const MapConstMat<T> W(w.data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(K));

#pragma omp parallel
  {
    std::vector<T> col(pointwise ? 0 : K * P);
#pragma omp for schedule(static)
    for (long nl = 0; nl < static_cast<long>(xs.n); ++nl) {
      const auto n = static_cast<std::size_t>(nl);
      const T* src = x.sample(n).data();
      if (!pointwise) {
        im2col(src, xs.c, xs.s, ys.s, g, col.data(), false);
        src = col.data();
      }
      const MapConstMat<T> C(src, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
      MapMat<T> Y(y.sample(n).data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(P));
      Y.noalias() = W * C;
      if (!b.empty()) {
        for (std::size_t co = 0; co < ys.c; ++co) Y.row(static_cast<Eigen::Index>(co)).array() += b[co];
      }
    }
  }
}

template <typename T>
void conv3d_backward_data(const Tensor<T>& dy, std::span<const T> w, const ConvGeometry& g, Tensor<T>& dx) {
  const auto& xs = dx.shape();
  const auto& ys = dy.shape();
  check_conv_shapes(xs, w.size(), g, ys);
  const std::size_t K = xs.c * g.kernel.volume();
  const std::size_t P = ys.s.volume();
  const bool pointwise = is_pointwise(g);
  const MapConstMat<T> W(w.data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(K));

#pragma omp parallel
  {
    std::vector<T> col(K * P);
#pragma omp for schedule(static)
    for (long nl = 0; nl < static_cast<long>(xs.n); ++nl) {
      const auto n = static_cast<std::size_t>(nl);
      const MapConstMat<T> DY(dy.sample(n).data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(P));
      T* dst = dx.sample(n).data();
      if (pointwise) {
        MapMat<T>(dst, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P)).noalias() = W.transpose() * DY;
        continue;
      }
      MapMat<T> C(col.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
      C.noalias() = W.transpose() * DY;
      std::fill(dst, dst + xs.per_sample(), T(0));
      col2im(col.data(), xs.c, xs.s, ys.s, g, dst, false);
    }
  }
}

template <typename T>
void conv3d_backward_weight(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g, std::span<T> dw,
                            std::span<T> db) {
  const auto& xs = x.shape();
  const auto& ys = dy.shape();
  if (!dw.empty()) check_conv_shapes(xs, dw.size(), g, ys);
  const std::size_t K = xs.c * g.kernel.volume();
  const std::size_t P = ys.s.volume();

  if (!db.empty()) {
#pragma omp parallel for schedule(static)
    for (long co = 0; co < static_cast<long>(ys.c); ++co) {
      double acc = 0.0;
      for (std::size_t n = 0; n < ys.n; ++n) {
        const T* p = dy.sample(n).data() + static_cast<std::size_t>(co) * P;
        for (std::size_t i = 0; i < P; ++i) acc += p[i];
      }
      db[static_cast<std::size_t>(co)] += static_cast<T>(acc);
    }
  }
  if (dw.empty()) return;

  MapMat<T> DW(dw.data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(K));
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : K * P);
  // Samples accumulate serially in index order; the unfold and the GEMM are
  // the parallel parts.
  for (std::size_t n = 0; n < xs.n; ++n) {
    const T* src = x.sample(n).data();
    if (!pointwise) {
      im2col(src, xs.c, xs.s, ys.s, g, col.data(), true);
      src = col.data();
    }
    const MapConstMat<T> C(src, static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(P));
    const MapConstMat<T> DY(dy.sample(n).data(), static_cast<Eigen::Index>(ys.c), static_cast<Eigen::Index>(P));
    DW.noalias() += DY * C.transpose();
  }
}

template <typename T>
void maxpool3d_forward(const Tensor<T>& x, const Dim3& win, Tensor<T>& y, std::vector<std::size_t>& argmax) {
  const auto& xs = x.shape();
  const Dim3 out{xs.s.d / win.d, xs.s.h / win.h, xs.s.w / win.w};
  if (out.volume() == 0) throw Error(ErrorKind::ShapeMismatch, "maxpool window larger than input");
  y = Tensor<T>(Shape5{xs.n, xs.c, out});
  argmax.assign(y.size(), 0);
  const std::size_t planes = xs.n * xs.c;
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < static_cast<long>(planes); ++pl) {
    const auto p = static_cast<std::size_t>(pl);
    const std::size_t in_base = p * xs.s.volume();
    std::size_t oi = p * out.volume();
    for (std::size_t od = 0; od < out.d; ++od)
      for (std::size_t oh = 0; oh < out.h; ++oh)
        for (std::size_t ow = 0; ow < out.w; ++ow, ++oi) {
          std::size_t best_i = in_base + ((od * win.d) * xs.s.h + oh * win.h) * xs.s.w + ow * win.w;
          T best = x[best_i];
          for (std::size_t kd = 0; kd < win.d; ++kd)
            for (std::size_t kh = 0; kh < win.h; ++kh) {
              const std::size_t row = in_base + ((od * win.d + kd) * xs.s.h + oh * win.h + kh) * xs.s.w + ow * win.w;
              for (std::size_t kw = 0; kw < win.w; ++kw) {
                if (x[row + kw] > best) {
                  best = x[row + kw];
                  best_i = row + kw;
                }
              }
            }
          y[oi] = best;
          argmax[oi] = best_i;
        }
  }
}

template <typename T>
void maxpool3d_backward(const Tensor<T>& dy, const std::vector<std::size_t>& argmax, Tensor<T>& dx) {
  dx.fill(T(0));
  // Windows do not overlap, so every input element has at most one writer.
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(dy.size()); ++i) {
    dx[argmax[static_cast<std::size_t>(i)]] += dy[static_cast<std::size_t>(i)];
  }
}

template <typename T>
void batchnorm_forward_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta, T eps,
                             Tensor<T>& y, BatchNormCache<T>& cache) {
  const auto& s = x.shape();
  const std::size_t sp = s.s.volume();
  const double m = static_cast<double>(s.n * sp);
  y = Tensor<T>(s);
  cache.mean.assign(s.c, T(0));
  cache.invstd.assign(s.c, T(0));
  cache.xhat.assign(x.size(), T(0));
#pragma omp parallel for schedule(static)
  for (long cl = 0; cl < static_cast<long>(s.c); ++cl) {
    const auto c = static_cast<std::size_t>(cl);
    double sum = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.data() + (n * s.c + c) * sp;
      for (std::size_t i = 0; i < sp; ++i) sum += p[i];
    }
    const double mean = sum / m;
    double var = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = x.data() + (n * s.c + c) * sp;
      for (std::size_t i = 0; i < sp; ++i) {
        const double d = p[i] - mean;
        var += d * d;
      }
    }
    var /= m;
    const double invstd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    cache.mean[c] = static_cast<T>(mean);
    cache.invstd[c] = static_cast<T>(invstd);
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * sp;
      for (std::size_t i = 0; i < sp; ++i) {
        const T xh = static_cast<T>((x[base + i] - mean) * invstd);
        cache.xhat[base + i] = xh;
        y[base + i] = gamma[c] * xh + beta[c];
      }
    }
  }
}

template <typename T>
void batchnorm_backward_train(const Tensor<T>& dy, std::span<const T> gamma, const BatchNormCache<T>& cache,
                              Tensor<T>& dx, std::span<T> dgamma, std::span<T> dbeta) {
  const auto& s = dy.shape();
  const std::size_t sp = s.s.volume();
  const double m = static_cast<double>(s.n * sp);
  dx = Tensor<T>(s);
#pragma omp parallel for schedule(static)
  for (long cl = 0; cl < static_cast<long>(s.c); ++cl) {
    const auto c = static_cast<std::size_t>(cl);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * sp;
      for (std::size_t i = 0; i < sp; ++i) {
        sum_dy += dy[base + i];
        sum_dy_xhat += static_cast<double>(dy[base + i]) * cache.xhat[base + i];
      }
    }
    dgamma[c] += static_cast<T>(sum_dy_xhat);
    dbeta[c] += static_cast<T>(sum_dy);
    const double k = static_cast<double>(gamma[c]) * cache.invstd[c] / m;
    for (std::size_t n = 0; n < s.n; ++n) {
      const std::size_t base = (n * s.c + c) * sp;
      for (std::size_t i = 0; i < sp; ++i) {
        dx[base + i] = static_cast<T>(k * (m * dy[base + i] - sum_dy - cache.xhat[base + i] * sum_dy_xhat));
      }
    }
  }
}

#define PDAC_INSTANTIATE(T)                                                                                   \
  template void conv3d_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>,                  \
                                  const ConvGeometry&, Tensor<T>&);                                           \
  template void conv3d_backward_data<T>(const Tensor<T>&, std::span<const T>, const ConvGeometry&, Tensor<T>&); \
  template void conv3d_backward_weight<T>(const Tensor<T>&, const Tensor<T>&, const ConvGeometry&,          \
                                          std::span<T>, std::span<T>);                                        \
  template void maxpool3d_forward<T>(const Tensor<T>&, const Dim3&, Tensor<T>&, std::vector<std::size_t>&);  \
  template void maxpool3d_backward<T>(const Tensor<T>&, const std::vector<std::size_t>&, Tensor<T>&);        \
  template void batchnorm_forward_train<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, T,      \
                                           Tensor<T>&, BatchNormCache<T>&);                                   \
  template void batchnorm_backward_train<T>(const Tensor<T>&, std::span<const T>, const BatchNormCache<T>&,  \
                                            Tensor<T>&, std::span<T>, std::span<T>);

PDAC_INSTANTIATE(float)
PDAC_INSTANTIATE(double)

}  // namespace pdac::nn::par
