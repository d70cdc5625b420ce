// Serial reference kernels: straightforward loop nests, no blocking and no
// threading. They are the oracle for the parallel kernels in kernels_par.cpp.

#include <cmath>

#include "pdac/error.hpp"
#include "pdac/nn/kernels.hpp"

namespace pdac::nn::ref {
namespace {

void check_conv_shapes(const Shape5& x, std::size_t w_count, const ConvGeometry& g, const Shape5& y) {
  const auto out = g.output_extent(x.s);
  if (y.n != x.n || y.s != out || w_count != y.c * x.c * g.kernel.volume()) {
    throw Error(ErrorKind::ShapeMismatch, "conv3d: input " + to_string(x) + " output " + to_string(y));
  }
}

// Input coordinate for output coordinate o and kernel tap k; negative or
// >= extent means the tap lands in padding.
inline long tap(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad_lo) {
  return static_cast<long>(o * stride + k) - static_cast<long>(pad_lo);
}

}  // namespace

template <typename T>
void conv3d_forward(const Tensor<T>& x, std::span<const T> w, std::span<const T> b, const ConvGeometry& g,
                    Tensor<T>& y) {
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  check_conv_shapes(xs, w.size(), g, ys);
  const auto& k = g.kernel;
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ys.c; ++co)
      for (std::size_t od = 0; od < ys.s.d; ++od)
        for (std::size_t oh = 0; oh < ys.s.h; ++oh)
          for (std::size_t ow = 0; ow < ys.s.w; ++ow) {
            T acc = b.empty() ? T(0) : b[co];
            for (std::size_t ci = 0; ci < xs.c; ++ci)
              for (std::size_t kd = 0; kd < k.d; ++kd) {
                const long id = tap(od, kd, g.stride.d, g.pad_lo.d);
                if (id < 0 || id >= static_cast<long>(xs.s.d)) continue;
                for (std::size_t kh = 0; kh < k.h; ++kh) {
                  const long ih = tap(oh, kh, g.stride.h, g.pad_lo.h);
                  if (ih < 0 || ih >= static_cast<long>(xs.s.h)) continue;
                  for (std::size_t kw = 0; kw < k.w; ++kw) {
                    const long iw = tap(ow, kw, g.stride.w, g.pad_lo.w);
                    if (iw < 0 || iw >= static_cast<long>(xs.s.w)) continue;
                    const std::size_t xi =
                        (((n * xs.c + ci) * xs.s.d + id) * xs.s.h + ih) * xs.s.w + static_cast<std::size_t>(iw);
                    const std::size_t wi = (((co * xs.c + ci) * k.d + kd) * k.h + kh) * k.w + kw;
                    acc += w[wi] * x[xi];
                  }
                }
              }
            y[(((n * ys.c + co) * ys.s.d + od) * ys.s.h + oh) * ys.s.w + ow] = acc;
          }
}

template <typename T>
void conv3d_backward_data(const Tensor<T>& dy, std::span<const T> w, const ConvGeometry& g, Tensor<T>& dx) {
  const auto& xs = dx.shape();
  const auto& ys = dy.shape();
  check_conv_shapes(xs, w.size(), g, ys);
  const auto& k = g.kernel;
  dx.fill(T(0));
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ys.c; ++co)
      for (std::size_t od = 0; od < ys.s.d; ++od)
        for (std::size_t oh = 0; oh < ys.s.h; ++oh)
          for (std::size_t ow = 0; ow < ys.s.w; ++ow) {
            const T gy = dy[(((n * ys.c + co) * ys.s.d + od) * ys.s.h + oh) * ys.s.w + ow];
            for (std::size_t ci = 0; ci < xs.c; ++ci)
              for (std::size_t kd = 0; kd < k.d; ++kd) {
                const long id = tap(od, kd, g.stride.d, g.pad_lo.d);
                if (id < 0 || id >= static_cast<long>(xs.s.d)) continue;
                for (std::size_t kh = 0; kh < k.h; ++kh) {
                  const long ih = tap(oh, kh, g.stride.h, g.pad_lo.h);
                  if (ih < 0 || ih >= static_cast<long>(xs.s.h)) continue;
                  for (std::size_t kw = 0; kw < k.w; ++kw) {
                    const long iw = tap(ow, kw, g.stride.w, g.pad_lo.w);
                    if (iw < 0 || iw >= static_cast<long>(xs.s.w)) continue;
                    const std::size_t xi =
                        (((n * xs.c + ci) * xs.s.d + id) * xs.s.h + ih) * xs.s.w + static_cast<std::size_t>(iw);
                    const std::size_t wi = (((co * xs.c + ci) * k.d + kd) * k.h + kh) * k.w + kw;
                    dx[xi] += w[wi] * gy;
                  }
                }
              }
          }
}

template <typename T>
void conv3d_backward_weight(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g, std::span<T> dw,
                            std::span<T> db) {
  const auto& xs = x.shape();
  const auto& ys = dy.shape();
  const auto& k = g.kernel;
  if (!dw.empty()) check_conv_shapes(xs, dw.size(), g, ys);
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ys.c; ++co)
      for (std::size_t od = 0; od < ys.s.d; ++od)
        for (std::size_t oh = 0; oh < ys.s.h; ++oh)
          for (std::size_t ow = 0; ow < ys.s.w; ++ow) {
            const T gy = dy[(((n * ys.c + co) * ys.s.d + od) * ys.s.h + oh) * ys.s.w + ow];
            if (!db.empty()) db[co] += gy;
            if (dw.empty()) continue;
            for (std::size_t ci = 0; ci < xs.c; ++ci)
              for (std::size_t kd = 0; kd < k.d; ++kd) {
                const long id = tap(od, kd, g.stride.d, g.pad_lo.d);
                if (id < 0 || id >= static_cast<long>(xs.s.d)) continue;
                for (std::size_t kh = 0; kh < k.h; ++kh) {
                  const long ih = tap(oh, kh, g.stride.h, g.pad_lo.h);
                  if (ih < 0 || ih >= static_cast<long>(xs.s.h)) continue;
                  for (std::size_t kw = 0; kw < k.w; ++kw) {
                    const long iw = tap(ow, kw, g.stride.w, g.pad_lo.w);
                    if (iw < 0 || iw >= static_cast<long>(xs.s.w)) continue;
                    const std::size_t xi =
                        (((n * xs.c + ci) * xs.s.d + id) * xs.s.h + ih) * xs.s.w + static_cast<std::size_t>(iw);
                    dw[(((co * xs.c + ci) * k.d + kd) * k.h + kh) * k.w + kw] += gy * x[xi];
                  }
                }
              }
          }
}

template <typename T>
void maxpool3d_forward(const Tensor<T>& x, const Dim3& win, Tensor<T>& y, std::vector<std::size_t>& argmax) {
  const auto& xs = x.shape();
  const Dim3 out{xs.s.d / win.d, xs.s.h / win.h, xs.s.w / win.w};
  if (out.volume() == 0) throw Error(ErrorKind::ShapeMismatch, "maxpool window larger than input");
  y = Tensor<T>(Shape5{xs.n, xs.c, out});
  argmax.assign(y.size(), 0);
  std::size_t oi = 0;
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t c = 0; c < xs.c; ++c)
      for (std::size_t od = 0; od < out.d; ++od)
        for (std::size_t oh = 0; oh < out.h; ++oh)
          for (std::size_t ow = 0; ow < out.w; ++ow, ++oi) {
            T best = T(0);
            std::size_t best_i = 0;
            bool first = true;
            for (std::size_t kd = 0; kd < win.d; ++kd)
              for (std::size_t kh = 0; kh < win.h; ++kh)
                for (std::size_t kw = 0; kw < win.w; ++kw) {
                  const std::size_t xi =
                      (((n * xs.c + c) * xs.s.d + od * win.d + kd) * xs.s.h + oh * win.h + kh) * xs.s.w +
                      ow * win.w + kw;
                  if (first || x[xi] > best) {
                    best = x[xi];
                    best_i = xi;
                    first = false;
                  }
                }
            y[oi] = best;
            argmax[oi] = best_i;
          }
}

template <typename T>
void maxpool3d_backward(const Tensor<T>& dy, const std::vector<std::size_t>& argmax, Tensor<T>& dx) {
  dx.fill(T(0));
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
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
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < sp; ++i) sum += x[(n * s.c + c) * sp + i];
    const double mean = sum / m;
    double var = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < sp; ++i) {
        const double d = x[(n * s.c + c) * sp + i] - mean;
        var += d * d;
      }
    var /= m;
    const double invstd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    cache.mean[c] = static_cast<T>(mean);
    cache.invstd[c] = static_cast<T>(invstd);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < sp; ++i) {
        const std::size_t j = (n * s.c + c) * sp + i;
        const T xh = static_cast<T>((x[j] - mean) * invstd);
        cache.xhat[j] = xh;
        y[j] = gamma[c] * xh + beta[c];
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
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < sp; ++i) {
        const std::size_t j = (n * s.c + c) * sp + i;
        sum_dy += dy[j];
        sum_dy_xhat += static_cast<double>(dy[j]) * cache.xhat[j];
      }
    dgamma[c] += static_cast<T>(sum_dy_xhat);
    dbeta[c] += static_cast<T>(sum_dy);
    const double k = static_cast<double>(gamma[c]) * cache.invstd[c] / m;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t i = 0; i < sp; ++i) {
        const std::size_t j = (n * s.c + c) * sp + i;
        dx[j] = static_cast<T>(k * (m * dy[j] - sum_dy - cache.xhat[j] * sum_dy_xhat));
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

}  // namespace pdac::nn::ref
