#include <gtest/gtest.h>

#include <random>

#include "pdac/error.hpp"
#include "pdac/nn/kernels.hpp"

using namespace pdac::nn;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape5 s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(d(rng));
  return t;
}

template <typename T>
std::vector<T> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

struct ConvCase {
  std::size_t n, ci, co;
  Dim3 in;
  ConvGeometry g;
};

std::vector<ConvCase> conv_cases() {
  return {
      {2, 3, 4, {6, 6, 6}, {{3, 3, 3}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}}},
      {2, 2, 5, {8, 8, 8}, {{3, 3, 3}, {2, 2, 2}, {1, 1, 1}, {1, 1, 1}}},
      {1, 2, 3, {5, 6, 7}, {{2, 2, 2}, {1, 1, 1}, {0, 0, 0}, {1, 1, 1}}},
      {3, 4, 2, {4, 4, 4}, {{1, 1, 1}, {1, 1, 1}, {0, 0, 0}, {0, 0, 0}}},
      {1, 1, 2, {1, 6, 6}, {{1, 3, 3}, {1, 1, 1}, {0, 1, 1}, {0, 1, 1}}},
  };
}

}  // namespace

TEST(ConvGeometry, OutputExtent) {
  ConvGeometry g{{3, 3, 3}, {2, 2, 2}, {1, 1, 1}, {1, 1, 1}};
  EXPECT_EQ(g.output_extent({32, 32, 32}), (Dim3{16, 16, 16}));
  ConvGeometry same_even{{2, 2, 2}, {1, 1, 1}, {0, 0, 0}, {1, 1, 1}};
  EXPECT_EQ(same_even.output_extent({8, 8, 8}), (Dim3{8, 8, 8}));
  ConvGeometry big{{5, 5, 5}, {1, 1, 1}, {0, 0, 0}, {0, 0, 0}};
  EXPECT_THROW(big.output_extent({3, 3, 3}), pdac::Error);
}

TEST(Kernels, ConvForwardParallelMatchesReference) {
  for (const auto& c : conv_cases()) {
    const auto x = random_tensor<double>({c.n, c.ci, c.in}, 1);
    const auto w = random_vec<double>(c.co * c.ci * c.g.kernel.volume(), 2);
    const auto b = random_vec<double>(c.co, 3);
    const Shape5 ys{c.n, c.co, c.g.output_extent(c.in)};
    Tensor<double> y_ref(ys), y_par(ys);
    ref::conv3d_forward<double>(x, w, b, c.g, y_ref);
    par::conv3d_forward<double>(x, w, b, c.g, y_par);
    EXPECT_LT(max_abs_diff<double>(y_ref.values(), y_par.values()), 1e-12);
  }
}

TEST(Kernels, ConvBackwardParallelMatchesReference) {
  for (const auto& c : conv_cases()) {
    const auto x = random_tensor<double>({c.n, c.ci, c.in}, 4);
    const auto w = random_vec<double>(c.co * c.ci * c.g.kernel.volume(), 5);
    const auto dy = random_tensor<double>({c.n, c.co, c.g.output_extent(c.in)}, 6);
    Tensor<double> dx_ref(x.shape()), dx_par(x.shape());
    ref::conv3d_backward_data<double>(dy, w, c.g, dx_ref);
    par::conv3d_backward_data<double>(dy, w, c.g, dx_par);
    EXPECT_LT(max_abs_diff<double>(dx_ref.values(), dx_par.values()), 1e-12);

    std::vector<double> dw_ref(w.size(), 0.5), dw_par(w.size(), 0.5), db_ref(c.co, 0.0), db_par(c.co, 0.0);
    ref::conv3d_backward_weight<double>(x, dy, c.g, dw_ref, db_ref);
    par::conv3d_backward_weight<double>(x, dy, c.g, dw_par, db_par);
    EXPECT_LT(max_abs_diff<double>(dw_ref, dw_par), 1e-11);
    EXPECT_LT(max_abs_diff<double>(db_ref, db_par), 1e-12);
  }
}

TEST(Kernels, ConvBackwardDataIsAdjointOfForward) {
  for (const auto& c : conv_cases()) {
    const auto x = random_tensor<double>({c.n, c.ci, c.in}, 7);
    const auto w = random_vec<double>(c.co * c.ci * c.g.kernel.volume(), 8);
    const auto u = random_tensor<double>({c.n, c.co, c.g.output_extent(c.in)}, 9);
    Tensor<double> y(u.shape()), v(x.shape());
    par::conv3d_forward<double>(x, w, {}, c.g, y);
    par::conv3d_backward_data<double>(u, w, c.g, v);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * u[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * v[i];
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Kernels, ConvFloatMatchesDouble) {
  const auto& c = conv_cases()[1];
  const auto xd = random_tensor<double>({c.n, c.ci, c.in}, 10);
  const auto wd = random_vec<double>(c.co * c.ci * c.g.kernel.volume(), 11);
  const auto xf = xd.cast<float>();
  std::vector<float> wf(wd.begin(), wd.end());
  const Shape5 ys{c.n, c.co, c.g.output_extent(c.in)};
  Tensor<double> yd(ys);
  Tensor<float> yf(ys);
  par::conv3d_forward<double>(xd, wd, {}, c.g, yd);
  par::conv3d_forward<float>(xf, wf, {}, c.g, yf);
  for (std::size_t i = 0; i < yd.size(); ++i) EXPECT_NEAR(yd[i], yf[i], 1e-4);
}

TEST(Kernels, MaxPoolParallelMatchesReference) {
  const auto x = random_tensor<float>({2, 3, {4, 6, 8}}, 12);
  Tensor<float> y_ref, y_par;
  std::vector<std::size_t> a_ref, a_par;
  ref::maxpool3d_forward<float>(x, {2, 2, 2}, y_ref, a_ref);
  par::maxpool3d_forward<float>(x, {2, 2, 2}, y_par, a_par);
  EXPECT_EQ(y_ref.shape(), (Shape5{2, 3, {2, 3, 4}}));
  EXPECT_EQ(a_ref, a_par);
  EXPECT_EQ(max_abs_diff<float>(y_ref.values(), y_par.values()), 0.0);

  const auto dy = random_tensor<float>(y_ref.shape(), 13);
  Tensor<float> dx_ref(x.shape()), dx_par(x.shape());
  ref::maxpool3d_backward<float>(dy, a_ref, dx_ref);
  par::maxpool3d_backward<float>(dy, a_par, dx_par);
  EXPECT_EQ(max_abs_diff<float>(dx_ref.values(), dx_par.values()), 0.0);
}

TEST(Kernels, MaxPoolTiesPickFirstElement) {
  Tensor<float> x({1, 1, {2, 2, 2}}, 1.0f);
  Tensor<float> y;
  std::vector<std::size_t> a;
  par::maxpool3d_forward<float>(x, {2, 2, 2}, y, a);
  EXPECT_EQ(a[0], 0u);
}

TEST(Kernels, BatchNormParallelMatchesReference) {
  const auto x = random_tensor<double>({3, 4, {3, 3, 3}}, 14);
  const auto gamma = random_vec<double>(4, 15);
  const auto beta = random_vec<double>(4, 16);
  Tensor<double> y_ref, y_par;
  BatchNormCache<double> c_ref, c_par;
  ref::batchnorm_forward_train<double>(x, gamma, beta, 1e-5, y_ref, c_ref);
  par::batchnorm_forward_train<double>(x, gamma, beta, 1e-5, y_par, c_par);
  EXPECT_LT(max_abs_diff<double>(y_ref.values(), y_par.values()), 1e-12);

  const auto dy = random_tensor<double>(x.shape(), 17);
  Tensor<double> dx_ref, dx_par;
  std::vector<double> dg_ref(4, 0), dg_par(4, 0), db_ref(4, 0), db_par(4, 0);
  ref::batchnorm_backward_train<double>(dy, gamma, c_ref, dx_ref, dg_ref, db_ref);
  par::batchnorm_backward_train<double>(dy, gamma, c_par, dx_par, dg_par, db_par);
  EXPECT_LT(max_abs_diff<double>(dx_ref.values(), dx_par.values()), 1e-12);
  EXPECT_LT(max_abs_diff<double>(dg_ref, dg_par), 1e-12);
  EXPECT_LT(max_abs_diff<double>(db_ref, db_par), 1e-12);
}

TEST(Kernels, BatchNormNormalizesPerChannel) {
  const auto x = random_tensor<double>({4, 2, {2, 2, 2}}, 18);
  std::vector<double> gamma(2, 1.0), beta(2, 0.0);
  Tensor<double> y;
  BatchNormCache<double> cache;
  par::batchnorm_forward_train<double>(x, gamma, beta, 0.0, y, cache);
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 8; ++i) {
        const double v = y[(n * 2 + c) * 8 + i];
        sum += v;
        sq += v * v;
      }
    EXPECT_NEAR(sum / 32, 0.0, 1e-12);
    EXPECT_NEAR(sq / 32, 1.0, 1e-9);
  }
}
