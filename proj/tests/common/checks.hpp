#pragma once

// Checks shared by unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pdac/gaunet.hpp"
#include "pdac/nn/network.hpp"

namespace pdac::checks {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t kinks_skipped = 0;
};

// Scale floor keeps structurally-zero gradients (bias feeding batch norm)
// from turning roundoff into relative error.
inline double relative_error(double a, double b, double floor = 1e-6) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

/// Discriminator loss -(mean log D(real) + mean log(1 - D(fake))) in double,
/// train-mode batch norm, with optional parameter gradients.
inline double disc_loss(nn::Network<double>& d, const nn::Tensor<double>& real, const nn::Tensor<double>& fake,
                        bool with_grad) {
  double loss = 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    const auto& p = d.forward(pass == 0 ? real : fake, nn::Mode::Train);
    nn::Tensor<double> dp(p.shape());
    const double n = static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (pass == 0) {
        loss -= std::log(p[i]) / n;
        dp[i] = -1.0 / (p[i] * n);
      } else {
        loss -= std::log(1.0 - p[i]) / n;
        dp[i] = 1.0 / ((1.0 - p[i]) * n);
      }
    }
    if (with_grad) d.backward(dp);
  }
  return loss;
}

/// Central differences of the discriminator loss on `samples` seeded
/// parameters of a toy discriminator with edge `edge`. A parameter whose
/// one-sided slopes disagree sits on a LeakyReLU or max-pool switch point,
/// where no derivative exists; it is replaced by the next shuffled one.
inline GradCheckResult discriminator_gradient_check(std::size_t edge, std::size_t samples, std::uint64_t seed) {
  gaunet::DiscriminatorConfig cfg;
  cfg.in_edge = edge;
  cfg.block_channels = {2, 3, 4};
  nn::Network<double> d(gaunet::build_discriminator(cfg));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::Tensor<double> real(nn::Shape5{3, 1, nn::Dim3::cube(edge)}), fake(real.shape());
  for (auto& v : real.values()) v = u(rng);
  for (auto& v : fake.values()) v = u(rng);

  d.zero_grad();
  disc_loss(d, real, fake, true);
  auto params = d.parameters();
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t j = 0; j < params[k].value.size(); ++j) all.emplace_back(k, j);
  std::shuffle(all.begin(), all.end(), rng);

  GradCheckResult r;
  const double h = 1e-5;
  const double base = disc_loss(d, real, fake, false);
  for (auto [k, j] : all) {
    if (r.checked == samples) break;
    const double analytic = params[k].grad[j];
    const double saved = params[k].value[j];
    params[k].value[j] = saved + h;
    const double up = disc_loss(d, real, fake, false);
    params[k].value[j] = saved - h;
    const double dn = disc_loss(d, real, fake, false);
    params[k].value[j] = saved;
    const double right = (up - base) / h, left = (base - dn) / h;
    if (relative_error(right, left) > 1e-2) {
      ++r.kinks_skipped;
      continue;
    }
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, (up - dn) / (2 * h)));
    ++r.checked;
  }
  return r;
}

}  // namespace pdac::checks
