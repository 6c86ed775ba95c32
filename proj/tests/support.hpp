#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "saae/nn.hpp"
#include "saae/window.hpp"

namespace saae::test {

inline SignalWindow random_window(std::mt19937_64& rng, int t, int ch, int subject = 1, int label = 1) {
  std::normal_distribution<double> g(0.0, 1.0);
  SignalWindow w{Eigen::MatrixXd(t, ch), subject, label};
  for (Eigen::Index i = 0; i < w.data.size(); ++i) w.data.data()[i] = g(rng);
  return w;
}

// |X[k]| by the direct O(N^2) summation, k = 0..N-1.
inline std::vector<double> dft_magnitudes(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      acc += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * j % n) / static_cast<double>(n));
    out[k] = std::abs(acc);
  }
  return out;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

struct GradCheck {
  int checked = 0;
  int failed = 0;
  double worst = 0.0;
};

// Central differences of `loss` against the analytic gradient stored in
// analytic (same shape as p.value) on `count` random coordinates.
inline GradCheck check_param(nn::Param& p, const nn::Matrix& analytic, const std::function<double()>& loss,
                             int count, std::mt19937_64& rng, double step = 1e-5, double tol = 1e-4) {
  GradCheck out;
  std::uniform_int_distribution<Eigen::Index> pick(0, p.value.size() - 1);
  for (int n = 0; n < count; ++n) {
    const Eigen::Index i = pick(rng);
    double& v = p.value.data()[i];
    const double saved = v;
    v = saved + step;
    const double up = loss();
    v = saved - step;
    const double down = loss();
    v = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic.data()[i], numeric);
    out.worst = std::max(out.worst, err);
    ++out.checked;
    if (err > tol) ++out.failed;
  }
  return out;
}

}  // namespace saae::test
