#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "fiberspec/error.hpp"
#include "fiberspec/spectra.hpp"

namespace fiberspec {

namespace {

using MatrixLd = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorLd = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

void validate_window(std::size_t window, std::size_t polyorder, std::size_t deriv) {
  if (window % 2 == 0) fail(ErrorCode::InvalidWindow, "window " + std::to_string(window) + " is even");
  if (polyorder >= window) {
    fail(ErrorCode::InvalidWindow, "polyorder " + std::to_string(polyorder) +
                                       " must be below window " + std::to_string(window));
  }
  if (deriv > polyorder) {
    fail(ErrorCode::InvalidWindow, "deriv " + std::to_string(deriv) + " exceeds polyorder " +
                                       std::to_string(polyorder));
  }
}

}  // namespace

std::vector<double> savgol_weights(std::size_t window, std::size_t polyorder, std::size_t deriv,
                                   double position) {
  validate_window(window, polyorder, deriv);
  const long double half = static_cast<long double>(window / 2);
  // Positions are scaled into [-1, 1] to keep the Vandermonde system well conditioned.
  const long double scale = half > 0 ? half : 1.0L;
  const auto cols = static_cast<Eigen::Index>(polyorder + 1);
  MatrixLd vander(static_cast<Eigen::Index>(window), cols);
  for (std::size_t i = 0; i < window; ++i) {
    const long double t = (static_cast<long double>(i) - half) / scale;
    long double p = 1.0L;
    for (Eigen::Index j = 0; j < cols; ++j) {
      vander(static_cast<Eigen::Index>(i), j) = p;
      p *= t;
    }
  }

  // d^deriv/dt^deriv of t^j at the evaluation point, in scaled units.
  const long double at = static_cast<long double>(position) / scale;
  VectorLd basis = VectorLd::Zero(cols);
  for (Eigen::Index j = static_cast<Eigen::Index>(deriv); j < cols; ++j) {
    long double falling = 1.0L;
    for (std::size_t k = 0; k < deriv; ++k) falling *= static_cast<long double>(j - static_cast<Eigen::Index>(k));
    basis(j) = falling * std::pow(at, static_cast<long double>(j - static_cast<Eigen::Index>(deriv)));
  }

  const MatrixLd gram = vander.transpose() * vander;
  const VectorLd z = gram.colPivHouseholderQr().solve(basis);
  const VectorLd w = vander * z / std::pow(scale, static_cast<long double>(deriv));
  std::vector<double> out(window);
  for (std::size_t i = 0; i < window; ++i) out[i] = static_cast<double>(w(static_cast<Eigen::Index>(i)));
  return out;
}

std::vector<double> savgol_coefficients(std::size_t window, std::size_t polyorder, std::size_t deriv) {
  return savgol_weights(window, polyorder, deriv, 0.0);
}

std::vector<double> savgol_filter(std::span<const double> x, std::size_t window, std::size_t polyorder,
                                  std::size_t deriv) {
  validate_window(window, polyorder, deriv);
  if (x.size() < window) {
    fail(ErrorCode::TooShort, "spectrum length " + std::to_string(x.size()) + " below window " +
                                  std::to_string(window));
  }
  const std::size_t half = window / 2;
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);

  const auto center = savgol_coefficients(window, polyorder, deriv);
  for (std::size_t i = half; i + half < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < window; ++k) acc += center[k] * x[i - half + k];
    out[i] = acc;
  }
  for (std::size_t e = 0; e < half; ++e) {
    const double offset = static_cast<double>(half - e);
    const auto left = savgol_weights(window, polyorder, deriv, -offset);
    const auto right = savgol_weights(window, polyorder, deriv, offset);
    double acc_l = 0.0;
    double acc_r = 0.0;
    for (std::size_t k = 0; k < window; ++k) {
      acc_l += left[k] * x[k];
      acc_r += right[k] * x[n - window + k];
    }
    out[e] = acc_l;
    out[n - 1 - e] = acc_r;
  }
  return out;
}

Spectrum savgol_apply(const Spectrum& x, const PipelineConfig& cfg) {
  if (static_cast<int>(x.stage) >= static_cast<int>(Stage::derivative)) {
    fail(ErrorCode::StageOrder, "savgol_apply: spectrum already at derivative stage");
  }
  return {savgol_filter(x.values, cfg.sg_window, cfg.sg_polyorder, cfg.sg_deriv), Stage::derivative};
}

}  // namespace fiberspec
