#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "fiberspec/spectra.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fiberspec;
using testing::code_of;

namespace {

HyperCube constant_cube(std::size_t lines, std::size_t samples, const std::vector<double>& s, Stage stage) {
  WavelengthGrid grid(990.0, 1700.0, s.size());
  HyperCube cube(lines, samples, grid, stage);
  for (std::size_t l = 0; l < lines; ++l)
    for (std::size_t p = 0; p < samples; ++p) std::copy(s.begin(), s.end(), cube.pixel(l, p).begin());
  return cube;
}

std::vector<double> ramp(std::size_t n, double a, double b) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = a * static_cast<double>(i) + b;
  return x;
}

}  // namespace

TEST_CASE("calibration identities") {
  const std::vector<double> dark{0.1, 0.2, 0.3, 0.05};
  const std::vector<double> white{1.1, 2.2, 0.9, 4.05};
  CalibrationReference d(Spectrum{dark, Stage::raw});
  CalibrationReference w(Spectrum{white, Stage::raw});

  auto at_dark = calibrate_reflectance(constant_cube(3, 2, dark, Stage::raw), d, w);
  auto at_white = calibrate_reflectance(constant_cube(3, 2, white, Stage::raw), d, w);
  std::vector<double> mid(4);
  for (std::size_t c = 0; c < 4; ++c) mid[c] = (dark[c] + white[c]) / 2.0;
  auto at_mid = calibrate_reflectance(constant_cube(3, 2, mid, Stage::raw), d, w);

  CHECK(at_dark.stage() == Stage::reflectance);
  for (double v : at_dark.data()) CHECK(v == 0.0);
  for (double v : at_white.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  for (double v : at_mid.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("calibration errors") {
  CalibrationReference d(Spectrum{{0.1, 0.2, 0.3}, Stage::raw});
  CalibrationReference flat(Spectrum{{0.1, 0.2, 0.3}, Stage::raw});
  CalibrationReference w4(Spectrum{{1, 1, 1, 1}, Stage::raw});
  auto cube = constant_cube(2, 2, {0.5, 0.5, 0.5}, Stage::raw);
  CHECK(code_of([&] { calibrate_reflectance(cube, d, flat); }) == ErrorCode::ZeroDenominator);
  CHECK(code_of([&] { calibrate_reflectance(cube, d, w4); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("per-column references") {
  WavelengthGrid grid(990.0, 1700.0, 3);
  HyperCube dark(1, 2, grid, {0, 0, 0, 1, 1, 1}, Stage::raw);
  HyperCube white(1, 2, grid, {2, 2, 2, 3, 3, 3}, Stage::raw);
  HyperCube raw(1, 2, grid, {1, 1, 1, 2, 2, 2}, Stage::raw);
  auto r = calibrate_reflectance(raw, CalibrationReference(dark), CalibrationReference(white));
  for (double v : r.data()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("calibration is affine-equivariant") {
  oracle::Gen gen(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 16;
    auto dark = gen.vector(n, 0.0, 0.1);
    auto white = gen.vector(n, 0.8, 1.2);
    CalibrationReference d(Spectrum{dark, Stage::raw});
    CalibrationReference w(Spectrum{white, Stage::raw});
    WavelengthGrid grid(990.0, 1700.0, n);
    HyperCube raw(2, 3, grid, Stage::raw);
    for (auto& v : raw.data()) v = gen.uniform(0.0, 1.2);
    const double g = gen.uniform(0.1, 3.0);
    HyperCube scaled = raw;
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t c = 0; c < n; ++c) scaled.at(l, s, c) = raw.at(l, s, c) * g + dark[c] * (1.0 - g);
    auto a = calibrate_reflectance(raw, d, w);
    auto b = calibrate_reflectance(scaled, d, w);
    for (std::size_t i = 0; i < a.data().size(); ++i) CHECK(b.data()[i] == doctest::Approx(g * a.data()[i]).epsilon(1e-9));
  }
}

TEST_CASE("snv examples") {
  auto y = snv(std::vector<double>{1, 2, 3});
  REQUIRE(y.size() == 3);
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(std::abs(y[1]) < 1e-15);
  CHECK(y[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(code_of([] { snv(std::vector<double>{5, 5, 5}); }) == ErrorCode::ZeroVariance);
  CHECK(code_of([] { snv(std::vector<double>{5}); }) == ErrorCode::TooShort);
  CHECK(code_of([] { snv(Spectrum{{1, 2, 3}, Stage::derivative}); }) == ErrorCode::StageOrder);
}

TEST_CASE("snv properties over random spectra") {
  oracle::Gen gen(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = gen.index(2, 400);
    auto x = gen.spectrum(n);
    const double a = gen.uniform(0.1, 10.0);
    const double b = gen.uniform(-5.0, 5.0);
    std::vector<double> ax(n);
    for (std::size_t i = 0; i < n; ++i) ax[i] = a * x[i] + b;
    auto y = snv(x);
    auto ya = snv(ax);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(y[i] - ya[i]) < 1e-9);
    REQUIRE(std::abs(oracle::mean(y)) < 1e-9);
    REQUIRE(std::abs(oracle::sample_sd(y) - 1.0) < 1e-9);
  }
}

TEST_CASE("mean_smooth examples") {
  const std::vector<double> s{0.1, 0.7, 0.3};
  auto tile = mean_smooth(constant_cube(5, 5, s, Stage::snv), 5);
  REQUIRE(tile.size() == 1);
  for (std::size_t c = 0; c < 3; ++c) CHECK(tile[0].spectrum.values[c] == doctest::Approx(s[c]).epsilon(1e-15));
  CHECK(tile[0].spectrum.stage == Stage::smoothed);

  CHECK(mean_smooth(constant_cube(10, 10, s, Stage::snv), 5).size() == 4);

  WavelengthGrid grid(990.0, 1700.0, 3);
  HyperCube mixed(2, 2, grid, {0, 0, 0, 2, 2, 2, 2, 2, 2, 0, 0, 0}, Stage::snv);
  auto m = mean_smooth(mixed, 2);
  REQUIRE(m.size() == 1);
  for (double v : m[0].spectrum.values) CHECK(v == 1.0);

  CHECK(code_of([&] { mean_smooth(constant_cube(4, 9, s, Stage::snv), 5); }) == ErrorCode::EmptyOutput);
}

TEST_CASE("mean_smooth count law and tile anchoring") {
  oracle::Gen gen(5);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t lines = gen.index(1, 17), samples = gen.index(1, 17), block = gen.index(1, 6);
    if (lines < block || samples < block) continue;
    WavelengthGrid grid(990.0, 1700.0, 3);
    HyperCube cube(lines, samples, grid, Stage::snv);
    for (auto& v : cube.data()) v = gen.uniform(-1.0, 1.0);
    auto out = mean_smooth(cube, block);
    REQUIRE(out.size() == (lines / block) * (samples / block));
    for (const auto& b : out) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t l = 0; l < block; ++l)
          for (std::size_t p = 0; p < block; ++p) acc += cube.at(b.block_line * block + l, b.block_sample * block + p, c);
        CHECK(b.spectrum.values[c] == doctest::Approx(acc / (block * block)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("savgol coefficient examples") {
  auto w = savgol_coefficients(5, 2, 1);
  const double expect5[] = {-0.2, -0.1, 0.0, 0.1, 0.2};
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(w[i] - expect5[i]) < 1e-12);
  auto w3 = savgol_coefficients(3, 1, 1);
  const double expect3[] = {-0.5, 0.0, 0.5};
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(w3[i] - expect3[i]) < 1e-12);
}

TEST_CASE("savgol weights match the least-squares oracle") {
  for (std::size_t window = 3; window <= 15; window += 2) {
    for (std::size_t order = 0; order < window && order <= 5; ++order) {
      for (std::size_t deriv = 0; deriv <= order; ++deriv) {
        const double half = static_cast<double>(window - 1) / 2.0;
        for (double pos = -half; pos <= half; pos += 1.0) {
          auto got = savgol_weights(window, order, deriv, pos);
          auto want = oracle::savgol_weights(window, order, deriv, pos);
          REQUIRE(got.size() == window);
          for (std::size_t k = 0; k < window; ++k) CHECK(std::abs(got[k] - want[k]) < 1e-9);
        }
        auto c = savgol_coefficients(window, order, deriv);
        const double sum = std::accumulate(c.begin(), c.end(), 0.0);
        CHECK(std::abs(sum - (deriv == 0 ? 1.0 : 0.0)) < 1e-12);
      }
    }
  }
}

TEST_CASE("savgol invalid windows") {
  CHECK(code_of([] { savgol_coefficients(4, 2, 1); }) == ErrorCode::InvalidWindow);
  CHECK(code_of([] { savgol_coefficients(5, 5, 1); }) == ErrorCode::InvalidWindow);
  CHECK(code_of([] { savgol_coefficients(5, 2, 3); }) == ErrorCode::InvalidWindow);
  CHECK(code_of([] { savgol_filter(std::vector<double>{1, 2, 3}, 5, 2, 1); }) == ErrorCode::TooShort);
}

TEST_CASE("savgol filter examples on 400 channels") {
  const std::size_t n = 400;
  auto zero = savgol_filter(std::vector<double>(n, 7.0), 5, 2, 1);
  for (double v : zero) CHECK(std::abs(v) < 1e-9);

  auto lin = savgol_filter(ramp(n, 3.0, 0.0), 5, 2, 1);
  REQUIRE(lin.size() == n);
  for (double v : lin) CHECK(std::abs(v - 3.0) < 1e-9);

  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = static_cast<double>(i * i);
  auto d = savgol_filter(sq, 5, 2, 1);
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(d[i] - 2.0 * static_cast<double>(i)) < 1e-9);
}

TEST_CASE("savgol exactness on random polynomials") {
  oracle::Gen gen(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t order = gen.index(0, 4);
    std::size_t window = 2 * gen.index(order / 2 + 1, 6) + 1;
    if (window <= order) window = order + (order % 2 == 0 ? 1 : 2);
    const std::size_t deriv = gen.index(0, order);
    const std::size_t n = gen.index(window, 60);
    std::vector<double> coef(order + 1);
    for (auto& c : coef) c = gen.uniform(-1.0, 1.0);
    // Centered abscissa keeps values small enough for a 1e-9 bound.
    const double center = static_cast<double>(n) / 2.0;
    std::vector<double> x(n), want(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = (static_cast<double>(i) - center) / 8.0;
      for (std::size_t p = 0; p <= order; ++p) x[i] += coef[p] * std::pow(t, static_cast<double>(p));
      for (std::size_t p = deriv; p <= order; ++p) {
        double falling = 1.0;
        for (std::size_t q = 0; q < deriv; ++q) falling *= static_cast<double>(p - q);
        want[i] += coef[p] * falling * std::pow(t, static_cast<double>(p - deriv)) / std::pow(8.0, static_cast<double>(deriv));
      }
    }
    auto got = savgol_filter(x, window, order, deriv);
    auto ref = oracle::savgol_filter(x, window, order, deriv);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(got[i] - want[i]) < 1e-9);
      CHECK(std::abs(got[i] - ref[i]) < 1e-9);
    }
  }
}

TEST_CASE("savgol filter matches the oracle on noisy spectra") {
  oracle::Gen gen(8);
  auto x = gen.spectrum(400);
  auto got = savgol_filter(x, 9, 2, 1);
  auto want = oracle::savgol_filter(x, 9, 2, 1);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("pipeline on a ramp cube") {
  const std::size_t n = 400;
  auto cube = constant_cube(3, 2, ramp(n, 1.0, 0.0), Stage::reflectance);
  PipelineConfig cfg;
  cfg.smooth_block = 1;
  cfg.sg_window = 5;
  auto res = pipeline_apply(cube, cfg);
  REQUIRE(res.blocks.size() == 6);
  const double slope = 1.0 / oracle::sample_sd(ramp(n, 1.0, 0.0));
  for (const auto& b : res.blocks) {
    REQUIRE(b.spectrum.size() == n);
    CHECK(b.spectrum.stage == Stage::derivative);
    for (double v : b.spectrum.values) CHECK(std::abs(v - slope) < 1e-9);
  }
}

TEST_CASE("near-identity pipeline") {
  oracle::Gen gen(3);
  auto s = gen.spectrum(400);
  auto cube = constant_cube(2, 2, s, Stage::reflectance);
  PipelineConfig cfg;
  cfg.apply_snv = false;
  cfg.smooth_block = 1;
  cfg.sg_window = 3;
  cfg.sg_polyorder = 2;
  cfg.sg_deriv = 0;
  auto res = pipeline_apply(cube, cfg);
  REQUIRE(res.blocks.size() == 4);
  for (const auto& b : res.blocks)
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(b.spectrum.values[i] == doctest::Approx(s[i]).epsilon(1e-12));
}

TEST_CASE("pipeline counts") {
  oracle::Gen gen(4);
  auto cube = constant_cube(10, 10, gen.spectrum(400), Stage::reflectance);
  auto res = pipeline_apply(cube, PipelineConfig{});
  CHECK(res.blocks.size() == 4);
  for (const auto& b : res.blocks) CHECK(b.spectrum.size() == 400);

  // A flat pixel poisons its tile only.
  auto holed = constant_cube(12, 11, gen.spectrum(400), Stage::reflectance);
  for (auto& v : holed.pixel(6, 1)) v = 0.0;
  auto r2 = pipeline_apply(holed, PipelineConfig{});
  CHECK(r2.zero_variance_pixels == 1);
  CHECK(r2.dropped_blocks == 1);
  CHECK(r2.blocks.size() == (12 / 5) * (11 / 5) - 1);

  CHECK(code_of([&] { pipeline_apply(constant_cube(5, 5, gen.spectrum(400), Stage::raw), PipelineConfig{}); }) ==
        ErrorCode::StageOrder);
}

TEST_CASE("dark filter boundary") {
  const double t = 0.05;
  CHECK(dark_sample_filter(Spectrum{std::vector<double>(400, 0.0), Stage::reflectance}, t).exclude);
  CHECK_FALSE(dark_sample_filter(Spectrum{std::vector<double>(400, 0.5), Stage::reflectance}, t).exclude);
  auto at = dark_sample_filter(Spectrum{std::vector<double>(400, t), Stage::reflectance}, t);
  CHECK_FALSE(at.exclude);
  CHECK(at.mean_reflectance == doctest::Approx(t));
  CHECK(dark_sample_filter(Spectrum{std::vector<double>(400, 0.0499), Stage::reflectance}, t).exclude);
}

TEST_CASE("pipeline reports dark tiles") {
  WavelengthGrid grid;
  HyperCube cube(5, 10, grid, Stage::reflectance);
  oracle::Gen gen(6);
  auto s = gen.spectrum(400);
  for (std::size_t l = 0; l < 5; ++l)
    for (std::size_t p = 0; p < 10; ++p) {
      auto px = cube.pixel(l, p);
      for (std::size_t c = 0; c < 400; ++c) px[c] = p < 5 ? s[c] : 0.02 * (1.0 + std::sin(0.1 * c));
    }
  auto res = pipeline_apply(cube, PipelineConfig{});
  REQUIRE(res.blocks.size() == 2);
  CHECK_FALSE(res.blocks[0].dark.exclude);
  CHECK(res.blocks[1].dark.exclude);
}

TEST_CASE("wavelength grid") {
  WavelengthGrid g;
  CHECK(g.n_bands() == 400);
  CHECK(g.center(0) == 990.0);
  CHECK(g.center(399) == doctest::Approx(1700.0));
  auto c = g.centers();
  CHECK(WavelengthGrid::from_centers(c) == g);
  c[10] += 0.5;
  CHECK(code_of([&] { WavelengthGrid::from_centers(c); }) == ErrorCode::SpecInvalid);
}
