#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fiberspec/models.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace fiberspec;
using namespace fiberspec::nn;
using testing::code_of;

namespace {

std::vector<Spectrum> random_spectra(std::size_t n, std::size_t len, std::uint64_t seed) {
  oracle::Gen gen(seed);
  std::vector<Spectrum> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({gen.spectrum(len), Stage::derivative});
  return out;
}

// Autoencoder whose output is the constant `bias` whatever the input.
Network<float> constant_autoencoder(float bias) {
  auto net = build_autoencoder(AutoencoderSpec{}, 1);
  for (auto* p : net.parameters()) p->value.fill(0.0f);
  net.parameters().back()->value.fill(bias);
  return net;
}

// Spectrum whose reconstruction error under constant_autoencoder(0) is c^2.
Spectrum flat(double c) { return {std::vector<double>(400, c), Stage::derivative}; }

}  // namespace

TEST_CASE("classifier activation trace and parameter count") {
  ClassifierSpec spec;
  auto layout = classifier_layout(spec);
  const auto& trace = layout.trace();
  REQUIRE(trace.size() == 11);
  CHECK(trace[0] == Shape{20, 396});
  CHECK(trace[2] == Shape{32, 392});
  CHECK(trace[4] == Shape{12544});
  CHECK(trace.back() == Shape{12});

  const std::vector<LayerKind> order{LayerKind::conv1d, LayerKind::relu,    LayerKind::conv1d,
                                     LayerKind::relu,   LayerKind::flatten, LayerKind::dense,
                                     LayerKind::batchnorm1d, LayerKind::dropout, LayerKind::relu,
                                     LayerKind::dense,  LayerKind::softmax};
  for (std::size_t i = 0; i < order.size(); ++i) CHECK(layout.specs()[i].kind == order[i]);
  CHECK(layout.specs()[7].rate == 0.5);

  const std::size_t l1 = oracle::valid_length(400, 5), l2 = oracle::valid_length(l1, 5);
  const std::size_t want = oracle::conv_params(1, 20, 5) + oracle::conv_params(20, 32, 5) +
                           oracle::dense_params(32 * l2, 128) + oracle::batchnorm_params(128) +
                           oracle::dense_params(128, 12);
  CHECK(want == 1610916);
  CHECK(build_classifier(spec).parameter_count() == want);

  ClassifierSpec binary;
  binary.n_classes = 2;
  CHECK(build_classifier(binary).parameter_count() - (want - oracle::dense_params(128, 12)) == 258);
}

TEST_CASE("classifier spec validation") {
  ClassifierSpec one;
  one.n_classes = 1;
  CHECK(code_of([&] { build_classifier(one); }) == ErrorCode::SpecInvalid);
  ClassifierSpec tiny;
  tiny.input_len = 8;
  CHECK(code_of([&] { build_classifier(tiny); }) == ErrorCode::SpecInvalid);
  ClassifierSpec drop;
  drop.dropout = 1.0;
  CHECK(code_of([&] { build_classifier(drop); }) == ErrorCode::SpecInvalid);
}

TEST_CASE("autoencoder shape and parameter count") {
  AutoencoderSpec spec;
  CHECK(spec.widths() == std::vector<std::size_t>{400, 100, 100, 20, 100, 100, 400});
  std::size_t want = 0;
  const auto w = spec.widths();
  for (std::size_t i = 0; i + 1 < w.size(); ++i) want += oracle::dense_params(w[i], w[i + 1]);
  CHECK(want == 104820);
  auto net = build_autoencoder(spec, 3);
  CHECK(net.parameter_count() == want);
  CHECK(net.specs().back().kind == LayerKind::dense);
  for (std::size_t i = 0; i + 1 < net.specs().size(); ++i)
    CHECK(net.specs()[i].kind == (i % 2 == 0 ? LayerKind::dense : LayerKind::relu));

  auto x = spectra_tensor(random_spectra(7, 400, 2), false);
  auto z = net.forward_prefix(x, autoencoder_latent_end(spec), Mode::eval);
  CHECK(z.shape() == Shape{7, 20});
}

TEST_CASE("reconstruction error closed forms") {
  auto net = constant_autoencoder(0.25f);
  auto spectra = random_spectra(5, 400, 4);
  auto re = reconstruction_error(net, spectra);
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    double want = 0.0;
    for (double v : spectra[i].values) {
      const double d = v - 0.25;
      want += d * d;
    }
    CHECK(re[i] == doctest::Approx(want / 400.0).epsilon(1e-12));
    CHECK(re[i] >= 0.0);
  }

  // Identity network reconstructs perfectly.
  Network<float> ident({4}, {LayerSpec::dense(4, 4)});
  auto ps = ident.parameters();
  ps[0]->value.fill(0.0f);
  for (std::size_t i = 0; i < 4; ++i) ps[0]->value[i * 4 + i] = 1.0f;
  ps[1]->value.fill(0.0f);
  std::vector<Spectrum> s{{{0.5, -1.0, 2.0, 0.25}, Stage::derivative}};
  CHECK(reconstruction_error(ident, s)[0] == 0.0);

  std::vector<Spectrum> wrong{{std::vector<double>(399, 0.1), Stage::derivative}};
  auto ae = build_autoencoder(AutoencoderSpec{}, 1);
  CHECK(code_of([&] { reconstruction_error(ae, wrong); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("threshold quantile") {
  std::vector<double> one_to_twenty(20);
  for (std::size_t i = 0; i < 20; ++i) one_to_twenty[i] = static_cast<double>(i + 1);
  CHECK(fit_threshold(one_to_twenty, 0.95) == 19.05);

  CHECK(fit_threshold(std::vector<double>(30, 0.125), 0.95) == 0.125);
  CHECK(code_of([] { fit_threshold(std::vector<double>(19, 1.0)); }) == ErrorCode::TooFewSamples);
  CHECK(code_of([&] { fit_threshold(one_to_twenty, 1.0); }) == ErrorCode::ValidationError);
  CHECK(code_of([&] { fit_threshold(one_to_twenty, 0.0); }) == ErrorCode::ValidationError);
}

TEST_CASE("threshold properties over random samples") {
  oracle::Gen gen(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = gen.index(20, trial < 10 ? 10000 : 300);
    std::vector<double> x(n);
    for (auto& v : x) v = std::exp(gen.normal(1.0));
    const double q = gen.uniform(0.01, 0.99);
    const double t = fit_threshold(x, q);
    CHECK(t == doctest::Approx(oracle::quantile(x, q)).epsilon(1e-12));

    const double t95 = fit_threshold(x, 0.95);
    const auto above = std::count_if(x.begin(), x.end(), [&](double v) { return v > t95; });
    CHECK(static_cast<double>(above) / n <= 0.05 + 1.0 / n);

    const double q2 = std::min(0.999, q + gen.uniform(0.0, 0.2));
    CHECK(fit_threshold(x, q2) >= t);

    const double a = gen.uniform(0.01, 100.0);
    std::vector<double> ax(x);
    for (auto& v : ax) v *= a;
    CHECK(fit_threshold(ax, q) == doctest::Approx(a * t).epsilon(1e-12));
  }
}

TEST_CASE("predict_pixels tie-break and totality") {
  auto net = build_classifier(ClassifierSpec{}, 9);
  auto spectra = random_spectra(6, 400, 9);
  for (const auto& p : predict_pixels(net, spectra)) {
    CHECK(p.label >= 0);
    CHECK(p.label < 12);
    double s = 0.0;
    for (double v : p.probabilities) s += v;
    CHECK(std::abs(s - 1.0) < 1e-6);
    CHECK(p.label == std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
  }

  auto head = net.parameters();
  auto* w = head[head.size() - 2];
  auto* b = head.back();
  w->value.fill(0.0f);
  b->value.fill(0.0f);
  b->value[3] = 2.0f;
  b->value[7] = 2.0f;
  for (const auto& p : predict_pixels(net, spectra)) CHECK(p.label == 3);

  std::vector<Spectrum> wrong{{std::vector<double>(300, 0.0), Stage::derivative}};
  CHECK(code_of([&] { predict_pixels(net, wrong); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("predictions are invariant under a logit shift") {
  auto net = build_classifier(ClassifierSpec{}, 10);
  auto spectra = random_spectra(8, 400, 10);
  const auto before = predict_pixels(net, spectra);
  for (float shift : {-3.0f, 0.5f, 7.0f}) {
    auto shifted = build_classifier(ClassifierSpec{}, 10);
    for (auto& v : shifted.parameters().back()->value.storage()) v += shift;
    const auto after = predict_pixels(shifted, spectra);
    for (std::size_t i = 0; i < before.size(); ++i) {
      CHECK(after[i].label == before[i].label);
      for (std::size_t c = 0; c < 12; ++c)
        CHECK(std::abs(after[i].probabilities[c] - before[i].probabilities[c]) < 1e-6);
    }
  }
}

TEST_CASE("detection rules") {
  DetectorModel det{constant_autoencoder(0.0f), 0.04, 0.95, "C1"};
  std::vector<SpectraGroup> objects{
      {"below", {flat(0.1), flat(0.15), flat(0.19)}},
      {"tie", {flat(0.1), flat(0.5)}},
      {"boundary", {flat(0.2)}},
      {"above", {flat(0.3), flat(0.1), flat(0.4)}},
  };
  auto d = detect(det, objects);
  REQUIRE(d.size() == 4);
  CHECK(d[0].target);
  CHECK(d[0].target_votes == 3);
  CHECK_FALSE(d[1].target);
  CHECK(d[1].target_votes == 1);
  CHECK(d[2].pixels[0].error == doctest::Approx(0.04).epsilon(1e-6));
  CHECK(d[3].target_votes == 1);
  CHECK_FALSE(d[3].target);

  const std::vector<PixelDecision> tie{{0.1, true}, {0.2, false}};
  CHECK_FALSE(object_is_target(tie));
  const std::vector<PixelDecision> none;
  CHECK(code_of([&] { object_is_target(none); }) == ErrorCode::EmptyObject);
  std::vector<SpectraGroup> empty{{"x", {}}};
  CHECK(code_of([&] { detect(det, empty); }) == ErrorCode::EmptyObject);
}

TEST_CASE("threshold boundary counts as target") {
  // RE of flat(c) under a zero net is exactly mean(c^2) in double, so pick the
  // threshold from the computed error itself.
  DetectorModel det{constant_autoencoder(0.0f), 1.0, 0.95, "C1"};
  std::vector<SpectraGroup> one{{"b", {flat(0.3)}}};
  det.threshold = reconstruction_error(det.network, one[0].spectra)[0];
  CHECK(detect(det, one)[0].pixels[0].target);
  det.threshold = std::nextafter(det.threshold, 0.0);
  CHECK_FALSE(detect(det, one)[0].pixels[0].target);
}

TEST_CASE("detection is invariant under pixel reordering") {
  DetectorModel det{build_autoencoder(AutoencoderSpec{}, 12), 0.0, 0.95, "C1"};
  oracle::Gen gen(12);
  std::vector<SpectraGroup> objects;
  for (int o = 0; o < 10; ++o) {
    SpectraGroup g{"obj" + std::to_string(o), {}};
    const std::size_t n = gen.index(1, 9);
    for (std::size_t i = 0; i < n; ++i) g.spectra.push_back({gen.spectrum(400), Stage::derivative});
    objects.push_back(g);
  }
  std::vector<double> all;
  for (const auto& g : objects)
    for (double e : reconstruction_error(det.network, g.spectra)) all.push_back(e);
  det.threshold = oracle::quantile(all, 0.5);

  const auto base = detect(det, objects);
  for (int trial = 0; trial < 20; ++trial) {
    auto shuffled = objects;
    for (auto& g : shuffled) std::shuffle(g.spectra.begin(), g.spectra.end(), gen.engine());
    const auto d = detect(det, shuffled);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(d[i].target == base[i].target);
      CHECK(d[i].target_votes == base[i].target_votes);
    }
  }
}

TEST_CASE("detector checkpoint round trip") {
  DetectorModel det{build_autoencoder(AutoencoderSpec{}, 5), 0.0123, 0.9, "C1"};
  testing::TempDir dir("fspec-det");
  save_detector(det, dir / "d.fspec");
  auto back = load_detector(dir / "d.fspec");
  CHECK(back.threshold == det.threshold);
  CHECK(back.quantile == det.quantile);
  CHECK(back.target_label == "C1");
  auto spectra = random_spectra(4, 400, 5);
  CHECK(reconstruction_error(back.network, spectra) == reconstruction_error(det.network, spectra));
}

TEST_CASE("classifier checkpoint gives bit-identical predictions") {
  auto net = build_classifier(ClassifierSpec{}, 21);
  auto spectra = random_spectra(5, 400, 21);
  auto loaded = deserialize_checkpoint(serialize_checkpoint(net, {{"labels", join_labels(default_class_labels())}}));
  const auto a = predict_pixels(net, spectra);
  const auto b = predict_pixels(loaded.network, spectra);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].probabilities == b[i].probabilities);
  }
  CHECK(split_labels(loaded.meta.at("labels")) == default_class_labels());
}

TEST_CASE("class labels") {
  const std::vector<std::string> want{"C1", "P1", "S1", "L1", "N1", "W1", "V1", "VLP1",
                                      "CP1 9:1", "CP1 8:2", "CP1 7:3", "CE1"};
  CHECK(default_class_labels() == want);
}

TEST_CASE("training defaults") {
  auto c = classifier_train_defaults();
  CHECK(c.initial_lr == 1e-3);
  CHECK(c.batch_size == 128);
  CHECK(c.lr_factor == 0.2);
  CHECK(c.lr_patience == 5);
  CHECK(c.early_stop_patience == 7);
  auto a = autoencoder_train_defaults();
  CHECK(a.batch_size == 16);
  CHECK(a.lr_factor == 0.5);
}

TEST_CASE("classifier training needs two classes") {
  auto spectra = random_spectra(6, 400, 1);
  std::vector<int> labels(6, 4);
  CHECK(code_of([&] { train_classifier(spectra, labels, spectra, labels, classifier_train_defaults()); }) ==
        ErrorCode::ValidationError);
}

TEST_CASE("classifier training is seed-reproducible") {
  ClassifierSpec spec;
  spec.input_len = 40;
  spec.conv_filters = {3, 4};
  spec.dense_units = 8;
  spec.n_classes = 3;
  oracle::Gen gen(2);
  std::vector<Spectrum> x;
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    auto s = gen.spectrum(40);
    const int label = i % 3;
    for (std::size_t c = 0; c < 40; ++c) s[c] += std::sin(0.2 * c * (label + 1));
    x.push_back({s, Stage::derivative});
    y.push_back(label);
  }
  auto cfg = classifier_train_defaults();
  cfg.max_epochs = 6;
  cfg.batch_size = 8;
  cfg.seed = 4;
  auto a = train_classifier(x, y, x, y, cfg, spec);
  auto b = train_classifier(x, y, x, y, cfg, spec);
  REQUIRE(a.history.epochs.size() == b.history.epochs.size());
  for (std::size_t e = 0; e < a.history.epochs.size(); ++e) {
    CHECK(a.history.epochs[e].train_loss == b.history.epochs[e].train_loss);
    CHECK(a.history.epochs[e].val_loss == b.history.epochs[e].val_loss);
  }
  CHECK(serialize_checkpoint(a.network, {}) == serialize_checkpoint(b.network, {}));
}

TEST_CASE("autoencoder learns a three-dimensional subspace") {
  std::vector<std::vector<double>> basis(3, std::vector<double>(400));
  for (std::size_t c = 0; c < 400; ++c) {
    const double t = static_cast<double>(c) / 399.0;
    basis[0][c] = 0.3 * std::sin(3.0 * t);
    basis[1][c] = 0.3 * std::cos(7.0 * t);
    basis[2][c] = 0.3 * std::exp(-20.0 * (t - 0.5) * (t - 0.5));
  }
  oracle::Gen gen(8);
  auto draw = [&](std::size_t n) {
    std::vector<Spectrum> out;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(400, 0.0);
      for (const auto& b : basis) {
        const double a = gen.uniform(-1.0, 1.0);
        for (std::size_t c = 0; c < 400; ++c) s[c] += a * b[c];
      }
      out.push_back({s, Stage::derivative});
    }
    return out;
  };
  auto train = draw(400), val = draw(100);
  auto cfg = autoencoder_train_defaults();
  cfg.seed = 8;
  auto m = train_autoencoder(train, val, cfg);
  const double best = m.history.epochs[m.history.best_epoch].val_loss;
  CHECK(best < 1e-3);
  for (const auto& e : m.history.epochs) CHECK(e.train_loss >= 0.0);

  auto again = train_autoencoder(train, val, cfg);
  REQUIRE(again.history.epochs.size() == m.history.epochs.size());
  for (std::size_t e = 0; e < m.history.epochs.size(); ++e)
    CHECK(again.history.epochs[e].val_loss == m.history.epochs[e].val_loss);
}
