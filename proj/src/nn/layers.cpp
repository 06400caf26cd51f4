#include "fiberspec/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "fiberspec/error.hpp"

namespace fiberspec::nn {

namespace {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatR<T>>;
template <class T>
using CMapR = Eigen::Map<const MatR<T>>;

[[noreturn]] void shape_error(const LayerSpec& spec, const Shape& got, const std::string& expected) {
  fail(ErrorCode::ShapeMismatch, std::string(to_string(spec.kind)) + " expected " + expected +
                                     ", got " + shape_to_string(got));
}

template <class T>
Tensor<T> checked(Tensor<T> y, const LayerSpec& spec) {
  require_finite(y, to_string(spec.kind));
  return y;
}

// ---------------------------------------------------------------------------

template <class T>
class Dense final : public Layer<T> {
 public:
  explicit Dense(const LayerSpec& spec) : Layer<T>(spec) {
    weight_ = {"weight", Tensor<T>({spec.units, spec.in_features}), Tensor<T>({spec.units, spec.in_features}), true};
    bias_ = {"bias", Tensor<T>({spec.units}), Tensor<T>({spec.units}), true};
  }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 1 || in[0] != this->spec_.in_features) {
      shape_error(this->spec_, in, "[" + std::to_string(this->spec_.in_features) + "]");
    }
    return {this->spec_.units};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, std::mt19937_64&) override {
    const auto& s = this->spec_;
    if (x.rank() != 2 || x.dim(1) != s.in_features) {
      shape_error(s, x.shape(), "[N, " + std::to_string(s.in_features) + "]");
    }
    input_ = x;
    const auto n = static_cast<Eigen::Index>(x.dim(0));
    Tensor<T> y({x.dim(0), s.units});
    CMapR<T> X(x.raw(), n, static_cast<Eigen::Index>(s.in_features));
    CMapR<T> W(weight_.value.raw(), static_cast<Eigen::Index>(s.units), static_cast<Eigen::Index>(s.in_features));
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.raw(), static_cast<Eigen::Index>(s.units));
    MapR<T> Y(y.raw(), n, static_cast<Eigen::Index>(s.units));
    Y.noalias() = X * W.transpose();
    Y.rowwise() += b;
    return checked(std::move(y), s);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const auto& s = this->spec_;
    const auto n = static_cast<Eigen::Index>(input_.dim(0));
    const auto in = static_cast<Eigen::Index>(s.in_features);
    const auto units = static_cast<Eigen::Index>(s.units);
    if (g.shape() != Shape{input_.dim(0), s.units}) shape_error(s, g.shape(), "gradient [N, units]");
    CMapR<T> G(g.raw(), n, units);
    CMapR<T> X(input_.raw(), n, in);
    CMapR<T> W(weight_.value.raw(), units, in);
    MapR<T>(weight_.grad.raw(), units, in).noalias() = G.transpose() * X;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.grad.raw(), units) = G.colwise().sum();
    Tensor<T> dx({input_.dim(0), s.in_features});
    MapR<T>(dx.raw(), n, in).noalias() = G * W;
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

template <class T>
class Conv1d final : public Layer<T> {
 public:
  explicit Conv1d(const LayerSpec& spec) : Layer<T>(spec) {
    const Shape ks{spec.out_channels, spec.in_channels, spec.kernel};
    weight_ = {"weight", Tensor<T>(ks), Tensor<T>(ks), true};
    bias_ = {"bias", Tensor<T>({spec.out_channels}), Tensor<T>({spec.out_channels}), true};
  }

  Shape output_shape(const Shape& in) const override {
    const auto& s = this->spec_;
    if (in.size() != 2 || in[0] != s.in_channels || in[1] + 2 * s.padding < s.kernel) {
      shape_error(s, in, "[" + std::to_string(s.in_channels) + ", L >= kernel]");
    }
    return {s.out_channels, conv_output_length(in[1], s.kernel, s.stride, s.padding)};
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, std::mt19937_64&) override {
    const auto& s = this->spec_;
    if (x.rank() != 3) shape_error(s, x.shape(), "[N, C, L]");
    const Shape out_sample = output_shape({x.dim(1), x.dim(2)});
    batch_ = x.dim(0);
    in_len_ = x.dim(2);
    out_len_ = out_sample[1];

    // im2col: rows (c, k), columns (n, i).
    const std::size_t rows = s.in_channels * s.kernel;
    const std::size_t cols = batch_ * out_len_;
    cols_ = Tensor<T>({rows, cols});
    T* dst = cols_.raw();
    const T* src = x.raw();
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      for (std::size_t k = 0; k < s.kernel; ++k) {
        T* row = dst + (c * s.kernel + k) * cols;
        for (std::size_t n = 0; n < batch_; ++n) {
          const T* xin = src + (n * s.in_channels + c) * in_len_;
          T* out = row + n * out_len_;
          for (std::size_t i = 0; i < out_len_; ++i) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i * s.stride + k) -
                                       static_cast<std::ptrdiff_t>(s.padding);
            out[i] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(in_len_)) ? xin[pos] : T{0};
          }
        }
      }
    }

    const auto f = static_cast<Eigen::Index>(s.out_channels);
    MatR<T> Y(f, static_cast<Eigen::Index>(cols));
    Y.noalias() = CMapR<T>(weight_.value.raw(), f, static_cast<Eigen::Index>(rows)) *
                  CMapR<T>(cols_.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));

    Tensor<T> y({batch_, s.out_channels, out_len_});
    for (std::size_t n = 0; n < batch_; ++n) {
      for (std::size_t fo = 0; fo < s.out_channels; ++fo) {
        const T b = bias_.value[fo];
        const T* from = Y.data() + fo * cols + n * out_len_;
        T* to = y.raw() + (n * s.out_channels + fo) * out_len_;
        for (std::size_t i = 0; i < out_len_; ++i) to[i] = from[i] + b;
      }
    }
    return checked(std::move(y), s);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const auto& s = this->spec_;
    if (g.shape() != Shape{batch_, s.out_channels, out_len_}) shape_error(s, g.shape(), "gradient [N, F, Lout]");
    const std::size_t rows = s.in_channels * s.kernel;
    const std::size_t cols = batch_ * out_len_;
    const auto f = static_cast<Eigen::Index>(s.out_channels);

    MatR<T> G(f, static_cast<Eigen::Index>(cols));
    for (std::size_t n = 0; n < batch_; ++n) {
      for (std::size_t fo = 0; fo < s.out_channels; ++fo) {
        const T* from = g.raw() + (n * s.out_channels + fo) * out_len_;
        std::copy(from, from + out_len_, G.data() + fo * cols + n * out_len_);
      }
    }
    CMapR<T> C(cols_.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    CMapR<T> K(weight_.value.raw(), f, static_cast<Eigen::Index>(rows));
    MapR<T>(weight_.grad.raw(), f, static_cast<Eigen::Index>(rows)).noalias() = G * C.transpose();
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.grad.raw(), f) = G.rowwise().sum();

    MatR<T> dcols(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    dcols.noalias() = K.transpose() * G;

    Tensor<T> dx({batch_, s.in_channels, in_len_});
    for (std::size_t c = 0; c < s.in_channels; ++c) {
      for (std::size_t k = 0; k < s.kernel; ++k) {
        const T* row = dcols.data() + (c * s.kernel + k) * cols;
        for (std::size_t n = 0; n < batch_; ++n) {
          T* xin = dx.raw() + (n * s.in_channels + c) * in_len_;
          const T* from = row + n * out_len_;
          for (std::size_t i = 0; i < out_len_; ++i) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(i * s.stride + k) -
                                       static_cast<std::ptrdiff_t>(s.padding);
            if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(in_len_)) xin[pos] += from[i];
          }
        }
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }

 private:
  Param<T> weight_;
  Param<T> bias_;
  Tensor<T> cols_;
  std::size_t batch_ = 0;
  std::size_t in_len_ = 0;
  std::size_t out_len_ = 0;
};

// ---------------------------------------------------------------------------

template <class T>
class Relu final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, Mode, std::mt19937_64&) override {
    input_ = x;
    Tensor<T> y = x;
    for (auto& v : y.values()) v = v > T{0} ? v : T{0};
    return checked(std::move(y), this->spec_);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (g.shape() != input_.shape()) shape_error(this->spec_, g.shape(), shape_to_string(input_.shape()));
    Tensor<T> dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!(input_[i] > T{0})) dx[i] = T{0};
    }
    return dx;
  }

 private:
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

template <class T>
class BatchNorm1d final : public Layer<T> {
 public:
  explicit BatchNorm1d(const LayerSpec& spec) : Layer<T>(spec) {
    const Shape s{spec.features};
    gamma_ = {"gamma", Tensor<T>(s, T{1}), Tensor<T>(s), true};
    beta_ = {"beta", Tensor<T>(s), Tensor<T>(s), true};
    running_mean_ = {"running_mean", Tensor<T>(s), {}, false};
    running_var_ = {"running_var", Tensor<T>(s, T{1}), {}, false};
  }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 1 || in[0] != this->spec_.features) {
      shape_error(this->spec_, in, "[" + std::to_string(this->spec_.features) + "]");
    }
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::mt19937_64&) override {
    const auto& s = this->spec_;
    if (x.rank() != 2 || x.dim(1) != s.features) shape_error(s, x.shape(), "[N, features]");
    const std::size_t n = x.dim(0);
    const std::size_t d = s.features;
    mode_ = mode;
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(d, 0.0);
    Tensor<T> y(x.shape());

    if (mode == Mode::train) {
      if (n == 0) shape_error(s, x.shape(), "non-empty batch");
      for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += x[i * d + j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double c = x[i * d + j] - mean;
          var += c * c;
        }
        const double biased = var / static_cast<double>(n);
        const double unbiased = n > 1 ? var / static_cast<double>(n - 1) : biased;
        inv_std_[j] = 1.0 / std::sqrt(biased + s.epsilon);
        for (std::size_t i = 0; i < n; ++i) {
          const double h = (x[i * d + j] - mean) * inv_std_[j];
          xhat_[i * d + j] = static_cast<T>(h);
          y[i * d + j] = static_cast<T>(h * gamma_.value[j] + beta_.value[j]);
        }
        running_mean_.value[j] = static_cast<T>((1.0 - s.momentum) * running_mean_.value[j] + s.momentum * mean);
        running_var_.value[j] = static_cast<T>((1.0 - s.momentum) * running_var_.value[j] + s.momentum * unbiased);
      }
    } else {
      for (std::size_t j = 0; j < d; ++j) {
        inv_std_[j] = 1.0 / std::sqrt(static_cast<double>(running_var_.value[j]) + s.epsilon);
        for (std::size_t i = 0; i < n; ++i) {
          const double h = (x[i * d + j] - static_cast<double>(running_mean_.value[j])) * inv_std_[j];
          xhat_[i * d + j] = static_cast<T>(h);
          y[i * d + j] = static_cast<T>(h * gamma_.value[j] + beta_.value[j]);
        }
      }
    }
    return checked(std::move(y), s);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (g.shape() != xhat_.shape()) shape_error(this->spec_, g.shape(), shape_to_string(xhat_.shape()));
    const std::size_t n = g.dim(0);
    const std::size_t d = this->spec_.features;
    Tensor<T> dx(g.shape());
    for (std::size_t j = 0; j < d; ++j) {
      double sum_g = 0.0;
      double sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += g[i * d + j];
        sum_gx += static_cast<double>(g[i * d + j]) * xhat_[i * d + j];
      }
      gamma_.grad[j] = static_cast<T>(sum_gx);
      beta_.grad[j] = static_cast<T>(sum_g);
      const double gam = gamma_.value[j];
      if (mode_ == Mode::train) {
        const double scale = gam * inv_std_[j] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          dx[i * d + j] = static_cast<T>(scale * (static_cast<double>(n) * g[i * d + j] - sum_g -
                                                  static_cast<double>(xhat_[i * d + j]) * sum_gx));
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) dx[i * d + j] = static_cast<T>(g[i * d + j] * gam * inv_std_[j]);
      }
    }
    return dx;
  }

  std::vector<Param<T>*> params() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

 private:
  Param<T> gamma_;
  Param<T> beta_;
  Param<T> running_mean_;
  Param<T> running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
  Mode mode_ = Mode::train;
};

// ---------------------------------------------------------------------------

template <class T>
class Dropout final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::mt19937_64& rng) override {
    mode_ = mode;
    if (mode == Mode::eval || this->spec_.rate == 0.0) {
      mask_ = {};
      return x;
    }
    const double keep = 1.0 - this->spec_.rate;
    const T scale = static_cast<T>(1.0 / keep);
    std::bernoulli_distribution draw(keep);
    mask_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = draw(rng) ? scale : T{0};
      y[i] = x[i] * mask_[i];
    }
    return checked(std::move(y), this->spec_);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (mask_.empty()) return g;
    if (g.shape() != mask_.shape()) shape_error(this->spec_, g.shape(), shape_to_string(mask_.shape()));
    Tensor<T> dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
    return dx;
  }

 private:
  Tensor<T> mask_;
  Mode mode_ = Mode::eval;
};

// ---------------------------------------------------------------------------

template <class T>
class Softmax final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 1) shape_error(this->spec_, in, "[C]");
    return in;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, std::mt19937_64&) override {
    if (x.rank() != 2) shape_error(this->spec_, x.shape(), "[N, C]");
    const std::size_t n = x.dim(0);
    const std::size_t c = x.dim(1);
    output_ = Tensor<T>(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = x.raw() + i * c;
      const T mx = *std::max_element(row, row + c);
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
      for (std::size_t j = 0; j < c; ++j) {
        output_[i * c + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / sum);
      }
    }
    return checked(output_, this->spec_);
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    if (g.shape() != output_.shape()) shape_error(this->spec_, g.shape(), shape_to_string(output_.shape()));
    const std::size_t n = g.dim(0);
    const std::size_t c = g.dim(1);
    Tensor<T> dx(g.shape());
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += static_cast<double>(g[i * c + j]) * output_[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        dx[i * c + j] = static_cast<T>(output_[i * c + j] * (g[i * c + j] - dot));
      }
    }
    return dx;
  }

 private:
  Tensor<T> output_;
};

// ---------------------------------------------------------------------------

template <class T>
class Flatten final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Shape output_shape(const Shape& in) const override { return {shape_product(in)}; }

  Tensor<T> forward(const Tensor<T>& x, Mode, std::mt19937_64&) override {
    if (x.rank() < 1) shape_error(this->spec_, x.shape(), "[N, ...]");
    in_shape_ = x.shape();
    return x.reshaped({x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)});
  }

  Tensor<T> backward(const Tensor<T>& g) override { return g.reshaped(in_shape_); }

 private:
  Shape in_shape_;
};

// ---------------------------------------------------------------------------

const std::map<std::string_view, LayerKind>& kind_names() {
  static const std::map<std::string_view, LayerKind> names{
      {"dense", LayerKind::dense},         {"conv1d", LayerKind::conv1d},
      {"relu", LayerKind::relu},           {"batchnorm1d", LayerKind::batchnorm1d},
      {"dropout", LayerKind::dropout},     {"softmax", LayerKind::softmax},
      {"flatten", LayerKind::flatten},
  };
  return names;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    fail(ErrorCode::SpecInvalid, "bad integer for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    fail(ErrorCode::SpecInvalid, "bad number for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [name, k] : kind_names()) {
    if (k == kind) return name;
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  const auto it = kind_names().find(name);
  if (it == kind_names().end()) fail(ErrorCode::SpecInvalid, "unknown layer kind '" + std::string(name) + "'");
  return it->second;
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in;
  s.units = units;
  return s;
}

LayerSpec LayerSpec::conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t stride, std::size_t padding) {
  LayerSpec s;
  s.kind = LayerKind::conv1d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::batchnorm1d(std::size_t features, double epsilon, double momentum) {
  LayerSpec s;
  s.kind = LayerKind::batchnorm1d;
  s.features = features;
  s.epsilon = epsilon;
  s.momentum = momentum;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  return s;
}

LayerSpec LayerSpec::softmax() {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::dense:
      if (in_features < 1 || units < 1) fail(ErrorCode::SpecInvalid, "dense needs in_features and units >= 1");
      break;
    case LayerKind::conv1d:
      if (in_channels < 1 || out_channels < 1) fail(ErrorCode::SpecInvalid, "conv1d needs channels >= 1");
      if (kernel < 1) fail(ErrorCode::SpecInvalid, "conv1d kernel must be >= 1");
      if (stride < 1) fail(ErrorCode::SpecInvalid, "conv1d stride must be >= 1");
      break;
    case LayerKind::batchnorm1d:
      if (features < 1) fail(ErrorCode::SpecInvalid, "batchnorm1d needs features >= 1");
      if (!(epsilon > 0.0)) fail(ErrorCode::SpecInvalid, "batchnorm1d epsilon must be positive");
      if (!(momentum >= 0.0 && momentum <= 1.0)) fail(ErrorCode::SpecInvalid, "batchnorm1d momentum outside [0, 1]");
      break;
    case LayerKind::dropout:
      if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorCode::SpecInvalid, "dropout rate must be in [0, 1)");
      break;
    case LayerKind::relu:
    case LayerKind::softmax:
    case LayerKind::flatten:
      break;
  }
}

std::string LayerSpec::to_line() const {
  std::ostringstream os;
  os << "kind=" << to_string(kind);
  switch (kind) {
    case LayerKind::dense:
      os << " in_features=" << in_features << " units=" << units;
      break;
    case LayerKind::conv1d:
      os << " in_channels=" << in_channels << " out_channels=" << out_channels << " kernel=" << kernel
         << " stride=" << stride << " padding=" << padding;
      break;
    case LayerKind::batchnorm1d:
      os << " features=" << features << " epsilon=" << format_real(epsilon)
         << " momentum=" << format_real(momentum);
      break;
    case LayerKind::dropout:
      os << " rate=" << format_real(rate);
      break;
    default:
      break;
  }
  return os.str();
}

LayerSpec LayerSpec::parse_line(std::string_view line) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    if (pos >= line.size()) break;
    auto end = line.find(' ', pos);
    if (end == std::string_view::npos) end = line.size();
    const auto tok = line.substr(pos, end - pos);
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos) fail(ErrorCode::SpecInvalid, "layer token without '=': " + std::string(tok));
    if (!kv.emplace(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1))).second) {
      fail(ErrorCode::SpecInvalid, "duplicate layer key in: " + std::string(line));
    }
    pos = end;
  }
  const auto kind_it = kv.find("kind");
  if (kind_it == kv.end()) fail(ErrorCode::SpecInvalid, "layer line lacks kind: " + std::string(line));
  LayerSpec s;
  s.kind = parse_layer_kind(kind_it->second);
  kv.erase(kind_it);
  for (const auto& [k, v] : kv) {
    if (k == "in_features") s.in_features = parse_size(k, v);
    else if (k == "units") s.units = parse_size(k, v);
    else if (k == "in_channels") s.in_channels = parse_size(k, v);
    else if (k == "out_channels") s.out_channels = parse_size(k, v);
    else if (k == "kernel") s.kernel = parse_size(k, v);
    else if (k == "stride") s.stride = parse_size(k, v);
    else if (k == "padding") s.padding = parse_size(k, v);
    else if (k == "rate") s.rate = parse_real(k, v);
    else if (k == "features") s.features = parse_size(k, v);
    else if (k == "epsilon") s.epsilon = parse_real(k, v);
    else if (k == "momentum") s.momentum = parse_real(k, v);
    else fail(ErrorCode::SpecInvalid, "unknown layer key '" + k + "'");
  }
  s.validate();
  return s;
}

std::size_t conv_output_length(std::size_t in_len, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  const std::size_t padded = in_len + 2 * padding;
  if (padded < kernel) fail(ErrorCode::ShapeMismatch, "input shorter than kernel");
  return (padded - kernel) / stride + 1;
}

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case LayerKind::dense: return std::make_unique<Dense<T>>(spec);
    case LayerKind::conv1d: return std::make_unique<Conv1d<T>>(spec);
    case LayerKind::relu: return std::make_unique<Relu<T>>(spec);
    case LayerKind::batchnorm1d: return std::make_unique<BatchNorm1d<T>>(spec);
    case LayerKind::dropout: return std::make_unique<Dropout<T>>(spec);
    case LayerKind::softmax: return std::make_unique<Softmax<T>>(spec);
    case LayerKind::flatten: return std::make_unique<Flatten<T>>(spec);
  }
  fail(ErrorCode::SpecInvalid, "unhandled layer kind");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&);

}  // namespace fiberspec::nn
