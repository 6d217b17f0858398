#include "elastrec/denoise.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "json.hpp"

#include "elastrec/errors.hpp"

namespace elastrec {

namespace {

constexpr char kNetMagic[] = "ELNET1\n";
constexpr std::size_t kMagicSize = 7;

std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
}

float read_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

void write_f32_le(std::ostream& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity" || name == "linear" || name == "none") return Activation::identity;
  throw FormatError("unknown activation '" + name + "'");
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void NetworkDescriptor::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  if (!(normalization > 0.0) || !std::isfinite(normalization)) {
    throw ShapeError("network normalization must be positive");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const ConvLayer& L = layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    if (L.kh <= 0 || L.kw <= 0 || L.c_in <= 0 || L.c_out <= 0) {
      throw ShapeError(where + "non-positive kernel dimension");
    }
    if (L.kh % 2 == 0 || L.kw % 2 == 0) throw ShapeError(where + "kernel sizes must be odd");
    const auto expected = static_cast<std::size_t>(L.kh) * L.kw * L.c_in * L.c_out;
    if (L.kernel.size() != expected) throw ShapeError(where + "kernel blob size mismatch");
    if (L.bias.size() != static_cast<std::size_t>(L.c_out)) {
      throw ShapeError(where + "bias size mismatch");
    }
    if (i > 0 && layers[i - 1].c_out != L.c_in) {
      throw ShapeError(where + "input channels do not match previous layer output");
    }
  }
  if (layers.front().c_in != 1) throw ShapeError("first layer must take one channel");
  if (layers.back().c_out != 1) throw ShapeError("last layer must produce one channel");
}

NetworkDescriptor load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open network file " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());

  if (bytes.size() < kMagicSize ||
      std::memcmp(bytes.data(), kNetMagic, kMagicSize) != 0) {
    if (bytes.size() < kMagicSize &&
        std::memcmp(bytes.data(), kNetMagic, bytes.size()) == 0) {
      throw TruncatedFileError("network file truncated inside magic");
    }
    throw BadMagicError("not an ELNET1 file: " + path.string());
  }
  if (bytes.size() < kMagicSize + 8) throw TruncatedFileError("network file truncated in header");
  const std::uint64_t manifest_len = read_u64_le(bytes.data() + kMagicSize);
  const std::size_t manifest_begin = kMagicSize + 8;
  if (manifest_len > bytes.size() - manifest_begin) {
    throw TruncatedFileError("network manifest truncated");
  }

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(manifest_begin),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(manifest_begin + manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network manifest is not valid JSON: ") + e.what());
  }

  NetworkDescriptor net;
  std::size_t offset = manifest_begin + manifest_len;
  try {
    net.residual = manifest.value("residual", false);
    net.normalization = manifest.value("normalization", kDefaultNormalization);
    for (const auto& entry : manifest.at("layers")) {
      ConvLayer layer;
      const auto shape = entry.at("kernel_shape").get<std::vector<int>>();
      if (shape.size() != 4) throw ShapeError("kernel_shape must have 4 entries");
      layer.kh = shape[0];
      layer.kw = shape[1];
      layer.c_in = shape[2];
      layer.c_out = shape[3];
      if (layer.kh <= 0 || layer.kw <= 0 || layer.c_in <= 0 || layer.c_out <= 0) {
        throw ShapeError("non-positive kernel dimension");
      }
      layer.activation = parse_activation(entry.value("activation", std::string("identity")));
      const auto n_kernel = static_cast<std::size_t>(layer.kh) * layer.kw * layer.c_in * layer.c_out;
      const auto n_bias = static_cast<std::size_t>(layer.c_out);
      if ((n_kernel + n_bias) * 4 > bytes.size() - offset) {
        throw TruncatedFileError("network weight blob truncated");
      }
      layer.kernel.resize(n_kernel);
      for (auto& w : layer.kernel) {
        w = read_f32_le(bytes.data() + offset);
        offset += 4;
      }
      layer.bias.resize(n_bias);
      for (auto& w : layer.bias) {
        w = read_f32_le(bytes.data() + offset);
        offset += 4;
      }
      net.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network manifest: ") + e.what());
  }
  if (offset != bytes.size()) throw ShapeError("network file has trailing bytes after weights");
  net.validate();
  return net;
}

void save_network(const std::filesystem::path& path, const NetworkDescriptor& net) {
  net.validate();
  nlohmann::json manifest;
  manifest["format"] = "ELNET1";
  manifest["residual"] = net.residual;
  manifest["normalization"] = net.normalization;
  manifest["layers"] = nlohmann::json::array();
  for (const ConvLayer& L : net.layers) {
    manifest["layers"].push_back({{"type", "conv2d"},
                                  {"kernel_shape", {L.kh, L.kw, L.c_in, L.c_out}},
                                  {"activation", activation_name(L.activation)}});
  }
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write network file " + path.string());
  out.write(kNetMagic, kMagicSize);
  write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const ConvLayer& L : net.layers) {
    for (float w : L.kernel) write_f32_le(out, w);
    for (float w : L.bias) write_f32_le(out, w);
  }
  if (!out) throw IoError("failed writing network file " + path.string());
}

Denoiser::Denoiser(Kind kind, std::size_t rows, std::size_t cols)
    : kind_(std::move(kind)), rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) throw InvalidArgument("denoiser raster shape must be positive");
}

Denoiser Denoiser::identity(std::size_t rows, std::size_t cols) {
  return Denoiser(IdentityMap{}, rows, cols);
}

Denoiser Denoiser::gaussian(double sigma, std::size_t rows, std::size_t cols) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("gaussian sigma must be non-negative");
  }
  Denoiser d(GaussianKernel{sigma}, rows, cols);
  d.radius_ = sigma > 0.0 ? static_cast<int>(std::ceil(4.0 * sigma)) : 0;
  const int width = 2 * d.radius_ + 1;
  d.weights_.assign(static_cast<std::size_t>(width * width), 0.0);
  if (sigma == 0.0) {
    d.weights_[0] = 1.0;
    return d;
  }
  double total = 0.0;
  for (int a = -d.radius_; a <= d.radius_; ++a) {
    for (int b = -d.radius_; b <= d.radius_; ++b) {
      const double w = std::exp(-(a * a + b * b) / (2.0 * sigma * sigma));
      d.weights_[static_cast<std::size_t>((a + d.radius_) * width + (b + d.radius_))] = w;
      total += w;
    }
  }
  for (double& w : d.weights_) w /= total;
  return d;
}

Denoiser Denoiser::median(int window, std::size_t rows, std::size_t cols) {
  if (window < 1 || window % 2 == 0) throw InvalidArgument("median window must be odd and positive");
  return Denoiser(MedianFilter{window}, rows, cols);
}

Denoiser Denoiser::cnn(NetworkDescriptor net, std::size_t rows, std::size_t cols) {
  net.validate();
  const double scale = net.normalization;
  Denoiser d(std::move(net), rows, cols);
  d.normalization_ = scale;
  return d;
}

Denoiser Denoiser::parse(const std::string& spec, std::size_t rows, std::size_t cols) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
  try {
    if (kind == "identity" || kind == "none") return identity(rows, cols);
    if (kind == "gaussian") return gaussian(std::stod(arg), rows, cols);
    if (kind == "median") {
      std::size_t used = 0;
      const int w = std::stoi(arg, &used);
      if (used != arg.size()) throw InvalidArgument("bad median window");
      return median(w, rows, cols);
    }
  } catch (const std::logic_error&) {
    throw InvalidArgument("bad denoiser argument in '" + spec + "'");
  }
  if (kind == "cnn") {
    if (arg.empty()) throw InvalidArgument("cnn denoiser needs a weight file path");
    return cnn(load_network(arg), rows, cols);
  }
  throw InvalidArgument("unknown denoiser '" + spec + "'");
}

std::string Denoiser::describe() const {
  return std::visit(
      [](const auto& k) -> std::string {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, IdentityMap>) {
          return "identity";
        } else if constexpr (std::is_same_v<T, GaussianKernel>) {
          std::ostringstream s;
          s << "gaussian:" << k.sigma;
          return s.str();
        } else if constexpr (std::is_same_v<T, MedianFilter>) {
          return "median:" + std::to_string(k.window);
        } else {
          return "cnn(" + std::to_string(k.layers.size()) + " layers)";
        }
      },
      kind_);
}

std::vector<double> Denoiser::apply(std::span<const double> raster) const {
  if (raster.size() != rows_ * cols_) {
    throw InvalidArgument("denoiser expects " + std::to_string(rows_) + "x" +
                          std::to_string(cols_) + " raster, got " +
                          std::to_string(raster.size()) + " values");
  }
  for (double v : raster) {
    if (!std::isfinite(v)) throw InvalidArgument("denoiser input is not finite");
  }
  return std::visit(
      [&](const auto& k) -> std::vector<double> {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, IdentityMap>) {
          return {raster.begin(), raster.end()};
        } else if constexpr (std::is_same_v<T, GaussianKernel>) {
          return apply_gaussian(raster);
        } else if constexpr (std::is_same_v<T, MedianFilter>) {
          return apply_median(raster, k.window);
        } else {
          return apply_cnn(raster, k);
        }
      },
      kind_);
}

std::vector<double> Denoiser::apply_gaussian(std::span<const double> x) const {
  const int width = 2 * radius_ + 1;
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      double acc = 0.0;
      for (int a = -radius_; a <= radius_; ++a) {
        const std::size_t src_row = wrap(static_cast<std::ptrdiff_t>(i) - a, rows_);
        for (int b = -radius_; b <= radius_; ++b) {
          const std::size_t src_col = wrap(static_cast<std::ptrdiff_t>(j) - b, cols_);
          acc += weights_[static_cast<std::size_t>((a + radius_) * width + (b + radius_))] *
                 x[src_row * cols_ + src_col];
        }
      }
      out[i * cols_ + j] = acc;
    }
  }
  return out;
}

std::vector<double> Denoiser::apply_median(std::span<const double> x, int window) const {
  const int r = window / 2;
  std::vector<double> out(x.size(), 0.0);
  std::vector<double> buf;
  buf.reserve(static_cast<std::size_t>(window * window));
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      buf.clear();
      for (int a = -r; a <= r; ++a) {
        const std::size_t src_row = wrap(static_cast<std::ptrdiff_t>(i) + a, rows_);
        for (int b = -r; b <= r; ++b) {
          buf.push_back(x[src_row * cols_ + wrap(static_cast<std::ptrdiff_t>(j) + b, cols_)]);
        }
      }
      auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
      std::nth_element(buf.begin(), mid, buf.end());
      out[i * cols_ + j] = *mid;
    }
  }
  return out;
}

std::vector<double> Denoiser::apply_cnn(std::span<const double> x,
                                        const NetworkDescriptor& net) const {
  const std::size_t pixels = rows_ * cols_;
  std::vector<double> act(x.begin(), x.end());  // [pixel][channel]
  int channels = 1;
  for (const ConvLayer& L : net.layers) {
    const int rh = L.kh / 2;
    const int rw = L.kw / 2;
    std::vector<double> next(pixels * static_cast<std::size_t>(L.c_out));
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) {
        double* out = &next[(i * cols_ + j) * static_cast<std::size_t>(L.c_out)];
        for (int co = 0; co < L.c_out; ++co) out[co] = L.bias[static_cast<std::size_t>(co)];
        // True convolution: an impulse at p reproduces the kernel centred on p.
        for (int a = 0; a < L.kh; ++a) {
          const std::size_t src_row = wrap(static_cast<std::ptrdiff_t>(i) - (a - rh), rows_);
          for (int b = 0; b < L.kw; ++b) {
            const std::size_t src_col = wrap(static_cast<std::ptrdiff_t>(j) - (b - rw), cols_);
            const double* in = &act[(src_row * cols_ + src_col) * static_cast<std::size_t>(channels)];
            const float* k = &L.kernel[static_cast<std::size_t>((a * L.kw + b) * L.c_in * L.c_out)];
            for (int ci = 0; ci < L.c_in; ++ci) {
              const double v = in[ci];
              const float* krow = k + static_cast<std::ptrdiff_t>(ci) * L.c_out;
              for (int co = 0; co < L.c_out; ++co) out[co] += static_cast<double>(krow[co]) * v;
            }
          }
        }
        if (L.activation == Activation::relu) {
          for (int co = 0; co < L.c_out; ++co) out[co] = std::max(out[co], 0.0);
        }
      }
    }
    act = std::move(next);
    channels = L.c_out;
  }
  if (net.residual) {
    for (std::size_t p = 0; p < pixels; ++p) act[p] = x[p] - act[p];
  }
  return act;
}

Vector Denoiser::denoise_field(const Vector& E) const {
  if (static_cast<std::size_t>(E.size()) != rows_ * cols_) {
    throw InvalidArgument("field length does not match the denoiser raster");
  }
  if (is_identity()) return E;
  if (!is_cnn()) {
    const auto out = apply(std::span<const double>(E.data(), static_cast<std::size_t>(E.size())));
    return Eigen::Map<const Vector>(out.data(), E.size());
  }
  const Vector scaled = E / normalization_;
  const auto out =
      apply(std::span<const double>(scaled.data(), static_cast<std::size_t>(scaled.size())));
  return normalization_ * Eigen::Map<const Vector>(out.data(), E.size());
}

Vector red_gradient(const Denoiser& denoiser, const Vector& E) {
  if (denoiser.is_identity()) {
    if (static_cast<std::size_t>(E.size()) != denoiser.rows() * denoiser.cols()) {
      throw InvalidArgument("field length does not match the denoiser raster");
    }
    return Vector::Zero(E.size());
  }
  return E - denoiser.denoise_field(E);
}

double red_value(const Denoiser& denoiser, const Vector& E) {
  return 0.5 * E.dot(red_gradient(denoiser, E));
}

RedConditionReport check_red_conditions(const Denoiser& denoiser,
                                        const std::vector<std::vector<double>>& samples,
                                        const std::vector<double>& c_values, std::uint64_t seed,
                                        int power_iterations) {
  if (samples.empty()) throw InvalidArgument("check_red_conditions needs at least one sample");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_unit = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    return v;
  };

  RedConditionReport report;
  report.samples = samples.size();
  for (const auto& x : samples) {
    const std::size_t n = x.size();
    const std::vector<double> cx0 = denoiser.apply(x);

    for (double c : c_values) {
      std::vector<double> scaled(n);
      for (std::size_t i = 0; i < n; ++i) scaled[i] = c * x[i];
      const std::vector<double> lhs = denoiser.apply(scaled);
      double diff = 0.0;
      double ref = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        diff += (lhs[i] - c * cx0[i]) * (lhs[i] - c * cx0[i]);
        ref += (c * cx0[i]) * (c * cx0[i]);
      }
      const double res = ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
      report.homogeneity_residual = std::max(report.homogeneity_residual, res);
    }

    const double rms = norm2(x) / std::sqrt(static_cast<double>(n));
    const double h = 1e-3 * (rms > 0.0 ? rms : 1.0);
    auto jvp = [&](const std::vector<double>& v) {
      std::vector<double> plus(n), minus(n);
      for (std::size_t i = 0; i < n; ++i) {
        plus[i] = x[i] + h * v[i];
        minus[i] = x[i] - h * v[i];
      }
      const auto cp = denoiser.apply(plus);
      const auto cm = denoiser.apply(minus);
      std::vector<double> out(n);
      for (std::size_t i = 0; i < n; ++i) out[i] = (cp[i] - cm[i]) / (2.0 * h);
      return out;
    };

    std::vector<double> v = random_unit(n);
    double estimate = 0.0;
    for (int it = 0; it < power_iterations; ++it) {
      std::vector<double> jv = jvp(v);
      estimate = norm2(jv);
      if (estimate == 0.0) break;
      for (std::size_t i = 0; i < n; ++i) v[i] = jv[i] / estimate;
    }
    report.jacobian_norm = std::max(report.jacobian_norm, estimate);

    const auto a = random_unit(n);
    const auto b = random_unit(n);
    const auto ja = jvp(a);
    const auto jb = jvp(b);
    const double denom = norm2(ja) * norm2(b) + norm2(a) * norm2(jb);
    const double asym = std::abs(dot(ja, b) - dot(a, jb));
    report.symmetry_residual =
        std::max(report.symmetry_residual, denom > 0.0 ? asym / denom : asym);
  }
  return report;
}

}  // namespace elastrec
