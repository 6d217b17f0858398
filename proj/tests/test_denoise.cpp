#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"

#include "elastrec/denoise.hpp"
#include "elastrec/errors.hpp"

using namespace elastrec;
namespace fs = std::filesystem;

namespace {

fs::path scratch_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "elastrec_test_denoise";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<double> random_raster(std::size_t n, std::mt19937_64& rng, double lo = 0.0,
                                  double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

std::vector<unsigned char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ConvLayer make_layer(int kh, int kw, int ci, int co, std::mt19937_64& rng,
                     Activation act = Activation::identity) {
  ConvLayer L;
  L.kh = kh;
  L.kw = kw;
  L.c_in = ci;
  L.c_out = co;
  L.activation = act;
  std::uniform_real_distribution<float> d(-0.5f, 0.5f);
  L.kernel.resize(static_cast<std::size_t>(kh * kw * ci * co));
  for (float& w : L.kernel) w = d(rng);
  L.bias.resize(static_cast<std::size_t>(co));
  for (float& w : L.bias) w = d(rng);
  return L;
}

// Reference network evaluation written as correlation with a flipped kernel.
std::vector<double> reference_cnn(const NetworkDescriptor& net, const std::vector<double>& x,
                                  int rows, int cols) {
  std::vector<std::vector<double>> act(1, x);  // [channel][pixel]
  for (const ConvLayer& L : net.layers) {
    std::vector<std::vector<double>> next(static_cast<std::size_t>(L.c_out),
                                          std::vector<double>(x.size()));
    for (int co = 0; co < L.c_out; ++co)
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          double acc = L.bias[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < L.c_in; ++ci)
            for (int u = -(L.kh / 2); u <= L.kh / 2; ++u)
              for (int v = -(L.kw / 2); v <= L.kw / 2; ++v) {
                // flipped index: offset (u, v) reads kernel tap (rh - u, rw - v)
                const int a = L.kh / 2 - u;
                const int b = L.kw / 2 - v;
                const int si = ((i + u) % rows + rows) % rows;
                const int sj = ((j + v) % cols + cols) % cols;
                acc += static_cast<double>(
                           L.kernel[static_cast<std::size_t>(((a * L.kw + b) * L.c_in + ci) * L.c_out + co)]) *
                       act[static_cast<std::size_t>(ci)][static_cast<std::size_t>(si * cols + sj)];
              }
          if (L.activation == Activation::relu) acc = std::max(acc, 0.0);
          next[static_cast<std::size_t>(co)][static_cast<std::size_t>(i * cols + j)] = acc;
        }
    act = std::move(next);
  }
  std::vector<double> out = act[0];
  if (net.residual)
    for (std::size_t p = 0; p < out.size(); ++p) out[p] = x[p] - out[p];
  return out;
}

}  // namespace

TEST_CASE("gaussian with zero width is the identity") {
  std::mt19937_64 rng(1);
  const auto x = random_raster(35, rng);
  const Denoiser d = Denoiser::gaussian(0.0, 5, 7);
  CHECK(d.apply(x) == x);
  CHECK(d.kernel_radius() == 0);
}

TEST_CASE("gaussian kernel is normalized, radially symmetric and preserves constants") {
  const Denoiser d = Denoiser::gaussian(1.3, 16, 16);
  CHECK(d.kernel_radius() == 6);
  double total = 0.0;
  for (double w : d.kernel_weights()) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  const int w = 2 * d.kernel_radius() + 1;
  const auto& k = d.kernel_weights();
  for (int a = 0; a < w; ++a)
    for (int b = 0; b < w; ++b) {
      CHECK(k[static_cast<std::size_t>(a * w + b)] == doctest::Approx(k[static_cast<std::size_t>(b * w + a)]));
      CHECK(k[static_cast<std::size_t>(a * w + b)] ==
            doctest::Approx(k[static_cast<std::size_t>((w - 1 - a) * w + b)]));
    }
  const std::vector<double> c(256, 4.2e4);
  for (double v : d.apply(c)) CHECK(v == doctest::Approx(4.2e4).epsilon(1e-13));
}

TEST_CASE("RED gradient of a linear filter is (I - W) E") {
  std::mt19937_64 rng(2);
  const std::size_t rows = 9, cols = 7;
  const Denoiser d = Denoiser::gaussian(1.0, rows, cols);
  const Eigen::MatrixXd W =
      oracle::circular_convolution_matrix(rows, cols, d.kernel_weights(), d.kernel_radius());
  const Vector E = oracle::random_vector(static_cast<Eigen::Index>(rows * cols), rng, 1e4, 6e4);
  const Vector ref = E - W * E;
  CHECK((red_gradient(d, E) - ref).norm() <= 1e-10 * ref.norm());
  CHECK(red_value(d, E) == doctest::Approx(0.5 * E.dot(ref)).epsilon(1e-12));
  // Row sums of W are one, so constants sit in the null space of the prior.
  CHECK((W.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-14);
}

TEST_CASE("RED gradient matches finite differences of the RED value") {
  std::mt19937_64 rng(3);
  const Denoiser d = Denoiser::gaussian(1.0, 8, 8);
  const Vector E = oracle::random_vector(64, rng, 1e4, 6e4);
  const Vector grad = red_gradient(d, E);
  const double h = 1e-3 * E.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < E.size(); ++j) {
    Vector ep = E, em = E;
    ep[j] += h;
    em[j] -= h;
    const double fd = (red_value(d, ep) - red_value(d, em)) / (2 * h);
    CHECK(std::abs(fd - grad[j]) <= 1e-6 * std::abs(grad[j]));
  }
}

TEST_CASE("identity denoiser yields an exactly zero prior") {
  std::mt19937_64 rng(4);
  const Denoiser d = Denoiser::identity(4, 5);
  const Vector E = oracle::random_vector(20, rng, 1e4, 6e4);
  CHECK(red_gradient(d, E).isZero(0.0));
  CHECK(red_value(d, E) == 0.0);
  CHECK(d.denoise_field(E) == E);
  CHECK_THROWS_AS(red_gradient(d, Vector::Ones(3)), InvalidArgument);
}

TEST_CASE("RED conditions for the gaussian, identity and median filters") {
  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> samples;
  for (int s = 0; s < 4; ++s) samples.push_back(random_raster(16 * 16, rng, 1e4, 6e4));
  const std::vector<double> cs = {0.5, 2.0, 10.0};

  const auto g = check_red_conditions(Denoiser::gaussian(1.0, 16, 16), samples, cs);
  CHECK(g.samples == 4);
  CHECK(g.homogeneity_residual <= 1e-12);
  CHECK(g.jacobian_norm <= 1.0 + 1e-6);
  CHECK(g.jacobian_norm >= 0.99);
  CHECK(g.symmetry_residual <= 1e-8);

  const auto id = check_red_conditions(Denoiser::identity(16, 16), samples, cs);
  CHECK(id.homogeneity_residual == 0.0);
  CHECK(id.jacobian_norm == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(id.symmetry_residual <= 1e-10);

  // The median is homogeneous for c > 0 but its Jacobian is a row selection
  // and is not symmetric.
  const auto med = check_red_conditions(Denoiser::median(3, 16, 16), samples, cs);
  CHECK(med.homogeneity_residual == 0.0);
  CHECK(med.symmetry_residual > 1e-3);

  CHECK_THROWS_AS(check_red_conditions(Denoiser::identity(2, 2), {}, cs), InvalidArgument);
}

TEST_CASE("gaussian filter is non-expansive") {
  std::mt19937_64 rng(6);
  const Denoiser d = Denoiser::gaussian(2.0, 12, 10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_raster(120, rng, -1.0, 1.0);
    const auto y = random_raster(120, rng, -1.0, 1.0);
    const auto cx = d.apply(x);
    const auto cy = d.apply(y);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      num += (cx[i] - cy[i]) * (cx[i] - cy[i]);
      den += (x[i] - y[i]) * (x[i] - y[i]);
    }
    CHECK(num <= den * (1 + 1e-12));
  }
}

TEST_CASE("median filter behavior") {
  std::vector<double> x(25, 1.0);
  x[12] = 100.0;  // isolated spike
  const Denoiser d = Denoiser::median(3, 5, 5);
  for (double v : d.apply(x)) CHECK(v == 1.0);
  CHECK(Denoiser::median(1, 5, 5).apply(x) == x);
  CHECK_THROWS_AS(Denoiser::median(4, 5, 5), InvalidArgument);
  CHECK_THROWS_AS(Denoiser::median(0, 5, 5), InvalidArgument);
}

TEST_CASE("denoiser input validation") {
  const Denoiser d = Denoiser::gaussian(1.0, 3, 3);
  CHECK_THROWS_AS(d.apply(std::vector<double>(8, 0.0)), InvalidArgument);
  std::vector<double> bad(9, 0.0);
  bad[4] = std::nan("");
  CHECK_THROWS_AS(d.apply(bad), InvalidArgument);
  CHECK_THROWS_AS(Denoiser::gaussian(-1.0, 3, 3), InvalidArgument);
  CHECK_THROWS_AS(Denoiser::identity(0, 3), InvalidArgument);
}

TEST_CASE("denoiser string parsing") {
  CHECK(Denoiser::parse("identity", 4, 4).is_identity());
  CHECK(Denoiser::parse("gaussian:1.5", 4, 4).describe() == "gaussian:1.5");
  CHECK(Denoiser::parse("median:5", 4, 4).describe() == "median:5");
  CHECK_THROWS_AS(Denoiser::parse("gaussian:abc", 4, 4), InvalidArgument);
  CHECK_THROWS_AS(Denoiser::parse("median:3x", 4, 4), InvalidArgument);
  CHECK_THROWS_AS(Denoiser::parse("bilateral:2", 4, 4), InvalidArgument);
  CHECK_THROWS_AS(Denoiser::parse("cnn:", 4, 4), InvalidArgument);
  CHECK_THROWS_AS(Denoiser::parse("cnn:/nonexistent/weights.elnet", 4, 4), IoError);
}

TEST_CASE("network impulse response reproduces the kernel centred on the impulse") {
  NetworkDescriptor net;
  ConvLayer L;
  L.kh = 3;
  L.kw = 3;
  L.c_in = 1;
  L.c_out = 1;
  L.kernel = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  L.bias = {0};
  net.layers.push_back(L);
  const Denoiser d = Denoiser::cnn(net, 5, 5);
  std::vector<double> x(25, 0.0);
  x[2 * 5 + 2] = 1.0;
  const auto y = d.apply(x);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      CHECK(y[static_cast<std::size_t>((1 + a) * 5 + (1 + b))] == L.kernel[static_cast<std::size_t>(a * 3 + b)]);
  // Off-support pixels stay zero; wrap-around places taps across the edge.
  CHECK(y[0] == 0.0);
  std::vector<double> corner(25, 0.0);
  corner[0] = 1.0;
  const auto yc = d.apply(corner);
  CHECK(yc[24] == 1.0);  // tap (0, 0) lands at offset (-1, -1), wrapped
  CHECK(yc[6] == 9.0);
}

TEST_CASE("multi-layer network matches a reference evaluation") {
  std::mt19937_64 rng(7);
  NetworkDescriptor net;
  net.layers.push_back(make_layer(3, 3, 1, 4, rng, Activation::relu));
  net.layers.push_back(make_layer(1, 1, 4, 3, rng, Activation::relu));
  net.layers.push_back(make_layer(3, 5, 3, 1, rng));
  for (bool residual : {false, true}) {
    net.residual = residual;
    const Denoiser d = Denoiser::cnn(net, 6, 7);
    const auto x = random_raster(42, rng, -1.0, 1.0);
    const auto y = d.apply(x);
    const auto ref = reference_cnn(net, x, 6, 7);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("CNN fields pass through the normalization") {
  NetworkDescriptor net;
  ConvLayer L;
  L.kh = L.kw = L.c_in = L.c_out = 1;
  L.kernel = {1.0f};
  L.bias = {0.125f};
  net.layers.push_back(L);
  net.normalization = 1e5;
  const Denoiser d = Denoiser::cnn(net, 2, 2);
  CHECK(d.normalization() == 1e5);
  const Vector E = Vector::Constant(4, 3e4);
  const Vector out = d.denoise_field(E);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(3e4 + 12500.0));
  // Classical filters never see the scale.
  CHECK(Denoiser::gaussian(1.0, 2, 2).normalization() == 1.0);
}

TEST_CASE("network file round trip") {
  std::mt19937_64 rng(8);
  NetworkDescriptor net;
  net.residual = true;
  net.normalization = 2.5e4;
  net.layers.push_back(make_layer(3, 3, 1, 2, rng, Activation::relu));
  net.layers.push_back(make_layer(3, 3, 2, 1, rng));
  const fs::path p = scratch_file("roundtrip.elnet");
  save_network(p, net);
  const NetworkDescriptor back = load_network(p);
  CHECK(back.residual);
  CHECK(back.normalization == 2.5e4);
  REQUIRE(back.layers.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.layers[i].kernel == net.layers[i].kernel);
    CHECK(back.layers[i].bias == net.layers[i].bias);
    CHECK(back.layers[i].activation == net.layers[i].activation);
    CHECK(back.layers[i].c_out == net.layers[i].c_out);
  }
}

TEST_CASE("hand-built network file layout") {
  // magic, u64 manifest length, manifest, then kernel and bias per layer
  const std::string manifest =
      R"({"format":"ELNET1","residual":false,"layers":[{"type":"conv2d","kernel_shape":[1,1,1,1],"activation":"identity"}]})";
  std::vector<unsigned char> bytes = {'E', 'L', 'N', 'E', 'T', '1', '\n'};
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>((manifest.size() >> (8 * i)) & 0xff));
  bytes.insert(bytes.end(), manifest.begin(), manifest.end());
  for (unsigned char c : {0x00, 0x00, 0x00, 0x40}) bytes.push_back(c);  // 2.0f
  for (unsigned char c : {0x00, 0x00, 0x80, 0x3f}) bytes.push_back(c);  // 1.0f
  const fs::path p = scratch_file("handmade.elnet");
  write_bytes(p, bytes);
  const NetworkDescriptor net = load_network(p);
  REQUIRE(net.layers.size() == 1);
  CHECK(net.layers[0].kernel[0] == 2.0f);
  CHECK(net.layers[0].bias[0] == 1.0f);
  CHECK(net.normalization == kDefaultNormalization);
  const Denoiser d = Denoiser::cnn(net, 1, 3);
  CHECK(d.apply(std::vector<double>{1, 2, 3}) == std::vector<double>{3, 5, 7});
}

TEST_CASE("network file error taxonomy") {
  std::mt19937_64 rng(9);
  NetworkDescriptor net;
  net.layers.push_back(make_layer(3, 3, 1, 2, rng));
  net.layers.push_back(make_layer(1, 1, 2, 1, rng));
  const fs::path good = scratch_file("good.elnet");
  save_network(good, net);
  const auto bytes = file_bytes(good);
  const fs::path p = scratch_file("bad.elnet");

  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    write_bytes(p, b);
    CHECK_THROWS_AS(load_network(p), BadMagicError);
    write_bytes(p, {'E', 'L', 'R', 'A', 'S', '1', '\n', 0, 0, 0, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(load_network(p), BadMagicError);
  }
  SUBCASE("every strict prefix is reported as truncated") {
    for (std::size_t len = 0; len < bytes.size(); len += (len < 40 ? 1 : 7)) {
      write_bytes(p, std::vector<unsigned char>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len)));
      CHECK_THROWS_AS(load_network(p), TruncatedFileError);
    }
  }
  SUBCASE("trailing bytes are a shape error") {
    auto b = bytes;
    b.push_back(0);
    write_bytes(p, b);
    CHECK_THROWS_AS(load_network(p), ShapeError);
  }
  SUBCASE("channel chaining is a shape error") {
    NetworkDescriptor broken = net;
    broken.layers[1] = make_layer(1, 1, 3, 1, rng);
    CHECK_THROWS_AS(broken.validate(), ShapeError);
    CHECK_THROWS_AS(save_network(p, broken), ShapeError);
    NetworkDescriptor even = net;
    even.layers[0] = make_layer(2, 2, 1, 2, rng);
    CHECK_THROWS_AS(even.validate(), ShapeError);
  }
  SUBCASE("malformed manifest") {
    const std::string junk = "{not json";
    std::vector<unsigned char> b = {'E', 'L', 'N', 'E', 'T', '1', '\n'};
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<unsigned char>((junk.size() >> (8 * i)) & 0xff));
    b.insert(b.end(), junk.begin(), junk.end());
    write_bytes(p, b);
    CHECK_THROWS_AS(load_network(p), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_network(scratch_file("does_not_exist.elnet")), IoError);
  }
}
