#include "elastrec/metrics_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "json.hpp"

#include "elastrec/errors.hpp"

namespace elastrec {

namespace {

constexpr char kRasterMagic[] = "ELRAS1\n";
constexpr std::size_t kMagicSize = 7;

const char* dtype_name(SampleType t) { return t == SampleType::f64le ? "f64le" : "f32le"; }
std::size_t dtype_size(SampleType t) { return t == SampleType::f64le ? 8 : 4; }

void check_layout(const Raster& r) {
  if (r.rows == 0 || r.cols == 0 || r.channels == 0) {
    throw InvalidArgument("raster dimensions must be positive");
  }
  if (r.data.size() != r.rows * r.cols * r.channels) {
    throw InvalidArgument("raster data length does not match rows*cols*channels");
  }
}

void check_same_shape(const Raster& a, const Raster& b) {
  check_layout(a);
  check_layout(b);
  if (a.rows != b.rows || a.cols != b.cols || a.channels != b.channels) {
    throw InvalidArgument("raster shapes differ");
  }
}

double mean_squared_error(const Raster& a, const Raster& b) {
  check_same_shape(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

}  // namespace

Raster field_to_raster(const Mesh& mesh, const Vector& nodal, std::string units,
                       SampleType dtype) {
  Raster r;
  r.rows = mesh.raster_rows();
  r.cols = mesh.raster_cols();
  r.channels = 1;
  r.dtype = dtype;
  r.units = std::move(units);
  r.data = nodal_to_raster(mesh, nodal);
  if (dtype == SampleType::f32le) {
    for (double& v : r.data) v = static_cast<double>(static_cast<float>(v));
  }
  return r;
}

Raster dofs_to_raster(const Mesh& mesh, const Vector& dofs, std::string units,
                      SampleType dtype) {
  if (static_cast<std::size_t>(dofs.size()) != mesh.dof_count()) {
    throw InvalidArgument("DOF vector length does not match mesh");
  }
  Raster r;
  r.rows = mesh.raster_rows();
  r.cols = mesh.raster_cols();
  r.channels = 2;
  r.dtype = dtype;
  r.units = std::move(units);
  r.data.assign(dofs.data(), dofs.data() + dofs.size());
  if (dtype == SampleType::f32le) {
    for (double& v : r.data) v = static_cast<double>(static_cast<float>(v));
  }
  return r;
}

Vector raster_values(const Raster& r) {
  return Eigen::Map<const Vector>(r.data.data(), static_cast<Eigen::Index>(r.data.size()));
}

void write_raster(const std::filesystem::path& path, const Raster& r) {
  check_layout(r);
  for (double v : r.data) {
    if (!std::isfinite(v)) throw InvalidArgument("raster contains non-finite values");
  }
  nlohmann::json manifest = {{"rows", r.rows},
                             {"cols", r.cols},
                             {"channels", r.channels},
                             {"dtype", dtype_name(r.dtype)},
                             {"units", r.units}};
  if (r.normalization) manifest["normalization"] = *r.normalization;
  const std::string text = manifest.dump();

  std::vector<unsigned char> bytes;
  bytes.reserve(kMagicSize + 8 + text.size() + r.data.size() * dtype_size(r.dtype));
  bytes.insert(bytes.end(), kRasterMagic, kRasterMagic + kMagicSize);
  const std::uint64_t len = text.size();
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>((len >> (8 * i)) & 0xffu));
  bytes.insert(bytes.end(), text.begin(), text.end());
  for (double v : r.data) {
    if (r.dtype == SampleType::f32le) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xffu));
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xffu));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());

  const std::size_t probe = std::min(bytes.size(), kMagicSize);
  if (std::memcmp(bytes.data(), kRasterMagic, probe) != 0) {
    throw BadMagicError("not an ELRAS1 file: " + path.string());
  }
  if (bytes.size() < kMagicSize + 8) throw TruncatedFileError("raster header truncated: " + path.string());
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | bytes[kMagicSize + static_cast<std::size_t>(i)];
  const std::size_t begin = kMagicSize + 8;
  if (len > bytes.size() - begin) throw TruncatedFileError("raster manifest truncated: " + path.string());

  Raster r;
  try {
    const auto manifest = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(begin),
                                                bytes.begin() + static_cast<std::ptrdiff_t>(begin + len));
    r.rows = manifest.at("rows").get<std::size_t>();
    r.cols = manifest.at("cols").get<std::size_t>();
    r.channels = manifest.at("channels").get<std::size_t>();
    const std::string dtype = manifest.at("dtype").get<std::string>();
    if (dtype == "f32le") {
      r.dtype = SampleType::f32le;
    } else if (dtype == "f64le") {
      r.dtype = SampleType::f64le;
    } else {
      throw FormatError("unsupported raster dtype '" + dtype + "'");
    }
    r.units = manifest.value("units", std::string());
    if (manifest.contains("normalization")) r.normalization = manifest["normalization"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed raster manifest in " + path.string() + ": " + e.what());
  }
  if (r.rows == 0 || r.cols == 0 || r.channels == 0) {
    throw ShapeError("raster manifest declares an empty shape");
  }

  const std::size_t count = r.rows * r.cols * r.channels;
  const std::size_t width = dtype_size(r.dtype);
  const std::size_t payload = bytes.size() - begin - len;
  if (payload < count * width) {
    throw TruncatedFileError("raster data truncated: expected " + std::to_string(count * width) +
                             " bytes, found " + std::to_string(payload));
  }
  if (payload > count * width) {
    throw ShapeError("raster data longer than its manifest declares");
  }

  r.data.resize(count);
  const unsigned char* p = bytes.data() + begin + len;
  for (std::size_t k = 0; k < count; ++k, p += width) {
    if (r.dtype == SampleType::f32le) {
      std::uint32_t bits = 0;
      for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
      r.data[k] = static_cast<double>(std::bit_cast<float>(bits));
    } else {
      std::uint64_t bits = 0;
      for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
      r.data[k] = std::bit_cast<double>(bits);
    }
  }
  return r;
}

double rmse(const Raster& a, const Raster& b) { return std::sqrt(mean_squared_error(a, b)); }

double psnr(const Raster& a, const Raster& b, double peak) {
  if (!(peak > 0.0)) throw InvalidArgument("PSNR peak must be positive");
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(peak) - 10.0 * std::log10(mse);
}

double contrast_ratio(const Raster& r) {
  check_layout(r);
  const auto [lo, hi] = std::minmax_element(r.data.begin(), r.data.end());
  if (!(*lo > 0.0)) throw InvalidArgument("contrast ratio needs a positive minimum");
  return *hi / *lo;
}

std::vector<std::pair<std::size_t, double>> cross_section(const Raster& r, std::size_t row) {
  check_layout(r);
  if (row >= r.rows) {
    throw InvalidArgument("row " + std::to_string(row) + " out of range (raster has " +
                          std::to_string(r.rows) + " rows)");
  }
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(r.cols);
  for (std::size_t c = 0; c < r.cols; ++c) out.emplace_back(c, r.at(row, c));
  return out;
}

}  // namespace elastrec
