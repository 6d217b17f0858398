#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "elastrec/denoise.hpp"
#include "elastrec/errors.hpp"
#include "elastrec/fem.hpp"
#include "elastrec/mesh.hpp"
#include "elastrec/metrics_io.hpp"
#include "elastrec/simulate.hpp"
#include "elastrec/solve.hpp"

namespace elastrec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Help-text markers distinguishing values taken from the published
// experiment from choices made for this implementation.
const std::string kPublished = " [published setting]";
const std::string kArtifact = " [artifact default]";

double parse_db(const std::string& text, const std::string& what) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "inf" || t == "+inf" || t == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw InvalidArgument(what + ": not a number: '" + text + "'");
  }
  if (used != t.size() || !std::isfinite(v)) {
    throw InvalidArgument(what + ": expected a finite dB value or 'inf', got '" + text + "'");
  }
  return v;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

void ensure_parent(const fs::path& p) {
  const fs::path parent = p.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw IoError("cannot create directory " + parent.string() + ": " + ec.message());
}

std::ofstream open_text(const fs::path& p) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  return out;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream out = open_text(p);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + p.string());
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

// The effective configuration of a subcommand, reloadable with --config.
void dump_config(const CLI::App& sub, const fs::path& output) {
  fs::path p = output;
  p += ".config.ini";
  std::ofstream out = open_text(p);
  out << "# elastrec " << sub.get_name() << '\n';
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || opt->get_lnames().empty()) continue;
    std::string value;
    if (opt->count() > 0) {
      value = CLI::detail::join(opt->results(), " ");
    } else {
      value = opt->get_default_str();
    }
    if (value.empty()) continue;
    out << name << '=' << value << '\n';
  }
  if (!out) throw IoError("failed writing " + p.string());
}

struct MeasurementFiles {
  fs::path um, f, sigma;
};

MeasurementFiles measurement_paths(const std::string& prefix) {
  return {prefix + "um.elras", prefix + "f.elras", prefix + "sigma.json"};
}

struct Experiment {
  std::size_t nx = 0, ny = 0;
  double width = 0.1, height = 0.1;
  MaterialParams params;
  MeasurementSet m;
};

Experiment load_experiment(const std::string& prefix) {
  const MeasurementFiles files = measurement_paths(prefix);
  const json side = read_json(files.sigma);
  Experiment ex;
  try {
    ex.nx = side.at("nx").get<std::size_t>();
    ex.ny = side.at("ny").get<std::size_t>();
    ex.width = side.at("width").get<double>();
    ex.height = side.at("height").get<double>();
    ex.params = MaterialParams::from_hz(side.at("freq_hz").get<double>(), side.at("rho").get<double>(),
                                        side.at("nu").get<double>());
    ex.m.sigma_n = side.at("sigma_n").get<double>();
    ex.m.sigma_w = side.at("sigma_w").get<double>();
    ex.m.seed = side.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError("incomplete sidecar " + files.sigma.string() + ": " + e.what());
  }
  const Raster um = read_raster(files.um);
  const Raster f = read_raster(files.f);
  for (const Raster* r : {&um, &f}) {
    if (r->rows != ex.ny + 1 || r->cols != ex.nx + 1 || r->channels != 2) {
      throw ShapeError("measurement raster shape does not match the sidecar mesh");
    }
  }
  ex.m.u_m = raster_values(um);
  ex.m.f = raster_values(f);
  return ex;
}

Mesh mesh_for_raster(const Raster& r, double width, double height) {
  if (r.channels != 1) throw ShapeError("expected a single-channel elasticity raster");
  if (r.rows < 2 || r.cols < 2) throw ShapeError("elasticity raster needs at least 2x2 pixels");
  return build_grid_mesh(r.cols - 1, r.rows - 1, width, height);
}

void write_trace(const fs::path& p, const ReconstructionResult& result) {
  std::ofstream out = open_text(p);
  out << "outer,inner,objective,g,red,step,grad_norm,delta_norm\n";
  for (const TraceRow& row : result.trace) {
    out << row.outer << ',' << row.inner << ',' << format_double(row.objective) << ','
        << format_double(row.g) << ',' << format_double(row.red) << ',' << format_double(row.step)
        << ',' << format_double(row.grad_norm) << ',' << format_double(row.delta_norm) << '\n';
  }
  if (!out) throw IoError("failed writing " + p.string());
}

unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ELASTREC_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || cap < 1) {
      throw InvalidArgument("ELASTREC_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

// ---------------------------------------------------------------- options

struct PhantomOptions {
  std::size_t nx = 32, ny = 32;
  double width = 0.1, height = 0.1;
  std::uint64_t seed = 0;
  int lesions_min = 1, lesions_max = 3;
  std::string out;
};

struct SimulateOptions {
  std::string elasticity;
  double width = 0.1, height = 0.1;
  double freq_hz = 90.0, rho = 1000.0, nu = 0.495;
  std::string snr_u = "35", snr_f = "35";
  double excitation = kDefaultExcitation;
  std::uint64_t seed = 0;
  std::string out_prefix;
};

struct ReconstructOptions {
  std::string input_prefix;
  std::string method = "red";
  std::string denoiser = "gaussian:1";
  double lambda = 1e-6;
  std::string step = "auto";
  int inner_iters = 50, outer_iters = 10;
  double tol = 1e-5, e_floor = 100.0;
  bool warm_start = true;
  std::uint64_t seed = 0;
  std::string out, trace;
};

struct EvaluateOptions {
  std::string truth, estimate, out, profile;
  std::optional<std::size_t> row;
  std::optional<double> peak;
};

struct ExportOptions {
  std::size_t count = 200;
  std::uint64_t seed = 0;
  std::size_t nx = 32, ny = 32;
  double width = 0.1, height = 0.1;
  double freq_hz = 90.0, rho = 1000.0, nu = 0.495;
  std::string snr_u = "35", snr_f = "35";
  int inner_iters = 50, outer_iters = 10;
  double normalization = kDefaultNormalization;
  std::string out_dir;
};

struct CheckOptions {
  std::string denoiser = "gaussian:1";
  std::size_t samples = 8;
  std::size_t nx = 32, ny = 32;
  std::uint64_t seed = 0;
  int power_iterations = 50;
  std::string out;
};

// ---------------------------------------------------------------- commands

void cmd_phantom(const PhantomOptions& o, const CLI::App& sub) {
  const Mesh mesh = build_grid_mesh(o.nx, o.ny, o.width, o.height);
  PhantomSpec spec;
  spec.seed = o.seed;
  spec.lesion_count_min = o.lesions_min;
  spec.lesion_count_max = o.lesions_max;
  const Phantom p = generate_phantom_detailed(mesh, spec);
  ensure_parent(o.out);
  write_raster(o.out, field_to_raster(mesh, p.field));

  json lesions = json::array();
  for (const Lesion& l : p.lesions) {
    const std::size_t node = l.center_node;
    lesions.push_back({{"center_x", l.center.x},
                       {"center_y", l.center.y},
                       {"semi_major", l.semi_major},
                       {"semi_minor", l.semi_minor},
                       {"angle", l.angle},
                       {"modulus", l.modulus},
                       {"center_row", node / mesh.raster_cols()},
                       {"center_col", node % mesh.raster_cols()}});
  }
  write_json(fs::path(o.out).concat(".lesions.json"),
             {{"seed", o.seed}, {"background", p.background}, {"lesions", lesions}});
  dump_config(sub, o.out);
}

void cmd_simulate(const SimulateOptions& o, const CLI::App& sub) {
  const double snr_u = parse_db(o.snr_u, "--snr-u");
  const double snr_f = parse_db(o.snr_f, "--snr-f");
  const Raster er = read_raster(o.elasticity);
  const Mesh mesh = mesh_for_raster(er, o.width, o.height);
  const Vector E = raster_values(er);
  if (!(E.minCoeff() > 0.0)) throw InvalidArgument("elasticity raster must be strictly positive");
  const MaterialParams params = MaterialParams::from_hz(o.freq_hz, o.rho, o.nu);

  const ForwardSolution s = forward_solve(mesh, E, params, o.excitation);
  const MeasurementSet m = synthesize_measurements(s.u, s.f, snr_u, snr_f, o.seed);

  const MeasurementFiles files = measurement_paths(o.out_prefix);
  ensure_parent(files.um);
  write_raster(files.um, dofs_to_raster(mesh, m.u_m, "m"));
  write_raster(files.f, dofs_to_raster(mesh, m.f, "N"));
  write_json(files.sigma, {{"sigma_n", m.sigma_n},
                           {"sigma_w", m.sigma_w},
                           {"seed", o.seed},
                           {"snr_u", format_double(snr_u)},
                           {"snr_f", format_double(snr_f)},
                           {"freq_hz", o.freq_hz},
                           {"rho", o.rho},
                           {"nu", o.nu},
                           {"excitation", o.excitation},
                           {"width", o.width},
                           {"height", o.height},
                           {"nx", mesh.nx()},
                           {"ny", mesh.ny()},
                           {"forward_relative_residual", s.relative_residual}});
  dump_config(sub, files.sigma);
}

void cmd_reconstruct(const ReconstructOptions& o, const CLI::App& sub) {
  SolverConfig config;
  config.lambda = o.lambda;
  config.inner_iters = o.inner_iters;
  config.outer_iters = o.outer_iters;
  config.tol = o.tol;
  config.e_floor = o.e_floor;
  config.warm_start = o.warm_start;
  config.seed = o.seed;
  if (o.step != "auto") {
    std::size_t used = 0;
    try {
      config.step = std::stod(o.step, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != o.step.size()) {
      throw InvalidArgument("--step expects 'auto' or a positive number, got '" + o.step + "'");
    }
  }
  config.validate();

  const Experiment ex = load_experiment(o.input_prefix);
  const Mesh mesh = build_grid_mesh(ex.nx, ex.ny, ex.width, ex.height);
  const Denoiser denoiser = Denoiser::parse(o.denoiser, mesh.raster_rows(), mesh.raster_cols());

  ReconstructionResult result;
  if (o.method == "ml") {
    result = reconstruct_ml(ex.m, mesh, ex.params, config);
  } else if (o.method == "red") {
    result = reconstruct_red(ex.m, mesh, ex.params, denoiser, config);
  } else if (o.method == "pnp") {
    result = reconstruct_pnp(ex.m, mesh, ex.params, denoiser, config);
  } else if (o.method == "postprocess") {
    result = reconstruct_postprocess(ex.m, mesh, ex.params, denoiser, config);
  } else {
    throw InvalidArgument("unknown method '" + o.method + "'");
  }

  ensure_parent(o.out);
  write_raster(o.out, field_to_raster(mesh, result.E_hat));
  if (!o.trace.empty()) write_trace(o.trace, result);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << '\n';
  write_json(fs::path(o.out).concat(".summary.json"),
             {{"method", o.method},
              {"denoiser", denoiser.describe()},
              {"iterations", result.iterations_used},
              {"outer_iterations", result.outer_iterations_used},
              {"converged", result.converged},
              {"gamma_changes", result.outer_trace},
              {"warnings", result.warnings}});
  dump_config(sub, o.out);
}

void cmd_evaluate(const EvaluateOptions& o, const CLI::App& sub) {
  const Raster truth = read_raster(o.truth);
  const Raster est = read_raster(o.estimate);
  if (truth.rows != est.rows || truth.cols != est.cols || truth.channels != est.channels) {
    throw ShapeError("truth and estimate rasters differ in shape");
  }
  const std::size_t row = o.row.value_or(truth.rows / 2);
  double peak = 0.0;
  for (double v : truth.data) peak = std::max(peak, v);
  if (o.peak) peak = *o.peak;
  const double err = rmse(truth, est);
  const double scale = std::sqrt(std::inner_product(truth.data.begin(), truth.data.end(),
                                                    truth.data.begin(), 0.0) /
                                 static_cast<double>(truth.data.size()));

  const auto truth_row = cross_section(truth, row);
  const auto est_row = cross_section(est, row);

  {
    std::ofstream out = open_text(o.out);
    out << "metric,value\n";
    out << "rmse," << format_double(err) << '\n';
    out << "relative_rmse," << format_double(err / scale) << '\n';
    out << "psnr_db," << format_double(psnr(truth, est, peak)) << '\n';
    out << "peak," << format_double(peak) << '\n';
    out << "contrast_truth," << format_double(contrast_ratio(truth)) << '\n';
    out << "contrast_estimate," << format_double(contrast_ratio(est)) << '\n';
    out << "row," << row << '\n';
    if (!out) throw IoError("failed writing " + o.out);
  }
  fs::path profile = o.profile;
  if (profile.empty()) {
    profile = fs::path(o.out);
    profile.replace_extension();
    profile += "_profile.csv";
  }
  std::ofstream out = open_text(profile);
  out << "col,truth,estimate\n";
  for (std::size_t c = 0; c < truth_row.size(); ++c) {
    out << c << ',' << format_double(truth_row[c].second) << ',' << format_double(est_row[c].second)
        << '\n';
  }
  if (!out) throw IoError("failed writing " + profile.string());
  dump_config(sub, o.out);
}

void cmd_export(const ExportOptions& o, const CLI::App& sub) {
  const double snr_u = parse_db(o.snr_u, "--snr-u");
  const double snr_f = parse_db(o.snr_f, "--snr-f");
  if (o.count == 0) throw InvalidArgument("--count must be positive");
  if (!(o.normalization > 0.0)) throw InvalidArgument("--normalization must be positive");
  const Mesh mesh = build_grid_mesh(o.nx, o.ny, o.width, o.height);
  const MaterialParams params = MaterialParams::from_hz(o.freq_hz, o.rho, o.nu);
  SolverConfig config;
  config.inner_iters = o.inner_iters;
  config.outer_iters = o.outer_iters;
  config.validate();

  const fs::path dir = o.out_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  auto pair_name = [](std::size_t i, const char* kind) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu_%s.elras", i, kind);
    return std::string(buf);
  };
  auto normalized = [&](const Vector& field) {
    Raster r = field_to_raster(mesh, field / o.normalization, "Pa");
    r.normalization = o.normalization;
    return r;
  };

  std::vector<json> entries(o.count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= o.count) return;
      try {
        const std::uint64_t seed = o.seed + i;
        PhantomSpec spec;
        spec.seed = seed;
        const Vector E = generate_phantom(mesh, spec);
        const ForwardSolution s = forward_solve(mesh, E, params, kDefaultExcitation);
        // Noise streams are decorrelated from the phantom stream of the same seed.
        const MeasurementSet m =
            synthesize_measurements(s.u, s.f, snr_u, snr_f, seed ^ 0x9e3779b97f4a7c15ULL);
        const ReconstructionResult ml = reconstruct_ml(m, mesh, params, config);
        write_raster(dir / pair_name(i, "noisy"), normalized(ml.E_hat));
        write_raster(dir / pair_name(i, "clean"), normalized(E));
        entries[i] = {{"index", i},
                      {"seed", seed},
                      {"noisy", pair_name(i, "noisy")},
                      {"clean", pair_name(i, "clean")}};
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(o.count);
        return;
      }
    }
  };
  const unsigned workers = worker_count(o.count);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  write_json(dir / "pairs.json", {{"format", "ELRAS1 pairs"},
                                  {"count", o.count},
                                  {"rows", mesh.raster_rows()},
                                  {"cols", mesh.raster_cols()},
                                  {"normalization", o.normalization},
                                  {"snr_u", format_double(snr_u)},
                                  {"snr_f", format_double(snr_f)},
                                  {"pairs", entries}});
  dump_config(sub, dir / "pairs.json");
}

void cmd_check(const CheckOptions& o, const CLI::App& sub) {
  if (o.samples == 0) throw InvalidArgument("--samples must be positive");
  const Mesh mesh = build_grid_mesh(o.nx, o.ny, 0.1, 0.1);
  const Denoiser denoiser = Denoiser::parse(o.denoiser, mesh.raster_rows(), mesh.raster_cols());
  std::vector<std::vector<double>> samples;
  for (std::size_t k = 0; k < o.samples; ++k) {
    PhantomSpec spec;
    spec.seed = o.seed + k;
    Vector E = generate_phantom(mesh, spec);
    if (denoiser.is_cnn()) E /= denoiser.normalization();
    samples.push_back(nodal_to_raster(mesh, E));
  }
  const std::vector<double> c_values = {0.9, 0.99, 1.01, 1.1};
  const RedConditionReport rep =
      check_red_conditions(denoiser, samples, c_values, o.seed, o.power_iterations);
  const json j = {{"denoiser", denoiser.describe()},
                  {"samples", rep.samples},
                  {"homogeneity_residual", rep.homogeneity_residual},
                  {"jacobian_norm", rep.jacobian_norm},
                  {"symmetry_residual", rep.symmetry_residual},
                  {"c_values", c_values}};
  if (o.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(o.out, j);
    dump_config(sub, o.out);
  }
}

CLI::App* add_config(CLI::App* sub) {
  // Expanded by expand_config before parsing; registered here for --help.
  sub->add_option("--config", "key=value file using long option names; flags override it");
  return sub;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Rewrites `SUB ... --config FILE ...` into `SUB <file flags> <remaining flags>`.
// With the take-last option policy, explicit flags override file values.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& app) {
  if (args.empty() || args[0].empty() || args[0][0] == '-') return args;
  const CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(args[0]);
  } catch (const CLI::OptionNotFound&) {
    return args;
  }

  std::vector<std::string> rest;
  std::optional<std::string> file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw InvalidArgument("--config needs a file argument");
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!file) return args;

  std::ifstream in(*file);
  if (!in) throw IoError("cannot open config file " + *file);
  std::vector<std::string> out = {args[0]};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      const std::string section = trim(line.substr(1, line.size() - 2));
      if (section != sub->get_name()) {
        throw InvalidArgument(*file + ":" + std::to_string(lineno) + ": section [" + section +
                              "] does not match subcommand " + sub->get_name());
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument(*file + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
      value = value.substr(1, value.size() - 2);
    }
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (key.empty() || key == "config" || key == "help" || opt == nullptr) {
      throw InvalidArgument(*file + ":" + std::to_string(lineno) + ": unknown key '" + key +
                            "' for " + sub->get_name());
    }
    out.push_back("--" + key);
    out.push_back(value);
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

void report_error(const std::string& kind, int code, const std::string& message) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  std::cerr << json{{"error", kind}, {"exit_code", code}, {"message", line}}.dump() << std::endl;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Elasticity reconstruction from harmonic displacement measurements", "elastrec"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  PhantomOptions ph;
  CLI::App* phantom = add_config(app.add_subcommand("phantom", "Generate a random-lesion ground-truth elasticity raster"));
  phantom->add_option("--nx", ph.nx, "Cells along x" + kArtifact)->capture_default_str();
  phantom->add_option("--ny", ph.ny, "Cells along y" + kArtifact)->capture_default_str();
  phantom->add_option("--width", ph.width, "Domain width, m" + kArtifact)->capture_default_str();
  phantom->add_option("--height", ph.height, "Domain height, m" + kArtifact)->capture_default_str();
  phantom->add_option("--seed", ph.seed, "RNG seed")->capture_default_str();
  phantom->add_option("--lesions-min", ph.lesions_min, "Minimum lesion count" + kArtifact)->capture_default_str();
  phantom->add_option("--lesions-max", ph.lesions_max, "Maximum lesion count" + kArtifact)->capture_default_str();
  phantom->add_option("--out", ph.out, "Output ELRAS1 raster (Pa)")->required();
  phantom->footer("Moduli: background 10-15 kPa, lesions 30-80 kPa, contrast 2-8" + kPublished);

  SimulateOptions sm;
  CLI::App* simulate = add_config(app.add_subcommand("simulate", "Forward solve and add calibrated measurement noise"));
  simulate->add_option("--elasticity", sm.elasticity, "Input elasticity raster")->required();
  simulate->add_option("--width", sm.width, "Domain width, m" + kArtifact)->capture_default_str();
  simulate->add_option("--height", sm.height, "Domain height, m" + kArtifact)->capture_default_str();
  simulate->add_option("--freq-hz", sm.freq_hz, "Excitation frequency, Hz" + kPublished)->capture_default_str();
  simulate->add_option("--rho", sm.rho, "Density, kg/m^3" + kPublished)->capture_default_str();
  simulate->add_option("--nu", sm.nu, "Poisson ratio" + kArtifact)->capture_default_str();
  simulate->add_option("--snr-u", sm.snr_u, "Displacement SNR, dB or inf" + kPublished)->capture_default_str();
  simulate->add_option("--snr-f", sm.snr_f, "Force SNR, dB or inf" + kArtifact)->capture_default_str();
  simulate->add_option("--excitation", sm.excitation, "Top-edge axial amplitude, m" + kArtifact)->capture_default_str();
  simulate->add_option("--seed", sm.seed, "Noise seed")->capture_default_str();
  simulate->add_option("--out-prefix", sm.out_prefix, "Writes PREFIXum.elras, PREFIXf.elras, PREFIXsigma.json")->required();

  ReconstructOptions rc;
  CLI::App* reconstruct = add_config(app.add_subcommand("reconstruct", "Estimate elasticity from measurements"));
  reconstruct->add_option("--input-prefix", rc.input_prefix, "Prefix given to simulate --out-prefix")->required();
  reconstruct->add_option("--method", rc.method, "ml | red | pnp | postprocess")
      ->check(CLI::IsMember({"ml", "red", "pnp", "postprocess"}))
      ->capture_default_str();
  reconstruct->add_option("--denoiser", rc.denoiser, "identity | gaussian:SIGMA | median:W | cnn:PATH" + kArtifact)->capture_default_str();
  reconstruct->add_option("--lambda", rc.lambda, "Prior weight" + kArtifact)->capture_default_str();
  reconstruct->add_option("--step", rc.step, "auto or a fixed step size" + kArtifact)->capture_default_str();
  reconstruct->add_option("--inner-iters", rc.inner_iters, "Gradient steps per covariance update" + kArtifact)->capture_default_str();
  reconstruct->add_option("--outer-iters", rc.outer_iters, "Covariance updates" + kArtifact)->capture_default_str();
  reconstruct->add_option("--tol", rc.tol, "Relative change stopping tolerance" + kArtifact)->capture_default_str();
  reconstruct->add_option("--e-floor", rc.e_floor, "Positivity floor, Pa" + kArtifact)->capture_default_str();
  reconstruct->add_option("--warm-start", rc.warm_start, "red/pnp start from the ML estimate (on|off)" + kArtifact)->capture_default_str();
  reconstruct->add_option("--seed", rc.seed, "Power-iteration seed")->capture_default_str();
  reconstruct->add_option("--out", rc.out, "Output elasticity raster")->required();
  reconstruct->add_option("--trace", rc.trace, "Optional per-iteration CSV");

  EvaluateOptions ev;
  CLI::App* evaluate = add_config(app.add_subcommand("evaluate", "Compare an estimate with the ground truth"));
  evaluate->add_option("--truth", ev.truth, "Ground-truth raster")->required();
  evaluate->add_option("--estimate", ev.estimate, "Estimated raster")->required();
  evaluate->add_option("--row", ev.row, "Cross-section row (default: middle)");
  evaluate->add_option("--peak", ev.peak, "PSNR peak (default: truth maximum)" + kArtifact);
  evaluate->add_option("--out", ev.out, "Metrics CSV")->required();
  evaluate->add_option("--profile", ev.profile, "Cross-section CSV (default: OUT stem + _profile.csv)");

  ExportOptions ex;
  CLI::App* export_training = add_config(app.add_subcommand("export-training", "Write (ML estimate, ground truth) training pairs"));
  export_training->add_option("--count", ex.count, "Number of pairs")->capture_default_str();
  export_training->add_option("--seed", ex.seed, "First phantom seed; pair i uses seed + i")->capture_default_str();
  export_training->add_option("--nx", ex.nx, "Cells along x" + kArtifact)->capture_default_str();
  export_training->add_option("--ny", ex.ny, "Cells along y" + kArtifact)->capture_default_str();
  export_training->add_option("--width", ex.width, "Domain width, m" + kArtifact)->capture_default_str();
  export_training->add_option("--height", ex.height, "Domain height, m" + kArtifact)->capture_default_str();
  export_training->add_option("--freq-hz", ex.freq_hz, "Excitation frequency, Hz" + kPublished)->capture_default_str();
  export_training->add_option("--rho", ex.rho, "Density, kg/m^3" + kPublished)->capture_default_str();
  export_training->add_option("--nu", ex.nu, "Poisson ratio" + kArtifact)->capture_default_str();
  export_training->add_option("--snr-u", ex.snr_u, "Displacement SNR, dB or inf" + kPublished)->capture_default_str();
  export_training->add_option("--snr-f", ex.snr_f, "Force SNR, dB or inf" + kArtifact)->capture_default_str();
  export_training->add_option("--inner-iters", ex.inner_iters, "ML gradient steps per covariance update" + kArtifact)->capture_default_str();
  export_training->add_option("--outer-iters", ex.outer_iters, "ML covariance updates" + kArtifact)->capture_default_str();
  export_training->add_option("--normalization", ex.normalization, "Stored value = Pa / normalization" + kArtifact)->capture_default_str();
  export_training->add_option("--out-dir", ex.out_dir, "Output directory")->required();
  export_training->footer("Worker threads are capped by the ELASTREC_THREADS environment variable.");

  CheckOptions ck;
  CLI::App* check = add_config(app.add_subcommand("check-denoiser", "Report homogeneity, passivity and Jacobian symmetry"));
  check->add_option("--denoiser", ck.denoiser, "identity | gaussian:SIGMA | median:W | cnn:PATH")->capture_default_str();
  check->add_option("--samples", ck.samples, "Number of phantom samples")->capture_default_str();
  check->add_option("--nx", ck.nx, "Cells along x" + kArtifact)->capture_default_str();
  check->add_option("--ny", ck.ny, "Cells along y" + kArtifact)->capture_default_str();
  check->add_option("--seed", ck.seed, "Sample and direction seed")->capture_default_str();
  check->add_option("--power-iterations", ck.power_iterations, "Power-iteration sweeps" + kArtifact)->capture_default_str();
  check->add_option("--out", ck.out, "JSON report (default: stdout)");

  try {
    const std::vector<std::string> expanded = expand_config(args, app);
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const InvalidArgument& e) {
    report_error("invalid_argument", 2, e.what());
    return 2;
  } catch (const IoError& e) {
    report_error("io_error", 3, e.what());
    return 3;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    report_error("io_error", 3, e.what());
    return 3;
  } catch (const CLI::ParseError& e) {
    report_error("invalid_argument", 2, e.what());
    return 2;
  }

  try {
    if (phantom->parsed()) cmd_phantom(ph, *phantom);
    else if (simulate->parsed()) cmd_simulate(sm, *simulate);
    else if (reconstruct->parsed()) cmd_reconstruct(rc, *reconstruct);
    else if (evaluate->parsed()) cmd_evaluate(ev, *evaluate);
    else if (export_training->parsed()) cmd_export(ex, *export_training);
    else if (check->parsed()) cmd_check(ck, *check);
  } catch (const InvalidArgument& e) {
    report_error("invalid_argument", 2, e.what());
    return 2;
  } catch (const IoError& e) {
    report_error("io_error", 3, e.what());
    return 3;
  } catch (const NumericalError& e) {
    report_error("numerical_error", 4, e.what());
    return 4;
  } catch (const std::exception& e) {
    report_error("internal_error", 1, e.what());
    return 1;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace elastrec::cli
