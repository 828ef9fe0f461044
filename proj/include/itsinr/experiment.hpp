#pragma once

// Experiment configuration and the command implementations behind the
// `itsinr` CLI: denoise, ablate-n, compare, theorem and metrics.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "itsinr/image.hpp"
#include "itsinr/metrics.hpp"
#include "itsinr/models.hpp"
#include "itsinr/report.hpp"
#include "itsinr/snr_lab.hpp"
#include "itsinr/training.hpp"

namespace itsinr {

/// Invalid user configuration; the CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::string input;  // PGM/PPM path; empty selects the phantom
  PhantomKind phantom = PhantomKind::composite;
  std::size_t size = 96;
  double sigma255 = 25.0;
  ModelConfig model;
  TrainConfig train;
  std::string output_dir = "out";
  int runs = 1;
  int workers = 1;
  std::uint64_t seed = 0;
  bool lr_explicit = false;

  /// Learning rate after kind-specific defaulting.
  double learning_rate() const {
    return lr_explicit ? train.lr : TrainConfig::defaults(model.kind).lr;
  }

  std::string input_label() const {
    return input.empty() ? std::string(phantom_name(phantom)) + std::to_string(size)
                         : std::filesystem::path(input).filename().string();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) {
    throw ConfigError("invalid value '" + text + "' for key '" + key + "'");
  }
  return v;
}

}  // namespace detail

/// Applies one key = value setting. Key names use snake_case; dashes are
/// accepted as separators too so CLI flag spellings work unchanged.
inline void apply_setting(ExperimentConfig& cfg, std::string key, const std::string& raw) {
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string value = detail::trim(raw);
  using detail::parse_value;
  try {
    if (key == "input") cfg.input = value;
    else if (key == "phantom") cfg.phantom = parse_phantom(value);
    else if (key == "size") cfg.size = parse_value<std::size_t>(key, value);
    else if (key == "sigma") cfg.sigma255 = parse_value<double>(key, value);
    else if (key == "model") {
      const ModelKind kind = parse_model_kind(value);
      const std::size_t ch = cfg.model.out_channels;
      const std::uint64_t seed = cfg.model.seed;
      cfg.model = ModelConfig::defaults(kind);
      cfg.model.out_channels = ch;
      cfg.model.seed = seed;
    }
    else if (key == "depth") cfg.model.depth = parse_value<std::size_t>(key, value);
    else if (key == "width") cfg.model.width = parse_value<std::size_t>(key, value);
    else if (key == "omega0") cfg.model.omega0 = parse_value<double>(key, value);
    else if (key == "wire_omega") cfg.model.wire_omega = parse_value<double>(key, value);
    else if (key == "wire_s") cfg.model.wire_s = parse_value<double>(key, value);
    else if (key == "ff_count") cfg.model.ff_count = parse_value<std::size_t>(key, value);
    else if (key == "ff_scale") cfg.model.ff_scale = parse_value<double>(key, value);
    else if (key == "iters") cfg.train.iterations = parse_value<int>(key, value);
    else if (key == "lr") {
      cfg.train.lr = parse_value<double>(key, value);
      cfg.lr_explicit = true;
    }
    else if (key == "lambda") cfg.train.lambda = parse_value<double>(key, value);
    else if (key == "reg") cfg.train.reg = parse_reg_kind(value);
    else if (key == "its_n") cfg.train.its_period = parse_value<int>(key, value);
    else if (key == "log_every") cfg.train.log_every = parse_value<int>(key, value);
    else if (key == "seed") cfg.seed = parse_value<std::uint64_t>(key, value);
    else if (key == "runs") cfg.runs = parse_value<int>(key, value);
    else if (key == "out") cfg.output_dir = value;
    else if (key == "workers") cfg.workers = parse_value<int>(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// Flat `key = value` file; '#' starts a comment.
inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

inline void validate(const ExperimentConfig& cfg) {
  try {
    cfg.model.validate();
    cfg.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (cfg.runs < 1) throw ConfigError("runs must be >= 1");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  if (!(cfg.sigma255 >= 0.0)) throw ConfigError("sigma must be >= 0");
  if (cfg.input.empty() && cfg.size < 16) throw ConfigError("phantom size must be >= 16");
}

/// Loads the clean reference: the input file if given, else the phantom.
inline Image resolve_input(const ExperimentConfig& cfg) {
  if (cfg.input.empty()) return synth_phantom(cfg.size, cfg.size, cfg.phantom);
  if (!std::filesystem::exists(cfg.input)) {
    throw std::runtime_error("input file not found: " + cfg.input);
  }
  return load_pnm(cfg.input);
}

struct RunSummary {
  std::string input;
  ModelKind model = ModelKind::siren;
  int its_n = 0;
  double sigma255 = 0.0;
  std::uint64_t seed = 0;
  double last_psnr = 0.0, last_ssim = 0.0;
  // Best-over-trajectory values need ground truth; analysis only.
  double best_psnr = 0.0, best_ssim = 0.0;
  double last_sigma_hat = 0.0;
  double wall_seconds = 0.0;
};

struct RunOutcome {
  NoisySample sample;
  TrainResult result;
  RunSummary summary;
};

inline RunSummary summarize(const std::vector<MetricsRecord>& records) {
  RunSummary s;
  s.best_psnr = -kInfinity;
  s.best_ssim = -kInfinity;
  for (const auto& r : records) {
    if (r.psnr_clean) s.best_psnr = std::max(s.best_psnr, *r.psnr_clean);
    if (r.ssim_clean) s.best_ssim = std::max(s.best_ssim, *r.ssim_clean);
  }
  if (!records.empty()) {
    const auto& last = records.back();
    s.last_psnr = last.psnr_clean.value_or(0.0);
    s.last_ssim = last.ssim_clean.value_or(0.0);
    s.last_sigma_hat = last.sigma_hat.value_or(0.0);
  }
  return s;
}

/// One seeded run. The noise is drawn from `seed` itself and the model init
/// from a stream split off it, so the two never share random numbers.
inline RunOutcome run_single(const ExperimentConfig& cfg, const Image& clean,
                             std::uint64_t seed, int its_n) {
  ModelConfig model = cfg.model;
  model.seed = derive_seed(seed, 1);
  model.out_channels = clean.channels();
  TrainConfig train = cfg.train;
  train.lr = cfg.learning_rate();
  train.its_period = its_n;
  train.seed = seed;

  NoisySample sample = add_gaussian_noise(clean, cfg.sigma255, seed);
  TrainResult result = itsinr::train(model, train, sample.noisy, sample.clean);
  RunSummary s = summarize(result.records);
  s.input = cfg.input_label();
  s.model = model.kind;
  s.its_n = its_n;
  s.sigma255 = cfg.sigma255;
  s.seed = seed;
  s.wall_seconds = result.wall_seconds;
  return {std::move(sample), std::move(result), s};
}

inline constexpr const char* kSummaryHeader =
    "input,model,its_n,sigma,seed,last_psnr,last_ssim,best_psnr,best_ssim,"
    "last_sigma_hat,wall_seconds";

inline std::string summary_row(const RunSummary& s) {
  using report::format_number;
  return s.input + ',' + model_name(s.model) + ',' + std::to_string(s.its_n) + ',' +
         format_number(s.sigma255) + ',' + std::to_string(s.seed) + ',' +
         format_number(s.last_psnr) + ',' + format_number(s.last_ssim) + ',' +
         format_number(s.best_psnr) + ',' + format_number(s.best_ssim) + ',' +
         format_number(s.last_sigma_hat) + ',' + format_number(s.wall_seconds);
}

/// Signed error shifted to mid-gray (0.5 + e), clamped; channels averaged.
inline Image error_map_image(const Image& x_hat, const Image& clean) {
  const Field e = error_map(x_hat, clean);
  std::vector<double> px(e.height * e.width);
  for (std::size_t i = 0; i < px.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < e.channels; ++c) acc += e.values[i * e.channels + c];
    px[i] = 0.5 + acc / static_cast<double>(e.channels);
  }
  return Image::clamped(e.height, e.width, 1, std::move(px));
}

namespace detail {

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline const char* pnm_ext(const Image& img) { return img.channels() == 1 ? ".pgm" : ".ppm"; }

/// Runs jobs [0, count) on up to `workers` threads. Results are placed by
/// index, so the outcome does not depend on scheduling.
template <class Job>
void parallel_for(std::size_t count, int workers, Job&& job) {
  const std::size_t threads =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) job(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// denoise

struct DenoiseArtifacts {
  std::filesystem::path denoised, noisy, metrics_csv, error_map, summary_csv;
  RunOutcome outcome;
};

inline DenoiseArtifacts cmd_denoise(const ExperimentConfig& cfg) {
  validate(cfg);
  const Image clean = resolve_input(cfg);
  const auto dir = detail::prepare_dir(cfg.output_dir);
  DenoiseArtifacts art{};
  art.outcome = run_single(cfg, clean, cfg.seed, cfg.train.its_period);
  const TrainResult& res = art.outcome.result;
  if (res.diverged) throw std::runtime_error("training diverged at " + res.diagnostic);

  const char* ext = detail::pnm_ext(clean);
  art.denoised = dir / (std::string("denoised") + ext);
  art.noisy = dir / (std::string("noisy") + ext);
  art.error_map = dir / "error_map.pgm";
  art.metrics_csv = dir / "metrics.csv";
  art.summary_csv = dir / "summary.csv";

  save_pnm(res.final_image, art.denoised.string());
  save_pnm(art.outcome.sample.noisy, art.noisy.string());
  save_pnm(error_map_image(res.final_image, clean), art.error_map.string());
  {
    auto out = detail::open_out(art.metrics_csv);
    report::write_metrics_csv(out, res.records);
  }
  {
    auto out = detail::open_out(art.summary_csv);
    out << kSummaryHeader << '\n' << summary_row(art.outcome.summary) << '\n';
  }
  return art;
}

// ---------------------------------------------------------------------------
// ablate-n

struct AblationRun {
  int its_n = 0;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  RunSummary summary;
};

struct AblationResult {
  std::vector<AblationRun> runs;  // sorted by (its_n, seed)
  std::filesystem::path csv, svg, summary_csv;
};

inline constexpr const char* kAblationHeader =
    "its_n,seed,iteration,loss,psnr_clean,ssim_clean,psnr_noisy,sigma_hat";

/// Mean psnr_clean per logged iteration for one N, across seeds.
inline report::Series mean_psnr_series(const std::vector<AblationRun>& runs, int its_n) {
  report::Series s;
  s.label = its_n == 0 ? "N=0 (vanilla)" : "N=" + std::to_string(its_n);
  std::map<int, std::pair<double, int>> acc;
  for (const auto& r : runs) {
    if (r.its_n != its_n) continue;
    for (const auto& rec : r.records) {
      if (!rec.psnr_clean || !std::isfinite(*rec.psnr_clean)) continue;
      auto& slot = acc[rec.iteration];
      slot.first += *rec.psnr_clean;
      slot.second += 1;
    }
  }
  for (const auto& [it, v] : acc) {
    s.x.push_back(it);
    s.y.push_back(v.first / v.second);
  }
  return s;
}

inline AblationResult cmd_ablate_n(const ExperimentConfig& cfg, std::vector<int> n_values) {
  validate(cfg);
  if (n_values.empty()) throw ConfigError("ablate-n needs at least one N value");
  for (int n : n_values) {
    if (n < 0) throw ConfigError("N values must be >= 0");
  }
  std::sort(n_values.begin(), n_values.end());
  n_values.erase(std::unique(n_values.begin(), n_values.end()), n_values.end());
  const Image clean = resolve_input(cfg);
  const auto dir = detail::prepare_dir(cfg.output_dir);

  AblationResult out;
  for (int n : n_values) {
    for (int r = 0; r < cfg.runs; ++r) {
      out.runs.push_back({n, cfg.seed + static_cast<std::uint64_t>(r), {}, {}});
    }
  }
  // Execute seed-major so slow drift in machine speed hits every N alike.
  std::vector<std::size_t> order(out.runs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return out.runs[x].seed < out.runs[y].seed;
  });
  detail::parallel_for(out.runs.size(), cfg.workers, [&](std::size_t i) {
    AblationRun& job = out.runs[order[i]];
    RunOutcome o = run_single(cfg, clean, job.seed, job.its_n);
    if (o.result.diverged) throw std::runtime_error("training diverged: " + o.result.diagnostic);
    job.records = std::move(o.result.records);
    job.summary = o.summary;
  });

  out.csv = dir / "ablation.csv";
  out.svg = dir / "ablation.svg";
  out.summary_csv = dir / "ablation_summary.csv";
  {
    auto f = detail::open_out(out.csv);
    f << kAblationHeader << '\n';
    for (const auto& r : out.runs) {
      for (const auto& rec : r.records) {
        f << r.its_n << ',' << r.seed << ',' << report::metrics_row(rec) << '\n';
      }
    }
  }
  {
    auto f = detail::open_out(out.summary_csv);
    f << kSummaryHeader << '\n';
    for (const auto& r : out.runs) f << summary_row(r.summary) << '\n';
  }
  {
    std::vector<report::Series> series;
    for (int n : n_values) series.push_back(mean_psnr_series(out.runs, n));
    auto f = detail::open_out(out.svg);
    report::write_line_chart_svg(f, series,
                                 "PSNR vs iteration, " + cfg.input_label() + ", sigma=" +
                                     report::format_number(cfg.sigma255),
                                 "iteration", "PSNR (dB)");
  }
  return out;
}

// ---------------------------------------------------------------------------
// compare

struct CompareCell {
  std::string label;
  Image clean;
  double sigma255 = 0.0;
};

/// Cells from the cross product of inputs and noise levels.
inline std::vector<CompareCell> make_cells(const std::vector<std::string>& phantoms,
                                           const std::vector<std::string>& inputs,
                                           const std::vector<double>& sigmas,
                                           std::size_t size) {
  std::vector<CompareCell> cells;
  for (double sigma : sigmas) {
    for (const auto& p : phantoms) {
      cells.push_back({p + std::to_string(size),
                       synth_phantom(size, size, parse_phantom(p)), sigma});
    }
    for (const auto& path : inputs) {
      if (!std::filesystem::exists(path)) throw std::runtime_error("input file not found: " + path);
      cells.push_back({std::filesystem::path(path).filename().string(), load_pnm(path), sigma});
    }
  }
  return cells;
}

struct CompareRow {
  std::string label;
  double sigma255 = 0.0;
  RunSummary a, b;
};

struct CompareReport {
  std::vector<CompareRow> rows;
  TTestResult psnr_test;  // b - a
  TTestResult ssim_test;
  std::filesystem::path csv, text;
};

inline std::string significance_marker(double p) {
  if (p <= 0.001) return "**";
  if (p <= 0.05) return "*";
  return "";
}

inline CompareReport cmd_compare(const ExperimentConfig& a, const ExperimentConfig& b,
                                 const std::vector<CompareCell>& cells,
                                 const std::string& output_dir, int workers = 1) {
  validate(a);
  validate(b);
  if (cells.size() < 2) throw ConfigError("compare needs n >= 2 image pairs");
  const auto dir = detail::prepare_dir(output_dir);

  CompareReport rep;
  rep.rows.resize(cells.size());
  detail::parallel_for(2 * cells.size(), workers, [&](std::size_t job) {
    const std::size_t i = job / 2;
    const bool second = job % 2 == 1;
    ExperimentConfig cfg = second ? b : a;
    cfg.sigma255 = cells[i].sigma255;
    RunOutcome o = run_single(cfg, cells[i].clean, cfg.seed, cfg.train.its_period);
    if (o.result.diverged) throw std::runtime_error("training diverged: " + o.result.diagnostic);
    o.summary.input = cells[i].label;
    CompareRow& row = rep.rows[i];
    row.label = cells[i].label;
    row.sigma255 = cells[i].sigma255;
    (second ? row.b : row.a) = o.summary;
  });

  std::vector<double> pa, pb, sa, sb;
  for (const auto& r : rep.rows) {
    pa.push_back(r.a.last_psnr);
    pb.push_back(r.b.last_psnr);
    sa.push_back(r.a.last_ssim);
    sb.push_back(r.b.last_ssim);
  }
  rep.psnr_test = paired_t_test(pb, pa);
  rep.ssim_test = paired_t_test(sb, sa);

  using report::format_number;
  rep.csv = dir / "compare.csv";
  rep.text = dir / "compare.txt";
  {
    auto f = detail::open_out(rep.csv);
    f << "input,sigma,a_last_psnr,b_last_psnr,delta_psnr,a_last_ssim,b_last_ssim,delta_ssim\n";
    for (const auto& r : rep.rows) {
      f << r.label << ',' << format_number(r.sigma255) << ',' << format_number(r.a.last_psnr)
        << ',' << format_number(r.b.last_psnr) << ','
        << format_number(r.b.last_psnr - r.a.last_psnr) << ',' << format_number(r.a.last_ssim)
        << ',' << format_number(r.b.last_ssim) << ','
        << format_number(r.b.last_ssim - r.a.last_ssim) << '\n';
    }
  }
  {
    auto f = detail::open_out(rep.text);
    auto line = [&](const char* name, const TTestResult& t) {
      f << name << ": mean delta (B - A) = " << format_number(t.mean_diff)
        << ", t = " << format_number(t.t) << ", p = " << format_number(t.p) << ' '
        << significance_marker(t.p) << '\n';
    };
    f << "pairs: " << rep.rows.size() << '\n';
    line("PSNR", rep.psnr_test);
    line("SSIM", rep.ssim_test);
    f << "markers: * p <= 0.05, ** p <= 0.001\n";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// theorem

struct TheoremCommandResult {
  snrlab::Theorem1Report theorem;
  double aligned_ratio = 0.0;       // e = +delta n
  double anti_aligned_ratio = 0.0;  // e = -delta n
  bool bound_tight = false;
  bool ok = false;
  std::string text;
};

inline TheoremCommandResult cmd_theorem(double delta, std::size_t dim, std::size_t trials,
                                        std::uint64_t seed) {
  try {
    snrlab::check_delta(delta);
    if (dim < 2) throw std::invalid_argument("dim must be >= 2");
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  TheoremCommandResult out;
  out.theorem = snrlab::run_theorem1(dim, delta, trials, seed);

  Prng rng(seed);
  std::vector<double> x(dim), n(dim);
  for (double& v : x) v = rng.normal();
  for (double& v : n) v = rng.normal();
  std::vector<double> aligned(n), anti(n);
  for (double& v : aligned) v *= delta;
  for (double& v : anti) v *= -delta;
  out.aligned_ratio = snrlab::evaluate_trial(x, n, aligned).ratio();
  out.anti_aligned_ratio = snrlab::evaluate_trial(x, n, anti).ratio();
  const double bound = 2.0 / (1.0 + delta);
  out.bound_tight = std::fabs(out.aligned_ratio - bound) <= 1e-12 * bound;
  out.ok = out.theorem.all_hold && out.bound_tight;

  using report::format_number;
  std::ostringstream os;
  const auto& t = out.theorem;
  os << "delta: " << format_number(delta) << "\n"
     << "dim: " << dim << "\n"
     << "trials: " << t.trials << "\n"
     << "seed: " << seed << "\n"
     << "improved: " << t.improved << "/" << t.trials << "\n"
     << "bound 2/(1+delta): " << format_number(t.bound_ratio) << "\n"
     << "bound violations: " << t.bound_violations << "\n"
     << "min ratio: " << format_number(t.min_ratio) << "\n"
     << "max ratio: " << format_number(t.max_ratio) << "\n"
     << "min slack over bound: " << format_number(t.min_bound_slack) << "\n"
     << "aligned ratio (equality case): " << format_number(out.aligned_ratio) << "\n"
     << "anti-aligned ratio 2/(1-delta): " << format_number(out.anti_aligned_ratio) << "\n"
     << "bound tight: " << (out.bound_tight ? "yes" : "no") << "\n"
     << "all_hold: " << (t.all_hold ? "true" : "false") << "\n";
  out.text = os.str();
  return out;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsCommandResult {
  double psnr = 0.0;
  std::optional<double> ssim;
  double sigma_hat = 0.0;
  std::string text;
};

/// Compares a test image against a reference; sigma_hat is measured on
/// test - reference.
inline MetricsCommandResult cmd_metrics(const std::string& test_path,
                                        const std::string& reference_path) {
  for (const auto& p : {test_path, reference_path}) {
    if (!std::filesystem::exists(p)) throw std::runtime_error("input file not found: " + p);
  }
  const Image test = load_pnm(test_path);
  const Image ref = load_pnm(reference_path);
  if (!test.same_dims(ref)) throw ConfigError("metrics: images differ in size or channels");
  MetricsCommandResult r;
  r.psnr = psnr(test, ref);
  if (test.height() >= 11 && test.width() >= 11) r.ssim = ssim(test, ref);
  r.sigma_hat = mad_sigma(error_map(test, ref));
  using report::format_number;
  r.text = "psnr: " + format_number(r.psnr) + "\nssim: " + report::format_optional(r.ssim) +
           "\nsigma_hat: " + format_number(r.sigma_hat) + "\n";
  return r;
}

}  // namespace itsinr
