#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "labprod/errors.hpp"
#include "labprod/fitting.hpp"
#include "labprod/io.hpp"
#include "labprod/model.hpp"
#include "labprod/pipeline.hpp"
#include "labprod/simulator.hpp"
#include "labprod/verify.hpp"

namespace labprod::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using ConfigMap = std::map<std::string, std::string>;

constexpr const char* kToolVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

/// Non-negative integer count; accepts "10000000" and "1e7".
std::uint64_t parse_count(const std::string& text, const char* what) {
  const std::string s = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw UsageError(std::string(what) + ": not a number: '" + text + "'");
  }
  if (used != s.size() || !(v >= 0.0) || v != std::floor(v) || v > 9.007199254740992e15) {
    throw UsageError(std::string(what) + " must be a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::uint64_t>(v);
}

// Collects written files and the manifest for one run.
class RunOutput {
 public:
  explicit RunOutput(const std::string& dir) : root_(dir.empty() ? "." : dir) {
    fs::create_directories(root_);
  }

  template <typename Writer>
  void write(const std::string& name, Writer writer) {
    std::ofstream out(root_ / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (root_ / name).string());
    writer(out);
    out.flush();
    if (!out) throw DataError("failed writing " + (root_ / name).string());
    files_.push_back(name);
  }

  void write_json(const std::string& name, const json& doc) {
    write(name, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
  }

  void add_input(const std::string& path) {
    inputs_.push_back({{"path", path}, {"sha256", sha256_file(path)}});
  }

  /// Writes manifest.json; `extra` is merged in under "results".
  void finish(const std::string& subcommand, const ConfigMap& config,
              std::optional<std::uint64_t> seed, double seconds, const json& extra) {
    json m;
    m["tool"] = "labprod";
    m["version"] = kToolVersion;
    m["subcommand"] = subcommand;
    m["config"] = json::object();
    for (const auto& [k, v] : config) m["config"][k] = v;
    m["inputs"] = inputs_;
    m["seed"] = seed ? json(*seed) : json(nullptr);
    m["duration_seconds"] = seconds;
    m["outputs"] = files_;
    if (!extra.is_null()) m["results"] = extra;
    std::ofstream out(root_ / "manifest.json", std::ios::binary);
    if (!out) throw DataError("cannot write manifest");
    out << m.dump(2) << '\n';
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
  json inputs_ = json::array();
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json params_json(const ModelParams& p) {
  return {{"beta", p.beta}, {"mu", p.mu}, {"A", p.A}, {"gamma", p.gamma}};
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  int levels = 0;
  double dc = 1.0;
  std::int64_t workers = 0;
  std::int64_t output_index = 0;
  std::string occupancy;
  std::string limiter = "unbounded";
  double capacity_a = 0.0;
  double capacity_gamma = 0.0;
  std::string steps;
  std::string burn_in;
  std::uint64_t sample_every = 100;
  std::uint64_t seed = 0;
  std::string out = ".";

  CLI::Option* workers_opt = nullptr;
  CLI::Option* output_opt = nullptr;
  CLI::Option* occupancy_opt = nullptr;
  CLI::Option* a_opt = nullptr;
  CLI::Option* gamma_opt = nullptr;
  CLI::Option* burn_opt = nullptr;
};

int cmd_simulate(SimulateOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!o.workers_opt->count() && !o.occupancy_opt->count()) {
    throw UsageError("simulate needs --workers or --occupancy");
  }
  const bool linear = o.limiter == "linear-ramp";
  if (linear && (!o.a_opt->count() || !o.gamma_opt->count())) {
    throw UsageError("--limiter linear-ramp needs --capacity-a and --capacity-gamma");
  }
  const std::uint64_t steps = parse_count(o.steps, "--steps");
  const std::uint64_t burn_in = o.burn_opt->count() ? parse_count(o.burn_in, "--burn-in") : steps / 10;

  SimConfig config;
  config.grid = ProductivityGrid(o.levels, o.dc);
  config.limiter = linear ? Limiter::linear_ramp(CapacityLaw(o.capacity_a, o.capacity_gamma))
                          : Limiter::unbounded();
  config.seed = o.seed;
  config.steps = steps;
  config.burn_in = burn_in;
  config.sample_every = o.sample_every;
  validate(config);

  std::optional<SystemState> initial;
  if (o.occupancy_opt->count()) {
    std::vector<std::int64_t> occ;
    for (const auto& item : split_list(o.occupancy)) occ.push_back(parse_integer(item, 1));
    initial = init_state(config.grid, std::move(occ), config.limiter);
  } else {
    const std::int64_t y = o.output_opt->count() ? o.output_index : o.workers * (o.levels + 1) / 2;
    initial = init_state(config.grid, TargetTotals{o.workers, y}, config.limiter);
  }

  const RunResult result = run(config, *initial);
  const auto& final_state = result.final_state;

  // Without post-burn-in samples the occupancy file reports the final state.
  std::vector<double> mean;
  std::vector<double> var;
  if (result.averages.samples > 0) {
    mean = result.averages.mean();
    var = result.averages.variance();
  } else {
    for (auto n : final_state.occupancy()) mean.push_back(static_cast<double>(n));
    var.assign(mean.size(), 0.0);
  }
  const auto report = flux_balance_report(result.ledger);

  ConfigMap cfg;
  cfg["levels"] = std::to_string(o.levels);
  cfg["dc"] = format_double(o.dc);
  if (o.occupancy_opt->count()) {
    std::vector<std::string> items;
    for (auto n : initial->occupancy()) items.push_back(std::to_string(n));
    cfg["occupancy"] = join_list(items);
  } else {
    cfg["workers"] = std::to_string(initial->workers());
    cfg["output-index"] = std::to_string(initial->output_index());
  }
  cfg["limiter"] = o.limiter;
  if (linear) {
    cfg["capacity-a"] = format_double(o.capacity_a);
    cfg["capacity-gamma"] = format_double(o.capacity_gamma);
  }
  cfg["steps"] = std::to_string(steps);
  cfg["burn-in"] = std::to_string(burn_in);
  cfg["sample-every"] = std::to_string(o.sample_every);
  cfg["seed"] = std::to_string(o.seed);
  cfg["out"] = o.out;

  RunOutput files(o.out);
  files.write("occupancy.csv", [&](std::ostream& s) {
    write_occupancy_csv(s, config.grid, config.limiter, mean, var);
  });
  files.write("flux.csv", [&](std::ostream& s) { write_flux_csv(s, report); });
  files.write("final_state.csv", [&](std::ostream& s) {
    s << "level_index,n\n";
    for (int i = 1; i <= final_state.levels(); ++i) s << i << ',' << final_state.at(i) << '\n';
  });

  json results;
  results["conserved"] = {{"workers", final_state.workers()},
                          {"output_index", final_state.output_index()},
                          {"output", static_cast<double>(final_state.output_index()) * o.dc}};
  results["proposals"] = result.proposals;
  results["accepted"] = result.accepted;
  results["acceptance_rate"] = result.acceptance_rate();
  results["samples"] = result.averages.samples;
  results["flux"] = {{"signatures", report.rows.size()},
                     {"fraction_beyond_3sigma", report.fraction_beyond_3sigma},
                     {"max_abs_z", report.max_abs_z}};
  try {
    const auto implied = implied_temperature(
        config.grid, config.limiter, {final_state.workers(), final_state.output_index()});
    results["implied"] = {{"beta", implied.beta}, {"beta_mu", implied.beta_mu}};
  } catch (const FeasibilityError&) {
    results["implied"] = nullptr;
  }
  files.finish("simulate", cfg, o.seed, seconds_since(t0), results);
  out << "simulate: " << result.proposals << " proposals, acceptance "
      << format_double(result.acceptance_rate()) << ", wrote " << o.out << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------- fit

struct FitCommandOptions {
  std::string input;
  double tol = 1e-9;
  bool emit_curve = false;
  std::string out = ".";
};

json fit_json(const FitResult& r, const BinnedCurve& curve) {
  json j = params_json(r.params);
  try {
    j["c_p"] = peak_productivity(r.params);
  } catch (const Error& e) {
    j["c_p"] = nullptr;
    j["c_p_note"] = e.what();
  }
  j["chi2"] = r.chi2;
  j["n_evals"] = r.n_evals;
  j["converged"] = r.converged;
  j["start_index"] = r.start_index;
  j["bins"] = curve.size();
  return j;
}

void write_model_curve(RunOutput& files, const FitResult& r, const BinnedCurve& curve) {
  std::vector<CurveBin> model;
  for (const auto& b : curve.bins()) model.push_back({b.c_center, mean_occupancy(b.c_center, r.params), b.weight});
  files.write("fitted_curve.csv", [&](std::ostream& s) { write_curve_csv(s, BinnedCurve(std::move(model))); });
}

int cmd_fit(const FitCommandOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream in(o.input);
  if (!in) throw DataError("cannot read " + o.input);
  const BinnedCurve curve = read_curve_csv(in);
  FitOptions options;
  options.tol = o.tol;
  const FitResult r = fit(curve, options);

  RunOutput files(o.out);
  files.add_input(o.input);
  const json result = fit_json(r, curve);
  files.write_json("fit.json", result);
  if (o.emit_curve) write_model_curve(files, r, curve);

  ConfigMap cfg{{"input", o.input},
                {"tol", format_double(o.tol)},
                {"emit-curve", o.emit_curve ? "true" : "false"},
                {"out", o.out}};
  files.finish("fit", cfg, std::nullopt, seconds_since(t0), result);
  out << "fit: chi2 " << format_double(r.chi2) << (r.converged ? "" : " (not converged)")
      << ", wrote " << o.out << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- analyze

struct AnalyzeOptions {
  std::string input;
  double c_min = 1e2;
  double c_max = 1e7;
  int bins_per_decade = 20;
  std::string exclude_sectors = join_list(default_excluded_sectors());
  std::string input_units = "thousand_yen";
  bool fit = false;
  double tol = 1e-9;
  std::string out = ".";
};

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream in(o.input, std::ios::binary);
  if (!in) throw DataError("cannot read " + o.input);
  const auto records = read_firm_records(in, unit_scale(o.input_units));
  const auto exclusions = split_list(o.exclude_sectors);
  const CleanResult cleaned = clean(records, exclusions);
  if (cleaned.records.empty()) throw DataError("no records survive cleaning");

  const LogBinning binning(o.c_min, o.c_max, o.bins_per_decade);
  const auto firms = firm_pdf(cleaned.records, binning);
  const auto workers = worker_pdf(cleaned.records, binning);
  const auto curve = mean_workers_curve(cleaned.records, binning);

  RunOutput files(o.out);
  files.add_input(o.input);
  files.write("clean_records.csv", [&](std::ostream& s) { write_clean_csv(s, cleaned.records); });
  files.write("firm_pdf.csv", [&](std::ostream& s) { write_density_csv(s, firms); });
  files.write("worker_pdf.csv", [&](std::ostream& s) { write_density_csv(s, workers); });
  files.write("curve.csv", [&](std::ostream& s) { write_curve_csv(s, curve); });

  json report;
  report["input_records"] = records.size();
  report["clean_records"] = cleaned.records.size();
  report["rejected"] = json::object();
  for (const auto& [reason, count] : cleaned.rejected) report["rejected"][to_string(reason)] = count;
  report["excluded_sectors"] = exclusions;
  files.write_json("cleaning_report.json", report);

  json results = {{"cleaning", report}, {"curve_bins", curve.size()}};
  if (o.fit) {
    FitOptions options;
    options.tol = o.tol;
    const FitResult r = fit(curve, options);
    const json fitted = fit_json(r, curve);
    files.write_json("fit.json", fitted);
    results["fit"] = fitted;
  }

  ConfigMap cfg{{"input", o.input},
                {"c-min", format_double(o.c_min)},
                {"c-max", format_double(o.c_max)},
                {"bins-per-decade", std::to_string(o.bins_per_decade)},
                {"exclude-sectors", join_list(exclusions)},
                {"input-units", o.input_units},
                {"fit", o.fit ? "true" : "false"},
                {"tol", format_double(o.tol)},
                {"out", o.out}};
  files.finish("analyze", cfg, std::nullopt, seconds_since(t0), results);
  out << "analyze: " << cleaned.records.size() << " of " << records.size()
      << " records kept, wrote " << o.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- synth

struct SynthOptions {
  std::string kind = "curve";
  ModelParams params{-1.25e-4, -2.32e4, 5.84e7, 1.18};
  double c_min = 1e3;
  double c_max = 1e6;
  int bins = 50;
  double noise = 0.0;
  std::uint64_t firms = 10000;
  std::uint64_t seed = 1;
  std::string out = ".";
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  validate(o.params);
  RunOutput files(o.out);
  ConfigMap cfg{{"kind", o.kind},
                {"beta", format_double(o.params.beta)},
                {"mu", format_double(o.params.mu)},
                {"A", format_double(o.params.A)},
                {"gamma", format_double(o.params.gamma)},
                {"c-min", format_double(o.c_min)},
                {"c-max", format_double(o.c_max)},
                {"seed", std::to_string(o.seed)},
                {"out", o.out}};
  json results;
  if (o.kind == "curve") {
    const auto curve = synthetic_curve(o.params, LogBinSpec{o.c_min, o.c_max, o.bins}, o.noise, o.seed);
    files.write("curve.csv", [&](std::ostream& s) { write_curve_csv(s, curve); });
    cfg["bins"] = std::to_string(o.bins);
    cfg["noise"] = format_double(o.noise);
    results["bins"] = curve.size();
  } else {
    const auto firms = synthetic_firms(o.params, o.firms, o.c_min, o.c_max, o.seed);
    files.write("firms.csv", [&](std::ostream& s) { write_firm_records(s, firms); });
    cfg["firms"] = std::to_string(o.firms);
    results["firms"] = firms.size();
  }
  try {
    results["c_p"] = peak_productivity(o.params);
  } catch (const Error&) {
    results["c_p"] = nullptr;
  }
  files.finish("synth", cfg, o.seed, seconds_since(t0), results);
  out << "synth: wrote " << o.kind << " to " << o.out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ verify

struct VerifyOptions {
  std::string suite;
  std::string out;
};

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = run_verify_suite(o.suite);
  bool ok = true;
  json report = json::array();
  for (const auto& c : checks) {
    ok = ok && c.passed;
    report.push_back({{"suite", c.suite},
                      {"check", c.name},
                      {"passed", c.passed},
                      {"value", c.value},
                      {"threshold", c.threshold},
                      {"detail", c.detail}});
  }
  json doc = {{"suite", o.suite}, {"passed", ok}, {"checks", report}};
  out << doc.dump(2) << "\n";
  if (!o.out.empty()) {
    RunOutput files(o.out);
    files.write_json("verify_report.json", doc);
    files.finish("verify", {{"suite", o.suite}, {"out", o.out}}, std::nullopt, seconds_since(t0),
                 {{"passed", ok}});
  }
  return ok ? kExitOk : kExitCheckFailed;
}

// ------------------------------------------------------------------ config

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  ConfigMap cfg;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(number) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    cfg[key] = value;
  }
  return cfg;
}

bool has_flag(const std::vector<std::string>& args, const std::string& key) {
  const std::string flag = "--" + key;
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// Appends config entries as --key value for keys the command line does not
// set. Boolean flags are written as true/false.
void append_config(std::vector<std::string>& args, const ConfigMap& cfg,
                   const std::vector<std::string>& bool_flags) {
  for (const auto& [key, value] : cfg) {
    if (has_flag(args, key)) continue;
    if (std::find(bool_flags.begin(), bool_flags.end(), key) != bool_flags.end()) {
      if (value == "true" || value == "1") args.push_back("--" + key);
      continue;
    }
    args.push_back("--" + key);
    args.push_back(value);
  }
}

const std::vector<std::string> kBoolFlags{"emit-curve", "fit"};

// Pulls "--config FILE" out of args and merges the file underneath the flags.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path) append_config(args, read_config_file(*path), kBoolFlags);
  return args;
}

std::vector<std::string> replay_args(const std::string& manifest_path, const std::string& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot read manifest " + manifest_path);
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!m.contains("subcommand") || !m.contains("config")) {
    throw DataError("manifest lacks subcommand or config");
  }
  std::vector<std::string> args{m["subcommand"].get<std::string>()};
  ConfigMap cfg;
  for (const auto& [k, v] : m["config"].items()) cfg[k] = v.get<std::string>();
  if (!out_dir.empty()) cfg["out"] = out_dir;
  append_config(args, cfg, kBoolFlags);
  return args;
}

int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err);

int parse_and_run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Equilibrium distribution of labor productivity: simulate, fit, analyze"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Run the two-worker exchange chain");
  simulate->add_option("--levels", sim.levels, "Number of productivity levels M")->required()->check(CLI::Range(2, 1 << 20));
  simulate->add_option("--dc", sim.dc, "Grid spacing (10^3 yen/person)")->capture_default_str();
  sim.workers_opt = simulate->add_option("--workers", sim.workers, "Total workers N");
  sim.output_opt = simulate->add_option("--output-index", sim.output_index,
                                        "Total output in index units (default N(M+1)/2)");
  sim.occupancy_opt = simulate->add_option("--occupancy", sim.occupancy,
                                           "Explicit initial occupancy, comma separated")
                          ->excludes(sim.workers_opt)
                          ->excludes(sim.output_opt);
  simulate->add_option("--limiter", sim.limiter)->check(CLI::IsMember({"unbounded", "linear-ramp"}))->capture_default_str();
  sim.a_opt = simulate->add_option("--capacity-a", sim.capacity_a, "Capacity amplitude A");
  sim.gamma_opt = simulate->add_option("--capacity-gamma", sim.capacity_gamma, "Capacity exponent gamma");
  simulate->add_option("--steps", sim.steps, "Proposed moves (integer, 1e7 accepted)")->required();
  sim.burn_opt = simulate->add_option("--burn-in", sim.burn_in, "Proposals before measurement (default steps/10)");
  simulate->add_option("--sample-every", sim.sample_every)->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--seed", sim.seed, "64-bit RNG seed")->required();
  simulate->add_option("--out", sim.out, "Output directory")->capture_default_str();

  FitCommandOptions fitopt;
  auto* fitcmd = app.add_subcommand("fit", "Fit (beta, mu, A, gamma) to a binned curve");
  fitcmd->add_option("input,--input", fitopt.input, "Curve CSV (c_center,n_mean,weight)")->required();
  fitcmd->add_option("--tol", fitopt.tol)->capture_default_str();
  fitcmd->add_flag("--emit-curve", fitopt.emit_curve, "Also write the model at the input bin centers");
  fitcmd->add_option("--out", fitopt.out)->capture_default_str();

  AnalyzeOptions an;
  auto* analyze = app.add_subcommand("analyze", "Clean firm records and bin them");
  analyze->add_option("input,--input", an.input, "Firm records CSV")->required();
  analyze->add_option("--c-min", an.c_min)->capture_default_str();
  analyze->add_option("--c-max", an.c_max)->capture_default_str();
  analyze->add_option("--bins-per-decade", an.bins_per_decade)->check(CLI::PositiveNumber)->capture_default_str();
  analyze->add_option("--exclude-sectors", an.exclude_sectors,
                      "Comma-separated sector names to drop (empty: none)")
      ->capture_default_str();
  analyze->add_option("--input-units", an.input_units)
      ->check(CLI::IsMember({"yen", "thousand_yen", "million_yen"}))
      ->capture_default_str();
  analyze->add_flag("--fit", an.fit, "Fit the resulting curve");
  analyze->add_option("--tol", an.tol)->capture_default_str();
  analyze->add_option("--out", an.out)->capture_default_str();

  SynthOptions syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic curve or firm population");
  synth->add_option("--kind", syn.kind)->check(CLI::IsMember({"curve", "firms"}))->capture_default_str();
  synth->add_option("--beta", syn.params.beta)->capture_default_str();
  synth->add_option("--mu", syn.params.mu)->capture_default_str();
  synth->add_option("--A", syn.params.A)->capture_default_str();
  synth->add_option("--gamma", syn.params.gamma)->capture_default_str();
  synth->add_option("--c-min", syn.c_min)->capture_default_str();
  synth->add_option("--c-max", syn.c_max)->capture_default_str();
  synth->add_option("--bins", syn.bins)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--noise", syn.noise, "Multiplicative log-normal sigma")->capture_default_str();
  synth->add_option("--firms", syn.firms)->capture_default_str();
  synth->add_option("--seed", syn.seed)->capture_default_str();
  synth->add_option("--out", syn.out)->capture_default_str();

  VerifyOptions ver;
  auto* verify = app.add_subcommand("verify", "Run self-check suites");
  verify->add_option("suite,--suite", ver.suite)->required()->check(CLI::IsMember(verify_suites()));
  verify->add_option("--out", ver.out, "Directory for verify_report.json and manifest");

  std::string manifest;
  std::string replay_out;
  auto* replay = app.add_subcommand("replay", "Re-run a subcommand from its manifest");
  replay->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
  replay->add_option("--out", replay_out, "Output directory (default: the recorded one)");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  if (*simulate) return cmd_simulate(sim, out);
  if (*fitcmd) return cmd_fit(fitopt, out);
  if (*analyze) return cmd_analyze(an, out);
  if (*synth) return cmd_synth(syn, out);
  if (*verify) return cmd_verify(ver, out);
  if (*replay) return dispatch(replay_args(manifest, replay_out), out, err);
  return kExitUsage;
}

int dispatch(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  try {
    return parse_and_run(expand_config(std::move(args)), out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvariantError& e) {
    err << "internal invariant violated: " << e.what() << "\n";
    return kExitInternal;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return dispatch(args, out, err);
}

}  // namespace labprod::cli
