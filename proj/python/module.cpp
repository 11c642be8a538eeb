#include <fstream>
#include <sstream>

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "labprod/errors.hpp"
#include "labprod/fitting.hpp"
#include "labprod/io.hpp"
#include "labprod/model.hpp"
#include "labprod/pipeline.hpp"
#include "labprod/simulator.hpp"
#include "labprod/verify.hpp"

namespace py = pybind11;
using namespace labprod;

namespace {

std::string params_repr(const ModelParams& p) {
  std::ostringstream s;
  s << "ModelParams(beta=" << format_double(p.beta) << ", mu=" << format_double(p.mu)
    << ", A=" << format_double(p.A) << ", gamma=" << format_double(p.gamma) << ")";
  return s.str();
}

py::dict flux_row_dict(const FluxBalanceRow& r) {
  py::dict d;
  d["signature"] = py::make_tuple(r.signature.a_lo, r.signature.a_hi, r.signature.b_lo, r.signature.b_hi);
  d["forward"] = r.forward;
  d["reverse"] = r.reverse;
  d["z"] = r.z;
  return d;
}

std::vector<FirmRecord> load_records(const std::string& path, const std::string& units) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return read_firm_records(in, unit_scale(units));
}

}  // namespace

PYBIND11_MODULE(labprod, m) {
  m.doc() = "Equilibrium labor-productivity model, exchange-chain simulator, curve fitter and firm-data pipeline";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<SolverError>(m, "SolverError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<FeasibilityError>(m, "FeasibilityError", base.ptr());
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", base.ptr());
  auto data_error = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<IllPosedError>(m, "IllPosedError", data_error.ptr());
  py::register_exception<InvariantError>(m, "InvariantError", base.ptr());

  // ---- model
  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init([](double beta, double mu, double A, double gamma) { return ModelParams{beta, mu, A, gamma}; }),
           py::arg("beta"), py::arg("mu"), py::arg("A"), py::arg("gamma"))
      .def_readwrite("beta", &ModelParams::beta)
      .def_readwrite("mu", &ModelParams::mu)
      .def_readwrite("A", &ModelParams::A)
      .def_readwrite("gamma", &ModelParams::gamma)
      .def("validate", [](const ModelParams& p) { validate(p); })
      .def("__repr__", &params_repr);

  py::class_<CapacityLaw>(m, "CapacityLaw")
      .def(py::init<double, double>(), py::arg("A"), py::arg("gamma"))
      .def_property_readonly("A", &CapacityLaw::A)
      .def_property_readonly("gamma", &CapacityLaw::gamma)
      .def("__call__", &CapacityLaw::operator(), py::arg("c"));

  py::class_<Limiter>(m, "Limiter")
      .def_static("linear_ramp", &Limiter::linear_ramp, py::arg("law"))
      .def_static("unbounded", &Limiter::unbounded)
      .def_property_readonly("bounded", &Limiter::bounded)
      .def("capacity", &Limiter::capacity, py::arg("c"))
      .def("value", &Limiter::value, py::arg("c"), py::arg("n"));

  m.def("capacity", py::vectorize([](double c, double A, double gamma) { return capacity(c, CapacityLaw(A, gamma)); }),
        py::arg("c"), py::arg("A"), py::arg("gamma"));
  m.def("limiter_value", &limiter_value, py::arg("c"), py::arg("n"), py::arg("limiter"));
  m.def("mean_occupancy", [](py::array_t<double> c, const ModelParams& p) {
        return py::vectorize([&p](double x) { return mean_occupancy(x, p); })(c);
      }, py::arg("c"), py::arg("params"));
  m.def("log_mean_occupancy", [](py::array_t<double> c, const ModelParams& p) {
        return py::vectorize([&p](double x) { return log_mean_occupancy(x, p); })(c);
      }, py::arg("c"), py::arg("params"));
  m.def("boltzmann_occupancy", py::vectorize(&boltzmann_occupancy), py::arg("c"), py::arg("beta"), py::arg("mu"));
  m.def("solve_occupancy_fixed_point", &solve_occupancy_fixed_point, py::arg("c"), py::arg("limiter"),
        py::arg("beta"), py::arg("mu"), py::arg("tol") = 1e-13);
  m.def("log_partition", &log_partition, py::arg("c"), py::arg("params"));
  m.def("peak_productivity", [](const ModelParams& p, std::optional<std::pair<double, double>> bracket) {
        return bracket ? peak_productivity(p, *bracket) : peak_productivity(p);
      }, py::arg("params"), py::arg("bracket") = py::none());

  // ---- simulator
  py::class_<ProductivityGrid>(m, "ProductivityGrid")
      .def(py::init<int, double>(), py::arg("levels"), py::arg("dc") = 1.0)
      .def_property_readonly("levels", &ProductivityGrid::levels)
      .def_property_readonly("dc", &ProductivityGrid::dc)
      .def("productivity", &ProductivityGrid::productivity, py::arg("level"));

  py::class_<SystemState>(m, "SystemState")
      .def(py::init<std::vector<std::int64_t>>(), py::arg("occupancy"))
      .def_property_readonly("occupancy", [](const SystemState& s) {
        return std::vector<std::int64_t>(s.occupancy().begin(), s.occupancy().end());
      })
      .def_property_readonly("workers", &SystemState::workers)
      .def_property_readonly("output_index", &SystemState::output_index)
      .def("__eq__", [](const SystemState& a, const SystemState& b) { return a == b; });

  py::class_<Move>(m, "Move")
      .def(py::init([](int a, int b, int k, int l) { return Move{a, b, k, l}; }),
           py::arg("from_a"), py::arg("from_b"), py::arg("to_a"), py::arg("to_b"))
      .def_readonly("from_a", &Move::from_a)
      .def_readonly("from_b", &Move::from_b)
      .def_readonly("to_a", &Move::to_a)
      .def_readonly("to_b", &Move::to_b)
      .def("is_identity", &Move::is_identity);

  m.def("init_state", [](const ProductivityGrid& grid, const Limiter& lim, std::optional<std::vector<std::int64_t>> occupancy,
                         std::optional<std::int64_t> workers, std::optional<std::int64_t> output_index) {
        if (occupancy) return init_state(grid, *occupancy, lim);
        if (!workers || !output_index) throw PreconditionError("give occupancy, or workers and output_index");
        return init_state(grid, TargetTotals{*workers, *output_index}, lim);
      }, py::arg("grid"), py::arg("limiter"), py::kw_only(), py::arg("occupancy") = py::none(),
      py::arg("workers") = py::none(), py::arg("output_index") = py::none());
  m.def("acceptance_probability", &acceptance_probability, py::arg("state"), py::arg("grid"), py::arg("move"),
        py::arg("limiter"));
  m.def("destination_count", &destination_count, py::arg("level_sum"), py::arg("levels"));

  m.def("simulate", [](const ProductivityGrid& grid, const Limiter& lim, const SystemState& state, std::uint64_t steps,
                       std::uint64_t seed, std::optional<std::uint64_t> burn_in, std::uint64_t sample_every,
                       std::uint64_t flux_min_count) {
        SimConfig config;
        config.grid = grid;
        config.limiter = lim;
        config.seed = seed;
        config.steps = steps;
        config.burn_in = burn_in.value_or(steps / 10);
        config.sample_every = sample_every;
        validate(config);
        std::optional<RunResult> held;
        {
          py::gil_scoped_release release;
          held.emplace(run(config, state));
        }
        const RunResult& r = *held;
        const auto flux = flux_balance_report(r.ledger, flux_min_count);
        py::dict out;
        out["final_state"] = r.final_state;
        out["mean"] = r.averages.mean();
        out["variance"] = r.averages.variance();
        out["samples"] = r.averages.samples;
        out["proposals"] = r.proposals;
        out["accepted"] = r.accepted;
        out["acceptance_rate"] = r.acceptance_rate();
        py::list rows;
        for (const auto& row : flux.rows) rows.append(flux_row_dict(row));
        out["flux"] = rows;
        out["flux_fraction_beyond_3sigma"] = flux.fraction_beyond_3sigma;
        return out;
      }, py::arg("grid"), py::arg("limiter"), py::arg("state"), py::kw_only(), py::arg("steps"), py::arg("seed"),
      py::arg("burn_in") = py::none(), py::arg("sample_every") = 100, py::arg("flux_min_count") = 100);

  py::class_<LineFit>(m, "LineFit")
      .def_readonly("slope", &LineFit::slope)
      .def_readonly("intercept", &LineFit::intercept)
      .def_readonly("r_squared", &LineFit::r_squared)
      .def_readonly("slope_stderr", &LineFit::slope_stderr)
      .def_readonly("points", &LineFit::points);
  m.def("g_linearity_check", [](const std::vector<double>& mean, const Limiter& lim, const ProductivityGrid& grid) {
        return g_linearity_check(mean, lim, grid);
      }, py::arg("mean_occupancy"), py::arg("limiter"), py::arg("grid"));
  m.def("implied_temperature", [](const ProductivityGrid& grid, const Limiter& lim, std::int64_t workers,
                                  std::int64_t output_index) {
        const auto t = implied_temperature(grid, lim, {workers, output_index});
        return py::make_tuple(t.beta, t.beta_mu);
      }, py::arg("grid"), py::arg("limiter"), py::arg("workers"), py::arg("output_index"));

  // ---- fitting
  py::class_<BinnedCurve>(m, "BinnedCurve")
      .def(py::init([](const std::vector<double>& c, const std::vector<double>& n, std::optional<std::vector<double>> w) {
             if (c.size() != n.size() || (w && w->size() != c.size())) throw DataError("column lengths differ");
             std::vector<CurveBin> bins;
             for (std::size_t i = 0; i < c.size(); ++i) bins.push_back({c[i], n[i], w ? (*w)[i] : 1.0});
             return BinnedCurve(std::move(bins));
           }), py::arg("c_center"), py::arg("n_mean"), py::arg("weight") = py::none())
      .def_property_readonly("c_center", [](const BinnedCurve& b) {
        std::vector<double> v;
        for (const auto& x : b.bins()) v.push_back(x.c_center);
        return v;
      })
      .def_property_readonly("n_mean", [](const BinnedCurve& b) {
        std::vector<double> v;
        for (const auto& x : b.bins()) v.push_back(x.n_mean);
        return v;
      })
      .def_property_readonly("weight", [](const BinnedCurve& b) {
        std::vector<double> v;
        for (const auto& x : b.bins()) v.push_back(x.weight);
        return v;
      })
      .def("__len__", &BinnedCurve::size);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("params", &FitResult::params)
      .def_readonly("chi2", &FitResult::chi2)
      .def_readonly("n_evals", &FitResult::n_evals)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("start_index", &FitResult::start_index);

  m.def("chi_square", &chi_square, py::arg("params"), py::arg("curve"));
  m.def("fit", [](const BinnedCurve& curve, double tol) {
        FitOptions o;
        o.tol = tol;
        py::gil_scoped_release release;
        return fit(curve, o);
      }, py::arg("curve"), py::arg("tol") = 1e-9);
  m.def("synthetic_curve", [](const ModelParams& p, double c_min, double c_max, int bins, double sigma, std::uint64_t seed) {
        return synthetic_curve(p, LogBinSpec{c_min, c_max, bins}, sigma, seed);
      }, py::arg("params"), py::kw_only(), py::arg("c_min") = 1e3, py::arg("c_max") = 1e6, py::arg("bins") = 50,
      py::arg("sigma") = 0.0, py::arg("seed") = 1);

  // ---- data pipeline
  py::class_<CleanRecord>(m, "CleanRecord")
      .def_readonly("firm_id", &CleanRecord::firm_id)
      .def_readonly("year", &CleanRecord::year)
      .def_readonly("sector", &CleanRecord::sector)
      .def_readonly("value_added", &CleanRecord::value_added)
      .def_readonly("workers", &CleanRecord::workers)
      .def_readonly("productivity", &CleanRecord::productivity);

  py::class_<LogBinning>(m, "LogBinning")
      .def(py::init<double, double, int>(), py::arg("c_min") = 1e2, py::arg("c_max") = 1e7,
           py::arg("bins_per_decade") = 20)
      .def_property_readonly("bin_count", &LogBinning::bin_count)
      .def("edge", &LogBinning::edge, py::arg("k"))
      .def("bin_of", &LogBinning::bin_of, py::arg("c"));

  m.def("clean_records_file", [](const std::string& path, std::optional<std::vector<std::string>> exclude,
                                 const std::string& units) {
        const auto records = load_records(path, units);
        const auto result = exclude ? clean(records, *exclude) : clean(records);
        py::dict rejected;
        for (const auto& [reason, count] : result.rejected) rejected[to_string(reason)] = count;
        return py::make_tuple(result.records, rejected);
      }, py::arg("path"), py::arg("exclude_sectors") = py::none(), py::arg("units") = "thousand_yen");

  auto density_dict = [](const std::vector<DensityBin>& bins) {
    std::vector<double> lo, hi, d;
    for (const auto& b : bins) {
      lo.push_back(b.lo);
      hi.push_back(b.hi);
      d.push_back(b.density);
    }
    py::dict out;
    out["bin_lo"] = lo;
    out["bin_hi"] = hi;
    out["density"] = d;
    return out;
  };
  m.def("firm_pdf", [density_dict](const std::vector<CleanRecord>& r, const LogBinning& b) {
        return density_dict(firm_pdf(r, b));
      }, py::arg("records"), py::arg("binning") = LogBinning());
  m.def("worker_pdf", [density_dict](const std::vector<CleanRecord>& r, const LogBinning& b) {
        return density_dict(worker_pdf(r, b));
      }, py::arg("records"), py::arg("binning") = LogBinning());
  m.def("mean_workers_curve", [](const std::vector<CleanRecord>& r, const LogBinning& b) {
        return mean_workers_curve(r, b);
      }, py::arg("records"), py::arg("binning") = LogBinning());

  // ---- command line and self-checks
  m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      }, py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");

  m.def("verify", [](const std::string& suite) {
        std::vector<VerifyCheck> checks;
        {
          py::gil_scoped_release release;
          checks = run_verify_suite(suite);
        }
        py::list out;
        for (const auto& c : checks) {
          py::dict d;
          d["suite"] = c.suite;
          d["name"] = c.name;
          d["passed"] = c.passed;
          d["value"] = c.value;
          d["threshold"] = c.threshold;
          d["detail"] = c.detail;
          out.append(d);
        }
        return out;
      }, py::arg("suite"));
}
