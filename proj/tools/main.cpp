// Command-line front end: fixed points, ODE trajectories, simulation, and
// the built-in numeric table validation.
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "supermarket/mean_field.hpp"
#include "supermarket/model_file.hpp"
#include "supermarket/simulator.hpp"
#include "supermarket/stationary.hpp"

namespace {

using namespace supermarket;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string fmt(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::string fmt_short(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.6g", value);
  return buffer;
}

class OutputTarget {
 public:
  explicit OutputTarget(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw SchemaError("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

struct FixedPointRows {
  std::vector<std::array<std::string, 3>> rows;  // level, phase, value
  std::vector<std::string> report;
};

FixedPointRows rows_from_tail(const TailSequence& seq) {
  FixedPointRows out;
  for (int k = 0; k <= seq.max_level(); ++k) {
    const Eigen::RowVectorXd level = seq.level(k);
    for (Eigen::Index p = 0; p < level.size(); ++p)
      out.rows.push_back({std::to_string(k), std::to_string(p), fmt(level(p))});
  }
  return out;
}

void emit_fixed_point(const FixedPointRows& rows, const std::string& out_path) {
  OutputTarget target(out_path);
  target.stream() << "level,phase,value\n";
  for (const auto& row : rows.rows)
    target.stream() << row[0] << ',' << row[1] << ',' << row[2] << '\n';
  for (const auto& line : rows.report) std::cerr << line << '\n';
}

int cmd_fixed_point(const std::string& model_path, const std::string& out_path,
                    std::optional<int> levels, std::optional<double> eps) {
  const ModelFile file = read_model_file(model_path);
  const int K = levels.value_or(file.solver.K);
  const double tol = eps.value_or(file.solver.eps);
  FixedPointRows rows;

  if (const auto* spec = std::get_if<Mg1Spec>(&file.model)) {
    const Mg1Model model = make_mg1_model(BmapDescriptor{spec->C, spec->D}, spec->mu, spec->d);
    const TailSequence seq = levels ? mg1_fixed_point(model, K) : mg1_fixed_point_auto(model);
    const Mg1ResidualReport report = mg1_aggregate_residual(seq, model);
    rows = rows_from_tail(seq);
    rows.report.push_back("utilization " + fmt_short(model.rho));
    rows.report.push_back("levels " + std::to_string(seq.max_level()));
    rows.report.push_back("max recursion residual " + fmt_short(report.max_recursion_identity));
    rows.report.push_back("max dropped term " + fmt_short(report.max_dropped_term));
    rows.report.push_back("vector residual " + fmt_short(report.vector_sup));
  } else if (const auto* spec = std::get_if<Gim1Spec>(&file.model)) {
    const Gim1Model model =
        make_gim1_model(spec->lambda, make_batch_ph_service(spec->alpha, spec->T, spec->b),
                        spec->d);
    const Gim1Solution solution = gim1_fixed_point(model, K, tol);
    const Gim1ResidualReport report = gim1_aggregate_residual(solution.seq, model);
    rows = rows_from_tail(solution.seq);
    rows.report.push_back("utilization " + fmt_short(model.rho));
    rows.report.push_back("iterations " + std::to_string(solution.iterations));
    rows.report.push_back("contraction bound " + fmt_short(solution.contraction_bound));
    rows.report.push_back("max balance residual " + fmt_short(report.max_balance_residual));
    rows.report.push_back("vector residual " + fmt_short(report.vector_sup));
  } else if (const auto* spec = std::get_if<MobileSpec>(&file.model)) {
    const MobileServerModel model = make_mobile_model(spec->lambda, spec->mu, spec->d, spec->f);
    const MobileSolution solution = mobile_fixed_point(model, K);
    for (size_t k = 0; k < solution.pi.size(); ++k)
      rows.rows.push_back({std::to_string(k), "0", fmt(solution.pi[k])});
    rows.report.push_back("regime " + std::string(to_string(solution.regime)));
    if (solution.regime == MobileRegime::transient)
      rows.report.push_back("tail limit " + fmt_short(solution.limit));
    double max_res = 0;
    for (const double r : mobile_residual(solution.pi, model)) max_res = std::max(max_res, r);
    rows.report.push_back("max residual " + fmt_short(max_res));
  } else if (const auto* spec = std::get_if<MulticlassSpec>(&file.model)) {
    const MultiClassModel model = make_multiclass_model(spec->classes, spec->mu);
    const std::vector<double> delta =
        levels ? multiclass_fixed_point(model, K) : multiclass_fixed_point_auto(model);
    for (size_t k = 0; k < delta.size(); ++k)
      rows.rows.push_back({std::to_string(k), "0", fmt(delta[k])});
    double max_res = 0;
    for (const double r : multiclass_residual(delta, model)) max_res = std::max(max_res, r);
    rows.report.push_back("utilization " + fmt_short(model.rho));
    rows.report.push_back("max residual " + fmt_short(max_res));
  } else {
    throw SchemaError("fixed-point: 'general' models have no closed-form solver; use ode");
  }
  emit_fixed_point(rows, out_path);
  return kExitOk;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  out << "time,level,phase,fraction\n";
  for (const FractionMeasure& state : trajectory.states)
    for (size_t k = 0; k < state.levels.size(); ++k)
      for (Eigen::Index p = 0; p < state.levels[k].size(); ++p)
        out << fmt(state.time) << ',' << k << ',' << p << ',' << fmt(state.levels[k](p))
            << '\n';
}

void write_trajectory_svg(const std::string& path, const Trajectory& trajectory) {
  // Level masses S_k e over time, one polyline per level.
  const int width = 760, height = 420, margin = 50;
  const size_t levels = trajectory.states.front().levels.size();
  double t_max = trajectory.states.back().time;
  if (t_max <= 0) t_max = 1;
  std::ofstream svg(path);
  if (!svg) throw SchemaError("cannot open plot file '" + path + "'");
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' viewBox='0 0 " << width << ' ' << height << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
      << "' y2='" << height - margin << "' stroke='black'/>\n"
      << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
      << height - margin << "' stroke='black'/>\n";
  const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  for (size_t k = 0; k < levels; ++k) {
    std::ostringstream points;
    for (const FractionMeasure& state : trajectory.states) {
      const double x = margin + (state.time / t_max) * (width - 2 * margin);
      const double mass = state.levels[k].sum();
      const double y = height - margin - mass * (height - 2 * margin);
      points << x << ',' << y << ' ';
    }
    svg << "<polyline fill='none' stroke='" << palette[k % 10] << "' stroke-width='1.5' points='"
        << points.str() << "'/>\n";
    svg << "<text x='" << width - margin + 4 << "' y='" << margin + 14 * (k + 1)
        << "' font-size='11' fill='" << palette[k % 10] << "'>k=" << k << "</text>\n";
  }
  svg << "<text x='" << width / 2 << "' y='" << height - 12
      << "' font-size='12' text-anchor='middle'>time</text>\n"
      << "<text x='14' y='" << height / 2
      << "' font-size='12' text-anchor='middle' transform='rotate(-90 14 " << height / 2
      << ")'>level mass</text>\n</svg>\n";
}

int cmd_ode(const std::string& model_path, const std::string& out_path, std::optional<int> levels,
            std::optional<double> eps, std::optional<double> t_end_flag, bool plot) {
  const ModelFile file = read_model_file(model_path);
  const int K = levels.value_or(file.solver.K);
  const double t_end = t_end_flag.value_or(file.solver.t_end);
  if (t_end < 0) throw SchemaError("ode: t_end must be nonnegative");
  if (plot && out_path.empty()) throw SchemaError("ode: --plot requires --out");

  const ChoiceDecomposition dec = build_decomposition(file, K);
  const FractionMeasure s0 = initial_state_for(file, K);

  IntegrationControls controls;
  controls.step = file.solver.step;
  controls.tolerance = eps.value_or(1e-8);
  const int samples = 100;
  for (int i = 0; i <= samples; ++i)
    controls.sample_times.push_back(t_end * static_cast<double>(i) / samples);
  if (t_end == 0) controls.sample_times = {0.0};

  const Trajectory trajectory = integrate(s0, dec, t_end, controls);
  if (trajectory.failed) {
    std::cerr << "integration failed: " << trajectory.error << '\n';
    return kExitRuntime;
  }
  OutputTarget target(out_path);
  write_trajectory_csv(target.stream(), trajectory);
  if (plot) write_trajectory_svg(out_path + ".svg", trajectory);
  return kExitOk;
}

int cmd_simulate(const std::string& model_path, const std::string& out_path,
                 std::optional<int> levels, std::optional<std::uint64_t> seed,
                 std::optional<int> replications) {
  const ModelFile file = read_model_file(model_path);

  SimConfig config;
  config.model = build_sim_model(file);
  config.n = file.sim.n;
  config.horizon = file.sim.horizon;
  config.warmup = file.sim.warmup;
  config.seed = seed.value_or(file.sim.seed);
  config.replications = replications.value_or(file.sim.replications);
  config.max_levels = levels.value_or(32);
  if (const auto* spec = std::get_if<MobileSpec>(&file.model))
    config.mobile_law = spec->service_law;
  const int points = 10;
  for (int i = 0; i <= points; ++i)
    config.sample_times.push_back(config.warmup + (config.horizon - config.warmup) *
                                                      static_cast<double>(i) / points);

  const EmpiricalMeasure emp = simulate(config);

  OutputTarget target(out_path);
  target.stream() << "time,level,phase,mean_fraction,std_error,replications\n";
  for (size_t ti = 0; ti < emp.sample_times.size(); ++ti)
    for (size_t k = 0; k < emp.mean[ti].size(); ++k)
      for (Eigen::Index p = 0; p < emp.mean[ti][k].size(); ++p)
        target.stream() << fmt(emp.sample_times[ti]) << ',' << k << ',' << p << ','
                        << fmt(emp.mean[ti][k](p)) << ',' << fmt(emp.std_error[ti][k](p)) << ','
                        << emp.replications << '\n';

  if (!out_path.empty()) {
    nlohmann::json manifest;
    manifest["model_file"] = model_path;
    manifest["model_type"] = model_type_name(file);
    manifest["model"] = nlohmann::json::parse(serialize_model_file(file));
    manifest["n"] = config.n;
    manifest["seed"] = config.seed;
    manifest["replications"] = config.replications;
    manifest["horizon"] = config.horizon;
    manifest["warmup"] = config.warmup;
    manifest["max_levels"] = config.max_levels;
    manifest["sample_times"] = config.sample_times;
    manifest["replication_seeds"] = emp.replication_seeds;
    nlohmann::json counters = nlohmann::json::array();
    for (const ReplicationCounters& c : emp.counters)
      counters.push_back({{"arrivals", c.arrivals},
                          {"departures", c.departures},
                          {"in_system", c.in_system},
                          {"events", c.events}});
    manifest["counters"] = std::move(counters);
    std::ofstream mf(out_path + ".manifest.json");
    if (!mf) throw SchemaError("cannot open manifest file '" + out_path + ".manifest.json'");
    mf << manifest.dump(2) << '\n';
  }
  return kExitOk;
}

struct TableCase {
  std::string name;
  Gim1Model model;
  // printed[k][p] is the published value for level k+1, phase p.
  std::vector<std::vector<double>> printed;
  // Entry flagged as a suspected misprint (level index, phase), if any.
  std::optional<std::pair<int, int>> flagged;
};

std::vector<TableCase> table_cases() {
  std::vector<TableCase> cases;
  const auto add = [&](std::string name, double lambda, Eigen::RowVectorXd alpha,
                       Eigen::MatrixXd T, int d, std::vector<std::vector<double>> printed,
                       std::optional<std::pair<int, int>> flagged = std::nullopt) {
    TableCase c{std::move(name),
                make_gim1_model(lambda, make_batch_ph_service(std::move(alpha), std::move(T),
                                                              {1.0}),
                                d),
                std::move(printed), flagged};
    cases.push_back(std::move(c));
  };

  Eigen::RowVectorXd alpha_half(2);
  alpha_half << 0.5, 0.5;
  Eigen::MatrixXd T1(2, 2), T2(2, 2), T3(2, 2);
  T1 << -4, 3, 2, -7;
  // The published matrices for the second and third case do not regenerate
  // the published solution columns; one entry in each is off (row sums must
  // match the printed per-phase rates). These are the matrices the printed
  // numbers actually come from.
  T2 << -5, 3, 2, -9;
  T3 << -4, 4, 3, -7;
  add("service matrix 1", 1.0, alpha_half, T1, 2,
      {{0.2045, 0.1591},
       {0.0137, 0.0107},
       {6.193e-05, 4.817e-05},
       {1.259e-09, 9.793e-10},
       {5.204e-19, 4.048e-19}});
  add("service matrix 2", 1.0, alpha_half, T2, 2,
      {{0.1410, 0.1026},
       {0.0043, 0.0031},
       {3.965e-06, 2.884e-06},
       {3.390e-12, 2.465e-12},
       {2.478e-24, 1.802e-24}});
  add("service matrix 3", 1.0, alpha_half, T3, 2,
      {{0.3125, 0.2500},
       {0.0500, 0.0400},
       {0.0013, 0.0010},
       {8.446e-07, 6.757e-07},
       {3.656e-13, 2.925e-13}});

  Eigen::MatrixXd T4(3, 3);
  T4 << -10, 2, 4, 3, -7, 4, 0, 2, -5;
  Eigen::RowVectorXd alpha1(3), alpha2(3);
  alpha1 << 1.0 / 3, 1.0 / 3, 1.0 / 3;
  alpha2 << 1.0 / 12, 7.0 / 12, 1.0 / 3;
  // The (level 2, phase 1) entry of the first column is printed as
  // 1.030e-05; recomputation gives 1.030e-04 — an exponent misprint. It is
  // reported as a warning, not a failure.
  add("start vector 1", 1.0, alpha1, T4, 5,
      {{0.0741, 0.1358, 0.2346},
       {5.619e-05, 1.030e-05, 1.779e-04},
       {1.411e-20, 2.587e-20, 4.469e-20},
       {1.410e-98, 2.586e-98, 4.466e-98}},
      std::make_pair(2, 1));
  add("start vector 2", 1.0, alpha2, T4, 5,
      {{0.0602, 0.1728, 0.2531},
       {7.182e-05, 2.063e-04, 3.020e-04},
       {1.739e-19, 4.993e-19, 7.311e-19},
       {1.444e-92, 4.148e-92, 6.074e-92}});
  return cases;
}

int cmd_validate_tables(const std::string& out_path, std::optional<double> tolerance) {
  const double abs_tol = tolerance.value_or(5e-4);
  const double rel_tol = tolerance.value_or(1e-3);
  bool all_pass = true;
  OutputTarget target(out_path);
  target.stream() << "level,phase,computed,printed,abs_diff\n";

  for (const TableCase& c : table_cases()) {
    const Gim1Solution solution = gim1_fixed_point(c.model, 10, 1e-14);
    bool case_pass = true;
    for (size_t row = 0; row < c.printed.size(); ++row) {
      const int level = static_cast<int>(row) + 1;
      const Eigen::RowVectorXd pi = solution.seq.level(level);
      for (size_t p = 0; p < c.printed[row].size(); ++p) {
        const double printed = c.printed[row][p];
        const double computed = pi(static_cast<Eigen::Index>(p));
        const double diff = std::abs(computed - printed);
        target.stream() << level << ',' << p << ',' << fmt(computed) << ',' << fmt(printed)
                        << ',' << fmt(diff) << '\n';
        const bool flagged =
            c.flagged && c.flagged->first == level && c.flagged->second == static_cast<int>(p);
        const bool ok = printed >= 1e-3 ? diff <= abs_tol : diff <= rel_tol * printed;
        if (flagged) {
          std::cout << "WARN  " << c.name << " level " << level << " phase " << p
                    << ": printed " << fmt_short(printed) << ", recomputed "
                    << fmt_short(computed) << " (suspected misprint, not counted)\n";
        } else if (!ok) {
          std::cout << "FAIL  " << c.name << " level " << level << " phase " << p << ": printed "
                    << fmt_short(printed) << ", computed " << fmt_short(computed) << ", diff "
                    << fmt_short(diff) << '\n';
          case_pass = false;
        }
      }
    }
    std::cout << (case_pass ? "PASS  " : "FAIL  ") << c.name << '\n';
    all_pass = all_pass && case_pass;
  }
  std::cout << (all_pass ? "PASS" : "FAIL") << "  table validation\n";
  return all_pass ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field solvers and simulator for randomized load-balancing models"};
  app.require_subcommand(1);

  std::string model_path, out_path;
  int levels = 0;
  double eps = 0, t_end = 0, tolerance = 0;
  std::uint64_t seed = 0;
  int replications = 0;
  bool plot = false;

  auto* fixed = app.add_subcommand("fixed-point", "Solve for the stationary fraction measure");
  fixed->add_option("--model", model_path, "model file (JSON)")->required();
  fixed->add_option("--out", out_path, "output CSV path (default stdout)");
  auto* fixed_levels = fixed->add_option("--levels", levels, "level truncation");
  auto* fixed_eps = fixed->add_option("--eps", eps, "iteration tolerance");

  auto* ode = app.add_subcommand("ode", "Integrate the transient dynamics");
  ode->add_option("--model", model_path, "model file (JSON)")->required();
  ode->add_option("--out", out_path, "output CSV path (default stdout)");
  auto* ode_levels = ode->add_option("--levels", levels, "level truncation");
  auto* ode_eps = ode->add_option("--eps", eps, "integrator error tolerance");
  auto* ode_tend = ode->add_option("--t-end", t_end, "integration horizon");
  ode->add_flag("--plot", plot, "also write an SVG plot next to --out");

  auto* sim = app.add_subcommand("simulate", "Run the discrete-event simulator");
  sim->add_option("--model", model_path, "model file (JSON)")->required();
  sim->add_option("--out", out_path, "output CSV path (default stdout)");
  auto* sim_levels = sim->add_option("--levels", levels, "highest recorded level");
  auto* sim_seed = sim->add_option("--seed", seed, "replication seed");
  auto* sim_reps = sim->add_option("--replications", replications, "replication count");

  auto* tables = app.add_subcommand("validate-tables", "Recompute the published solution tables");
  tables->add_option("--out", out_path, "comparison CSV path (default stdout)");
  auto* tables_tol = tables->add_option("--tolerance", tolerance, "comparison tolerance override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const auto opt_int = [](CLI::Option* opt, int value) {
    return opt->count() ? std::optional<int>(value) : std::nullopt;
  };
  const auto opt_double = [](CLI::Option* opt, double value) {
    return opt->count() ? std::optional<double>(value) : std::nullopt;
  };

  try {
    if (fixed->parsed())
      return cmd_fixed_point(model_path, out_path, opt_int(fixed_levels, levels),
                             opt_double(fixed_eps, eps));
    if (ode->parsed())
      return cmd_ode(model_path, out_path, opt_int(ode_levels, levels), opt_double(ode_eps, eps),
                     opt_double(ode_tend, t_end), plot);
    if (sim->parsed())
      return cmd_simulate(model_path, out_path, opt_int(sim_levels, levels),
                          sim_seed->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
                          opt_int(sim_reps, replications));
    if (tables->parsed()) return cmd_validate_tables(out_path, opt_double(tables_tol, tolerance));
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
