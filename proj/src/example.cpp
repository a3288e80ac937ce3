#include "sdstab/example.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sdstab/errors.hpp"
#include "sdstab/format.hpp"
#include "sdstab/svg.hpp"

namespace sdstab {

namespace {

const char* kDriftText = "-(x[0]^3) - 2*x[0]";

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  return f;
}

/// |x_k| at the first sampling instant at or past `t`; falls back to the
/// final sample when the trajectory ends earlier.
double norm_at(const Trajectory& traj, double t) {
  for (std::size_t k = 0; k < traj.times.size(); ++k)
    if (traj.times[k] >= t) return norm2(traj.states[k]);
  return norm2(traj.states.back());
}

double second_half_sup(const Trajectory& traj, double horizon) {
  double sup = 0.0;
  for (std::size_t k = 0; k < traj.times.size(); ++k)
    if (traj.times[k] >= 0.5 * horizon)
      sup = std::max(sup, norm2(traj.states[k]));
  return sup;
}

/// Re-integrates every recorded interval with its held input and writes the
/// continuous-time samples as CSV, also collecting the (t, x[0]) curve.
void write_dense(const ClosedLoopModel& model, const Trajectory& traj,
                 const std::string& path, std::size_t per_interval,
                 std::vector<std::pair<double, double>>& curve) {
  auto f = open_out(path);
  const std::size_t n = model.state_dim();
  f << "t";
  for (std::size_t i = 0; i < n; ++i) f << ",x" << i;
  f << "\n";
  auto row = [&](double t, const Vec& x) {
    f << format_double(t);
    for (double v : x) f << ',' << format_double(v);
    f << "\n";
    curve.push_back({t, x[0]});
  };
  row(traj.times[0], traj.states[0]);
  for (std::size_t k = 0; k < traj.steps(); ++k) {
    Vec y = traj.states[k];
    const double dt = traj.periods[k] / static_cast<double>(per_interval);
    for (std::size_t j = 1; j <= per_interval; ++j) {
      const FlowResult r =
          integrate_flow(model.system(), y, traj.inputs[k], dt, model.oracle());
      if (r.status != FlowStatus::Reached)
        throw OracleMismatch("dense re-integration of interval " +
                             std::to_string(k) +
                             " failed although the recorded run completed");
      y = r.state;
      row(traj.times[k] + static_cast<double>(j) * dt, y);
    }
  }
}

std::vector<std::pair<double, double>> stem_points(const Trajectory& traj) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t k = 0; k < traj.times.size(); ++k)
    pts.push_back({traj.times[k], traj.states[k][0]});
  return pts;
}

}  // namespace

ContinuousSystem example_system() {
  const auto vars = ContinuousSystem::field_layout(1, 1);
  return {1, 1, VectorExpression::parse({"x[0]^3 + u[0]"}, vars)};
}

ContinuousSystem example_target_field() {
  const auto vars = ContinuousSystem::field_layout(1, 1);
  return {1, 1, VectorExpression::parse({kDriftText}, vars)};
}

Expression example_target_map() {
  const VariableLayout drift_vars{{"x", 1}};
  const VariableLayout map_vars{{"x", 1}, {"T", 1}};
  const Expression fd = Expression::parse(kDriftText, drift_vars);
  const Expression x = Expression::variable(map_vars, "x");
  const Expression T = Expression::variable(map_vars, "T");
  const Expression half = Expression::constant(map_vars, 0.5);
  const Expression fd1 = Expression::compose(fd, map_vars, {{x}});
  const Expression fd2 = Expression::compose(fd, map_vars, {{x + T * fd1}});
  return x + half * T * (fd1 + fd2);
}

ControlLaw example_matched_law(ErrorKind kind) {
  const VariableLayout map_vars{{"x", 1}, {"T", 1}};
  const VectorExpression target(map_vars, {example_target_map()});
  return match_controller(example_system(), target, kind, 1.0);
}

ClosedLoopModel example_euler_model(ErrorKind kind) {
  return ClosedLoopModel::with_tableau(example_system(),
                                       example_matched_law(kind),
                                       ButcherTableau::builtin("euler"));
}

ClosedLoopModel example_exact_model(ErrorKind kind,
                                    const FlowOracleConfig& oracle) {
  return ClosedLoopModel::with_exact_flow(example_system(),
                                          example_matched_law(kind), oracle);
}

ClosedLoopModel example_reference_model() {
  const auto law_vars = ControlLaw::law_layout(1, 1);
  ControlLaw zero_law(1, 1, ErrorKind::StateMeasurement,
                      VectorExpression::parse({"0"}, law_vars), 1.0);
  return ClosedLoopModel::with_tableau(example_target_field(), zero_law,
                                       ButcherTableau::builtin("heun"));
}

ExampleArtifacts reproduce_example(const std::string& out_dir,
                                   std::uint64_t seed, double T_max,
                                   double horizon, bool plot) {
  if (!(T_max > 0.0) || T_max > 1.0)
    throw ConfigError("T_max must lie in (0, 1], got " + format_double(T_max));
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  std::filesystem::create_directories(out_dir);

  const ClosedLoopModel euler = example_euler_model();
  const ClosedLoopModel exact = example_exact_model();
  const SamplingSchedule schedule =
      SamplingSchedule::until_elapsed(T_max, horizon, seed);
  const DisturbanceSignal clean = DisturbanceSignal::zero(1);
  const DisturbanceSignal noisy =
      DisturbanceSignal::uniform(1, 1.0, seed ^ 0xD157A5CEull);
  const Vec x0{5.0};

  const Trajectory euler_clean = simulate(euler, x0, schedule, clean);
  const Trajectory euler_noisy = simulate(euler, x0, schedule, noisy);
  const Trajectory exact_clean = simulate(exact, x0, schedule, clean);
  const Trajectory exact_noisy = simulate(exact, x0, schedule, noisy);

  ExampleArtifacts art;
  art.steps = schedule.count();
  art.t_max = T_max;
  art.horizon = horizon;
  art.seed = seed;
  art.euler_clean_at_6 = norm_at(euler_clean, 6.0);
  art.exact_clean_at_6 = norm_at(exact_clean, 6.0);
  art.euler_noisy_limsup = second_half_sup(euler_noisy, horizon);
  art.exact_noisy_limsup = second_half_sup(exact_noisy, horizon);
  const std::size_t common =
      std::min(euler_clean.times.size(), exact_clean.times.size());
  for (std::size_t k = 0; k < common; ++k)
    art.worst_stem_gap = std::max(
        art.worst_stem_gap, dist2(euler_clean.states[k], exact_clean.states[k]));

  const std::pair<const Trajectory*, const char*> sampled[] = {
      {&euler_clean, "euler_clean.csv"},
      {&euler_noisy, "euler_noisy.csv"},
      {&exact_clean, "exact_clean.csv"},
      {&exact_noisy, "exact_noisy.csv"},
  };
  for (const auto& [traj, name] : sampled) {
    const std::string path = join(out_dir, name);
    auto f = open_out(path);
    traj->write_csv(f);
    art.files.push_back(path);
  }

  std::vector<std::pair<double, double>> dense_clean, dense_noisy;
  const std::string dc = join(out_dir, "exact_clean_dense.csv");
  write_dense(exact, exact_clean, dc, 16, dense_clean);
  art.files.push_back(dc);
  const std::string dn = join(out_dir, "exact_noisy_dense.csv");
  write_dense(exact, exact_noisy, dn, 16, dense_noisy);
  art.files.push_back(dn);

  if (plot) {
    ChartSpec spec;
    spec.title = "Closed-loop response from x(0) = 5";
    spec.x_label = "t";
    spec.y_label = "x";
    std::vector<Series> series;
    series.push_back({"exact flow, e = 0", "#cc2222", 1.8, false, dense_clean});
    series.push_back(
        {"exact flow, |e| <= 1", "#2255cc", 1.8, false, dense_noisy});
    series.push_back(
        {"Euler samples, e = 0", "#e09999", 1.0, true, stem_points(euler_clean)});
    series.push_back({"Euler samples, |e| <= 1", "#99aadd", 1.0, true,
                      stem_points(euler_noisy)});
    const std::string fig = join(out_dir, "figure.svg");
    write_chart(fig, spec, series);
    art.files.push_back(fig);
  }

  nlohmann::json summary{
      {"seed", art.seed},
      {"T_max", art.t_max},
      {"horizon", art.horizon},
      {"steps", art.steps},
      {"euler_clean_at_6", art.euler_clean_at_6},
      {"exact_clean_at_6", art.exact_clean_at_6},
      {"euler_noisy_limsup", art.euler_noisy_limsup},
      {"exact_noisy_limsup", art.exact_noisy_limsup},
      {"worst_stem_gap", art.worst_stem_gap},
  };
  const std::string sj = join(out_dir, "summary.json");
  open_out(sj) << summary.dump(2) << "\n";
  art.files.push_back(sj);
  return art;
}

}  // namespace sdstab
