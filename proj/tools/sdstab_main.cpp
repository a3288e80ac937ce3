// Command-line front end: every subcommand reads a JSON config, runs one
// library task and writes its artifacts (CSV trajectories, JSON reports,
// SVG charts) into the --out directory. Exit codes: 0 on success / passing
// checks, 2 when a check found a violation witness or no certificate could
// be produced, 1 for configuration problems.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sdstab/closedloop.hpp"
#include "sdstab/consistency.hpp"
#include "sdstab/errors.hpp"
#include "sdstab/example.hpp"
#include "sdstab/format.hpp"
#include "sdstab/json_io.hpp"
#include "sdstab/stability.hpp"
#include "sdstab/svg.hpp"

namespace {

using nlohmann::json;
using namespace sdstab;

struct Options {
  std::string config_path;
  std::string out_dir = ".";
  bool plot = false;
};

double num(const json& j, const std::string& key) {
  const json& v = require_field(j, key);
  if (!v.is_number())
    throw ConfigError("field '" + key + "' must be a number");
  return v.get<double>();
}

double num_or(const json& j, const std::string& key, double fallback) {
  return j.contains(key) ? num(j, key) : fallback;
}

std::size_t count_or(const json& j, const std::string& key,
                     std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_unsigned())
    throw ConfigError("field '" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::uint64_t seed_of(const json& j) {
  const json& v = require_field(j, "seed");
  if (!v.is_number_unsigned())
    throw ConfigError("field 'seed' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

Vec vec_of(const json& j, const std::string& key) {
  const json& v = require_field(j, key);
  if (!v.is_array()) throw ConfigError("field '" + key + "' must be an array");
  Vec out;
  for (const auto& item : v) {
    if (!item.is_number())
      throw ConfigError("field '" + key + "' must contain only numbers");
    out.push_back(item.get<double>());
  }
  return out;
}

/// Certificates may be given inline or as a path to a JSON file.
json resolve_ref(const json& v) {
  return v.is_string() ? load_json_file(v.get<std::string>()) : v;
}

std::string out_path(const Options& opt, const std::string& name) {
  std::filesystem::create_directories(opt.out_dir);
  return (std::filesystem::path(opt.out_dir) / name).string();
}

void write_json(const Options& opt, const std::string& name, const json& j) {
  const std::string path = out_path(opt, name);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << j.dump(2) << "\n";
  std::cout << "wrote " << path << "\n";
}

void plot_trajectory(const Options& opt, const std::string& name,
                     const Trajectory& traj) {
  Series stems;
  stems.label = "|x_k| at samples";
  stems.color = "#cc2222";
  stems.width = 1.0;
  stems.stems = true;
  for (std::size_t k = 0; k < traj.times.size(); ++k)
    stems.points.push_back({traj.times[k], norm2(traj.states[k])});
  ChartSpec spec;
  spec.title = "Sampled trajectory";
  spec.x_label = "t";
  spec.y_label = "|x|";
  write_chart(out_path(opt, name), spec, {stems});
  std::cout << "wrote " << out_path(opt, name) << "\n";
}

int run_simulate(const json& cfg, const Options& opt) {
  const ClosedLoopModel model = model_from_json(require_field(cfg, "model"));
  const Vec x0 = vec_of(cfg, "x0");
  const SamplingSchedule schedule =
      schedule_from_json(require_field(cfg, "schedule"));
  const DisturbanceSignal disturbance =
      disturbance_from_json(require_field(cfg, "disturbance"));
  const Trajectory traj = simulate(model, x0, schedule, disturbance);

  const std::string csv =
      out_path(opt, cfg.value("out_csv", std::string{"trajectory.csv"}));
  std::ofstream f(csv, std::ios::binary);
  if (!f) throw ConfigError("cannot open '" + csv + "' for writing");
  traj.write_csv(f);
  std::cout << "wrote " << csv << "\n";
  if (opt.plot) plot_trajectory(opt, "trajectory.svg", traj);
  std::cout << "steps: " << traj.steps() << ", status: "
            << (traj.status == TrajectoryStatus::Complete ? "complete"
                                                          : "escaped")
            << ", final |x| = " << format_double(norm2(traj.states.back()))
            << "\n";
  return 0;
}

int run_fit_repc(const json& cfg, const Options& opt) {
  const ClosedLoopModel a = model_from_json(require_field(cfg, "model_a"));
  const ClosedLoopModel b = model_from_json(require_field(cfg, "model_b"));
  const ConsistencyCertificate cert =
      fit_repc(a, b, num(cfg, "M"), num(cfg, "E"), num(cfg, "T_cap"),
               count_or(cfg, "samples", 10000), seed_of(cfg));
  write_json(opt, cfg.value("out_json", std::string{"repc_certificate.json"}),
             to_json(cert));
  std::cout << "consistency certificate: K = " << format_double(cert.K)
            << ", rho_c = " << format_double(cert.rho_c)
            << ", phi = " << cert.phi.print()
            << ", T_star = " << format_double(cert.T_star) << "\n";
  return 0;
}

int run_check_repmc(const json& cfg, const Options& opt) {
  const ClosedLoopModel a = model_from_json(require_field(cfg, "model_a"));
  const ClosedLoopModel b = model_from_json(require_field(cfg, "model_b"));
  const ConsistencyCertificate cert =
      consistency_from_json(resolve_ref(require_field(cfg, "certificate")));
  const RepmcOutcome outcome =
      check_repmc(a, b, cert, num(cfg, "M"), num(cfg, "E"),
                  num(cfg, "horizon"), num(cfg, "eta"),
                  count_or(cfg, "trials", 100), seed_of(cfg));
  write_json(opt, cfg.value("out_json", std::string{"repmc_outcome.json"}),
             to_json(outcome));
  std::cout << "multistep consistency holds up to T_L = "
            << format_double(outcome.T_L)
            << " (worst margin " << format_double(outcome.worst_margin)
            << ")\n";
  return 0;
}

int run_fit_iss(const json& cfg, const Options& opt) {
  const ClosedLoopModel model = model_from_json(require_field(cfg, "model"));
  const IssCertificate cert =
      fit_iss(model, num(cfg, "M"), num(cfg, "E"), num(cfg, "T_try"),
              count_or(cfg, "trials", 64), seed_of(cfg));
  write_json(opt, cfg.value("out_json", std::string{"iss_certificate.json"}),
             to_json(cert));
  std::cout << "fitted certificate: K = " << format_double(cert.K_ov)
            << ", lambda = " << format_double(cert.lambda)
            << ", gamma = " << cert.gamma.print() << "\n";
  return 0;
}

int run_verify_iss(const json& cfg, const Options& opt) {
  const ClosedLoopModel model = model_from_json(require_field(cfg, "model"));
  const IssCertificate cert =
      iss_from_json(resolve_ref(require_field(cfg, "certificate")));
  const IssReport report =
      verify_iss(model, cert, num(cfg, "M"), num(cfg, "E"), num(cfg, "T_try"),
                 count_or(cfg, "trials", 200), seed_of(cfg));
  write_json(opt, cfg.value("out_json", std::string{"iss_report.json"}),
             to_json(report));
  std::cout << (report.pass ? "PASS" : "FAIL") << ": " << report.trials
            << " trials, worst margin " << format_double(report.worst_margin)
            << ", " << report.violations << " violations, " << report.escapes
            << " escapes\n";
  return report.pass ? 0 : 2;
}

int run_find_tstar(const json& cfg, const Options& opt) {
  const ClosedLoopModel model = model_from_json(require_field(cfg, "model"));
  IssCertificate cert =
      iss_from_json(resolve_ref(require_field(cfg, "certificate")));
  const double t_star =
      find_t_star(model, cert, num(cfg, "M"), num(cfg, "E"), num(cfg, "T_hi"),
                  num_or(cfg, "T_lo", 1e-4), count_or(cfg, "trials", 60),
                  seed_of(cfg));
  write_json(opt, cfg.value("out_json", std::string{"tstar.json"}),
             json{{"T_star", t_star}, {"certificate", to_json(cert)}});
  std::cout << "largest verified period T_star = " << format_double(t_star)
            << "\n";
  return 0;
}

int run_transfer(const json& cfg, const Options& opt) {
  const IssCertificate cert_a =
      iss_from_json(resolve_ref(require_field(cfg, "certificate")));
  const ConsistencyCertificate cons =
      consistency_from_json(resolve_ref(require_field(cfg, "consistency")));
  const IssCertificate cert_b = transfer_certificate(
      cert_a, cons, num_or(cfg, "delta", 0.5), num_or(cfg, "eta", 0.25));
  write_json(opt,
             cfg.value("out_json", std::string{"transferred_certificate.json"}),
             to_json(cert_b));
  std::cout << "transferred certificate: K = " << format_double(cert_b.K_ov)
            << ", lambda = " << format_double(cert_b.lambda)
            << ", gamma = " << cert_b.gamma.print() << "\n";
  return 0;
}

int run_check_lyapunov(const json& cfg, const Options& opt) {
  const ClosedLoopModel model = model_from_json(require_field(cfg, "model"));
  LyapunovSpec spec;
  spec.V = Expression::parse(
      require_field(cfg, "V").get<std::string>(),
      VariableLayout{{"x", model.state_dim()}});
  spec.K1 = num(cfg, "K1");
  spec.K2 = num(cfg, "K2");
  spec.K3 = num(cfg, "K3");
  spec.N = num_or(cfg, "N", 2.0);
  spec.rho_gain = num(cfg, "rho_gain");
  spec.T_tilde = num(cfg, "T_tilde");
  const LyapunovReport report = check_lyapunov(
      model, spec, num(cfg, "M"), num(cfg, "E"),
      count_or(cfg, "grid_density", 400), count_or(cfg, "t_samples", 16));
  write_json(opt, cfg.value("out_json", std::string{"lyapunov_report.json"}),
             to_json(report));
  std::cout << (report.pass ? "PASS" : "FAIL") << ": " << report.checked
            << " gated grid points checked, " << report.skipped
            << " outside the gate, worst margin "
            << format_double(report.worst_margin) << "\n";
  return report.pass ? 0 : 2;
}

int run_intersample(const json& cfg, const Options& opt) {
  const ClosedLoopModel model = model_from_json(require_field(cfg, "model"));
  const IssCertificate cert =
      iss_from_json(resolve_ref(require_field(cfg, "certificate")));
  const Vec x0 = vec_of(cfg, "x0");
  const SamplingSchedule schedule =
      schedule_from_json(require_field(cfg, "schedule"));
  const DisturbanceSignal disturbance =
      disturbance_from_json(require_field(cfg, "disturbance"));
  const Trajectory traj = simulate(model, x0, schedule, disturbance);
  const IntersampleReport report = intersample_envelope(
      model, traj, cert, num(cfg, "M"), num(cfg, "E"),
      count_or(cfg, "dense", 64), cfg.value("law_T_independent", false));
  write_json(opt, cfg.value("out_json", std::string{"intersample_report.json"}),
             to_json(report));
  if (opt.plot) plot_trajectory(opt, "intersample.svg", traj);
  std::cout << (report.pass ? "PASS" : "FAIL") << ": " << report.points
            << " dense points over " << report.intervals
            << " intervals, drift constant C = " << format_double(report.C)
            << ", worst margin " << format_double(report.worst_margin) << "\n";
  return report.pass ? 0 : 2;
}

int run_reproduce_example(const json& cfg, const Options& opt) {
  const std::uint64_t seed =
      cfg.contains("seed") ? seed_of(cfg) : std::uint64_t{2026};
  const ExampleArtifacts art =
      reproduce_example(opt.out_dir, seed, num_or(cfg, "T_max", 0.02),
                        num_or(cfg, "horizon", 8.0), opt.plot);
  for (const auto& f : art.files) std::cout << "wrote " << f << "\n";
  std::cout << "schedule: " << art.steps << " samples, horizon "
            << format_double(art.horizon) << "\n";
  std::cout << "disturbance-free |x| at t = 6: Euler "
            << format_double(art.euler_clean_at_6) << ", exact "
            << format_double(art.exact_clean_at_6) << "\n";
  std::cout << "disturbed second-half sup |x|: Euler "
            << format_double(art.euler_noisy_limsup) << ", exact "
            << format_double(art.exact_noisy_limsup) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "sdstab: discrete-time models of sampled-data control loops, "
      "consistency fitting and stability certificates"};
  app.require_subcommand(1);

  struct Task {
    const char* name;
    const char* help;
    int (*run)(const json&, const Options&);
    bool config_required;
  };
  const Task tasks[] = {
      {"simulate", "simulate a closed loop on a sampling schedule",
       run_simulate, true},
      {"fit-repc", "fit a one-step consistency certificate for a model pair",
       run_fit_repc, true},
      {"check-repmc", "search the largest period with bounded multistep "
                      "trajectory mismatch", run_check_repmc, true},
      {"fit-iss", "fit a stability certificate from falsification trials",
       run_fit_iss, true},
      {"verify-iss", "run falsification trials against a certificate",
       run_verify_iss, true},
      {"find-tstar", "bisect the largest period a certificate verifies at",
       run_find_tstar, true},
      {"transfer", "map a certificate through a consistency certificate",
       run_transfer, true},
      {"check-lyapunov", "grid-check a Lyapunov decrease condition",
       run_check_lyapunov, true},
      {"intersample", "check the continuous-time state between samples",
       run_intersample, true},
      {"reproduce-example", "run the worked scalar benchmark end to end",
       run_reproduce_example, false},
  };

  Options opt;
  std::vector<std::pair<CLI::App*, const Task*>> subs;
  for (const auto& task : tasks) {
    CLI::App* sub = app.add_subcommand(task.name, task.help);
    auto* copt = sub->add_option("--config", opt.config_path,
                                 "JSON configuration file");
    if (task.config_required) copt->required();
    sub->add_flag("--plot", opt.plot, "also write SVG charts");
    sub->add_option("--out", opt.out_dir, "output directory (default: .)");
    subs.push_back({sub, &task});
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [sub, task] : subs) {
      if (!sub->parsed()) continue;
      const json cfg = opt.config_path.empty()
                           ? json::object()
                           : load_json_file(opt.config_path);
      return task->run(cfg, opt);
    }
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const NoCertificate& e) {
    std::cerr << "no certificate: " << e.what() << "\n";
    return 2;
  } catch (const NoAdmissiblePeriod& e) {
    std::cerr << "no admissible period: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
