#include "sdstab/json_io.hpp"

#include <fstream>

#include "sdstab/errors.hpp"
#include "sdstab/rk.hpp"

namespace sdstab {

namespace {

using nlohmann::json;

double num(const json& j, const std::string& key) {
  const json& v = require_field(j, key);
  if (!v.is_number())
    throw ConfigError("field '" + key + "' must be a number");
  return v.get<double>();
}

double num_or(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  return num(j, key);
}

std::uint64_t seed_of(const json& j) {
  const json& v = require_field(j, "seed");
  if (!v.is_number_unsigned())
    throw ConfigError("field 'seed' must be a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::size_t count_of(const json& j, const std::string& key) {
  const json& v = require_field(j, key);
  if (!v.is_number_unsigned())
    throw ConfigError("field '" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

std::vector<std::string> texts_of(const json& j, const std::string& key) {
  const json& v = require_field(j, key);
  if (!v.is_array() || v.empty())
    throw ConfigError("field '" + key + "' must be a nonempty array of strings");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string())
      throw ConfigError("field '" + key + "' must contain only strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

Vec vec_of(const json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError("field '" + key + "' must be an array");
  Vec out;
  for (const auto& item : v) {
    if (!item.is_number())
      throw ConfigError("field '" + key + "' must contain only numbers");
    out.push_back(item.get<double>());
  }
  return out;
}

ErrorKind kind_of(const json& j) {
  const json& v = require_field(j, "kind");
  const std::string s = v.is_string() ? v.get<std::string>() : "";
  if (s == "state") return ErrorKind::StateMeasurement;
  if (s == "actuation") return ErrorKind::Actuation;
  throw ConfigError("field 'kind' must be \"state\" or \"actuation\"");
}

std::string provenance_name(CertProvenance p) {
  switch (p) {
    case CertProvenance::Fitted: return "fitted";
    case CertProvenance::Transferred: return "transferred";
    case CertProvenance::Declared: return "declared";
  }
  return "declared";
}

CertProvenance provenance_of(const std::string& s) {
  if (s == "fitted") return CertProvenance::Fitted;
  if (s == "transferred") return CertProvenance::Transferred;
  if (s == "declared") return CertProvenance::Declared;
  throw ConfigError("unknown provenance '" + s + "'");
}

}  // namespace

const nlohmann::json& require_field(const nlohmann::json& j,
                                    const std::string& key) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError("missing config field '" + key + "'");
  return j.at(key);
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
}

// ---- gains ------------------------------------------------------------

nlohmann::json gain_to_json(const GainFunction& g) {
  json out = json::array();
  for (const auto& [c, p] : g.terms()) out.push_back(json::array({c, p}));
  return out;
}

GainFunction gain_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("a gain must be a [[c, p], ...] array");
  GainFunction g;
  for (const auto& term : j) {
    if (!term.is_array() || term.size() != 2 || !term[0].is_number() ||
        !term[1].is_number())
      throw ConfigError("each gain term must be a [coefficient, power] pair");
    g = g.plus(GainFunction::power(term[0].get<double>(),
                                   term[1].get<double>()));
  }
  return g;
}

// ---- certificates and reports ------------------------------------------

nlohmann::json to_json(const FitReport& r) {
  return json{{"samples", r.samples},
              {"validation_samples", r.validation_samples},
              {"max_violation", r.max_violation},
              {"worst_margin", r.worst_margin},
              {"halvings", r.halvings},
              {"K_raw", r.K_raw},
              {"rho_raw", r.rho_raw},
              {"rho_ls", r.rho_ls},
              {"seed", r.seed},
              {"method", r.method}};
}

nlohmann::json to_json(const ConsistencyCertificate& c) {
  return json{{"K", c.K},           {"rho_c", c.rho_c},
              {"phi", gain_to_json(c.phi)}, {"T_star", c.T_star},
              {"M", c.M},           {"E", c.E},
              {"fit_report", to_json(c.fit)}};
}

ConsistencyCertificate consistency_from_json(const nlohmann::json& j) {
  ConsistencyCertificate c;
  c.K = num(j, "K");
  c.rho_c = num(j, "rho_c");
  c.phi = gain_from_json(require_field(j, "phi"));
  c.T_star = num(j, "T_star");
  c.M = num(j, "M");
  c.E = num(j, "E");
  if (j.contains("fit_report")) {
    const json& f = j.at("fit_report");
    c.fit.samples = f.value("samples", std::size_t{0});
    c.fit.validation_samples = f.value("validation_samples", std::size_t{0});
    c.fit.max_violation = f.value("max_violation", 0.0);
    c.fit.worst_margin = f.value("worst_margin", 0.0);
    c.fit.halvings = f.value("halvings", std::size_t{0});
    c.fit.K_raw = f.value("K_raw", 0.0);
    c.fit.rho_raw = f.value("rho_raw", 0.0);
    c.fit.seed = f.value("seed", std::uint64_t{0});
    c.fit.method = f.value("method", std::string{});
  }
  return c;
}

nlohmann::json to_json(const IssCertificate& c) {
  json table = json::array();
  for (const auto& e : c.t_star_table)
    table.push_back(json::array({e.M, e.E, e.T_star}));
  return json{{"K", c.K_ov},
              {"lambda", c.lambda},
              {"gamma", gain_to_json(c.gamma)},
              {"T_star_table", table},
              {"provenance", provenance_name(c.provenance)}};
}

IssCertificate iss_from_json(const nlohmann::json& j) {
  IssCertificate c;
  c.K_ov = num(j, "K");
  c.lambda = num(j, "lambda");
  c.gamma = gain_from_json(require_field(j, "gamma"));
  if (j.contains("T_star_table")) {
    const json& table = j.at("T_star_table");
    if (!table.is_array())
      throw ConfigError("T_star_table must be an array of [M, E, T] triples");
    for (const auto& row : table) {
      if (!row.is_array() || row.size() != 3)
        throw ConfigError("T_star_table rows must be [M, E, T] triples");
      c.add_t_star(row[0].get<double>(), row[1].get<double>(),
                   row[2].get<double>());
    }
  }
  if (j.contains("provenance"))
    c.provenance = provenance_of(j.at("provenance").get<std::string>());
  c.validate();
  return c;
}

nlohmann::json to_json(const IssReport& r) {
  json out{{"pass", r.pass},           {"worst_margin", r.worst_margin},
           {"trials", r.trials},       {"violations", r.violations},
           {"escapes", r.escapes},     {"horizon", r.horizon},
           {"seed", r.seed}};
  if (r.witness) {
    out["witness"] = json{{"trial", r.witness->trial},
                          {"step", r.witness->step},
                          {"x0", r.witness->x0},
                          {"T_draw", r.witness->T_draw},
                          {"lhs", r.witness->lhs},
                          {"rhs", r.witness->rhs},
                          {"detail", r.witness->detail}};
  }
  return out;
}

nlohmann::json to_json(const RepmcOutcome& o) {
  return json{{"T_L", o.T_L},
              {"worst_margin", o.worst_margin},
              {"trials", o.trials},
              {"halvings", o.halvings},
              {"seed", o.seed}};
}

nlohmann::json to_json(const LyapunovReport& r) {
  json out{{"pass", r.pass},
           {"worst_margin", r.worst_margin},
           {"checked", r.checked},
           {"skipped", r.skipped}};
  if (r.witness) {
    out["witness"] = json{{"x", r.witness->x},     {"e", r.witness->e},
                          {"T", r.witness->T},     {"lhs", r.witness->lhs},
                          {"rhs", r.witness->rhs}, {"detail", r.witness->detail}};
  }
  return out;
}

nlohmann::json to_json(const IntersampleReport& r) {
  json out{{"pass", r.pass},
           {"worst_margin", r.worst_margin},
           {"C", r.C},
           {"R", r.R},
           {"intervals", r.intervals},
           {"points", r.points}};
  if (r.witness) {
    out["witness"] = json{{"interval", r.witness->interval},
                          {"t", r.witness->t},
                          {"lhs", r.witness->lhs},
                          {"rhs", r.witness->rhs}};
  }
  return out;
}

// ---- experiment building blocks ------------------------------------------

ContinuousSystem system_from_json(const nlohmann::json& j) {
  const auto n = count_of(j, "state_dim");
  const auto m = count_of(j, "input_dim");
  const auto texts = texts_of(j, "f");
  if (texts.size() != n)
    throw ConfigError("'f' must have one component per state dimension");
  return {n, m,
          VectorExpression::parse(texts, ContinuousSystem::field_layout(n, m))};
}

ControlLaw law_from_json(const nlohmann::json& j) {
  const auto n = count_of(j, "state_dim");
  const auto q = count_of(j, "error_dim");
  const auto texts = texts_of(j, "U");
  const double T_u = num_or(j, "T_u", 1.0);
  return {n, q, kind_of(j),
          VectorExpression::parse(texts, ControlLaw::law_layout(n, q)), T_u};
}

ButcherTableau tableau_from_json(const nlohmann::json& j) {
  if (j.is_string()) return ButcherTableau::builtin(j.get<std::string>());
  if (j.contains("builtin"))
    return ButcherTableau::builtin(j.at("builtin").get<std::string>());
  ButcherTableau t;
  t.name = j.value("name", std::string{"custom"});
  t.stages = count_of(j, "stages");
  t.a = vec_of(require_field(j, "a"), "a");
  t.b = vec_of(require_field(j, "b"), "b");
  t.validate();
  return t;
}

ClosedLoopModel model_from_json(const nlohmann::json& j) {
  const std::string backend = require_field(j, "backend").get<std::string>();
  ContinuousSystem sys = system_from_json(require_field(j, "system"));

  ControlLaw law;
  if (j.contains("law")) {
    law = law_from_json(j.at("law"));
  } else if (j.contains("matched_target")) {
    const auto texts = texts_of(j, "matched_target");
    const VariableLayout map_vars{{"x", sys.state_dim()}, {"T", 1}};
    law = match_controller(sys, VectorExpression::parse(texts, map_vars),
                           kind_of(j), num_or(j, "T_u", 1.0));
  } else {
    throw ConfigError("a model needs either 'law' or 'matched_target'");
  }

  if (backend == "exact") {
    FlowOracleConfig oracle;
    if (j.contains("oracle")) {
      const json& o = j.at("oracle");
      oracle.abs_tol = num_or(o, "abs_tol", oracle.abs_tol);
      oracle.rel_tol = num_or(o, "rel_tol", oracle.rel_tol);
      if (o.contains("max_steps")) oracle.max_steps = count_of(o, "max_steps");
      oracle.min_step = num_or(o, "min_step", oracle.min_step);
      oracle.norm_ceiling = num_or(o, "norm_ceiling", oracle.norm_ceiling);
    }
    return ClosedLoopModel::with_exact_flow(std::move(sys), std::move(law),
                                            oracle);
  }
  if (backend == "rk")
    return ClosedLoopModel::with_tableau(
        std::move(sys), std::move(law),
        tableau_from_json(require_field(j, "tableau")));
  throw ConfigError("field 'backend' must be \"exact\" or \"rk\"");
}

SamplingSchedule schedule_from_json(const nlohmann::json& j) {
  if (j.contains("fixed"))
    return SamplingSchedule::fixed(vec_of(j.at("fixed"), "fixed"));
  if (j.contains("random")) {
    const json& r = j.at("random");
    return SamplingSchedule::uniform_random(num(r, "T_max"),
                                            count_of(r, "count"), seed_of(r));
  }
  if (j.contains("until")) {
    const json& r = j.at("until");
    return SamplingSchedule::until_elapsed(num(r, "T_max"), num(r, "horizon"),
                                           seed_of(r));
  }
  throw ConfigError(
      "a schedule needs one of 'fixed', 'random' (T_max, count, seed) or "
      "'until' (T_max, horizon, seed)");
}

DisturbanceSignal disturbance_from_json(const nlohmann::json& j) {
  if (j.contains("zero")) return DisturbanceSignal::zero(count_of(j, "zero"));
  if (j.contains("constant"))
    return DisturbanceSignal::constant(vec_of(j.at("constant"), "constant"));
  if (j.contains("uniform")) {
    const json& u = j.at("uniform");
    return DisturbanceSignal::uniform(count_of(u, "dim"), num(u, "amplitude"),
                                      seed_of(u));
  }
  throw ConfigError(
      "a disturbance needs one of 'zero' (dim), 'constant' (vector) or "
      "'uniform' (dim, amplitude, seed)");
}

}  // namespace sdstab
