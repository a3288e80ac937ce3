#pragma once

// JSON (de)serialization of certificates, reports and the experiment
// building blocks used by the command-line front end. All doubles survive a
// round trip bit-exactly (nlohmann::json stores them as binary64).

#include <string>

#include "json.hpp"
#include "sdstab/closedloop.hpp"
#include "sdstab/consistency.hpp"
#include "sdstab/stability.hpp"

namespace sdstab {

// ---- gains ------------------------------------------------------------
/// A gain is an array of [coefficient, power] pairs.
nlohmann::json gain_to_json(const GainFunction& g);
GainFunction gain_from_json(const nlohmann::json& j);

// ---- certificates and reports ------------------------------------------
nlohmann::json to_json(const FitReport& r);
nlohmann::json to_json(const ConsistencyCertificate& c);
ConsistencyCertificate consistency_from_json(const nlohmann::json& j);

nlohmann::json to_json(const IssCertificate& c);
IssCertificate iss_from_json(const nlohmann::json& j);

nlohmann::json to_json(const IssReport& r);
nlohmann::json to_json(const RepmcOutcome& o);
nlohmann::json to_json(const LyapunovReport& r);
nlohmann::json to_json(const IntersampleReport& r);

// ---- experiment building blocks ------------------------------------------
/// {"state_dim": n, "input_dim": m, "f": ["...", ...]}
ContinuousSystem system_from_json(const nlohmann::json& j);

/// {"state_dim": n, "error_dim": q, "kind": "state" | "actuation",
///  "U": ["...", ...], "T_u": 1.0}
ControlLaw law_from_json(const nlohmann::json& j);

/// {"builtin": "euler"} or {"name": ..., "stages": s, "a": [...], "b": [...]}
ButcherTableau tableau_from_json(const nlohmann::json& j);

/// {"backend": "exact" | "rk", "system": ..., "law": ...,
///  "tableau": ... (rk only), "oracle": {"abs_tol": ..., ...} (optional),
///  "matched_target": ["...", ...] (optional, synthesizes the law)}
ClosedLoopModel model_from_json(const nlohmann::json& j);

/// {"fixed": [...]} or {"random": {"T_max":, "count":, "seed":}} or
/// {"until": {"T_max":, "horizon":, "seed":}}
SamplingSchedule schedule_from_json(const nlohmann::json& j);

/// {"zero": q} or {"constant": [...]} or
/// {"uniform": {"dim":, "amplitude":, "seed":}}
DisturbanceSignal disturbance_from_json(const nlohmann::json& j);

/// Field accessor that converts a missing key into ConfigError naming it.
const nlohmann::json& require_field(const nlohmann::json& j,
                                    const std::string& key);

/// Parses a JSON file; ConfigError on open or parse failure.
nlohmann::json load_json_file(const std::string& path);

}  // namespace sdstab
