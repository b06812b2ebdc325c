#pragma once

#include <poolsim/agents.hpp>
#include <poolsim/net.hpp>
#include <poolsim/permitter.hpp>
#include <poolsim/resource.hpp>

#include <json.hpp>

#include <string>
#include <vector>

namespace poolsim {

// Post-hoc analysis defaults a scenario ships with.
struct analysis_params {
   double epsilon = 0.1;
   std::vector<timeslot> windows;
   std::uint64_t runs = 20;
};

struct seed_params {
   std::uint64_t scheduler = 0;
   std::vector<std::uint8_t> prf_key;
};

/**
 * A fully validated scenario: everything one execution needs, plus the
 * normalized configuration document and its digest for report embedding.
 *
 * Loading is strict: unknown fields, wrong types, or missing required
 * fields raise schema_error naming the offending path; structurally valid
 * but semantically impossible configurations raise constraint_error.
 */
struct scenario_spec {
   std::string name;
   protocol_params protocol;
   resource_pool pool;
   resource_setting setting;
   sync_schedule schedule;
   adversary_policy adversary;
   delay_dist delay;
   timeslot duration = 0;
   std::vector<user_entry> users;
   seed_params seeds;
   analysis_params analysis;

   nlohmann::json normalized;
   digest config_digest;

   // The key a user operates; scenarios keep this one-to-one.
   user_id user_of_key(const key_id& key) const;
};

// Parses and validates a scenario document. `source` names the input in
// error messages (file path or "<inline>").
scenario_spec parse_scenario(const std::string& text, const std::string& source);
scenario_spec load_scenario(const std::string& path);

// Raw JSON parse with the same error reporting, for callers that apply
// overrides before validation.
nlohmann::json parse_scenario_document(const std::string& text, const std::string& source);

// Applies dotted-path overrides ("protocol.confirmation.depth=8") onto the
// raw document before validation. Values parse as JSON when possible and
// fall back to strings.
void apply_override(nlohmann::json& doc, const std::string& assignment);

scenario_spec scenario_from_json(nlohmann::json doc);

// The shared genesis block every execution of every scenario starts from.
block scenario_genesis();

} // namespace poolsim
