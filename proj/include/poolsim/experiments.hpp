#pragma once

#include <poolsim/scenario.hpp>
#include <poolsim/world.hpp>

#include <json.hpp>

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace poolsim {

inline constexpr const char* tool_version = "0.1.0";

// Scheduler seed and PRF key for run `run_index` of a scenario. The PRF key
// is rebound to the run so separate runs draw independent success events.
struct run_seeds {
   std::uint64_t scheduler = 0;
   std::vector<std::uint8_t> prf_key;
};

run_seeds derive_run_seeds(const scenario_spec& spec, std::size_t run_index,
                           std::optional<std::uint64_t> seed_base = std::nullopt);

// A world assembled from the scenario, ready to run.
world build_world(const scenario_spec& spec, std::size_t run_index,
                  std::optional<std::uint64_t> seed_base = std::nullopt);

struct run_result {
   std::size_t run_index = 0;
   digest trace_digest;
   std::map<user_id, std::vector<user_slot_snapshot>> snapshots;
   std::map<user_id, std::map<digest, timeslot>> ever_confirmed;
   std::map<user_id, chain> final_confirmed;
   std::vector<trace_event> events;
   std::optional<message_state> referee; // union view, for cross-user checks
};

// Executes one run to completion. Validates the pool against the setting
// first (probing the genesis position) and raises constraint_error on a
// violation.
run_result run_scenario(const scenario_spec& spec, std::size_t run_index,
                        std::optional<std::uint64_t> seed_base = std::nullopt);

// --- liveness ---------------------------------------------------------

struct liveness_entry {
   timeslot window = 0;
   std::uint64_t intervals = 0; // intervals of exactly this length examined
   std::uint64_t growing = 0;
   double fraction = 0.0;
};

struct liveness_report {
   double epsilon = 0.1;
   std::uint64_t runs = 0;
   std::vector<liveness_entry> entries;
   // Smallest probed window whose growth fraction reaches 1 - epsilon;
   // empty when no window qualifies (including the vacuous all-async case).
   std::optional<timeslot> live_window;
};

// Growth statistics over every interval of each probed length that fits
// inside a single synchronous stretch, across runs and users.
liveness_report estimate_liveness(const scenario_spec& spec, std::uint64_t runs,
                                  std::optional<std::uint64_t> seed_base = std::nullopt);

// --- security ---------------------------------------------------------

struct security_witness {
   std::size_t run = 0;
   digest block_a;
   digest block_b;
   user_id user_a;
   user_id user_b;
   timeslot slot_a = 0;
   timeslot slot_b = 0;
};

struct security_report {
   std::uint64_t runs = 0;
   std::uint64_t violating_runs = 0;
   std::uint64_t blocks_checked = 0;
   std::optional<security_witness> witness; // first violation found
};

// Confirmation-conflict search: collects every block any user ever saw
// confirmed and checks that the union forms one chain, per run.
security_report check_security(const scenario_spec& spec, std::uint64_t runs,
                               std::optional<std::uint64_t> seed_base = std::nullopt);

// Single-run conflict check; empty result means every block any user
// confirmed in this run lies on one chain.
std::optional<security_witness> find_confirmation_conflict(const run_result& r);

// --- the adaptivity / finality experiment ------------------------------

struct cap_params {
   std::uint64_t runs = 100;
   double confirm_frequency = 0.75; // per-side calibration bar for t0
   double incompat_frequency = 0.5; // required cross-side conflict rate
};

struct cap_report {
   std::uint64_t runs = 0;
   timeslot duration = 0;
   // Per-slot frequency of a non-genesis confirmation in the two solo
   // executions (index = timeslot).
   std::vector<double> confirm_freq_a;
   std::vector<double> confirm_freq_b;
   std::optional<timeslot> t0;
   double freq_a_at_t0 = 0.0;
   double freq_b_at_t0 = 0.0;
   // Fraction of partitioned executions where both sides confirmed
   // incompatible non-genesis blocks by t0.
   double incompatible_at_t0 = 0.0;
   bool passed = false;
};

/**
 * Runs the paired-execution experiment on a two-user scenario.
 *
 * Per run, three executions share one scheduler seed and PRF key: the
 * partitioned run (both keys funded, fully asynchronous, cross-partition
 * copies withheld) and two solo runs (one key funded, fully synchronous).
 * Each user's per-slot fingerprints must match bit for bit between the
 * partitioned run and its solo run; any divergence raises
 * indistinguishability_error.
 *
 * t0 is the earliest timeslot where both solo executions confirm past
 * genesis in more than confirm_frequency of runs; the report then measures
 * how often the partitioned execution has, by t0, confirmed incompatible
 * blocks on the two sides.
 */
cap_report run_cap_experiment(const scenario_spec& spec, const cap_params& params,
                              std::optional<std::uint64_t> seed_base = std::nullopt);

// --- rate-limited grant analysis ---------------------------------------

struct prop1_point {
   double p_any = 0.0; // 1 - (1 - lambda R)^y
   double ratio = 1.0; // p_any / (lambda R y), the collision discount
};

// Closed-form per-timeslot success probability for a key placing y
// independent requests, each granted with probability lambda * R.
prop1_point prop1_analytic(double lambda_r, std::uint64_t y);

struct prop1_key_stats {
   key_id key;
   std::uint64_t requests_per_slot = 0;
   double balance = 0.0;
   double p_analytic = 0.0;
   double p_hat = 0.0;
   double sigma = 0.0;
   double z = 0.0; // (p_hat - p_analytic) / sigma
   double corrected_rate = 0.0; // p_hat / ratio, the de-discounted rate
};

struct prop1_mc_report {
   std::uint64_t trials = 0;
   double lambda = 0.0;
   std::vector<prop1_key_stats> keys;
   double fit_constant = 0.0;  // c with corrected_rate ~= c * R * y
   double max_residual = 0.0;  // worst |corrected - c R y| over sum(c R y)
};

struct prop1_mc_config {
   double lambda = 1e-3;
   std::uint32_t ext_no = 10;
   std::map<key_id, std::uint32_t> x_of;
   std::map<key_id, double> balances;
   std::uint64_t trials = 1000000;
   std::vector<std::uint8_t> prf_key;
};

// Empirical grant frequencies against the closed form, plus the
// proportionality fit showing per-key throughput tracks R * X.
prop1_mc_report prop1_montecarlo(const prop1_mc_config& config);

// --- reporting ----------------------------------------------------------

nlohmann::json liveness_to_json(const liveness_report& r);
nlohmann::json security_to_json(const security_report& r);
nlohmann::json cap_to_json(const cap_report& r);
nlohmann::json prop1_mc_to_json(const prop1_mc_report& r);

// Full scenario report: tool version, config digest, per-run digests,
// liveness and security sections, final confirmed chains of run 0.
// `per_run`, when set, observes every finished run (trace emission).
nlohmann::json scenario_report(const scenario_spec& spec, std::uint64_t runs,
                               std::optional<std::uint64_t> seed_base = std::nullopt,
                               const std::function<void(const run_result&)>& per_run = {});

// Flat metric rows ("scenario,metric,value") for the CSV summary.
std::vector<std::array<std::string, 3>> report_csv_rows(const std::string& scenario,
                                                        const nlohmann::json& report);

} // namespace poolsim
