#pragma once

#include <poolsim/chain.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace poolsim {

// One balance assignment: `key` holds `amount` for timeslots in [from_t, to_t).
// Rows for the same key must not overlap.
struct pool_row {
   key_id key;
   timeslot from_t = 0;
   timeslot to_t = 0;
   double amount = 0.0;
};

// In-block stake movement, carried in a block payload as a JSON array of
// {"from", "to", "amount"} records. A transfer that would overdraw the
// sender is void (skipped atomically).
struct stake_transfer {
   key_id from;
   key_id to;
   double amount = 0.0;
};

/**
 * Balance oracle mapping (key, timeslot, message state) to a nonnegative
 * amount.
 *
 * constant_table: timeslot-indexed per-key balances, independent of the
 *     message state (hashrate model).
 * stake_derived:  balance read from the longest chain of the queried state,
 *     at the lookback timeslot t* = max(leaf timestamp - lookback, 0),
 *     folding the genesis allocation plus any in-block transfers whose block
 *     timestamp is <= t* (stake model).
 *
 * Invariants: every produced balance is >= 0; stake_derived balances depend
 * only on the chain selected from the queried state.
 */
struct resource_pool {
   enum class kind_t { constant_table, stake_derived };

   kind_t kind = kind_t::constant_table;
   std::vector<pool_row> table;
   double lookback_seconds = 3600.0;
   double timeslot_seconds = 30.0;
   std::map<key_id, double> genesis_allocation;
};

// Interval the unsized total must stay inside, plus the optional cap on the
// adversary's share of it.
struct pool_bounds {
   double i0 = 1.0;
   double i1 = 1e6;
   std::optional<double> adversary_fraction_cap;
};

// Whether the total balance is predetermined (sized) or merely bounded
// (unsized). Exactly one of declared_total / bounds governs validation.
struct resource_setting {
   bool sized = false;
   pool_bounds bounds;
   std::optional<double> declared_total;
   std::vector<key_id> adversary_keys;
};

struct pool_violation {
   timeslot t = 0;
   digest state_id;
   double value = 0.0;
   std::string what;
};

double balance(const resource_pool& pool, const key_id& key, timeslot t,
               const message_state& state);

// All keys the pool can ever assign balance to, sorted. For stake pools this
// includes transfer recipients recorded on the longest chain of `state`.
std::vector<key_id> key_universe(const resource_pool& pool, const message_state& state);

double total_balance(const resource_pool& pool, timeslot t, const message_state& state);

// Unsized: total in [i0, i1] at every timeslot for every probe state, and
// adversary share <= cap when set. Sized: totals equal declared_total.
// Returns the first violation; violations are data, not faults.
std::optional<pool_violation> validate_pool(const resource_pool& pool,
                                            const resource_setting& setting,
                                            timeslot duration,
                                            const std::vector<const message_state*>& probe_states);

// The three constant pools of the cap experiment: `both` assigns amount to
// both keys over all timeslots, `only_a` / `only_b` to one key each, all
// other keys zero.
struct cap_pools {
   resource_pool both;
   resource_pool only_a;
   resource_pool only_b;
};

cap_pools make_cap_pools(double amount, const key_id& key_a, const key_id& key_b,
                         timeslot duration);

// Parses transfer records out of a block payload; empty payloads and
// payloads that are not a JSON array yield no transfers.
std::vector<stake_transfer> parse_transfers(const std::vector<std::uint8_t>& payload);

// Canonical payload encoding for a list of transfers.
std::vector<std::uint8_t> encode_transfers(const std::vector<stake_transfer>& transfers);

} // namespace poolsim
