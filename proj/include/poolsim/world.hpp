#pragma once

#include <poolsim/agents.hpp>
#include <poolsim/net.hpp>
#include <poolsim/permitter.hpp>
#include <poolsim/resource.hpp>

#include <cstdint>
#include <map>
#include <random>
#include <vector>

namespace poolsim {

// Per-user fingerprint taken at the end of every timeslot. Two users are in
// identical positions iff state_seq and permissions match.
struct user_slot_snapshot {
   timeslot t = 0;
   digest state_seq;
   digest permissions;
   std::uint64_t confirmed = 0;
   std::uint64_t chain_length = 0;
   digest confirmed_leaf;
};

struct trace_event {
   enum class kind_t { broadcast, deliver, withhold };

   timeslot t = 0;
   kind_t kind = kind_t::broadcast;
   user_id sender;
   user_id recipient; // "*" on broadcast records
   digest message;
};

/**
 * Deterministic timeslot scheduler for one execution.
 *
 * Each timeslot runs three phases in a fixed order:
 *   1. delivery: queued copies whose due slot arrived are applied, in
 *      creation order; while the schedule is asynchronous the adversary
 *      policy may withhold them (parked until the next synchronous slot)
 *      or pull them forward;
 *   2. action: users act in roster order; each step function is called
 *      twice, requests taken from the first call and answered instantly,
 *      broadcasts and relays taken from the second;
 *   3. snapshot: per-user fingerprints and confirmation bookkeeping.
 *
 * All randomness flows from one mt19937_64 owned by the scheduler, consumed
 * in event-creation order, so a (seed, prf key) pair fixes the execution
 * bit for bit.
 */
class world {
public:
   world(std::vector<user_entry> roster, protocol_params params, permitter_kernel kernel,
         resource_pool pool, sync_schedule schedule, adversary_policy policy,
         delay_dist delay, timeslot duration, std::uint64_t scheduler_seed,
         const block& genesis);

   void step();
   void run(); // all remaining timeslots

   timeslot now() const { return t_; }
   timeslot duration() const { return duration_; }
   const std::vector<user_entry>& roster() const { return roster_; }

   const message_state& state_of(const user_id& user) const;
   const std::vector<permission>& permissions_of(const user_id& user) const;
   const std::vector<user_slot_snapshot>& snapshots_of(const user_id& user) const;

   // Confirmed chain in a user's current position, under the protocol's own
   // confirmation notion (chain rule or certificates).
   chain confirmed_chain_of(const user_id& user) const;
   std::uint64_t confirmed_count_of(const user_id& user) const;

   // Union of everything ever broadcast; referee's view for compatibility
   // questions across users.
   const message_state& referee_state() const { return referee_; }

   // block id -> first timeslot at which the user saw it confirmed.
   const std::map<digest, timeslot>& ever_confirmed(const user_id& user) const;

   const std::vector<trace_event>& trace() const { return trace_; }

   // Test hook: broadcast on behalf of a user, enforcing the same coverage
   // and parent rules as the action phase.
   void broadcast(const user_id& user, const message& m);

private:
   struct user_slot {
      user_entry entry;
      message_state state;
      std::vector<permission> permissions;
      digest permissions_digest;
      std::map<digest, std::vector<block>> waiting_for_parent;
      quorum_tracker tracker;
      std::map<digest, timeslot> first_confirmed;
      std::vector<user_slot_snapshot> snapshots;
   };

   std::vector<user_entry> roster_;
   protocol_params params_;
   permitter_kernel kernel_;
   resource_pool pool_;
   sync_schedule schedule_;
   adversary_policy policy_;
   delay_dist delay_;
   timeslot duration_ = 0;
   timeslot t_ = 0;

   std::vector<user_slot> users_;
   std::map<user_id, std::size_t> index_;
   message_state referee_;

   std::mt19937_64 rng_;
   std::uint64_t next_seq_ = 0;
   std::vector<delivery_event> queue_;
   std::vector<delivery_event> parked_;
   std::vector<trace_event> trace_;

   user_slot& slot_of(const user_id& user);
   const user_slot& slot_of(const user_id& user) const;
   double next_u01();
   void deliver(user_slot& u, const message& m, timeslot at);
   void apply_with_descendants(user_slot& u, const block& b);
   void run_delivery_phase();
   void run_action_phase();
   void run_snapshot_phase();
   void append_permission(user_slot& u, const permission& perm);
};

} // namespace poolsim
