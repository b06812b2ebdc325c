#pragma once

#include <poolsim/chain.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace poolsim {

// One maximal run of timeslots with a fixed communication mode.
struct sync_interval {
   timeslot from_t = 0;
   timeslot to_t = 0; // exclusive
   bool sync = true;
};

/**
 * Partition of [0, duration) into synchronous and asynchronous intervals.
 *
 * Invariants: intervals are sorted, disjoint, and cover [0, duration)
 * exactly; validate() enforces this before the schedule is used.
 */
struct sync_schedule {
   std::vector<sync_interval> intervals;

   bool is_sync(timeslot t) const;
   void validate(timeslot duration) const;

   // Maximal synchronous stretches, used by growth statistics.
   std::vector<sync_interval> sync_windows() const;

   static sync_schedule all_sync(timeslot duration);
   static sync_schedule all_async(timeslot duration);
};

// Honest message delay, drawn once per (message, recipient) during
// synchronous operation.
struct delay_dist {
   enum class kind_t { geometric, fixed };

   kind_t kind = kind_t::geometric;
   double q = 0.5;        // geometric: per-slot delivery probability
   std::uint64_t d = 1;   // fixed: exact delay in slots
};

// Delay in slots (>= 1) from one uniform [0,1) variate. Geometric delays
// invert the CDF: k = 1 + floor(ln(1-u) / ln(1-q)).
std::uint64_t synchronous_delay(double u01, const delay_dist& dist);

// A broadcast copy addressed to one recipient. due_t empty means the
// adversary is currently withholding it.
struct delivery_event {
   std::uint64_t seq = 0; // creation order, the scheduler's tiebreak
   digest message;
   key_id sender;
   user_id recipient;
   timeslot broadcast_t = 0;
   std::optional<timeslot> due_t;
};

/**
 * Message-delay adversary. Consulted only while the schedule is
 * asynchronous; synchronous slots always deliver on the drawn delay.
 *
 * none:      every event runs on its drawn delay.
 * partition: events crossing the two user sets are withheld for as long as
 *            the asynchronous interval lasts.
 * scripted:  explicit per-(sender, recipient, interval) actions.
 */
struct adversary_policy {
   enum class kind_t { none, partition, scripted };
   enum class action_t { normal, withhold, deliver_now };

   struct rule {
      user_id sender;    // empty matches any
      user_id recipient; // empty matches any
      timeslot from_t = 0;
      timeslot to_t = ~0ull;
      action_t action = action_t::normal;
   };

   kind_t kind = kind_t::none;
   std::vector<user_id> set_a;
   std::vector<user_id> set_b;
   std::vector<rule> rules;

   // Decision for `ev` at asynchronous timeslot t. sender_user is the user
   // operating the sending key.
   action_t decide(const delivery_event& ev, const user_id& sender_user, timeslot t) const;
};

adversary_policy partition_policy(std::vector<user_id> set_a, std::vector<user_id> set_b);

} // namespace poolsim
