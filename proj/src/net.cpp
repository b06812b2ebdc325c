#include <poolsim/net.hpp>
#include <poolsim/errors.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace poolsim {

bool sync_schedule::is_sync(timeslot t) const {
   for (const auto& iv : intervals) {
      if (iv.from_t <= t && t < iv.to_t)
         return iv.sync;
   }
   throw error(fmt::format("timeslot {} not covered by the schedule", t));
}

void sync_schedule::validate(timeslot duration) const {
   timeslot expect = 0;
   for (const auto& iv : intervals) {
      if (iv.from_t != expect)
         throw constraint_error(fmt::format(
            "schedule gap: interval starts at {} where {} was expected", iv.from_t, expect));
      if (iv.to_t <= iv.from_t)
         throw constraint_error(fmt::format(
            "schedule interval [{}, {}) is empty or inverted", iv.from_t, iv.to_t));
      expect = iv.to_t;
   }
   if (expect != duration)
      throw constraint_error(fmt::format(
         "schedule covers [0, {}) but the run lasts {} timeslots", expect, duration));
}

std::vector<sync_interval> sync_schedule::sync_windows() const {
   std::vector<sync_interval> out;
   for (const auto& iv : intervals) {
      if (!iv.sync)
         continue;
      if (!out.empty() && out.back().to_t == iv.from_t) {
         out.back().to_t = iv.to_t; // merge adjacent synchronous intervals
      } else {
         out.push_back(iv);
      }
   }
   return out;
}

sync_schedule sync_schedule::all_sync(timeslot duration) {
   return {{{0, duration, true}}};
}

sync_schedule sync_schedule::all_async(timeslot duration) {
   return {{{0, duration, false}}};
}

std::uint64_t synchronous_delay(double u01, const delay_dist& dist) {
   if (dist.kind == delay_dist::kind_t::fixed)
      return std::max<std::uint64_t>(dist.d, 1);
   if (dist.q >= 1.0)
      return 1;
   if (dist.q <= 0.0)
      throw constraint_error("geometric delay needs q in (0, 1]");
   const double k = 1.0 + std::floor(std::log1p(-u01) / std::log1p(-dist.q));
   // u01 arbitrarily close to 1 can push k to huge values; the cast below
   // is still exact for anything a 53-bit uniform can produce.
   return static_cast<std::uint64_t>(k);
}

adversary_policy::action_t adversary_policy::decide(const delivery_event& ev,
                                                    const user_id& sender_user,
                                                    timeslot t) const {
   switch (kind) {
   case kind_t::none:
      return action_t::normal;
   case kind_t::partition: {
      const bool sender_a = std::find(set_a.begin(), set_a.end(), sender_user) != set_a.end();
      const bool sender_b = std::find(set_b.begin(), set_b.end(), sender_user) != set_b.end();
      const bool rcpt_a = std::find(set_a.begin(), set_a.end(), ev.recipient) != set_a.end();
      const bool rcpt_b = std::find(set_b.begin(), set_b.end(), ev.recipient) != set_b.end();
      const bool crosses = (sender_a && rcpt_b) || (sender_b && rcpt_a);
      return crosses ? action_t::withhold : action_t::normal;
   }
   case kind_t::scripted:
      for (const auto& r : rules) {
         if (!r.sender.empty() && r.sender != sender_user) continue;
         if (!r.recipient.empty() && r.recipient != ev.recipient) continue;
         if (t < r.from_t || t >= r.to_t) continue;
         return r.action;
      }
      return action_t::normal;
   }
   return action_t::normal;
}

adversary_policy partition_policy(std::vector<user_id> set_a, std::vector<user_id> set_b) {
   adversary_policy p;
   p.kind = adversary_policy::kind_t::partition;
   p.set_a = std::move(set_a);
   p.set_b = std::move(set_b);
   return p;
}

} // namespace poolsim
