#include <poolsim/world.hpp>
#include <poolsim/errors.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace poolsim {

world::world(std::vector<user_entry> roster, protocol_params params,
             permitter_kernel kernel, resource_pool pool, sync_schedule schedule,
             adversary_policy policy, delay_dist delay, timeslot duration,
             std::uint64_t scheduler_seed, const block& genesis)
   : roster_(std::move(roster)),
     params_(std::move(params)),
     kernel_(std::move(kernel)),
     pool_(std::move(pool)),
     schedule_(std::move(schedule)),
     policy_(std::move(policy)),
     delay_(delay),
     duration_(duration),
     users_(),
     referee_(genesis),
     rng_(scheduler_seed) {
   schedule_.validate(duration_);
   users_.reserve(roster_.size());
   for (const auto& entry : roster_) {
      if (index_.count(entry.user))
         throw constraint_error(fmt::format("duplicate user '{}' in roster", entry.user));
      index_.emplace(entry.user, users_.size());
      users_.push_back(user_slot{entry, message_state(genesis), {}, digest{}, {}, {}, {}, {}});
   }
}

world::user_slot& world::slot_of(const user_id& user) {
   auto it = index_.find(user);
   if (it == index_.end())
      throw error(fmt::format("unknown user '{}'", user));
   return users_[it->second];
}

const world::user_slot& world::slot_of(const user_id& user) const {
   auto it = index_.find(user);
   if (it == index_.end())
      throw error(fmt::format("unknown user '{}'", user));
   return users_[it->second];
}

const message_state& world::state_of(const user_id& user) const {
   return slot_of(user).state;
}

const std::vector<permission>& world::permissions_of(const user_id& user) const {
   return slot_of(user).permissions;
}

const std::vector<user_slot_snapshot>& world::snapshots_of(const user_id& user) const {
   return slot_of(user).snapshots;
}

const std::map<digest, timeslot>& world::ever_confirmed(const user_id& user) const {
   return slot_of(user).first_confirmed;
}

chain world::confirmed_chain_of(const user_id& user) const {
   const user_slot& u = slot_of(user);
   if (params_.kind == protocol_params::kind_t::quorum) {
      // Certified chain: the walk the tracker maintains.
      chain out;
      const block* cur = u.state.find_block(u.tracker.certified_leaf(u.state));
      while (cur) {
         out.blocks.push_back(*cur);
         cur = cur->parent ? u.state.find_block(*cur->parent) : nullptr;
      }
      std::reverse(out.blocks.begin(), out.blocks.end());
      return out;
   }
   return confirmed(u.state, params_.confirmation);
}

std::uint64_t world::confirmed_count_of(const user_id& user) const {
   const user_slot& u = slot_of(user);
   if (params_.kind == protocol_params::kind_t::quorum)
      return u.tracker.certified_chain_length(u.state);
   return confirmed_count(u.state, params_.confirmation);
}

double world::next_u01() {
   return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

void world::append_permission(user_slot& u, const permission& perm) {
   u.permissions.push_back(perm);
   byte_writer w;
   w.tag("perm").dig(u.permissions_digest).u8(static_cast<std::uint8_t>(perm.kind));
   w.u64(perm.slot).dig(perm.chain_ref).dig(perm.granted_id);
   u.permissions_digest = sha256(w.out);
}

void world::apply_with_descendants(user_slot& u, const block& b) {
   u.state.apply_block(b);
   auto it = u.waiting_for_parent.find(b.id);
   if (it == u.waiting_for_parent.end())
      return;
   std::vector<block> unlocked = std::move(it->second);
   u.waiting_for_parent.erase(it);
   for (const block& child : unlocked)
      apply_with_descendants(u, child);
}

void world::deliver(user_slot& u, const message& m, timeslot) {
   if (const block* b = std::get_if<block>(&m)) {
      if (u.state.contains(b->id))
         return;
      if (!b->parent || u.state.find_block(*b->parent)) {
         apply_with_descendants(u, *b);
      } else {
         auto& bucket = u.waiting_for_parent[*b->parent];
         if (std::none_of(bucket.begin(), bucket.end(),
                          [&](const block& q) { return q.id == b->id; }))
            bucket.push_back(*b);
      }
   } else {
      u.state.apply_vote(std::get<vote>(m));
   }
}

void world::broadcast(const user_id& user, const message& m) {
   user_slot& sender = slot_of(user);
   const digest id = message_id(m);

   const bool relay = sender.state.contains(id);
   if (!relay) {
      const bool permitted =
         std::any_of(sender.permissions.begin(), sender.permissions.end(),
                     [&](const permission& p) { return covers(p, m); });
      if (!permitted)
         throw not_permitted_error(fmt::format(
            "user '{}' holds no permission covering message {}", user, id.hex()));
      if (const block* b = std::get_if<block>(&m)) {
         if (b->parent && !sender.state.find_block(*b->parent))
            throw parent_not_delivered_error(fmt::format(
               "user '{}' broadcasts block {} before its parent", user, id.hex()));
      }
   }

   if (!referee_.contains(id))
      referee_.apply_message(m);
   trace_.push_back({t_, trace_event::kind_t::broadcast, user, "*", id});

   deliver(sender, m, t_); // own broadcasts arrive instantly

   for (const auto& entry : roster_) {
      if (entry.user == user)
         continue;
      delivery_event ev;
      ev.seq = next_seq_++;
      ev.message = id;
      ev.sender = user;
      ev.recipient = entry.user;
      ev.broadcast_t = t_;
      ev.due_t = t_ + synchronous_delay(next_u01(), delay_);
      queue_.push_back(std::move(ev));
   }
}

void world::run_delivery_phase() {
   // Parked copies re-enter at the first synchronous slot, redrawing their
   // delays in park order.
   if (schedule_.is_sync(t_) && !parked_.empty()) {
      for (auto& ev : parked_) {
         ev.due_t = t_ + synchronous_delay(next_u01(), delay_);
         queue_.push_back(std::move(ev));
      }
      parked_.clear();
   }

   const bool async_now = !schedule_.is_sync(t_);
   std::vector<delivery_event> still_pending;
   still_pending.reserve(queue_.size());
   std::sort(queue_.begin(), queue_.end(),
             [](const delivery_event& a, const delivery_event& b) { return a.seq < b.seq; });

   for (auto& ev : queue_) {
      auto act = adversary_policy::action_t::normal;
      if (async_now)
         act = policy_.decide(ev, ev.sender, t_);

      const bool due = ev.due_t && *ev.due_t <= t_;
      if (act == adversary_policy::action_t::deliver_now ||
          (act == adversary_policy::action_t::normal && due)) {
         auto msg = referee_.find_message(ev.message);
         if (!msg)
            throw error(fmt::format("event references unknown message {}", ev.message.hex()));
         trace_.push_back({t_, trace_event::kind_t::deliver, ev.sender, ev.recipient,
                           ev.message});
         deliver(slot_of(ev.recipient), *msg, t_);
      } else if (act == adversary_policy::action_t::withhold && due) {
         trace_.push_back({t_, trace_event::kind_t::withhold, ev.sender, ev.recipient,
                           ev.message});
         ev.due_t.reset();
         parked_.push_back(std::move(ev));
      } else {
         still_pending.push_back(std::move(ev));
      }
   }
   queue_ = std::move(still_pending);
}

void world::run_action_phase() {
   for (auto& u : users_) {
      if (params_.kind == protocol_params::kind_t::quorum)
         u.tracker.update(u.state, pool_, params_);

      agent_view view;
      view.user = u.entry.user;
      view.keys = u.entry.keys;
      view.t = t_;
      view.state = &u.state;
      view.permissions = &u.permissions;
      view.params = &params_;
      view.pool = &pool_;
      view.quorum = &u.tracker;

      agent_actions first = agent_step(view);
      for (const auto& req : first.requests) {
         permission perm = respond(kernel_, req, t_, pool_);
         if (perm.kind != permission::kind_t::denied)
            append_permission(u, perm);
      }

      agent_actions second = agent_step(view);
      for (const auto& m : second.broadcasts)
         broadcast(u.entry.user, m);
      for (const auto& id : second.relays) {
         auto msg = u.state.find_message(id);
         if (!msg)
            throw error(fmt::format("relay of message {} not in state", id.hex()));
         broadcast(u.entry.user, *msg);
      }
   }
}

void world::run_snapshot_phase() {
   for (auto& u : users_) {
      if (params_.kind == protocol_params::kind_t::quorum)
         u.tracker.update(u.state, pool_, params_);

      chain conf = confirmed_chain_of(u.entry.user);
      for (const block& b : conf.blocks)
         u.first_confirmed.emplace(b.id, t_);

      user_slot_snapshot snap;
      snap.t = t_;
      snap.state_seq = u.state.sequence_digest();
      snap.permissions = u.permissions_digest;
      snap.confirmed = conf.size();
      snap.chain_length = u.state.chain_length();
      snap.confirmed_leaf = conf.leaf().id;
      u.snapshots.push_back(snap);
   }
}

void world::step() {
   if (t_ >= duration_)
      throw error("stepping past the configured duration");
   run_delivery_phase();
   run_action_phase();
   run_snapshot_phase();
   ++t_;
}

void world::run() {
   while (t_ < duration_)
      step();
}

} // namespace poolsim
