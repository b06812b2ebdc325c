#include <poolsim/agents.hpp>
#include <poolsim/errors.hpp>

#include <algorithm>

namespace poolsim {

void quorum_tracker::update(const message_state& state, const resource_pool& pool,
                            const protocol_params& params) {
   const auto& order = state.arrival_order();
   const double threshold = 2.0 / 3.0 * params.quorum_total;
   for (; watermark < order.size(); ++watermark) {
      const digest& id = order[watermark];
      if (const block* b = state.find_block(id)) {
         if (b->parent)
            children[*b->parent].push_back(id);
         continue;
      }
      const vote* v = state.find_vote(id);
      if (!v)
         continue;
      const timeslot round_start = v->round * params.round_slots;
      const double weight = balance(pool, v->voter, round_start, state);
      double& total = tally[v->block_ref];
      total += weight;
      if (total > threshold)
         certified.insert(v->block_ref);
   }
}

bool quorum_tracker::is_certified(const digest& id, const message_state& state) const {
   return id == state.genesis_id() || certified.count(id) != 0;
}

digest quorum_tracker::certified_leaf(const message_state& state) const {
   digest cur = state.genesis_id();
   for (;;) {
      auto it = children.find(cur);
      if (it == children.end())
         return cur;
      const digest* next = nullptr;
      for (const digest& child : it->second) {
         if (certified.count(child) == 0)
            continue;
         if (!next || state.arrival_index(child) < state.arrival_index(*next))
            next = &child;
      }
      if (!next)
         return cur;
      cur = *next;
   }
}

std::uint64_t quorum_tracker::certified_chain_length(const message_state& state) const {
   return state.block_depth(certified_leaf(state));
}

namespace {

// The most recent grant wins when several cover the same broadcast; scan
// from the back.
template <typename Pred>
const permission* find_grant(const std::vector<permission>& perms, Pred&& pred) {
   for (auto it = perms.rbegin(); it != perms.rend(); ++it) {
      if (pred(*it))
         return &*it;
   }
   return nullptr;
}

permit_request make_request(const key_id& key, const message_state* state, timeslot slot,
                            std::vector<std::uint8_t> data) {
   permit_request req;
   req.key = key;
   req.state = state;
   req.slot_claim = slot;
   req.data = std::move(data);
   return req;
}

} // namespace

agent_actions pow_step(const agent_view& view) {
   agent_actions out;
   const message_state& state = *view.state;
   const digest leaf = state.best_leaf();

   for (const key_id& key : view.keys) {
      const permission* usable = find_grant(*view.permissions, [&](const permission& p) {
         return p.kind == permission::kind_t::specific && p.granted_block.has_value() &&
                p.granted_block->miner == key && p.granted_block->parent == leaf &&
                !state.contains(p.granted_id);
      });
      if (usable) {
         out.broadcasts.emplace_back(*usable->granted_block);
      } else {
         block candidate = make_block(leaf, key, view.t);
         out.requests.push_back(make_request(key, view.state, view.t, encode_block_identity(candidate)));
      }
   }
   return out;
}

agent_actions pos_step(const agent_view& view) {
   agent_actions out;
   const message_state& state = *view.state;
   const digest leaf = state.best_leaf();

   for (const key_id& key : view.keys) {
      const permission* ticket = find_grant(*view.permissions, [&](const permission& p) {
         return p.kind == permission::kind_t::criteria && p.slot == view.t &&
                p.chain_ref == leaf;
      });
      if (ticket) {
         block minted = make_block(leaf, key, view.t);
         if (!state.contains(minted.id))
            out.broadcasts.emplace_back(std::move(minted));
      } else {
         out.requests.push_back(make_request(key, view.state, view.t, {}));
      }
   }
   return out;
}

namespace {

// The quorum lottery runs on the certified chain, so the proposer presents
// a state containing exactly that chain.
message_state certified_chain_state(const message_state& state, const quorum_tracker& lens) {
   std::vector<const block*> line;
   const block* cur = state.find_block(lens.certified_leaf(state));
   while (cur) {
      line.push_back(cur);
      cur = cur->parent ? state.find_block(*cur->parent) : nullptr;
   }
   message_state pruned(*line.back());
   for (auto it = line.rbegin() + 1; it != line.rend(); ++it)
      pruned.apply_block(**it);
   return pruned;
}

// Heights (block depths) this user already voted at.
std::set<std::uint64_t> voted_heights(const message_state& state, const key_id& key) {
   std::set<std::uint64_t> out;
   for (const auto& [id, v] : state.votes()) {
      if (v.voter != key)
         continue;
      if (state.find_block(v.block_ref))
         out.insert(state.block_depth(v.block_ref));
   }
   return out;
}

} // namespace

agent_actions quorum_step(const agent_view& view) {
   agent_actions out;
   const message_state& state = *view.state;
   const quorum_tracker& lens = *view.quorum;
   const std::uint64_t round_slots = view.params->round_slots;
   const timeslot round_start = (view.t / round_slots) * round_slots;

   const digest cert_leaf = lens.certified_leaf(state);
   const std::uint64_t next_height = state.block_depth(cert_leaf) + 1;

   // Uncertified children of the certified leaf, i.e. proposals still
   // waiting for votes at the next height.
   std::vector<digest> pending;
   if (auto it = lens.children.find(cert_leaf); it != lens.children.end()) {
      for (const digest& child : it->second)
         if (lens.certified.count(child) == 0)
            pending.push_back(child);
   }
   std::sort(pending.begin(), pending.end(), [&](const digest& a, const digest& b) {
      return state.arrival_index(a) < state.arrival_index(b);
   });

   for (const key_id& key : view.keys) {
      // Proposer duties at the round's opening slot.
      if (view.t == round_start) {
         const permission* win = find_grant(*view.permissions, [&](const permission& p) {
            return p.kind == permission::kind_t::criteria && p.slot == round_start &&
                   p.chain_ref == cert_leaf;
         });
         if (win) {
            if (!pending.empty()) {
               // Re-broadcast the earliest stalled proposal instead of
               // minting a competing sibling.
               out.relays.push_back(pending.front());
            } else {
               out.broadcasts.emplace_back(make_block(cert_leaf, key, round_start));
            }
         } else {
            permit_request req{key, view.state, round_start, {}};
            req.present(certified_chain_state(state, lens));
            out.requests.push_back(std::move(req));
         }
      }

      // Voting: first valid proposal at the next height, one vote per
      // height. Valid means it extends this user's certified leaf.
      auto voted = voted_heights(state, key);
      if (!pending.empty() && voted.count(next_height) == 0) {
         const digest& target = pending.front();
         vote v = make_vote(key, target, view.t / round_slots);
         const permission* granted = find_grant(*view.permissions, [&](const permission& p) {
            return p.kind == permission::kind_t::specific && p.granted_id == v.id;
         });
         if (granted) {
            if (!state.contains(v.id))
               out.broadcasts.emplace_back(std::move(v));
         } else {
            out.requests.push_back(make_request(key, view.state, view.t, encode_vote_identity(v)));
         }
      }
   }
   return out;
}

agent_actions agent_step(const agent_view& view) {
   switch (view.params->kind) {
   case protocol_params::kind_t::pow:
      return pow_step(view);
   case protocol_params::kind_t::pos:
      return pos_step(view);
   case protocol_params::kind_t::quorum:
      return quorum_step(view);
   }
   throw error("unknown protocol kind");
}

} // namespace poolsim
