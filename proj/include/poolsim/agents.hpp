#pragma once

#include <poolsim/chain.hpp>
#include <poolsim/permitter.hpp>
#include <poolsim/resource.hpp>

#include <map>
#include <set>
#include <string>
#include <vector>

namespace poolsim {

// Everything the scheduler needs to know about the protocol being run.
struct protocol_params {
   enum class kind_t { pow, pos, quorum };

   kind_t kind = kind_t::pow;
   confirmation_rule confirmation;
   double timeslot_seconds = 1.0;
   std::uint64_t round_slots = 4;    // quorum: timeslots per voting round
   std::uint64_t window_slots = 120; // pos: lottery look-ahead
   double quorum_total = 0.0;        // quorum: believed total pool balance
   difficulty_params difficulty;
};

// Instructions plus permitter plus confirmation rule: the full protocol a
// user runs. The scheduler assembles one per run.
struct extended_protocol {
   protocol_params params;
   permitter_kernel kernel;
};

struct user_entry {
   user_id user;
   std::vector<key_id> keys;
};

/**
 * Certificate bookkeeping for the quorum protocol, folded incrementally over
 * one user's arrival order. A block is certified once the accumulated vote
 * weight strictly exceeds two thirds of the believed total; each vote weighs
 * the voter's pool balance at its round's opening timeslot.
 *
 * The fold is a pure function of (state, pool, params), so two users with
 * equal states always agree on the certified set.
 */
struct quorum_tracker {
   std::map<digest, double> tally;
   std::set<digest> certified;
   std::map<digest, std::vector<digest>> children;
   std::size_t watermark = 0;

   void update(const message_state& state, const resource_pool& pool,
               const protocol_params& params);

   bool is_certified(const digest& id, const message_state& state) const;

   // Leaf of the certified chain: the deepest block reachable from genesis
   // through certified children (earliest arrival wins a tie, which honest
   // executions never produce).
   digest certified_leaf(const message_state& state) const;
   std::uint64_t certified_chain_length(const message_state& state) const;
};

// Read-only slice of the world one user acts on. Step functions must be
// pure in this view: same view, same actions.
struct agent_view {
   user_id user;
   std::vector<key_id> keys;
   timeslot t = 0;
   const message_state* state = nullptr;
   const std::vector<permission>* permissions = nullptr;
   const protocol_params* params = nullptr;
   const resource_pool* pool = nullptr;
   const quorum_tracker* quorum = nullptr; // only for quorum users
};

// What a user wants to do this timeslot. The scheduler reads `requests`
// from the first call of the slot and `broadcasts`/`relays` from the
// second, after permissions landed.
struct agent_actions {
   std::vector<permit_request> requests;
   std::vector<message> broadcasts;
   std::vector<digest> relays; // ids already in the user's state
};

// Longest-chain miner: asks for one block grant per slot on the current
// leaf, broadcasts grants that still extend the leaf.
agent_actions pow_step(const agent_view& view);

// Longest-chain staker: enters the lottery for the current slot, mints when
// it holds a still-current winning ticket.
agent_actions pos_step(const agent_view& view);

// Quorum participant: at a round's opening slot the lottery winner proposes
// on the certified chain (relaying the earliest pending proposal rather
// than minting a sibling); everyone votes for the first valid proposal at
// each height, at most one vote per height.
agent_actions quorum_step(const agent_view& view);

agent_actions agent_step(const agent_view& view);

} // namespace poolsim
