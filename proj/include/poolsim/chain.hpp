#pragma once

#include <poolsim/digest.hpp>
#include <poolsim/errors.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace poolsim {

using timeslot = std::uint64_t;
using key_id = std::string;
using user_id = std::string;

// Difficulty-epoch annotation carried by blocks mined under a retargeting
// schedule. Excluded from the block id so annotation never affects identity.
struct epoch_meta {
   std::uint64_t epoch = 0;
   double p = 0.0;

   bool operator==(const epoch_meta&) const = default;
};

/**
 * A block in the broadcast record.
 *
 * Invariants:
 *  1. exactly one block per execution has no parent (the genesis block);
 *  2. every other block's ancestor closure reaches genesis (no cycles);
 *  3. id == block_id(parent, miner, timestamp, payload), so identical
 *     content implies identical id and trace comparison is bit-exact.
 */
struct block {
   digest id;
   std::optional<digest> parent; // nullopt marks genesis
   key_id miner;
   timeslot timestamp = 0;
   std::vector<std::uint8_t> payload;
   std::optional<epoch_meta> meta;

   bool is_genesis() const { return !parent.has_value(); }
   bool operator==(const block&) const = default;
};

// Content digest over (parent, miner, timestamp, payload).
digest block_id(const std::optional<digest>& parent, const key_id& miner,
                timeslot timestamp, const std::vector<std::uint8_t>& payload);

// Canonical identity bytes; the block id is the sha256 of this encoding,
// and permission requests carry candidate blocks in this form.
std::vector<std::uint8_t> encode_block_identity(const block& b);
std::optional<block> parse_block_identity(const std::vector<std::uint8_t>& bytes);

// Builds a block with its id filled in.
block make_block(const std::optional<digest>& parent, const key_id& miner,
                 timeslot timestamp, std::vector<std::uint8_t> payload = {});

// Quorum-protocol ballot. One honest vote per (voter, round); honest voters
// additionally never vote for two different blocks at the same height, which
// is what keeps certificates unique per height under adversarial delivery.
struct vote {
   digest id;
   key_id voter;
   digest block_ref;
   std::uint64_t round = 0;

   bool operator==(const vote&) const = default;
};

digest vote_id(const key_id& voter, const digest& block_ref, std::uint64_t round);
vote make_vote(const key_id& voter, const digest& block_ref, std::uint64_t round);

// Canonical vote identity bytes, mirroring the block pair above.
std::vector<std::uint8_t> encode_vote_identity(const vote& v);
std::optional<vote> parse_vote_identity(const std::vector<std::uint8_t>& bytes);

using message = std::variant<block, vote>;

const digest& message_id(const message& m);

/**
 * The set of messages delivered to one user, in first-delivery order.
 *
 * Invariants:
 *  1. grows monotonically over timeslots (deliveries only add);
 *  2. states built through apply_block are downward closed: no block is
 *     present without its parent. apply_block_unchecked breaks closure for
 *     adversarial/test construction and marks the state accordingly;
 *  3. arrival_order lists each message id exactly once, in insertion order.
 */
class message_state {
public:
   explicit message_state(const block& genesis);

   // Mutating insert used by the scheduler hot path. No-op when the block is
   // already present. Throws missing_parent_error when the parent is absent
   // (a scheduler bug: the delivery buffer must hold such blocks back).
   void apply_block(const block& b);
   void apply_vote(const vote& v);
   void apply_message(const message& m);

   // Inserts without the parent check and poisons downward closure. Only for
   // tests that need a non-closed state.
   void apply_block_unchecked(const block& b);

   bool contains(const digest& id) const;
   const block* find_block(const digest& id) const;
   const vote* find_vote(const digest& id) const;
   std::optional<message> find_message(const digest& id) const;

   const digest& genesis_id() const { return genesis_id_; }
   const block& genesis() const;
   bool downward_closed() const { return closed_; }

   const std::vector<digest>& arrival_order() const { return arrival_order_; }
   std::size_t arrival_index(const digest& id) const;
   std::size_t size() const { return arrival_order_.size(); }

   // Chain length (block count, genesis included) ending at the current best
   // leaf. O(1); maintained incrementally.
   std::uint64_t chain_length() const { return best_depth_; }
   const digest& best_leaf() const { return best_leaf_; }

   // Depth of a block = number of blocks on its chain from genesis, genesis
   // having depth 1. Throws if id is not a known block.
   std::uint64_t block_depth(const digest& id) const;

   const std::unordered_map<digest, block>& blocks() const { return blocks_; }
   const std::unordered_map<digest, vote>& votes() const { return votes_; }

   // Digest over the arrival sequence; two states compare equal iff they saw
   // the same messages in the same order.
   digest sequence_digest() const;

   // Digest over the sorted message-id set; identifies the state as a set,
   // which is what permitter responses key on.
   digest set_digest() const;

private:
   digest genesis_id_;
   std::unordered_map<digest, block> blocks_;
   std::unordered_map<digest, vote> votes_;
   std::vector<digest> arrival_order_;
   std::unordered_map<digest, std::size_t> arrival_index_;
   std::unordered_map<digest, std::uint64_t> depth_;
   digest best_leaf_;
   std::uint64_t best_depth_ = 0;
   bool closed_ = true;
   mutable digest set_cache_;
   mutable bool set_cache_valid_ = false;

   void record_arrival(const digest& id);
   void index_block(const block& b, std::uint64_t depth);
};

// A chain from genesis to a single leaf. Downward closed by construction;
// blocks[i] is the parent of blocks[i+1].
struct chain {
   std::vector<block> blocks;

   std::size_t size() const { return blocks.size(); }
   const block& leaf() const { return blocks.back(); }
   bool operator==(const chain&) const = default;
};

/**
 * Confirmation notion applied to a message state.
 *
 * depth: a block is confirmed when followed by >= depth blocks on the
 *        selected chain.
 * rate:  additionally the depth successors must have been produced, by
 *        timestamp, in strictly less than depth * rate_hours_per_block
 *        hours. The span anchors at the candidate's own timestamp, i.e.
 *        it covers all depth production intervals.
 */
struct confirmation_rule {
   enum class kind_t { depth, rate };

   kind_t kind = kind_t::depth;
   std::uint64_t depth = 6;
   double rate_hours_per_block = 1.0 / 5.5;
   double epsilon = 0.1;
   double timeslot_seconds = 1.0;
};

// Pure, spec-shaped insert: returns the state with b applied.
message_state insert_block(message_state state, const block& b);

// The chain of maximum block count; ties broken by earliest arrival of the
// leaf. Pure in (messages, arrival_order).
chain longest_chain(const message_state& state);

// True iff b1 == b2 or one is an ancestor of the other. Throws
// missing_parent_error when either block or its ancestor closure is absent.
bool is_compatible(const digest& b1, const digest& b2, const message_state& state);
bool is_compatible(const block& b1, const block& b2, const message_state& state);

// The confirmed prefix of the longest chain under the rule. Genesis is
// always confirmed. Under the rate rule the prefix stops at the first block
// whose successor window exceeds the time budget, so the output is a chain.
chain confirmed(const message_state& state, const confirmation_rule& rule);

// Confirmed-count convenience used by growth statistics; equals
// confirmed(state, rule).size() without materializing blocks.
std::uint64_t confirmed_count(const message_state& state, const confirmation_rule& rule);

// True iff strictly more blocks are confirmed in the later state.
bool growth_interval(const message_state& earlier, const message_state& later,
                     const confirmation_rule& rule);

} // namespace poolsim
