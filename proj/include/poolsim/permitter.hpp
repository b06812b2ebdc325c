#pragma once

#include <poolsim/chain.hpp>
#include <poolsim/resource.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace poolsim {

// A permission request: the requesting key, the message state the requester
// presents, the timeslot the requester claims to want permission for, and
// protocol-specific payload data. A requester may present any state it can
// construct, not only its full delivery record; owned_state carries such a
// substitute and keeps it alive for the permitter call.
struct permit_request {
   key_id key;
   const message_state* state = nullptr;
   timeslot slot_claim = 0;
   std::vector<std::uint8_t> data;
   std::shared_ptr<const message_state> owned_state;

   permit_request() = default;
   permit_request(key_id k, const message_state* s, timeslot t,
                  std::vector<std::uint8_t> d)
      : key(std::move(k)), state(s), slot_claim(t), data(std::move(d)) {}

   void present(message_state substitute) {
      owned_state = std::make_shared<const message_state>(std::move(substitute));
      state = owned_state.get();
   }
};

digest request_digest(const permit_request& req);

/**
 * Permitter response.
 *
 * denied:   no permission.
 * specific: permission to broadcast exactly one message, carried inline
 *           (granted_block or granted_vote) and identified by granted_id.
 * criteria: permission to broadcast any block with parent chain_ref and
 *           timestamp slot. Whether chain_ref is still the chain a protocol
 *           wants to extend is the agent's concern, not the permission's.
 */
struct permission {
   enum class kind_t { denied, specific, criteria };

   kind_t kind = kind_t::denied;
   timeslot slot = 0;
   digest chain_ref;
   digest granted_id;
   std::optional<block> granted_block;
   std::optional<vote> granted_vote;
};

// True when the permission authorizes broadcasting `m`.
bool covers(const permission& perm, const message& m);

// Retarget step: next per-query success probability from the previous one
// and the observed epoch span, clamped to a factor of 4 per epoch.
struct difficulty_params {
   std::uint64_t epoch_length_blocks = 2016;
   double target_seconds_per_block = 600.0;
   double p_initial = 1.0 / (600.0 * 4294967296.0);
};

double difficulty_update(double p_prev, double epoch_seconds, const difficulty_params& params);

// Success probability for the next block after the longest chain of `state`,
// replaying the retarget rule over the chain's completed epochs.
double difficulty_schedule(const message_state& state, const difficulty_params& params,
                           double timeslot_seconds);

struct prop1_params {
   double lambda = 0.0;
   std::uint32_t ext_no = 1;
   std::uint32_t x_max = 1;
   std::map<key_id, std::uint32_t> x_of;
};

/**
 * Keyed permitter for one resource pool.
 *
 * Responses are a pure function of: the PRF key, the protocol parameters,
 * the actual timeslot, the requester's previous requests, the request
 * itself, and the requester's own balance. Nothing else enters a response,
 * so two worlds presenting the same request under the same kernel state get
 * byte-identical answers.
 *
 * The request ledger keeps full entries only for the latest timeslot seen
 * per key (responses consult only same-timeslot history); older activity is
 * kept as a running digest and count.
 */
struct permitter_kernel {
   enum class kind_t { pow, pos_lottery, prop1 };

   struct ledger_entry {
      timeslot t = 0;
      digest request;
      digest data;
   };

   struct key_history {
      timeslot last_t = 0;
      std::vector<ledger_entry> at_last_t;
      std::uint64_t total = 0;
      digest rolling;
   };

   kind_t kind = kind_t::pow;
   difficulty_params difficulty;
   std::uint64_t window_slots = 120;
   double timeslot_seconds = 30.0;
   prop1_params prop1;
   std::vector<std::uint8_t> prf_key;
   std::map<key_id, key_history> ledger;
   // Parameters are fixed once requests flow; params_digest memoizes here.
   mutable std::optional<digest> params_cache;
};

// Digest of the kernel's protocol parameters; folded into every draw so
// distinct configurations draw independently.
digest params_digest(const permitter_kernel& kernel);

// Uniform [0,1) variate keyed by the kernel's PRF key over the canonical
// input encoding. 53-bit resolution.
double prf_draw(const permitter_kernel& kernel, const std::vector<std::uint8_t>& inputs);

// Block-production permission: grants specific permission for the candidate
// block in req.data iff it validly extends the longest chain of req.state at
// timestamp actual_t, the key has balance, this is the key's first request
// of the timeslot, and the success draw clears p * balance.
permission pow_respond(permitter_kernel& kernel, const permit_request& req,
                       timeslot actual_t, const resource_pool& pool);

// Leader lottery for slot req.slot_claim on the longest chain of req.state.
// Exactly one key in the pool's universe wins each (leaf, slot) pair; the
// winner gets criteria permission. With vote-shaped req.data the response is
// instead specific permission for that vote iff the key has balance.
permission pos_respond(permitter_kernel& kernel, const permit_request& req,
                       timeslot actual_t, const resource_pool& pool);

// The lottery winner for a given chain leaf and slot; exposed for fairness
// and uniqueness checks. Returns nothing when the pool is empty at `slot`.
std::optional<key_id> pos_winner(const permitter_kernel& kernel, const resource_pool& pool,
                                 const message_state& state, timeslot slot);

// Rate-limited grant kernel: per timeslot each key may place up to
// min(x_of[key], ext_no) distinct requests; each is granted independently
// with probability lambda * balance.
permission prop1_respond(permitter_kernel& kernel, const permit_request& req,
                         timeslot actual_t, const resource_pool& pool);

// Dispatch on kernel.kind.
permission respond(permitter_kernel& kernel, const permit_request& req,
                   timeslot actual_t, const resource_pool& pool);

// Canonical data payload for prop1 requests: extension index ext < ext_no.
std::vector<std::uint8_t> encode_extension(std::uint32_t ext);

} // namespace poolsim
