#include <poolsim/permitter.hpp>
#include <poolsim/errors.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace poolsim {

digest request_digest(const permit_request& req) {
   byte_writer w;
   w.tag("req").str(req.key).dig(req.state->set_digest()).u64(req.slot_claim).bytes(req.data);
   return sha256(w.out);
}

bool covers(const permission& perm, const message& m) {
   switch (perm.kind) {
   case permission::kind_t::denied:
      return false;
   case permission::kind_t::specific:
      return message_id(m) == perm.granted_id;
   case permission::kind_t::criteria: {
      const auto* b = std::get_if<block>(&m);
      return b && b->parent && *b->parent == perm.chain_ref && b->timestamp == perm.slot;
   }
   }
   return false;
}

digest params_digest(const permitter_kernel& kernel) {
   if (kernel.params_cache)
      return *kernel.params_cache;
   byte_writer w;
   w.tag("params").u8(static_cast<std::uint8_t>(kernel.kind));
   w.u64(kernel.difficulty.epoch_length_blocks)
      .f64(kernel.difficulty.target_seconds_per_block)
      .f64(kernel.difficulty.p_initial);
   w.u64(kernel.window_slots).f64(kernel.timeslot_seconds);
   w.f64(kernel.prop1.lambda).u32(kernel.prop1.ext_no).u32(kernel.prop1.x_max);
   w.u32(static_cast<std::uint32_t>(kernel.prop1.x_of.size()));
   for (const auto& [key, x] : kernel.prop1.x_of)
      w.str(key).u32(x);
   kernel.params_cache = sha256(w.out);
   return *kernel.params_cache;
}

double prf_draw(const permitter_kernel& kernel, const std::vector<std::uint8_t>& inputs) {
   digest mac = hmac_sha256(kernel.prf_key, inputs);
   std::uint64_t u = 0;
   for (int i = 0; i < 8; ++i)
      u = (u << 8) | mac.bytes[static_cast<std::size_t>(i)];
   // Top 53 bits give a uniform dyadic rational in [0,1).
   return static_cast<double>(u >> 11) * 0x1.0p-53;
}

namespace {

// Appends `entry` under `key`, demoting older-timeslot entries to the
// rolling digest and count. Responses only ever consult entries at the
// current timeslot, so this loses nothing observable.
void record_request(permitter_kernel& kernel, const key_id& key,
                    permitter_kernel::ledger_entry entry) {
   auto& hist = kernel.ledger[key];
   if (hist.total > 0 && hist.last_t != entry.t) {
      for (const auto& old : hist.at_last_t) {
         byte_writer w;
         w.tag("ledg").dig(hist.rolling).u64(old.t).dig(old.request);
         hist.rolling = sha256(w.out);
      }
      hist.at_last_t.clear();
   }
   hist.last_t = entry.t;
   hist.total += 1;
   hist.at_last_t.push_back(std::move(entry));
}

const std::vector<permitter_kernel::ledger_entry>*
entries_at(const permitter_kernel& kernel, const key_id& key, timeslot t) {
   auto it = kernel.ledger.find(key);
   if (it == kernel.ledger.end() || it->second.total == 0 || it->second.last_t != t)
      return nullptr;
   return &it->second.at_last_t;
}

void require_closed(const permit_request& req) {
   if (req.state == nullptr)
      throw malformed_request_error("request carries no message state");
   if (!req.state->downward_closed())
      throw malformed_request_error("request state is not downward closed");
}

permission denied() {
   return permission{};
}

} // namespace

double difficulty_update(double p_prev, double epoch_seconds, const difficulty_params& params) {
   const double target_seconds =
      static_cast<double>(params.epoch_length_blocks) * params.target_seconds_per_block;
   double raw = target_seconds > 0.0 ? p_prev * epoch_seconds / target_seconds : p_prev;
   return std::clamp(raw, p_prev / 4.0, p_prev * 4.0);
}

double difficulty_schedule(const message_state& state, const difficulty_params& params,
                           double timeslot_seconds) {
   const std::uint64_t L = params.epoch_length_blocks;
   double p = params.p_initial;
   if (L == 0) return p;

   const std::uint64_t mined = state.chain_length() - 1; // genesis does not count
   const std::uint64_t epochs = mined / L;
   if (epochs == 0) return p;

   // Timestamps of the epoch-boundary blocks (chain indexes 0, L, ..., eL),
   // collected on a parent walk from the leaf.
   std::vector<timeslot> boundaries(epochs + 1, 0);
   const block* cur = state.find_block(state.best_leaf());
   std::uint64_t index = state.chain_length() - 1;
   while (cur != nullptr) {
      if (index % L == 0 && index / L <= epochs)
         boundaries[index / L] = cur->timestamp;
      if (!cur->parent) break;
      cur = state.find_block(*cur->parent);
      --index;
   }

   timeslot prev_boundary = boundaries[0];
   for (std::uint64_t i = 1; i <= epochs; ++i) {
      const double span_seconds =
         static_cast<double>(boundaries[i] - prev_boundary) * timeslot_seconds;
      p = difficulty_update(p, span_seconds, params);
      prev_boundary = boundaries[i];
   }
   return p;
}

permission pow_respond(permitter_kernel& kernel, const permit_request& req,
                       timeslot actual_t, const resource_pool& pool) {
   require_closed(req);

   const bool first_this_slot = entries_at(kernel, req.key, actual_t) == nullptr;
   const digest rdigest = request_digest(req);
   record_request(kernel, req.key,
                  {actual_t, rdigest, sha256(req.data)});

   if (!first_this_slot)
      return denied();

   const double bal = balance(pool, req.key, actual_t, *req.state);
   if (bal <= 0.0)
      return denied();

   // The candidate must be a block that validly extends the longest chain of
   // the presented state at the actual timeslot.
   auto candidate = parse_block_identity(req.data);
   if (!candidate || !candidate->parent || *candidate->parent != req.state->best_leaf() ||
       candidate->timestamp != actual_t || candidate->miner != req.key)
      return denied();

   const double p = difficulty_schedule(*req.state, kernel.difficulty, kernel.timeslot_seconds);
   const double threshold = std::min(p * bal, 1.0);

   byte_writer w;
   w.tag("pow-grant").dig(params_digest(kernel)).u64(actual_t).str(req.key).dig(rdigest);
   if (prf_draw(kernel, w.out) >= threshold)
      return denied();

   permission perm;
   perm.kind = permission::kind_t::specific;
   perm.slot = actual_t;
   perm.granted_id = candidate->id;
   perm.granted_block = std::move(*candidate);
   return perm;
}

std::optional<key_id> pos_winner(const permitter_kernel& kernel, const resource_pool& pool,
                                 const message_state& state, timeslot slot) {
   chain lc = longest_chain(state);
   auto keys = key_universe(pool, state);
   std::vector<double> weights(keys.size());
   double total = 0.0;
   for (std::size_t i = 0; i < keys.size(); ++i) {
      weights[i] = balance(pool, keys[i], slot, state);
      total += weights[i];
   }
   if (total <= 0.0)
      return std::nullopt;

   // One draw per (leaf, slot); every requester sees the same partition of
   // [0,1), so exactly one key wins. The requester's identity deliberately
   // stays out of the input.
   byte_writer w;
   w.tag("pos-lottery").dig(params_digest(kernel)).dig(lc.leaf().id).u64(slot);
   const double u = prf_draw(kernel, w.out);

   double acc = 0.0;
   for (std::size_t i = 0; i < keys.size(); ++i) {
      acc += weights[i] / total;
      if (u < acc)
         return keys[i];
   }
   return keys.back(); // u landed in the final cell's rounding slack
}

permission pos_respond(permitter_kernel& kernel, const permit_request& req,
                       timeslot actual_t, const resource_pool& pool) {
   require_closed(req);
   record_request(kernel, req.key, {actual_t, request_digest(req), sha256(req.data)});

   // Vote-shaped data asks for specific permission to broadcast that vote;
   // the only gate is a positive balance (no voice without resources).
   if (!req.data.empty()) {
      auto v = parse_vote_identity(req.data);
      if (!v || v->voter != req.key)
         return denied();
      if (balance(pool, req.key, actual_t, *req.state) <= 0.0)
         return denied();
      permission perm;
      perm.kind = permission::kind_t::specific;
      perm.slot = actual_t;
      perm.granted_id = v->id;
      perm.granted_vote = std::move(*v);
      return perm;
   }

   chain lc = longest_chain(*req.state);
   const timeslot leaf_t = lc.leaf().timestamp;
   if (req.slot_claim <= leaf_t || req.slot_claim > leaf_t + kernel.window_slots)
      return denied();
   if (req.slot_claim < actual_t)
      return denied();
   if (balance(pool, req.key, req.slot_claim, *req.state) <= 0.0)
      return denied();

   auto winner = pos_winner(kernel, pool, *req.state, req.slot_claim);
   if (!winner || *winner != req.key)
      return denied();

   permission perm;
   perm.kind = permission::kind_t::criteria;
   perm.slot = req.slot_claim;
   perm.chain_ref = lc.leaf().id;
   return perm;
}

permission prop1_respond(permitter_kernel& kernel, const permit_request& req,
                         timeslot actual_t, const resource_pool& pool) {
   require_closed(req);

   std::uint32_t x_u = kernel.prop1.x_max;
   if (auto it = kernel.prop1.x_of.find(req.key); it != kernel.prop1.x_of.end())
      x_u = it->second;
   const std::uint64_t cap = std::min<std::uint64_t>(x_u, kernel.prop1.ext_no);

   // Data must name one of the ext_no candidate extensions. Malformed
   // requests are rejected before they enter the ledger.
   if (req.data.size() != 7 || req.data[0] != 'e' || req.data[1] != 'x' || req.data[2] != 't')
      throw malformed_request_error("request data is not an extension index");
   std::uint32_t ext = 0;
   for (std::size_t i = 3; i < 7; ++i)
      ext = (ext << 8) | req.data[i];
   if (ext >= kernel.prop1.ext_no)
      throw malformed_request_error(fmt::format("extension index {} out of range", ext));

   const digest data_digest = sha256(req.data);
   std::uint64_t prior = 0;
   if (const auto* entries = entries_at(kernel, req.key, actual_t)) {
      for (const auto& e : *entries) {
         if (e.data == data_digest)
            throw malformed_request_error(fmt::format(
               "key {} repeated request data within timeslot {}", req.key, actual_t));
      }
      prior = entries->size();
   }
   record_request(kernel, req.key, {actual_t, request_digest(req), data_digest});

   if (prior >= cap)
      return denied();

   const double bal = balance(pool, req.key, actual_t, *req.state);
   if (bal <= 0.0)
      return denied();

   byte_writer w;
   w.tag("prop1-grant").dig(params_digest(kernel)).u64(actual_t).str(req.key).dig(data_digest);
   if (prf_draw(kernel, w.out) >= kernel.prop1.lambda * bal)
      return denied();

   permission perm;
   perm.kind = permission::kind_t::specific;
   perm.slot = actual_t;
   perm.granted_id = data_digest;
   return perm;
}

permission respond(permitter_kernel& kernel, const permit_request& req,
                   timeslot actual_t, const resource_pool& pool) {
   switch (kernel.kind) {
   case permitter_kernel::kind_t::pow:
      return pow_respond(kernel, req, actual_t, pool);
   case permitter_kernel::kind_t::pos_lottery:
      return pos_respond(kernel, req, actual_t, pool);
   case permitter_kernel::kind_t::prop1:
      return prop1_respond(kernel, req, actual_t, pool);
   }
   throw error("unknown kernel kind");
}

std::vector<std::uint8_t> encode_extension(std::uint32_t ext) {
   byte_writer w;
   w.tag("ext").u32(ext);
   return std::move(w.out);
}

} // namespace poolsim
