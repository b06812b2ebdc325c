#include <poolsim/chain.hpp>

#include <fmt/format.h>

#include <algorithm>

namespace poolsim {

static std::vector<std::uint8_t> block_identity_bytes(const std::optional<digest>& parent,
                                                      const key_id& miner, timeslot timestamp,
                                                      const std::vector<std::uint8_t>& payload) {
   byte_writer w;
   w.tag("blk");
   if (parent) {
      w.u8(1).dig(*parent);
   } else {
      w.u8(0).dig(digest{});
   }
   w.str(miner).u64(timestamp).bytes(payload);
   return std::move(w.out);
}

digest block_id(const std::optional<digest>& parent, const key_id& miner,
                timeslot timestamp, const std::vector<std::uint8_t>& payload) {
   return sha256(block_identity_bytes(parent, miner, timestamp, payload));
}

std::vector<std::uint8_t> encode_block_identity(const block& b) {
   return block_identity_bytes(b.parent, b.miner, b.timestamp, b.payload);
}

std::vector<std::uint8_t> encode_vote_identity(const vote& v) {
   byte_writer w;
   w.tag("vote").str(v.voter).dig(v.block_ref).u64(v.round);
   return std::move(w.out);
}

namespace {

// Strict cursor over an identity encoding; any short read flags failure and
// the caller rejects the message as malformed.
struct byte_reader {
   const std::vector<std::uint8_t>& in;
   std::size_t pos = 0;
   bool ok = true;

   bool tag(std::string_view s) {
      if (!ok || in.size() - pos < s.size() ||
          !std::equal(s.begin(), s.end(), in.begin() + static_cast<std::ptrdiff_t>(pos))) {
         ok = false;
         return false;
      }
      pos += s.size();
      return true;
   }
   std::uint8_t u8() {
      if (!ok || pos >= in.size()) { ok = false; return 0; }
      return in[pos++];
   }
   std::uint64_t uint_be(std::size_t width) {
      if (!ok || in.size() - pos < width) { ok = false; return 0; }
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < width; ++i)
         v = (v << 8) | in[pos++];
      return v;
   }
   digest dig() {
      digest d;
      if (!ok || in.size() - pos < 32) { ok = false; return d; }
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(pos), 32, d.bytes.begin());
      pos += 32;
      return d;
   }
   std::vector<std::uint8_t> bytes() {
      auto len = uint_be(4);
      if (!ok || in.size() - pos < len) { ok = false; return {}; }
      std::vector<std::uint8_t> b(in.begin() + static_cast<std::ptrdiff_t>(pos),
                                  in.begin() + static_cast<std::ptrdiff_t>(pos + len));
      pos += len;
      return b;
   }
   std::string str() {
      auto b = bytes();
      return {b.begin(), b.end()};
   }
   bool done() const { return ok && pos == in.size(); }
};

} // namespace

std::optional<block> parse_block_identity(const std::vector<std::uint8_t>& bytes) {
   byte_reader r{bytes};
   if (!r.tag("blk")) return std::nullopt;
   auto flag = r.u8();
   auto parent_raw = r.dig();
   auto miner = r.str();
   auto timestamp = r.uint_be(8);
   auto payload = r.bytes();
   if (!r.done() || flag > 1) return std::nullopt;
   std::optional<digest> parent;
   if (flag == 1) parent = parent_raw;
   else if (!parent_raw.is_zero()) return std::nullopt;
   return make_block(parent, miner, timestamp, std::move(payload));
}

std::optional<vote> parse_vote_identity(const std::vector<std::uint8_t>& bytes) {
   byte_reader r{bytes};
   if (!r.tag("vote")) return std::nullopt;
   auto voter = r.str();
   auto block_ref = r.dig();
   auto round = r.uint_be(8);
   if (!r.done()) return std::nullopt;
   return make_vote(voter, block_ref, round);
}

block make_block(const std::optional<digest>& parent, const key_id& miner,
                 timeslot timestamp, std::vector<std::uint8_t> payload) {
   block b;
   b.parent = parent;
   b.miner = miner;
   b.timestamp = timestamp;
   b.payload = std::move(payload);
   b.id = block_id(b.parent, b.miner, b.timestamp, b.payload);
   return b;
}

digest vote_id(const key_id& voter, const digest& block_ref, std::uint64_t round) {
   vote v;
   v.voter = voter;
   v.block_ref = block_ref;
   v.round = round;
   return sha256(encode_vote_identity(v));
}

vote make_vote(const key_id& voter, const digest& block_ref, std::uint64_t round) {
   vote v;
   v.voter = voter;
   v.block_ref = block_ref;
   v.round = round;
   v.id = vote_id(voter, block_ref, round);
   return v;
}

const digest& message_id(const message& m) {
   if (auto* b = std::get_if<block>(&m)) return b->id;
   return std::get<vote>(m).id;
}

message_state::message_state(const block& genesis) {
   if (genesis.parent.has_value())
      throw error("genesis block must have no parent");
   genesis_id_ = genesis.id;
   index_block(genesis, 1);
   record_arrival(genesis.id);
}

void message_state::record_arrival(const digest& id) {
   arrival_index_.emplace(id, arrival_order_.size());
   arrival_order_.push_back(id);
   set_cache_valid_ = false;
}

void message_state::index_block(const block& b, std::uint64_t depth) {
   blocks_.emplace(b.id, b);
   depth_.emplace(b.id, depth);
   // First block to reach a new maximum depth wins and is never displaced:
   // equal-depth later arrivals lose the tie-break by construction.
   if (depth > best_depth_) {
      best_depth_ = depth;
      best_leaf_ = b.id;
   }
}

void message_state::apply_block(const block& b) {
   if (blocks_.count(b.id)) return;
   if (!b.parent.has_value())
      throw error("a second genesis block cannot be inserted");
   auto parent_depth = depth_.find(*b.parent);
   if (parent_depth == depth_.end())
      throw missing_parent_error(
         fmt::format("block {} references absent parent {}", b.id.hex(), b.parent->hex()));
   index_block(b, parent_depth->second + 1);
   record_arrival(b.id);
}

void message_state::apply_vote(const vote& v) {
   if (votes_.count(v.id)) return;
   votes_.emplace(v.id, v);
   record_arrival(v.id);
}

void message_state::apply_message(const message& m) {
   if (auto* b = std::get_if<block>(&m)) {
      apply_block(*b);
   } else {
      apply_vote(std::get<vote>(m));
   }
}

void message_state::apply_block_unchecked(const block& b) {
   if (blocks_.count(b.id)) return;
   closed_ = false;
   std::uint64_t depth = 1;
   if (b.parent) {
      auto it = depth_.find(*b.parent);
      depth = (it == depth_.end()) ? 1 : it->second + 1;
   }
   index_block(b, depth);
   record_arrival(b.id);
}

bool message_state::contains(const digest& id) const {
   return blocks_.count(id) != 0 || votes_.count(id) != 0;
}

const block* message_state::find_block(const digest& id) const {
   auto it = blocks_.find(id);
   return it == blocks_.end() ? nullptr : &it->second;
}

const vote* message_state::find_vote(const digest& id) const {
   auto it = votes_.find(id);
   return it == votes_.end() ? nullptr : &it->second;
}

std::optional<message> message_state::find_message(const digest& id) const {
   if (auto* b = find_block(id)) return message{*b};
   if (auto* v = find_vote(id)) return message{*v};
   return std::nullopt;
}

const block& message_state::genesis() const {
   return blocks_.at(genesis_id_);
}

std::size_t message_state::arrival_index(const digest& id) const {
   auto it = arrival_index_.find(id);
   if (it == arrival_index_.end())
      throw error(fmt::format("message {} not in state", id.hex()));
   return it->second;
}

std::uint64_t message_state::block_depth(const digest& id) const {
   auto it = depth_.find(id);
   if (it == depth_.end())
      throw error(fmt::format("block {} not in state", id.hex()));
   return it->second;
}

digest message_state::sequence_digest() const {
   byte_writer w;
   w.tag("mseq");
   for (const auto& id : arrival_order_)
      w.dig(id);
   return sha256(w.out);
}

digest message_state::set_digest() const {
   if (set_cache_valid_)
      return set_cache_;
   std::vector<digest> ids = arrival_order_;
   std::sort(ids.begin(), ids.end());
   byte_writer w;
   w.tag("mset");
   for (const auto& id : ids)
      w.dig(id);
   set_cache_ = sha256(w.out);
   set_cache_valid_ = true;
   return set_cache_;
}

message_state insert_block(message_state state, const block& b) {
   state.apply_block(b);
   return state;
}

chain longest_chain(const message_state& state) {
   chain c;
   c.blocks.resize(state.chain_length());
   const block* cur = state.find_block(state.best_leaf());
   for (std::size_t i = c.blocks.size(); i-- > 0;) {
      c.blocks[i] = *cur;
      if (cur->parent)
         cur = state.find_block(*cur->parent);
   }
   return c;
}

static const block& require_block(const digest& id, const message_state& state) {
   const block* b = state.find_block(id);
   if (!b)
      throw missing_parent_error(fmt::format("block {} not present in state", id.hex()));
   return *b;
}

bool is_compatible(const digest& b1, const digest& b2, const message_state& state) {
   if (b1 == b2) {
      require_block(b1, state);
      return true;
   }
   if (!state.downward_closed())
      throw missing_parent_error("compatibility query requires a downward-closed state");
   const block* lo = &require_block(b1, state);
   const block* hi = &require_block(b2, state);
   if (state.block_depth(lo->id) > state.block_depth(hi->id))
      std::swap(lo, hi);
   // Walk the deeper block up to the shallower one's depth; they are
   // compatible iff the walk lands exactly on it.
   std::uint64_t lo_depth = state.block_depth(lo->id);
   const block* cur = hi;
   while (state.block_depth(cur->id) > lo_depth) {
      cur = state.find_block(*cur->parent);
   }
   return cur->id == lo->id;
}

bool is_compatible(const block& b1, const block& b2, const message_state& state) {
   return is_compatible(b1.id, b2.id, state);
}

// Number of leading blocks of the longest chain that the rule confirms.
static std::uint64_t confirmed_prefix_len(const message_state& state,
                                          const confirmation_rule& rule) {
   const std::uint64_t n = state.chain_length();
   if (rule.depth == 0) return n;

   std::uint64_t by_depth = (n > rule.depth) ? n - rule.depth : 1;
   if (rule.kind == confirmation_rule::kind_t::depth) return by_depth;

   // rate: scan from genesis, stop at the first block whose depth successors
   // took too long to produce. Genesis stays confirmed unconditionally.
   chain lc = longest_chain(state);
   const double budget_seconds =
      static_cast<double>(rule.depth) * rule.rate_hours_per_block * 3600.0;
   std::uint64_t len = 1;
   for (std::uint64_t i = 1; i < by_depth; ++i) {
      const auto span_slots =
         lc.blocks[i + rule.depth].timestamp - lc.blocks[i].timestamp;
      const double span_seconds = static_cast<double>(span_slots) * rule.timeslot_seconds;
      if (span_seconds < budget_seconds) {
         ++len;
      } else {
         break;
      }
   }
   return len;
}

chain confirmed(const message_state& state, const confirmation_rule& rule) {
   chain lc = longest_chain(state);
   lc.blocks.resize(confirmed_prefix_len(state, rule));
   return lc;
}

std::uint64_t confirmed_count(const message_state& state, const confirmation_rule& rule) {
   return confirmed_prefix_len(state, rule);
}

bool growth_interval(const message_state& earlier, const message_state& later,
                     const confirmation_rule& rule) {
   return confirmed_count(later, rule) > confirmed_count(earlier, rule);
}

} // namespace poolsim
