#include <poolsim/resource.hpp>
#include <poolsim/errors.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace poolsim {

namespace {

double table_balance(const resource_pool& pool, const key_id& key, timeslot t) {
   for (const auto& row : pool.table) {
      if (row.key == key && row.from_t <= t && t < row.to_t)
         return row.amount;
   }
   return 0.0;
}

// Stake at the lookback point of the given chain: genesis allocation plus
// every non-overdrawing transfer recorded in blocks stamped at or before t*.
double stake_balance(const resource_pool& pool, const key_id& key, const chain& c) {
   timeslot leaf_t = c.blocks.empty() ? 0 : c.blocks.back().timestamp;
   auto lookback_slots = pool.timeslot_seconds > 0.0
      ? static_cast<timeslot>(std::floor(pool.lookback_seconds / pool.timeslot_seconds))
      : 0;
   timeslot t_star = leaf_t > lookback_slots ? leaf_t - lookback_slots : 0;

   std::map<key_id, double> held = pool.genesis_allocation;
   for (const auto& b : c.blocks) {
      if (b.timestamp > t_star)
         break;
      for (const auto& xfer : parse_transfers(b.payload)) {
         auto it = held.find(xfer.from);
         double avail = it == held.end() ? 0.0 : it->second;
         if (xfer.amount < 0.0 || avail < xfer.amount)
            continue; // void transfer
         held[xfer.from] = avail - xfer.amount;
         held[xfer.to] += xfer.amount;
      }
   }
   auto it = held.find(key);
   return it == held.end() ? 0.0 : it->second;
}

} // namespace

double balance(const resource_pool& pool, const key_id& key, timeslot t,
               const message_state& state) {
   if (pool.kind == resource_pool::kind_t::constant_table)
      return table_balance(pool, key, t);
   return stake_balance(pool, key, longest_chain(state));
}

std::vector<key_id> key_universe(const resource_pool& pool, const message_state& state) {
   std::set<key_id> keys;
   if (pool.kind == resource_pool::kind_t::constant_table) {
      for (const auto& row : pool.table)
         keys.insert(row.key);
   } else {
      for (const auto& [key, amount] : pool.genesis_allocation)
         keys.insert(key);
      for (const auto& b : longest_chain(state).blocks) {
         for (const auto& xfer : parse_transfers(b.payload)) {
            keys.insert(xfer.from);
            keys.insert(xfer.to);
         }
      }
   }
   return {keys.begin(), keys.end()};
}

double total_balance(const resource_pool& pool, timeslot t, const message_state& state) {
   double total = 0.0;
   for (const auto& key : key_universe(pool, state))
      total += balance(pool, key, t, state);
   return total;
}

std::optional<pool_violation> validate_pool(const resource_pool& pool,
                                            const resource_setting& setting,
                                            timeslot duration,
                                            const std::vector<const message_state*>& probe_states) {
   for (const auto* state : probe_states) {
      for (timeslot t = 0; t < duration; ++t) {
         double total = total_balance(pool, t, *state);
         if (setting.sized) {
            double declared = setting.declared_total.value_or(0.0);
            double tol = 1e-9 * std::max(1.0, std::abs(declared));
            if (std::abs(total - declared) > tol)
               return pool_violation{t, state->set_digest(), total,
                                     "total differs from declared total"};
         } else {
            if (total < setting.bounds.i0 || total > setting.bounds.i1)
               return pool_violation{t, state->set_digest(), total,
                                     "total outside configured bounds"};
         }
         if (setting.bounds.adversary_fraction_cap && total > 0.0) {
            double adv = 0.0;
            for (const auto& key : setting.adversary_keys)
               adv += balance(pool, key, t, *state);
            if (adv / total > *setting.bounds.adversary_fraction_cap)
               return pool_violation{t, state->set_digest(), adv / total,
                                     "adversary share above cap"};
         }
      }
   }
   return std::nullopt;
}

cap_pools make_cap_pools(double amount, const key_id& key_a, const key_id& key_b,
                         timeslot duration) {
   auto constant = [&](std::vector<pool_row> rows) {
      resource_pool p;
      p.kind = resource_pool::kind_t::constant_table;
      p.table = std::move(rows);
      return p;
   };
   cap_pools out;
   out.both = constant({{key_a, 0, duration, amount}, {key_b, 0, duration, amount}});
   out.only_a = constant({{key_a, 0, duration, amount}, {key_b, 0, duration, 0.0}});
   out.only_b = constant({{key_a, 0, duration, 0.0}, {key_b, 0, duration, amount}});
   return out;
}

std::vector<stake_transfer> parse_transfers(const std::vector<std::uint8_t>& payload) {
   if (payload.empty() || payload.front() != '[')
      return {};
   auto parsed = nlohmann::json::parse(payload.begin(), payload.end(), nullptr,
                                       /*allow_exceptions=*/false);
   if (!parsed.is_array())
      return {};
   std::vector<stake_transfer> out;
   for (const auto& rec : parsed) {
      if (!rec.is_object() || !rec.contains("from") || !rec.contains("to") ||
          !rec.contains("amount"))
         return {};
      out.push_back({rec["from"].get<std::string>(), rec["to"].get<std::string>(),
                     rec["amount"].get<double>()});
   }
   return out;
}

std::vector<std::uint8_t> encode_transfers(const std::vector<stake_transfer>& transfers) {
   nlohmann::json arr = nlohmann::json::array();
   for (const auto& xfer : transfers)
      arr.push_back({{"amount", xfer.amount}, {"from", xfer.from}, {"to", xfer.to}});
   auto text = arr.dump();
   return {text.begin(), text.end()};
}

} // namespace poolsim
