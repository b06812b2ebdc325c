#include <poolsim/scenario.hpp>
#include <poolsim/errors.hpp>

#include <fmt/format.h>

#include <fstream>
#include <set>
#include <sstream>

namespace poolsim {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
   throw schema_error(fmt::format("{}: {}", path, why), path);
}

void expect_object(const json& j, const std::string& path,
                   const std::set<std::string>& allowed,
                   const std::set<std::string>& required) {
   if (!j.is_object())
      fail(path, "expected an object");
   for (const auto& [key, value] : j.items()) {
      (void)value;
      if (!allowed.count(key))
         fail(path + "." + key, "unknown field");
   }
   for (const auto& key : required) {
      if (!j.contains(key))
         fail(path + "." + key, "missing required field");
   }
}

double get_number(const json& j, const std::string& path) {
   if (!j.is_number())
      fail(path, "expected a number");
   return j.get<double>();
}

std::uint64_t get_uint(const json& j, const std::string& path) {
   if (!j.is_number_integer() && !j.is_number_unsigned())
      fail(path, "expected a nonnegative integer");
   if (j.is_number_integer() && j.get<std::int64_t>() < 0)
      fail(path, "expected a nonnegative integer");
   return j.get<std::uint64_t>();
}

std::string get_string(const json& j, const std::string& path) {
   if (!j.is_string())
      fail(path, "expected a string");
   return j.get<std::string>();
}

bool get_bool(const json& j, const std::string& path) {
   if (!j.is_boolean())
      fail(path, "expected a boolean");
   return j.get<bool>();
}

confirmation_rule parse_confirmation(const json& j, const std::string& path) {
   expect_object(j, path, {"kind", "depth", "rate_hours_per_block", "epsilon"},
                 {"kind", "depth"});
   confirmation_rule rule;
   auto kind = get_string(j.at("kind"), path + ".kind");
   if (kind == "depth") rule.kind = confirmation_rule::kind_t::depth;
   else if (kind == "rate") rule.kind = confirmation_rule::kind_t::rate;
   else fail(path + ".kind", "expected \"depth\" or \"rate\"");
   rule.depth = get_uint(j.at("depth"), path + ".depth");
   if (j.contains("rate_hours_per_block"))
      rule.rate_hours_per_block =
         get_number(j.at("rate_hours_per_block"), path + ".rate_hours_per_block");
   if (j.contains("epsilon"))
      rule.epsilon = get_number(j.at("epsilon"), path + ".epsilon");
   return rule;
}

protocol_params parse_protocol(const json& j, const std::string& path) {
   expect_object(j, path,
                 {"kind", "timeslot_seconds", "round_slots", "window_slots",
                  "quorum_total", "confirmation", "difficulty"},
                 {"kind", "confirmation", "timeslot_seconds"});
   protocol_params p;
   auto kind = get_string(j.at("kind"), path + ".kind");
   if (kind == "pow") p.kind = protocol_params::kind_t::pow;
   else if (kind == "pos") p.kind = protocol_params::kind_t::pos;
   else if (kind == "quorum") p.kind = protocol_params::kind_t::quorum;
   else fail(path + ".kind", "expected \"pow\", \"pos\" or \"quorum\"");

   p.timeslot_seconds = get_number(j.at("timeslot_seconds"), path + ".timeslot_seconds");
   p.confirmation = parse_confirmation(j.at("confirmation"), path + ".confirmation");
   p.confirmation.timeslot_seconds = p.timeslot_seconds;
   if (j.contains("round_slots"))
      p.round_slots = get_uint(j.at("round_slots"), path + ".round_slots");
   if (j.contains("window_slots"))
      p.window_slots = get_uint(j.at("window_slots"), path + ".window_slots");
   if (j.contains("quorum_total"))
      p.quorum_total = get_number(j.at("quorum_total"), path + ".quorum_total");
   if (j.contains("difficulty")) {
      const json& d = j.at("difficulty");
      const std::string dp = path + ".difficulty";
      expect_object(d, dp, {"epoch_length_blocks", "target_seconds_per_block", "p_initial"},
                    {"epoch_length_blocks", "target_seconds_per_block", "p_initial"});
      p.difficulty.epoch_length_blocks =
         get_uint(d.at("epoch_length_blocks"), dp + ".epoch_length_blocks");
      p.difficulty.target_seconds_per_block =
         get_number(d.at("target_seconds_per_block"), dp + ".target_seconds_per_block");
      p.difficulty.p_initial = get_number(d.at("p_initial"), dp + ".p_initial");
   }
   return p;
}

resource_pool parse_pool(const json& j, const std::string& path, double timeslot_seconds) {
   expect_object(j, path, {"kind", "table", "genesis_allocation", "lookback_seconds"},
                 {"kind"});
   resource_pool pool;
   pool.timeslot_seconds = timeslot_seconds;
   auto kind = get_string(j.at("kind"), path + ".kind");
   if (kind == "constant_table") {
      pool.kind = resource_pool::kind_t::constant_table;
      if (!j.contains("table"))
         fail(path + ".table", "missing required field");
   } else if (kind == "stake_derived") {
      pool.kind = resource_pool::kind_t::stake_derived;
      if (!j.contains("genesis_allocation"))
         fail(path + ".genesis_allocation", "missing required field");
   } else {
      fail(path + ".kind", "expected \"constant_table\" or \"stake_derived\"");
   }

   if (j.contains("table")) {
      const json& rows = j.at("table");
      if (!rows.is_array())
         fail(path + ".table", "expected an array");
      for (std::size_t i = 0; i < rows.size(); ++i) {
         const std::string rp = fmt::format("{}.table[{}]", path, i);
         expect_object(rows[i], rp, {"key", "from_t", "to_t", "amount"},
                       {"key", "from_t", "to_t", "amount"});
         pool_row row;
         row.key = get_string(rows[i].at("key"), rp + ".key");
         row.from_t = get_uint(rows[i].at("from_t"), rp + ".from_t");
         row.to_t = get_uint(rows[i].at("to_t"), rp + ".to_t");
         row.amount = get_number(rows[i].at("amount"), rp + ".amount");
         pool.table.push_back(std::move(row));
      }
   }
   if (j.contains("genesis_allocation")) {
      const json& alloc = j.at("genesis_allocation");
      if (!alloc.is_object())
         fail(path + ".genesis_allocation", "expected an object");
      for (const auto& [key, value] : alloc.items())
         pool.genesis_allocation[key] =
            get_number(value, path + ".genesis_allocation." + key);
   }
   if (j.contains("lookback_seconds"))
      pool.lookback_seconds = get_number(j.at("lookback_seconds"), path + ".lookback_seconds");
   return pool;
}

resource_setting parse_setting(const json& j, const std::string& path) {
   expect_object(j, path, {"sized", "declared_total", "bounds", "adversary_keys"}, {"sized"});
   resource_setting s;
   s.sized = get_bool(j.at("sized"), path + ".sized");
   if (j.contains("declared_total"))
      s.declared_total = get_number(j.at("declared_total"), path + ".declared_total");
   if (j.contains("bounds")) {
      const json& b = j.at("bounds");
      const std::string bp = path + ".bounds";
      expect_object(b, bp, {"i0", "i1", "adversary_fraction_cap"}, {"i0", "i1"});
      s.bounds.i0 = get_number(b.at("i0"), bp + ".i0");
      s.bounds.i1 = get_number(b.at("i1"), bp + ".i1");
      if (b.contains("adversary_fraction_cap"))
         s.bounds.adversary_fraction_cap =
            get_number(b.at("adversary_fraction_cap"), bp + ".adversary_fraction_cap");
   }
   if (j.contains("adversary_keys")) {
      const json& keys = j.at("adversary_keys");
      if (!keys.is_array())
         fail(path + ".adversary_keys", "expected an array");
      for (std::size_t i = 0; i < keys.size(); ++i)
         s.adversary_keys.push_back(
            get_string(keys[i], fmt::format("{}.adversary_keys[{}]", path, i)));
   }
   return s;
}

sync_schedule parse_schedule(const json& j, const std::string& path) {
   if (!j.is_array())
      fail(path, "expected an array of intervals");
   sync_schedule s;
   for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string ip = fmt::format("{}[{}]", path, i);
      expect_object(j[i], ip, {"from_t", "to_t", "sync"}, {"from_t", "to_t", "sync"});
      sync_interval iv;
      iv.from_t = get_uint(j[i].at("from_t"), ip + ".from_t");
      iv.to_t = get_uint(j[i].at("to_t"), ip + ".to_t");
      iv.sync = get_bool(j[i].at("sync"), ip + ".sync");
      s.intervals.push_back(iv);
   }
   return s;
}

adversary_policy parse_adversary(const json& j, const std::string& path) {
   expect_object(j, path, {"kind", "set_a", "set_b", "rules"}, {"kind"});
   adversary_policy p;
   auto kind = get_string(j.at("kind"), path + ".kind");
   if (kind == "none") p.kind = adversary_policy::kind_t::none;
   else if (kind == "partition") p.kind = adversary_policy::kind_t::partition;
   else if (kind == "scripted") p.kind = adversary_policy::kind_t::scripted;
   else fail(path + ".kind", "expected \"none\", \"partition\" or \"scripted\"");

   auto read_set = [&](const char* field, std::vector<user_id>& out) {
      if (!j.contains(field))
         return;
      const json& arr = j.at(field);
      if (!arr.is_array())
         fail(fmt::format("{}.{}", path, field), "expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i)
         out.push_back(get_string(arr[i], fmt::format("{}.{}[{}]", path, field, i)));
   };
   read_set("set_a", p.set_a);
   read_set("set_b", p.set_b);

   if (j.contains("rules")) {
      const json& rules = j.at("rules");
      if (!rules.is_array())
         fail(path + ".rules", "expected an array");
      for (std::size_t i = 0; i < rules.size(); ++i) {
         const std::string rp = fmt::format("{}.rules[{}]", path, i);
         expect_object(rules[i], rp, {"sender", "recipient", "from_t", "to_t", "action"},
                       {"action"});
         adversary_policy::rule r;
         if (rules[i].contains("sender"))
            r.sender = get_string(rules[i].at("sender"), rp + ".sender");
         if (rules[i].contains("recipient"))
            r.recipient = get_string(rules[i].at("recipient"), rp + ".recipient");
         if (rules[i].contains("from_t"))
            r.from_t = get_uint(rules[i].at("from_t"), rp + ".from_t");
         if (rules[i].contains("to_t"))
            r.to_t = get_uint(rules[i].at("to_t"), rp + ".to_t");
         auto action = get_string(rules[i].at("action"), rp + ".action");
         if (action == "withhold") r.action = adversary_policy::action_t::withhold;
         else if (action == "deliver_now") r.action = adversary_policy::action_t::deliver_now;
         else if (action == "normal") r.action = adversary_policy::action_t::normal;
         else fail(rp + ".action", "expected \"withhold\", \"deliver_now\" or \"normal\"");
         p.rules.push_back(std::move(r));
      }
   }
   return p;
}

delay_dist parse_delay(const json& j, const std::string& path) {
   expect_object(j, path, {"kind", "q", "d"}, {"kind"});
   delay_dist d;
   auto kind = get_string(j.at("kind"), path + ".kind");
   if (kind == "geometric") {
      d.kind = delay_dist::kind_t::geometric;
      if (!j.contains("q"))
         fail(path + ".q", "missing required field");
      d.q = get_number(j.at("q"), path + ".q");
   } else if (kind == "fixed") {
      d.kind = delay_dist::kind_t::fixed;
      if (!j.contains("d"))
         fail(path + ".d", "missing required field");
      d.d = get_uint(j.at("d"), path + ".d");
   } else {
      fail(path + ".kind", "expected \"geometric\" or \"fixed\"");
   }
   return d;
}

std::vector<user_entry> parse_users(const json& j, const std::string& path) {
   if (!j.is_array() || j.empty())
      fail(path, "expected a non-empty array");
   std::vector<user_entry> users;
   for (std::size_t i = 0; i < j.size(); ++i) {
      const std::string up = fmt::format("{}[{}]", path, i);
      expect_object(j[i], up, {"user", "keys"}, {"user", "keys"});
      user_entry e;
      e.user = get_string(j[i].at("user"), up + ".user");
      const json& keys = j[i].at("keys");
      if (!keys.is_array() || keys.empty())
         fail(up + ".keys", "expected a non-empty array");
      for (std::size_t k = 0; k < keys.size(); ++k)
         e.keys.push_back(get_string(keys[k], fmt::format("{}.keys[{}]", up, k)));
      users.push_back(std::move(e));
   }
   return users;
}

seed_params parse_seeds(const json& j, const std::string& path) {
   expect_object(j, path, {"scheduler", "prf_key"}, {"scheduler", "prf_key"});
   seed_params s;
   s.scheduler = get_uint(j.at("scheduler"), path + ".scheduler");
   auto hex = get_string(j.at("prf_key"), path + ".prf_key");
   try {
      s.prf_key = from_hex_bytes(hex);
   } catch (const error& e) {
      fail(path + ".prf_key", e.what());
   }
   if (s.prf_key.empty())
      fail(path + ".prf_key", "must not be empty");
   return s;
}

analysis_params parse_analysis(const json& j, const std::string& path) {
   expect_object(j, path, {"epsilon", "windows", "runs"}, {});
   analysis_params a;
   if (j.contains("epsilon"))
      a.epsilon = get_number(j.at("epsilon"), path + ".epsilon");
   if (j.contains("windows")) {
      const json& w = j.at("windows");
      if (!w.is_array())
         fail(path + ".windows", "expected an array");
      for (std::size_t i = 0; i < w.size(); ++i)
         a.windows.push_back(get_uint(w[i], fmt::format("{}.windows[{}]", path, i)));
   }
   if (j.contains("runs"))
      a.runs = get_uint(j.at("runs"), path + ".runs");
   return a;
}

// Semantic checks that need the whole document.
void check_constraints(const scenario_spec& spec) {
   if (spec.duration == 0)
      throw constraint_error("duration must be positive");
   spec.schedule.validate(spec.duration);

   for (const auto& row : spec.pool.table) {
      if (row.amount < 0.0)
         throw constraint_error(fmt::format(
            "pool row for key '{}' carries a negative amount", row.key));
      if (row.to_t <= row.from_t)
         throw constraint_error(fmt::format(
            "pool row for key '{}' spans the empty interval [{}, {})",
            row.key, row.from_t, row.to_t));
   }
   for (std::size_t i = 0; i < spec.pool.table.size(); ++i) {
      for (std::size_t k = i + 1; k < spec.pool.table.size(); ++k) {
         const auto& a = spec.pool.table[i];
         const auto& b = spec.pool.table[k];
         if (a.key == b.key && a.from_t < b.to_t && b.from_t < a.to_t)
            throw constraint_error(fmt::format(
               "pool rows for key '{}' overlap at timeslot {}", a.key,
               std::max(a.from_t, b.from_t)));
      }
   }
   for (const auto& [key, amount] : spec.pool.genesis_allocation) {
      if (amount < 0.0)
         throw constraint_error(fmt::format(
            "genesis allocation for key '{}' is negative", key));
   }

   if (spec.setting.sized && !spec.setting.declared_total)
      throw constraint_error("sized setting requires declared_total");
   if (!spec.setting.sized && spec.setting.bounds.i0 > spec.setting.bounds.i1)
      throw constraint_error("bounds interval is inverted");

   if (spec.adversary.kind == adversary_policy::kind_t::partition &&
       (spec.adversary.set_a.empty() || spec.adversary.set_b.empty()))
      throw constraint_error("partition adversary needs two non-empty sets");

   if (spec.delay.kind == delay_dist::kind_t::geometric &&
       (spec.delay.q <= 0.0 || spec.delay.q > 1.0))
      throw constraint_error("geometric delay needs q in (0, 1]");

   if (spec.protocol.kind == protocol_params::kind_t::quorum) {
      if (spec.protocol.quorum_total <= 0.0)
         throw constraint_error("quorum protocol needs a positive quorum_total");
      if (spec.protocol.round_slots == 0)
         throw constraint_error("quorum protocol needs round_slots >= 1");
   }

   std::set<key_id> seen_keys;
   std::set<user_id> seen_users;
   for (const auto& e : spec.users) {
      if (!seen_users.insert(e.user).second)
         throw constraint_error(fmt::format("duplicate user '{}'", e.user));
      for (const auto& k : e.keys)
         if (!seen_keys.insert(k).second)
            throw constraint_error(fmt::format("key '{}' operated by two users", k));
   }
}

} // namespace

user_id scenario_spec::user_of_key(const key_id& key) const {
   for (const auto& e : users)
      for (const auto& k : e.keys)
         if (k == key)
            return e.user;
   throw error(fmt::format("key '{}' belongs to no user", key));
}

block scenario_genesis() {
   return make_block(std::nullopt, "genesis", 0);
}

scenario_spec scenario_from_json(nlohmann::json doc) {
   expect_object(doc, "$",
                 {"name", "protocol", "pool", "setting", "schedule", "adversary",
                  "delay", "duration", "users", "seeds", "analysis"},
                 {"name", "protocol", "pool", "setting", "schedule", "delay",
                  "duration", "users", "seeds"});

   scenario_spec spec;
   spec.name = get_string(doc.at("name"), "$.name");
   spec.protocol = parse_protocol(doc.at("protocol"), "$.protocol");
   spec.pool = parse_pool(doc.at("pool"), "$.pool", spec.protocol.timeslot_seconds);
   spec.setting = parse_setting(doc.at("setting"), "$.setting");
   spec.schedule = parse_schedule(doc.at("schedule"), "$.schedule");
   if (doc.contains("adversary"))
      spec.adversary = parse_adversary(doc.at("adversary"), "$.adversary");
   spec.delay = parse_delay(doc.at("delay"), "$.delay");
   spec.duration = get_uint(doc.at("duration"), "$.duration");
   spec.users = parse_users(doc.at("users"), "$.users");
   spec.seeds = parse_seeds(doc.at("seeds"), "$.seeds");
   if (doc.contains("analysis"))
      spec.analysis = parse_analysis(doc.at("analysis"), "$.analysis");

   check_constraints(spec);

   spec.normalized = std::move(doc);
   auto dumped = spec.normalized.dump();
   spec.config_digest = sha256({dumped.begin(), dumped.end()});
   return spec;
}

nlohmann::json parse_scenario_document(const std::string& text, const std::string& source) {
   try {
      return nlohmann::json::parse(text);
   } catch (const nlohmann::json::parse_error& e) {
      std::size_t line = 1, column = 1;
      for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
         if (text[i] == '\n') {
            ++line;
            column = 1;
         } else {
            ++column;
         }
      }
      throw parse_error(fmt::format("{}: {}", source, e.what()), line, column);
   }
}

scenario_spec parse_scenario(const std::string& text, const std::string& source) {
   return scenario_from_json(parse_scenario_document(text, source));
}

scenario_spec load_scenario(const std::string& path) {
   std::ifstream in(path);
   if (!in)
      throw error(fmt::format("cannot open scenario file '{}'", path));
   std::stringstream buffer;
   buffer << in.rdbuf();
   return parse_scenario(buffer.str(), path);
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
   auto eq = assignment.find('=');
   if (eq == std::string::npos || eq == 0)
      throw constraint_error(fmt::format(
         "override '{}' is not of the form KEY=VALUE", assignment));
   const std::string key = assignment.substr(0, eq);
   const std::string value = assignment.substr(eq + 1);

   nlohmann::json parsed = nlohmann::json::parse(value, nullptr, /*allow_exceptions=*/false);
   if (parsed.is_discarded())
      parsed = value; // plain string

   nlohmann::json* cursor = &doc;
   std::size_t start = 0;
   for (;;) {
      auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (part.empty())
         throw constraint_error(fmt::format("override key '{}' has an empty segment", key));
      if (dot == std::string::npos) {
         (*cursor)[part] = std::move(parsed);
         return;
      }
      cursor = &(*cursor)[part];
      start = dot + 1;
   }
}

} // namespace poolsim
