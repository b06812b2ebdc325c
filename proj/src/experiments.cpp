#include <poolsim/experiments.hpp>

#include <poolsim/serial.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace poolsim {

namespace {

permitter_kernel kernel_for(const scenario_spec& spec, std::vector<std::uint8_t> prf_key) {
   permitter_kernel kernel;
   switch (spec.protocol.kind) {
   case protocol_params::kind_t::pow:
      kernel.kind = permitter_kernel::kind_t::pow;
      break;
   case protocol_params::kind_t::pos:
   case protocol_params::kind_t::quorum:
      kernel.kind = permitter_kernel::kind_t::pos_lottery;
      break;
   }
   kernel.difficulty = spec.protocol.difficulty;
   kernel.window_slots = spec.protocol.window_slots;
   kernel.timeslot_seconds = spec.protocol.timeslot_seconds;
   kernel.prf_key = std::move(prf_key);
   return kernel;
}

world assemble(const scenario_spec& spec, const run_seeds& seeds, resource_pool pool,
               sync_schedule schedule, adversary_policy policy) {
   return world(spec.users, spec.protocol, kernel_for(spec, seeds.prf_key), std::move(pool),
                std::move(schedule), std::move(policy), spec.delay, spec.duration,
                seeds.scheduler, scenario_genesis());
}

digest fold_trace(const std::vector<trace_event>& events) {
   digest d;
   for (const trace_event& ev : events) {
      byte_writer w;
      w.tag("trac");
      w.dig(d);
      w.u64(ev.t);
      w.u8(static_cast<std::uint8_t>(ev.kind));
      w.str(ev.sender);
      w.str(ev.recipient);
      w.dig(ev.message);
      d = sha256(w.out);
   }
   return d;
}

run_result harvest(world& w, std::size_t run_index) {
   run_result r;
   r.run_index = run_index;
   w.run();
   for (const user_entry& entry : w.roster()) {
      r.snapshots.emplace(entry.user, w.snapshots_of(entry.user));
      r.ever_confirmed.emplace(entry.user, w.ever_confirmed(entry.user));
      r.final_confirmed.emplace(entry.user, w.confirmed_chain_of(entry.user));
   }
   r.events = w.trace();
   r.trace_digest = fold_trace(r.events);
   r.referee = w.referee_state();
   return r;
}

// --- liveness accumulation ---------------------------------------------

struct liveness_counters {
   std::map<timeslot, std::pair<std::uint64_t, std::uint64_t>> per_window; // w -> (n, grow)
};

void accumulate_liveness(liveness_counters& acc, const run_result& r,
                         const std::vector<timeslot>& windows,
                         const std::vector<sync_interval>& sync_windows) {
   for (timeslot w : windows) {
      auto& [n, grow] = acc.per_window[w];
      if (w == 0) continue;
      for (const auto& [user, snaps] : r.snapshots) {
         for (const sync_interval& iv : sync_windows) {
            if (iv.to_t < iv.from_t + w + 1) continue;
            for (timeslot t1 = iv.from_t; t1 + w < iv.to_t; ++t1) {
               const timeslot t2 = t1 + w;
               if (t2 >= snaps.size()) break;
               ++n;
               if (snaps[t2].confirmed > snaps[t1].confirmed) ++grow;
            }
         }
      }
   }
}

liveness_report finish_liveness(const liveness_counters& acc, double epsilon,
                                std::uint64_t runs) {
   liveness_report report;
   report.epsilon = epsilon;
   report.runs = runs;
   for (const auto& [w, counts] : acc.per_window) {
      liveness_entry e;
      e.window = w;
      e.intervals = counts.first;
      e.growing = counts.second;
      e.fraction = counts.first == 0 ? 0.0
                                     : static_cast<double>(counts.second) /
                                           static_cast<double>(counts.first);
      report.entries.push_back(e);
   }
   std::sort(report.entries.begin(), report.entries.end(),
             [](const liveness_entry& a, const liveness_entry& b) { return a.window < b.window; });
   for (const liveness_entry& e : report.entries) {
      if (e.intervals > 0 && e.fraction >= 1.0 - epsilon) {
         report.live_window = e.window;
         break;
      }
   }
   return report;
}

} // namespace

run_seeds derive_run_seeds(const scenario_spec& spec, std::size_t run_index,
                           std::optional<std::uint64_t> seed_base) {
   run_seeds seeds;
   seeds.scheduler = seed_base.value_or(spec.seeds.scheduler) + run_index;
   byte_writer w;
   w.tag("runkey");
   w.bytes(spec.seeds.prf_key);
   w.u64(seeds.scheduler);
   const digest k = sha256(w.out);
   seeds.prf_key.assign(k.bytes.begin(), k.bytes.end());
   return seeds;
}

world build_world(const scenario_spec& spec, std::size_t run_index,
                  std::optional<std::uint64_t> seed_base) {
   const run_seeds seeds = derive_run_seeds(spec, run_index, seed_base);
   return assemble(spec, seeds, spec.pool, spec.schedule, spec.adversary);
}

run_result run_scenario(const scenario_spec& spec, std::size_t run_index,
                        std::optional<std::uint64_t> seed_base) {
   const message_state origin(scenario_genesis());
   if (auto bad = validate_pool(spec.pool, spec.setting, spec.duration, {&origin})) {
      throw constraint_error(fmt::format("pool violates its setting at t={} ({}: {})", bad->t,
                                         bad->what, bad->value));
   }
   world w = build_world(spec, run_index, seed_base);
   return harvest(w, run_index);
}

liveness_report estimate_liveness(const scenario_spec& spec, std::uint64_t runs,
                                  std::optional<std::uint64_t> seed_base) {
   liveness_counters acc;
   const std::vector<sync_interval> sync_windows = spec.schedule.sync_windows();
   for (std::uint64_t run = 0; run < runs; ++run) {
      const run_result r = run_scenario(spec, run, seed_base);
      accumulate_liveness(acc, r, spec.analysis.windows, sync_windows);
   }
   return finish_liveness(acc, spec.analysis.epsilon, runs);
}

std::optional<security_witness> find_confirmation_conflict(const run_result& r) {
   if (!r.referee) throw error("run result carries no referee state");
   const message_state& referee = *r.referee;

   struct sighting {
      digest id;
      std::uint64_t depth = 0;
      user_id user;
      timeslot t = 0;
   };
   std::map<digest, sighting> seen;
   for (const auto& [user, confirmed] : r.ever_confirmed) {
      for (const auto& [id, t] : confirmed) {
         if (seen.count(id)) continue;
         seen.emplace(id, sighting{id, referee.block_depth(id), user, t});
      }
   }

   std::vector<sighting> ordered;
   ordered.reserve(seen.size());
   for (const auto& [id, s] : seen) ordered.push_back(s);
   std::sort(ordered.begin(), ordered.end(), [](const sighting& a, const sighting& b) {
      if (a.depth != b.depth) return a.depth < b.depth;
      return a.id < b.id;
   });

   const auto witness_of = [](const sighting& a, const sighting& b) {
      security_witness w;
      w.block_a = a.id;
      w.block_b = b.id;
      w.user_a = a.user;
      w.user_b = b.user;
      w.slot_a = a.t;
      w.slot_b = b.t;
      return w;
   };

   // Distinct confirmed blocks at one depth cannot share a chain; otherwise
   // each block must be an ancestor of the next-deeper one, which makes the
   // whole set a chain by transitivity.
   for (std::size_t i = 1; i < ordered.size(); ++i) {
      const sighting& shallow = ordered[i - 1];
      const sighting& deep = ordered[i];
      if (shallow.depth == deep.depth) return witness_of(shallow, deep);
      digest cur = deep.id;
      for (std::uint64_t step = deep.depth; step > shallow.depth; --step) {
         const block* b = referee.find_block(cur);
         if (b == nullptr || !b->parent) throw error("referee state lost an ancestor");
         cur = *b->parent;
      }
      if (cur != shallow.id) return witness_of(shallow, deep);
   }
   return std::nullopt;
}

security_report check_security(const scenario_spec& spec, std::uint64_t runs,
                               std::optional<std::uint64_t> seed_base) {
   security_report report;
   report.runs = runs;
   for (std::uint64_t run = 0; run < runs; ++run) {
      const run_result r = run_scenario(spec, run, seed_base);
      std::set<digest> distinct;
      for (const auto& [user, confirmed] : r.ever_confirmed)
         for (const auto& [id, t] : confirmed) distinct.insert(id);
      report.blocks_checked += distinct.size();
      if (auto w = find_confirmation_conflict(r)) {
         ++report.violating_runs;
         if (!report.witness) {
            w->run = run;
            report.witness = w;
         }
      }
   }
   return report;
}

cap_report run_cap_experiment(const scenario_spec& spec, const cap_params& params,
                              std::optional<std::uint64_t> seed_base) {
   if (spec.users.size() != 2 || spec.users[0].keys.size() != 1 ||
       spec.users[1].keys.size() != 1) {
      throw constraint_error("the paired-execution experiment needs exactly two "
                             "single-key users");
   }
   const user_id user_a = spec.users[0].user;
   const user_id user_b = spec.users[1].user;
   const key_id key_a = spec.users[0].keys[0];
   const key_id key_b = spec.users[1].keys[0];

   const message_state origin(scenario_genesis());
   const double amount = balance(spec.pool, key_a, 0, origin);
   if (amount <= 0.0) throw constraint_error("first key carries no balance at t=0");
   const cap_pools pools = make_cap_pools(amount, key_a, key_b, spec.duration);

   cap_report report;
   report.runs = params.runs;
   report.duration = spec.duration;
   std::vector<std::uint64_t> confirm_a(spec.duration, 0);
   std::vector<std::uint64_t> confirm_b(spec.duration, 0);
   // Per run and slot: both partitioned sides confirmed past genesis, on
   // incompatible blocks.
   std::vector<std::vector<bool>> split_conflict(params.runs);

   for (std::uint64_t run = 0; run < params.runs; ++run) {
      const run_seeds seeds = derive_run_seeds(spec, run, seed_base);

      world part = assemble(spec, seeds, pools.both, sync_schedule::all_async(spec.duration),
                            partition_policy({user_a}, {user_b}));
      world solo_a = assemble(spec, seeds, pools.only_a, sync_schedule::all_sync(spec.duration),
                              adversary_policy{});
      world solo_b = assemble(spec, seeds, pools.only_b, sync_schedule::all_sync(spec.duration),
                              adversary_policy{});
      part.run();
      solo_a.run();
      solo_b.run();

      const auto& part_a = part.snapshots_of(user_a);
      const auto& part_b = part.snapshots_of(user_b);
      const auto& only_a = solo_a.snapshots_of(user_a);
      const auto& only_b = solo_b.snapshots_of(user_b);
      const message_state& referee = part.referee_state();

      split_conflict[run].assign(spec.duration, false);
      for (timeslot t = 0; t < spec.duration; ++t) {
         // A funded user cannot tell the partitioned execution from the solo
         // one: same deliveries, same permissions, bit for bit.
         if (part_a[t].state_seq != only_a[t].state_seq ||
             part_a[t].permissions != only_a[t].permissions) {
            throw indistinguishability_error(
                fmt::format("positions diverged for {} at run {} slot {}", user_a, run, t), run,
                t, user_a);
         }
         if (part_b[t].state_seq != only_b[t].state_seq ||
             part_b[t].permissions != only_b[t].permissions) {
            throw indistinguishability_error(
                fmt::format("positions diverged for {} at run {} slot {}", user_b, run, t), run,
                t, user_b);
         }
         if (only_a[t].confirmed >= 2) ++confirm_a[t];
         if (only_b[t].confirmed >= 2) ++confirm_b[t];
         if (part_a[t].confirmed >= 2 && part_b[t].confirmed >= 2 &&
             !is_compatible(part_a[t].confirmed_leaf, part_b[t].confirmed_leaf, referee)) {
            split_conflict[run][t] = true;
         }
      }
   }

   report.confirm_freq_a.resize(spec.duration);
   report.confirm_freq_b.resize(spec.duration);
   const double n = static_cast<double>(params.runs);
   for (timeslot t = 0; t < spec.duration; ++t) {
      report.confirm_freq_a[t] = static_cast<double>(confirm_a[t]) / n;
      report.confirm_freq_b[t] = static_cast<double>(confirm_b[t]) / n;
   }
   for (timeslot t = 0; t < spec.duration; ++t) {
      if (report.confirm_freq_a[t] > params.confirm_frequency &&
          report.confirm_freq_b[t] > params.confirm_frequency) {
         report.t0 = t;
         break;
      }
   }
   if (report.t0) {
      const timeslot t0 = *report.t0;
      report.freq_a_at_t0 = report.confirm_freq_a[t0];
      report.freq_b_at_t0 = report.confirm_freq_b[t0];
      std::uint64_t conflicted = 0;
      for (std::uint64_t run = 0; run < params.runs; ++run)
         if (split_conflict[run][t0]) ++conflicted;
      report.incompatible_at_t0 = static_cast<double>(conflicted) / n;
      report.passed = report.incompatible_at_t0 > params.incompat_frequency;
   }
   return report;
}

prop1_point prop1_analytic(double lambda_r, std::uint64_t y) {
   prop1_point point;
   if (y == 0 || lambda_r <= 0.0) return point;
   const double yd = static_cast<double>(y);
   point.p_any = -std::expm1(yd * std::log1p(-lambda_r));
   point.ratio = point.p_any / (lambda_r * yd);
   return point;
}

prop1_mc_report prop1_montecarlo(const prop1_mc_config& config) {
   permitter_kernel kernel;
   kernel.kind = permitter_kernel::kind_t::prop1;
   kernel.prop1.lambda = config.lambda;
   kernel.prop1.ext_no = config.ext_no;
   kernel.prop1.x_max = config.ext_no;
   kernel.prop1.x_of = config.x_of;
   kernel.prf_key = config.prf_key;
   if (kernel.prf_key.empty()) kernel.prf_key = {0x70, 0x31};

   resource_pool pool;
   pool.kind = resource_pool::kind_t::constant_table;
   for (const auto& [key, amount] : config.balances)
      pool.table.push_back({key, 0, config.trials + 1, amount});

   const message_state origin(scenario_genesis());

   struct tally {
      std::uint64_t y = 0;
      double balance = 0.0;
      std::uint64_t hits = 0;
   };
   std::map<key_id, tally> tallies;
   for (const auto& [key, x] : config.x_of) {
      tally t;
      t.y = std::min<std::uint64_t>(x, config.ext_no);
      auto bal = config.balances.find(key);
      t.balance = bal == config.balances.end() ? 0.0 : bal->second;
      tallies.emplace(key, t);
   }

   for (std::uint64_t t = 0; t < config.trials; ++t) {
      for (auto& [key, tl] : tallies) {
         bool hit = false;
         for (std::uint32_t ext = 0; ext < tl.y; ++ext) {
            permit_request req;
            req.key = key;
            req.state = &origin;
            req.slot_claim = t;
            req.data = encode_extension(ext);
            const permission perm = prop1_respond(kernel, req, t, pool);
            if (perm.kind == permission::kind_t::specific) hit = true;
         }
         if (hit) ++tl.hits;
      }
   }

   prop1_mc_report report;
   report.trials = config.trials;
   report.lambda = config.lambda;
   double corrected_sum = 0.0;
   double load_sum = 0.0;
   for (const auto& [key, tl] : tallies) {
      prop1_key_stats stats;
      stats.key = key;
      stats.requests_per_slot = tl.y;
      stats.balance = tl.balance;
      const prop1_point point = prop1_analytic(config.lambda * tl.balance, tl.y);
      stats.p_analytic = point.p_any;
      stats.p_hat = static_cast<double>(tl.hits) / static_cast<double>(config.trials);
      stats.sigma = std::sqrt(point.p_any * (1.0 - point.p_any) /
                              static_cast<double>(config.trials));
      stats.z = stats.sigma > 0.0 ? (stats.p_hat - stats.p_analytic) / stats.sigma : 0.0;
      stats.corrected_rate = point.ratio > 0.0 ? stats.p_hat / point.ratio : 0.0;
      corrected_sum += stats.corrected_rate;
      load_sum += tl.balance * static_cast<double>(tl.y);
      report.keys.push_back(stats);
   }
   report.fit_constant = load_sum > 0.0 ? corrected_sum / load_sum : 0.0;
   const double scale = report.fit_constant * load_sum;
   for (const prop1_key_stats& stats : report.keys) {
      if (scale <= 0.0) break;
      const double expected =
          report.fit_constant * stats.balance * static_cast<double>(stats.requests_per_slot);
      const double residual = std::abs(stats.corrected_rate - expected) / scale;
      report.max_residual = std::max(report.max_residual, residual);
   }
   return report;
}

nlohmann::json liveness_to_json(const liveness_report& r) {
   nlohmann::json entries = nlohmann::json::array();
   for (const liveness_entry& e : r.entries) {
      entries.push_back({{"window", e.window},
                         {"intervals", e.intervals},
                         {"growing", e.growing},
                         {"fraction", e.fraction}});
   }
   nlohmann::json j{{"epsilon", r.epsilon}, {"runs", r.runs}, {"windows", entries}};
   if (r.live_window)
      j["live_window"] = *r.live_window;
   else
      j["live_window"] = nullptr;
   return j;
}

nlohmann::json security_to_json(const security_report& r) {
   nlohmann::json j{{"runs", r.runs},
                    {"violating_runs", r.violating_runs},
                    {"blocks_checked", r.blocks_checked}};
   if (r.witness) {
      j["witness"] = {{"run", r.witness->run},
                      {"block_a", r.witness->block_a.hex()},
                      {"block_b", r.witness->block_b.hex()},
                      {"user_a", r.witness->user_a},
                      {"user_b", r.witness->user_b},
                      {"slot_a", r.witness->slot_a},
                      {"slot_b", r.witness->slot_b}};
   } else {
      j["witness"] = nullptr;
   }
   return j;
}

nlohmann::json cap_to_json(const cap_report& r) {
   nlohmann::json j{{"runs", r.runs},
                    {"duration", r.duration},
                    {"confirm_freq_a", r.confirm_freq_a},
                    {"confirm_freq_b", r.confirm_freq_b},
                    {"freq_a_at_t0", r.freq_a_at_t0},
                    {"freq_b_at_t0", r.freq_b_at_t0},
                    {"incompatible_at_t0", r.incompatible_at_t0},
                    {"passed", r.passed}};
   if (r.t0)
      j["t0"] = *r.t0;
   else
      j["t0"] = nullptr;
   return j;
}

nlohmann::json prop1_mc_to_json(const prop1_mc_report& r) {
   nlohmann::json keys = nlohmann::json::array();
   for (const prop1_key_stats& s : r.keys) {
      keys.push_back({{"key", s.key},
                      {"requests_per_slot", s.requests_per_slot},
                      {"balance", s.balance},
                      {"p_analytic", s.p_analytic},
                      {"p_hat", s.p_hat},
                      {"sigma", s.sigma},
                      {"z", s.z},
                      {"corrected_rate", s.corrected_rate}});
   }
   return nlohmann::json{{"trials", r.trials},
                         {"lambda", r.lambda},
                         {"keys", keys},
                         {"fit_constant", r.fit_constant},
                         {"max_residual", r.max_residual}};
}

nlohmann::json scenario_report(const scenario_spec& spec, std::uint64_t runs,
                               std::optional<std::uint64_t> seed_base,
                               const std::function<void(const run_result&)>& per_run) {
   liveness_counters acc;
   const std::vector<sync_interval> sync_windows = spec.schedule.sync_windows();
   std::uint64_t violating_runs = 0;
   std::uint64_t blocks_checked = 0;
   std::optional<security_witness> witness;
   nlohmann::json run_digests = nlohmann::json::array();
   nlohmann::json final_chains;

   for (std::uint64_t run = 0; run < runs; ++run) {
      const run_result r = run_scenario(spec, run, seed_base);
      if (per_run) per_run(r);
      accumulate_liveness(acc, r, spec.analysis.windows, sync_windows);
      std::set<digest> distinct;
      for (const auto& [user, confirmed] : r.ever_confirmed)
         for (const auto& [id, t] : confirmed) distinct.insert(id);
      blocks_checked += distinct.size();
      if (auto w = find_confirmation_conflict(r)) {
         ++violating_runs;
         if (!witness) {
            w->run = run;
            witness = w;
         }
      }
      run_digests.push_back(r.trace_digest.hex());
      if (run == 0) {
         final_chains = nlohmann::json::object();
         for (const auto& [user, c] : r.final_confirmed) final_chains[user] = chain_to_json(c);
      }
   }

   const liveness_report liveness = finish_liveness(acc, spec.analysis.epsilon, runs);
   security_report security;
   security.runs = runs;
   security.violating_runs = violating_runs;
   security.blocks_checked = blocks_checked;
   security.witness = witness;

   return nlohmann::json{{"tool_version", tool_version},
                         {"scenario", spec.name},
                         {"config_digest", spec.config_digest.hex()},
                         {"runs", runs},
                         {"liveness", liveness_to_json(liveness)},
                         {"security", security_to_json(security)},
                         {"run_digests", run_digests},
                         {"final_confirmed", final_chains}};
}

namespace {

void flatten_csv(const std::string& scenario, const std::string& prefix,
                 const nlohmann::json& node, std::vector<std::array<std::string, 3>>& rows) {
   if (node.is_object()) {
      for (const auto& [key, value] : node.items()) {
         if (key == "final_confirmed" || key == "run_digests" || key == "confirm_freq_a" ||
             key == "confirm_freq_b") {
            continue;
         }
         flatten_csv(scenario, prefix.empty() ? key : prefix + "." + key, value, rows);
      }
      return;
   }
   if (node.is_array()) {
      std::size_t i = 0;
      for (const auto& value : node) {
         flatten_csv(scenario, fmt::format("{}.{}", prefix, i), value, rows);
         ++i;
      }
      return;
   }
   std::string text;
   if (node.is_null())
      text = "";
   else if (node.is_string())
      text = node.get<std::string>();
   else
      text = node.dump();
   rows.push_back({scenario, prefix, text});
}

} // namespace

std::vector<std::array<std::string, 3>> report_csv_rows(const std::string& scenario,
                                                        const nlohmann::json& report) {
   std::vector<std::array<std::string, 3>> rows;
   flatten_csv(scenario, "", report, rows);
   return rows;
}

} // namespace poolsim
