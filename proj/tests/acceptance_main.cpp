// Acceptance gate. Runs the eight shipping criteria end to end and prints
// exactly one [PASS]/[FAIL] line per criterion. Exit code 0 when all pass,
// 2 when a paired execution breaks fingerprint equality, 1 otherwise.

#include <poolsim/chain.hpp>
#include <poolsim/errors.hpp>
#include <poolsim/experiments.hpp>
#include <poolsim/permitter.hpp>
#include <poolsim/resource.hpp>
#include <poolsim/scenario.hpp>
#include <poolsim/world.hpp>

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace poolsim;

namespace {

std::string scenario_path(const std::string& name) {
   return std::string(POOLSIM_SOURCE_DIR) + "/scenarios/" + name + ".json";
}

constexpr const char* all_scenarios[] = {
   "cap_base",     "pow_sync",         "pow_retarget", "pos_sync",    "pos_partition",
   "quorum_sync",  "quorum_partition", "quorum_async", "quorum_stall"};

struct outcome {
   bool ok = false;
   std::string detail;
};

std::vector<std::uint8_t> bytes_of(const std::string& s) {
   return {s.begin(), s.end()};
}

// Results shared with the dichotomy matrix (criterion 6).
std::optional<cap_report> shared_cap;
std::optional<std::uint64_t> shared_quorum_conflicts;

// --- 1: closed-form grant probability vs its series approximation --------

outcome criterion1() {
   const double rates[] = {1e-2, 1e-3, 1e-4};
   double worst = 0.0;
   for (double lr : rates)
      for (std::uint64_t y = 1; y <= 20; ++y) {
         const double ratio = prop1_analytic(lr, y).ratio;
         const double approx = 1.0 - static_cast<double>(y - 1) * lr / 2.0;
         const double err = std::fabs(ratio - approx);
         const double bound = static_cast<double>(y) * lr * static_cast<double>(y) * lr;
         if (err >= bound)
            return {false, fmt::format("lambda R {} y {}: err {:.3e} >= bound {:.3e}",
                                       lr, y, err, bound)};
         worst = std::max(worst, err / bound);
      }
   return {true, fmt::format("60 grid points, worst err/bound {:.3f}", worst)};
}

// --- 2: monte-carlo grant rates against the closed form ------------------

outcome criterion2() {
   prop1_mc_config cfg;
   cfg.lambda = 1e-3;
   cfg.ext_no = 10;
   cfg.x_of = {{"w1", 1}, {"w2", 2}, {"w4", 4}, {"w8", 8}};
   cfg.balances = {{"w1", 1.0}, {"w2", 1.0}, {"w4", 1.0}, {"w8", 1.0}};
   cfg.trials = 1000000;
   cfg.prf_key = bytes_of("acceptance-mc");

   const prop1_mc_report rep = prop1_montecarlo(cfg);
   double worst_z = 0.0;
   for (const auto& k : rep.keys)
      worst_z = std::max(worst_z, std::fabs(k.z));
   if (worst_z > 3.0)
      return {false, fmt::format("per-key deviation {:.2f} sigma exceeds 3", worst_z)};
   if (!(rep.max_residual < 0.01))
      return {false, fmt::format("proportionality residual {:.4f} >= 1%", rep.max_residual)};
   return {true, fmt::format("1e6 trials, worst |z| {:.2f}, fit residual {:.4f}",
                             worst_z, rep.max_residual)};
}

// --- 3: retarget rule unit grid plus the closed mining loop --------------

outcome criterion3() {
   difficulty_params dp;
   dp.epoch_length_blocks = 64;
   dp.target_seconds_per_block = 5.0; // target epoch span 320 s
   const double spans[] = {32.0, 80.0, 160.0, 320.0, 640.0, 1280.0, 3200.0};
   const double expect[] = {0.125, 0.125, 0.25, 0.5, 1.0, 2.0, 2.0};
   for (int i = 0; i < 7; ++i) {
      const double next = difficulty_update(0.5, spans[i], dp);
      if (next != expect[i])
         return {false, fmt::format("span {}: p {} != {}", spans[i], next, expect[i])};
   }

   const scenario_spec spec = load_scenario(scenario_path("pow_retarget"));
   const std::size_t settle = 5 * 64; // chain index of the last block of epoch 5
   double worst_mean = 10.0;
   for (std::size_t k = 0; k < 10; ++k) {
      const run_result r = run_scenario(spec, k);
      const auto& blocks = r.final_confirmed.at("u0").blocks;
      if (blocks.size() < settle + 20)
         return {false, fmt::format("run {}: only {} confirmed blocks", k, blocks.size())};
      const double span = static_cast<double>(blocks.back().timestamp) -
                          static_cast<double>(blocks[settle].timestamp);
      const double mean = span / static_cast<double>(blocks.size() - 1 - settle);
      if (std::fabs(mean - 10.0) > std::fabs(worst_mean - 10.0))
         worst_mean = mean;
      if (mean < 8.0 || mean > 12.0)
         return {false, fmt::format("run {}: settled spacing {:.2f} outside [8,12]", k, mean)};
   }
   return {true, fmt::format("retarget grid exact, worst settled spacing {:.2f} over 10 seeds",
                             worst_mean)};
}

// --- 4: paired executions and forked confirmations -----------------------

outcome criterion4() {
   const scenario_spec spec = load_scenario(scenario_path("cap_base"));
   cap_params params;
   params.runs = 100;
   params.confirm_frequency = 0.75;
   params.incompat_frequency = 0.5;

   // Any per-slot fingerprint divergence raises indistinguishability_error,
   // which main() converts to exit code 2.
   const cap_report rep = run_cap_experiment(spec, params);
   shared_cap = rep;
   if (!rep.t0)
      return {false, "no timeslot reaches the confirmation calibration bar"};
   if (!(rep.freq_a_at_t0 > 0.75 && rep.freq_b_at_t0 > 0.75))
      return {false, fmt::format("confirmation frequencies {:.2f}/{:.2f} at t0 {} below 3/4",
                                 rep.freq_a_at_t0, rep.freq_b_at_t0, *rep.t0)};
   if (!(rep.incompatible_at_t0 > 0.5 && rep.passed))
      return {false, fmt::format("incompatible-confirmation frequency {:.2f} not above 1/2",
                                 rep.incompatible_at_t0)};
   return {true, fmt::format("100 runs bit-exact, t0 {}, freqs {:.2f}/{:.2f}, incompatible {:.2f}",
                             *rep.t0, rep.freq_a_at_t0, rep.freq_b_at_t0,
                             rep.incompatible_at_t0)};
}

// --- 5: certificate protocol under partition and async schedules ---------

outcome criterion5() {
   const scenario_spec part = load_scenario(scenario_path("quorum_partition"));
   const scenario_spec asyn = load_scenario(scenario_path("quorum_async"));

   // The partition splits stake 2.0 / 2.0 against a quorum bar of 2/3 * 4.0,
   // so no side may certify anything while it holds.
   timeslot gap_from = 0, gap_to = 0;
   for (const auto& iv : part.schedule.intervals)
      if (!iv.sync) {
         gap_from = iv.from_t;
         gap_to = iv.to_t;
      }

   std::uint64_t conflicts = 0, growth = 0;
   for (std::size_t k = 0; k < 500; ++k) {
      const run_result r = run_scenario(part, k);
      if (find_confirmation_conflict(r))
         ++conflicts;
      for (const auto& [user, snaps] : r.snapshots)
         if (snaps[gap_to - 1].confirmed != snaps[gap_from].confirmed)
            ++growth;
   }
   for (std::size_t k = 0; k < 500; ++k)
      if (find_confirmation_conflict(run_scenario(asyn, k)))
         ++conflicts;

   shared_quorum_conflicts = conflicts;
   if (conflicts != 0)
      return {false, fmt::format("{} runs confirmed conflicting blocks", conflicts)};
   if (growth != 0)
      return {false, fmt::format("{} user histories grew inside the partition", growth)};
   return {true, fmt::format("1000 runs, 0 conflicts, 0 growth intervals in [{},{})",
                             gap_from, gap_to)};
}

// --- 6: liveness/security dichotomy matrix -------------------------------

double fraction_at(const liveness_report& rep, timeslot window) {
   for (const auto& e : rep.entries)
      if (e.window == window)
         return e.fraction;
   return 0.0;
}

outcome criterion6() {
   const liveness_report pow_live =
      estimate_liveness(load_scenario(scenario_path("pow_sync")), 20);
   const bool pow_is_live =
      pow_live.live_window && fraction_at(pow_live, *pow_live.live_window) >= 0.9;

   if (!shared_cap) {
      cap_params quick;
      quick.runs = 20;
      shared_cap = run_cap_experiment(load_scenario(scenario_path("cap_base")), quick);
   }
   const bool pow_is_secure = !(shared_cap->incompatible_at_t0 > 0.5);

   const liveness_report pos_live =
      estimate_liveness(load_scenario(scenario_path("pos_sync")), 10);
   const security_report pos_sec =
      check_security(load_scenario(scenario_path("pos_partition")), 10);
   const bool pos_is_live = pos_live.live_window.has_value();
   const bool pos_is_secure = pos_sec.violating_runs == 0;

   const liveness_report stall =
      estimate_liveness(load_scenario(scenario_path("quorum_stall")), 10);
   const bool quorum_is_live = stall.live_window.has_value();
   const bool quorum_is_secure =
      shared_quorum_conflicts.has_value() && *shared_quorum_conflicts == 0;

   if (!pow_is_live)
      return {false, "block-count protocol not live in the unsized setting"};
   if (pow_is_secure)
      return {false, "block-count protocol survived the paired-execution fork"};
   if (quorum_is_live)
      return {false, "certificate protocol reported live during the stake stall"};
   if (!quorum_is_secure)
      return {false, "certificate protocol confirmed conflicting blocks"};
   const bool any_both = (pow_is_live && pow_is_secure) ||
                         (pos_is_live && pos_is_secure) ||
                         (quorum_is_live && quorum_is_secure);
   if (any_both)
      return {false, "a protocol scored live and secure simultaneously"};
   return {true, fmt::format("pow live@w={} insecure; pos {}/{}; quorum non-live secure",
                             *pow_live.live_window, pos_is_live ? "live" : "stalled",
                             pos_is_secure ? "secure" : "insecure")};
}

// --- 7: protocol invariant property suite --------------------------------

outcome no_balance_no_voice() {
   resource_pool pool;
   pool.table = {{"rich", 0, 1000000, 5.0}, {"expired", 0, 10, 2.0}};

   permitter_kernel kw;
   kw.kind = permitter_kernel::kind_t::pow;
   kw.difficulty = {1000000, 5.0, 0.2};
   kw.timeslot_seconds = 1.0;
   kw.prf_key = bytes_of("acceptance-voice");
   permitter_kernel ks = kw;
   ks.kind = permitter_kernel::kind_t::pos_lottery;
   ks.window_slots = 1u << 20;
   permitter_kernel kp = kw;
   kp.kind = permitter_kernel::kind_t::prop1;
   kp.prop1 = {1.0, 4, 4, {{"ghost", 4}, {"expired", 4}}};

   const block g = make_block(std::nullopt, "origin", 0);
   message_state s(g);
   std::mt19937_64 rng(424242);

   for (std::uint64_t i = 0; i < 10000; ++i) {
      const key_id key = (rng() & 1) ? "ghost" : "expired";
      const timeslot slot = 11 + i; // past the funded rows, fresh slot per probe
      permission perm;
      switch (i % 3) {
      case 0: {
         const block cand = make_block(s.best_leaf(), key, slot);
         perm = pow_respond(kw, {key, &s, slot, encode_block_identity(cand)}, slot, pool);
         break;
      }
      case 1:
         if (rng() & 1) {
            perm = pos_respond(ks, {key, &s, slot, {}}, slot, pool);
         } else {
            const vote v = make_vote(key, s.best_leaf(), slot);
            perm = pos_respond(ks, {key, &s, slot, encode_vote_identity(v)}, slot, pool);
         }
         break;
      default:
         perm = prop1_respond(kp, {key, &s, slot, encode_extension(rng() % 4)}, slot, pool);
         break;
      }
      if (perm.kind != permission::kind_t::denied)
         return {false, fmt::format("unfunded key '{}' granted at slot {}", key, slot)};
   }
   return {true, ""};
}

outcome state_monotonicity() {
   for (const char* name : all_scenarios) {
      world w = build_world(load_scenario(scenario_path(name)), 0);
      std::map<user_id, std::size_t> prev;
      for (const auto& entry : w.roster())
         prev[entry.user] = w.state_of(entry.user).size();
      while (w.now() < w.duration()) {
         w.step();
         for (auto& [user, sz] : prev) {
            const std::size_t cur = w.state_of(user).size();
            if (cur < sz)
               return {false, fmt::format("{}: state of '{}' shrank at t {}", name, user,
                                          w.now() - 1)};
            sz = cur;
         }
      }
      timeslot last = 0;
      for (const auto& ev : w.trace()) {
         if (ev.t < last)
            return {false, fmt::format("{}: trace time went backwards", name)};
         last = ev.t;
      }
   }
   return {true, ""};
}

outcome compatibility_oracle() {
   std::mt19937_64 rng(171717);
   for (int tree = 0; tree < 1000; ++tree) {
      const block g = make_block(std::nullopt, "g", 0);
      message_state s(g);
      std::vector<block> nodes{g};
      std::map<digest, std::optional<digest>> parent_of{{g.id, std::nullopt}};
      const std::size_t n = 2 + rng() % 22;
      for (std::size_t i = 1; i < n; ++i) {
         const digest par = nodes[rng() % nodes.size()].id;
         const block b = make_block(par, fmt::format("k{}", i % 3),
                                    static_cast<timeslot>(i));
         s.apply_block(b);
         nodes.push_back(b);
         parent_of[b.id] = par;
      }
      std::map<digest, std::set<digest>> anc; // ancestor closure, self included
      for (const auto& b : nodes) {
         std::set<digest> a;
         std::optional<digest> cur = b.id;
         while (cur) {
            a.insert(*cur);
            cur = parent_of.at(*cur);
         }
         anc[b.id] = std::move(a);
      }
      for (const auto& x : nodes)
         for (const auto& y : nodes) {
            const bool expect = anc[x.id].count(y.id) || anc[y.id].count(x.id);
            if (is_compatible(x.id, y.id, s) != expect)
               return {false, fmt::format("tree {}: compatibility disagrees with the "
                                          "ancestor oracle", tree)};
         }
   }
   return {true, ""};
}

outcome replay_determinism() {
   for (const char* name : all_scenarios) {
      const scenario_spec spec = load_scenario(scenario_path(name));
      const run_result a = run_scenario(spec, 0);
      const run_result b = run_scenario(spec, 0);
      if (a.trace_digest != b.trace_digest)
         return {false, fmt::format("{}: trace digests differ across replays", name)};
      for (const auto& [user, snaps] : a.snapshots) {
         const auto& other = b.snapshots.at(user);
         if (snaps.size() != other.size())
            return {false, fmt::format("{}: snapshot counts differ", name)};
         for (std::size_t i = 0; i < snaps.size(); ++i)
            if (snaps[i].state_seq != other[i].state_seq ||
                snaps[i].permissions != other[i].permissions ||
                snaps[i].confirmed != other[i].confirmed)
               return {false, fmt::format("{}: snapshots diverge at t {}", name, i)};
      }
   }
   return {true, ""};
}

outcome rate_within_depth() {
   std::mt19937_64 rng(5151);
   confirmation_rule by_depth;
   by_depth.kind = confirmation_rule::kind_t::depth;
   by_depth.depth = 6;
   by_depth.timeslot_seconds = 600.0;
   confirmation_rule by_rate = by_depth;
   by_rate.kind = confirmation_rule::kind_t::rate;
   by_rate.rate_hours_per_block = 1.0 / 5.5;

   for (int i = 0; i < 1000; ++i) {
      const block g = make_block(std::nullopt, "g", 0);
      message_state s(g);
      digest tip = g.id;
      timeslot ts = 0;
      const std::size_t len = 5 + rng() % 41;
      for (std::size_t j = 0; j < len; ++j) {
         ts += 1 + rng() % 12;
         const block b = make_block(tip, "m", ts);
         s.apply_block(b);
         tip = b.id;
      }
      const chain cr = confirmed(s, by_rate);
      const chain cd = confirmed(s, by_depth);
      if (cr.size() > cd.size())
         return {false, fmt::format("chain {}: rate rule confirmed past the depth rule", i)};
      for (std::size_t j = 0; j < cr.size(); ++j)
         if (cr.blocks[j].id != cd.blocks[j].id)
            return {false, fmt::format("chain {}: confirmed prefixes disagree", i)};
   }
   return {true, ""};
}

outcome criterion7() {
   struct part {
      const char* label;
      outcome (*fn)();
   };
   const part parts[] = {{"no-balance-no-voice", no_balance_no_voice},
                         {"state monotonicity", state_monotonicity},
                         {"compatibility oracle", compatibility_oracle},
                         {"replay determinism", replay_determinism},
                         {"rate within depth", rate_within_depth}};
   for (const auto& p : parts) {
      outcome o;
      try {
         o = p.fn();
      } catch (const std::exception& e) {
         o = {false, fmt::format("unexpected error: {}", e.what())};
      }
      if (!o.ok)
         return {false, fmt::format("{}: {}", p.label, o.detail)};
   }
   return {true, "zero-balance denial, monotonicity, compatibility, replay, rate-vs-depth"};
}

// --- 8: lottery fairness and per-slot uniqueness --------------------------

outcome criterion8() {
   resource_pool pool;
   pool.table = {{"a", 0, 200001, 3.0}, {"b", 0, 200001, 1.0}, {"c", 0, 200001, 0.0}};

   permitter_kernel k;
   k.kind = permitter_kernel::kind_t::pos_lottery;
   k.window_slots = 200000;
   k.timeslot_seconds = 1.0;
   k.prf_key = bytes_of("acceptance-fair");

   const block g = make_block(std::nullopt, "origin", 0);
   const message_state s(g);

   const std::uint64_t slots = 100000;
   std::uint64_t wins_a = 0;
   for (timeslot t = 1; t <= slots; ++t) {
      const auto w = pos_winner(k, pool, s, t);
      if (!w)
         return {false, fmt::format("no winner for slot {}", t)};
      if (*w == "c")
         return {false, fmt::format("zero-balance key won slot {}", t)};
      if (*w == "a")
         ++wins_a;
   }
   const double freq = static_cast<double>(wins_a) / static_cast<double>(slots);
   const double sigma = std::sqrt(0.75 * 0.25 / static_cast<double>(slots));
   if (std::fabs(freq - 0.75) > 3.0 * sigma)
      return {false, fmt::format("3:1 stake won {:.4f} of slots, outside 0.75 +- {:.4f}",
                                 freq, 3.0 * sigma)};

   // Exhaustive uniqueness: across two distinct leaves, every slot grants
   // criteria permission to exactly one key, the lottery's pick.
   message_state s2(g);
   s2.apply_block(make_block(g.id, "a", 1));
   const message_state* states[] = {&s, &s2};
   const timeslot base[] = {0, 1};
   const key_id keys[] = {"a", "b", "c"};
   for (int which = 0; which < 2; ++which)
      for (timeslot t = base[which] + 1; t <= base[which] + 150; ++t) {
         int grants = 0;
         key_id granted;
         for (const auto& key : keys) {
            permitter_kernel fresh = k;
            if (pos_respond(fresh, {key, states[which], t, {}}, t, pool).kind ==
                permission::kind_t::criteria) {
               ++grants;
               granted = key;
            }
         }
         const auto w = pos_winner(k, pool, *states[which], t);
         if (grants != 1 || !w || granted != *w)
            return {false, fmt::format("slot {} on leaf {} granted {} keys", t, which, grants)};
      }
   return {true, fmt::format("3:1 stake won {:.4f} of 1e5 slots, one winner per (chain, slot)",
                             freq)};
}

} // namespace

int main() {
   struct criterion {
      int number;
      const char* label;
      outcome (*fn)();
      long long budget_ms; // 0 = no budget
   };
   const criterion table[] = {
      {1, "grant-probability series approximation", criterion1, 1000},
      {2, "rate-limited grant proportionality", criterion2, 120000},
      {3, "difficulty retarget rule and mining loop", criterion3, 0},
      {4, "paired-execution forked confirmations", criterion4, 300000},
      {5, "certificate safety under partition and async", criterion5, 0},
      {6, "liveness/security dichotomy matrix", criterion6, 0},
      {7, "protocol invariant property suite", criterion7, 0},
      {8, "stake lottery fairness and uniqueness", criterion8, 0},
   };

   int exit_code = 0;
   for (const auto& c : table) {
      const auto start = std::chrono::steady_clock::now();
      outcome o;
      try {
         o = c.fn();
      } catch (const indistinguishability_error& e) {
         o = {false, fmt::format("fingerprint divergence: {}", e.what())};
         exit_code = 2;
      } catch (const std::exception& e) {
         o = {false, fmt::format("unexpected error: {}", e.what())};
      }
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
      if (o.ok && c.budget_ms && ms >= c.budget_ms) {
         o.ok = false;
         o.detail = fmt::format("over time budget: {} ms >= {} ms", ms, c.budget_ms);
      }
      fmt::print("[{}] criterion {}: {} ({}; {} ms)\n", o.ok ? "PASS" : "FAIL", c.number,
                 c.label, o.detail, ms);
      if (!o.ok && exit_code == 0)
         exit_code = 1;
   }
   return exit_code;
}
