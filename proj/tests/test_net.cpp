#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <poolsim/errors.hpp>
#include <poolsim/net.hpp>

#include <cmath>
#include <random>

using namespace poolsim;

TEST_CASE("schedule lookup follows the covering interval") {
   sync_schedule s{{{0, 10, true}, {10, 30, false}, {30, 40, true}}};
   s.validate(40);
   CHECK(s.is_sync(0));
   CHECK(s.is_sync(9));
   CHECK(!s.is_sync(10));
   CHECK(!s.is_sync(29));
   CHECK(s.is_sync(30));
   CHECK(s.is_sync(39));
   CHECK_THROWS_AS(s.is_sync(40), error);
}

TEST_CASE("schedule validation rejects gaps, overlaps and short coverage") {
   sync_schedule late_start{{{1, 10, true}}};
   CHECK_THROWS_AS(late_start.validate(10), constraint_error);
   sync_schedule gap{{{0, 10, true}, {12, 20, false}}};
   CHECK_THROWS_AS(gap.validate(20), constraint_error);
   sync_schedule overlap{{{0, 10, true}, {8, 20, false}}};
   CHECK_THROWS_AS(overlap.validate(20), constraint_error);
   sync_schedule empty_iv{{{0, 10, true}, {10, 10, false}}};
   CHECK_THROWS_AS(empty_iv.validate(10), constraint_error);
   sync_schedule short_cover{{{0, 10, true}}};
   CHECK_THROWS_AS(short_cover.validate(12), constraint_error);
   sync_schedule none{};
   CHECK_THROWS_AS(none.validate(1), constraint_error);
   CHECK_NOTHROW(sync_schedule::all_sync(5).validate(5));
   CHECK_NOTHROW(sync_schedule::all_async(5).validate(5));
}

TEST_CASE("sync windows merge adjacent synchronous intervals") {
   sync_schedule s{{{0, 10, true},
                    {10, 20, true},
                    {20, 30, false},
                    {30, 40, true},
                    {40, 50, false},
                    {50, 60, false}}};
   s.validate(60);
   auto windows = s.sync_windows();
   REQUIRE(windows.size() == 2);
   CHECK(windows[0].from_t == 0);
   CHECK(windows[0].to_t == 20);
   CHECK(windows[1].from_t == 30);
   CHECK(windows[1].to_t == 40);
   CHECK(sync_schedule::all_async(60).sync_windows().empty());
}

TEST_CASE("fixed delays are exact and never below one timeslot") {
   delay_dist two{delay_dist::kind_t::fixed, 0.5, 2};
   CHECK(synchronous_delay(0.0, two) == 2);
   CHECK(synchronous_delay(0.999, two) == 2);
   delay_dist zero{delay_dist::kind_t::fixed, 0.5, 0};
   CHECK(synchronous_delay(0.3, zero) == 1);
}

TEST_CASE("geometric delay inverts the CDF") {
   delay_dist g{delay_dist::kind_t::geometric, 0.5, 1};
   // P(delay = 1) = q, so u < q maps to 1, and the next 1-q of mass to 2.
   CHECK(synchronous_delay(0.0, g) == 1);
   CHECK(synchronous_delay(0.4999, g) == 1);
   CHECK(synchronous_delay(0.5001, g) == 2);
   CHECK(synchronous_delay(0.7499, g) == 2);
   CHECK(synchronous_delay(0.7501, g) == 3);

   delay_dist certain{delay_dist::kind_t::geometric, 1.0, 1};
   CHECK(synchronous_delay(0.99, certain) == 1);

   delay_dist bad{delay_dist::kind_t::geometric, 0.0, 1};
   CHECK_THROWS_AS(synchronous_delay(0.5, bad), constraint_error);
}

TEST_CASE("geometric delay matches its mean over many draws") {
   std::mt19937_64 rng(12345);
   const double qs[] = {0.2, 0.5, 0.8};
   for (double q : qs) {
      delay_dist g{delay_dist::kind_t::geometric, q, 1};
      const int n = 200000;
      double sum = 0.0;
      for (int i = 0; i < n; ++i) {
         const double u =
             static_cast<double>(rng() >> 11) * 0x1.0p-53;
         sum += static_cast<double>(synchronous_delay(u, g));
      }
      const double mean = sum / n;
      const double expected = 1.0 / q;
      const double stddev = std::sqrt(1.0 - q) / q;
      const double tol = 4.0 * stddev / std::sqrt(static_cast<double>(n));
      CHECK(std::abs(mean - expected) < tol);
   }
}

TEST_CASE("partition policy withholds exactly the crossing copies") {
   adversary_policy p = partition_policy({"u0", "u1"}, {"u2"});
   delivery_event ev;
   ev.recipient = "u2";
   CHECK(p.decide(ev, "u0", 5) == adversary_policy::action_t::withhold);
   ev.recipient = "u1";
   CHECK(p.decide(ev, "u0", 5) == adversary_policy::action_t::normal);
   ev.recipient = "u0";
   CHECK(p.decide(ev, "u2", 5) == adversary_policy::action_t::withhold);
   ev.recipient = "u9"; // outside both sets: unaffected
   CHECK(p.decide(ev, "u0", 5) == adversary_policy::action_t::normal);
   CHECK(p.decide(ev, "u9", 5) == adversary_policy::action_t::normal);
}

TEST_CASE("scripted rules match on sender, recipient and interval, first wins") {
   adversary_policy p;
   p.kind = adversary_policy::kind_t::scripted;
   p.rules.push_back({"u0", "", 10, 20, adversary_policy::action_t::withhold});
   p.rules.push_back({"", "u1", 0, 100, adversary_policy::action_t::deliver_now});

   delivery_event ev;
   ev.recipient = "u1";
   // Both rules match at t=15; the first one listed wins.
   CHECK(p.decide(ev, "u0", 15) == adversary_policy::action_t::withhold);
   CHECK(p.decide(ev, "u0", 25) == adversary_policy::action_t::deliver_now);
   CHECK(p.decide(ev, "u2", 15) == adversary_policy::action_t::deliver_now);
   ev.recipient = "u2";
   CHECK(p.decide(ev, "u0", 15) == adversary_policy::action_t::withhold);
   CHECK(p.decide(ev, "u0", 20) == adversary_policy::action_t::normal);
   CHECK(p.decide(ev, "u2", 15) == adversary_policy::action_t::normal);

   adversary_policy none;
   CHECK(none.decide(ev, "u0", 15) == adversary_policy::action_t::normal);
}
