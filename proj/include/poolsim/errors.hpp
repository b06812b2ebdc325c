#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace poolsim {

// Base for all contract violations raised by the simulator. Catching this at
// the CLI boundary maps cleanly onto exit codes; anything else escaping is a
// genuine bug.
struct error : std::runtime_error {
   explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// A block referenced a parent that is not present in the message state.
// States built through insert_block cannot reach this; it signals a
// scheduler or test-harness bug.
struct missing_parent_error : error {
   using error::error;
};

// A broadcast was attempted without a covering permission.
struct not_permitted_error : error {
   using error::error;
};

// A block was broadcast before its parent was delivered to the sender.
struct parent_not_delivered_error : error {
   using error::error;
};

// A permit request was structurally invalid (non-closed state, duplicate
// submission where the kernel forbids it, unparseable payload).
struct malformed_request_error : error {
   using error::error;
};

// Scenario JSON was not valid JSON at all.
struct parse_error : error {
   parse_error(const std::string& msg, std::size_t line_, std::size_t column_)
      : error(msg), line(line_), column(column_) {}
   std::size_t line = 0;
   std::size_t column = 0;
};

// Scenario JSON was well formed but violated the schema. `field` names the
// offending key path.
struct schema_error : error {
   schema_error(const std::string& msg, std::string field_)
      : error(msg), field(std::move(field_)) {}
   std::string field;
};

// Scenario JSON matched the schema but failed a semantic constraint
// (negative balance, uncovered schedule, bounds violated, ...).
struct constraint_error : error {
   using error::error;
};

// The paired executions of the cap experiment diverged where they must be
// bit-identical. Carries enough context to locate the first divergence.
struct indistinguishability_error : error {
   indistinguishability_error(const std::string& msg, std::size_t run_,
                              std::uint64_t timeslot_, std::string user_)
      : error(msg), run(run_), timeslot(timeslot_), user(std::move(user_)) {}
   std::size_t run = 0;
   std::uint64_t timeslot = 0;
   std::string user;
};

} // namespace poolsim
