#pragma once

#include <poolsim/chain.hpp>
#include <poolsim/world.hpp>

#include <json.hpp>

namespace poolsim {

// Canonical JSON forms of the public data types. Field names are part of
// the tool's external interface and stay fixed.
nlohmann::json block_to_json(const block& b);
block block_from_json(const nlohmann::json& j);

nlohmann::json chain_to_json(const chain& c);

// One JSON-lines record of the execution trace.
nlohmann::json trace_event_to_json(const trace_event& ev);

} // namespace poolsim
