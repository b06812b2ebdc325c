#include <poolsim/serial.hpp>
#include <poolsim/errors.hpp>

#include <fmt/format.h>

namespace poolsim {

nlohmann::json block_to_json(const block& b) {
   nlohmann::json j;
   j["id"] = b.id.hex();
   j["parent"] = b.parent ? nlohmann::json(b.parent->hex()) : nlohmann::json(nullptr);
   j["miner"] = b.miner;
   j["timestamp"] = b.timestamp;
   j["payload"] = to_hex(b.payload);
   if (b.meta) {
      j["epoch_meta"] = {{"epoch", b.meta->epoch}, {"p", b.meta->p}};
   } else {
      j["epoch_meta"] = nullptr;
   }
   return j;
}

block block_from_json(const nlohmann::json& j) {
   for (const auto& [key, value] : j.items()) {
      (void)value;
      if (key != "id" && key != "parent" && key != "miner" && key != "timestamp" &&
          key != "payload" && key != "epoch_meta")
         throw schema_error(fmt::format("block.{}: unknown field", key), "block." + key);
   }
   std::optional<digest> parent;
   if (!j.at("parent").is_null())
      parent = digest::from_hex(j.at("parent").get<std::string>());
   block b = make_block(parent, j.at("miner").get<std::string>(),
                        j.at("timestamp").get<timeslot>(),
                        from_hex_bytes(j.at("payload").get<std::string>()));
   if (j.contains("epoch_meta") && !j.at("epoch_meta").is_null()) {
      b.meta = epoch_meta{j.at("epoch_meta").at("epoch").get<std::uint64_t>(),
                          j.at("epoch_meta").at("p").get<double>()};
   }
   if (j.contains("id")) {
      auto claimed = digest::from_hex(j.at("id").get<std::string>());
      if (claimed != b.id)
         throw constraint_error(fmt::format(
            "block id {} does not match its content (expected {})",
            claimed.hex(), b.id.hex()));
   }
   return b;
}

nlohmann::json chain_to_json(const chain& c) {
   nlohmann::json arr = nlohmann::json::array();
   for (const auto& b : c.blocks)
      arr.push_back(block_to_json(b));
   return arr;
}

nlohmann::json trace_event_to_json(const trace_event& ev) {
   const char* kind = "BROADCAST";
   if (ev.kind == trace_event::kind_t::deliver) kind = "DELIVER";
   if (ev.kind == trace_event::kind_t::withhold) kind = "WITHHOLD";
   return nlohmann::json{{"t", ev.t},
                         {"kind", kind},
                         {"sender", ev.sender},
                         {"recipient", ev.recipient},
                         {"message_id", ev.message.hex()}};
}

} // namespace poolsim
