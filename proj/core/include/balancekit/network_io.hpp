#pragma once

#include "balancekit/network.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace balancekit {

/// Network document:
///   {"version": 1, "recurrent": false, "unroll_steps": 3,
///    "units": [{"id": 0, "role": "input", "activation": {"kind": "bilu", "a": 1, "b": 1}}, ...],
///    "edges": [{"from": 0, "to": 1, "weight": 0.5}, ...]}
/// Activations: {"kind":"bilu","a","b"} | {"kind":"bipu","C","D","c"} |
/// {"kind":"tanh"} | {"kind":"logistic"}. Roles: input, output, hidden, bias.
/// Weights are written in the shortest decimal form that round-trips to the
/// same binary64 value.
inline constexpr int kNetworkDocumentVersion = 1;

nlohmann::json activation_to_json(const ActivationSpec& spec);
ActivationSpec activation_from_json(const nlohmann::json& doc);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);

std::string serialize(const Network& net);

/// Throws ParseError with the byte offset for malformed JSON, and with
/// position 0 plus the offending unit/edge for schema errors.
Network deserialize(std::string_view text);

Network load_network(const std::filesystem::path& path);
void save_network(const Network& net, const std::filesystem::path& path);

}  // namespace balancekit
