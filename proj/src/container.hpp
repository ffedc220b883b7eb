#pragma once

// Shared framing for checkpoint and prompt files:
//
//   magic (8 bytes) | header length (u64 LE) | JSON header | payload
//
// The header lists tensors as {name, rows, cols, byte_offset}, offsets counted
// from the start of the payload. Payloads are little-endian f64, row-major.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "edgeprompt/tensor.hpp"

namespace edgeprompt::detail {

struct Container {
    nlohmann::json header;  // without the "tensors" array
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
};

std::string encode_container(std::string_view magic, const Container& c);

// `what` names the file kind in error messages.
Container decode_container(std::string_view magic, std::string_view bytes, const char* what);

// Typed header accessors that raise Format errors naming the field.
const nlohmann::json& require_field(const nlohmann::json& obj, const char* key, const char* what);
std::string require_string(const nlohmann::json& obj, const char* key, const char* what);
std::uint64_t require_uint(const nlohmann::json& obj, const char* key, const char* what);
double require_number(const nlohmann::json& obj, const char* key, const char* what);

}  // namespace edgeprompt::detail
