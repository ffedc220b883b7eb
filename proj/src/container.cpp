#include "container.hpp"

#include <bit>
#include <cstring>

#include "edgeprompt/error.hpp"

namespace edgeprompt::detail {

static_assert(std::endian::native == std::endian::little, "container payloads assume a little-endian host");

namespace {

constexpr std::size_t kMagicSize = 8;

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

}  // namespace

std::string encode_container(std::string_view magic, const Container& c) {
    if (c.names.size() != c.tensors.size()) throw Error(ErrorKind::State, "container names and tensors disagree");
    nlohmann::json header = c.header;
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < c.names.size(); ++i) {
        entries.push_back({{"name", c.names[i]},
                           {"rows", c.tensors[i].rows()},
                           {"cols", c.tensors[i].cols()},
                           {"byte_offset", offset}});
        offset += c.tensors[i].size() * sizeof(double);
    }
    header["tensors"] = std::move(entries);
    const std::string text = header.dump();

    std::string out(magic.substr(0, kMagicSize));
    put_u64(out, text.size());
    out += text;
    out.reserve(out.size() + offset);
    for (const Tensor& t : c.tensors)
        out.append(reinterpret_cast<const char*>(t.storage().data()), t.size() * sizeof(double));
    return out;
}

Container decode_container(std::string_view magic, std::string_view bytes, const char* what) {
    const std::string kind(what);
    if (bytes.size() < kMagicSize + 8) throw Error(ErrorKind::Format, kind + " truncated: no header");
    if (bytes.substr(0, kMagicSize) != magic.substr(0, kMagicSize))
        throw Error(ErrorKind::Format, kind + " has bad magic bytes");
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + kMagicSize, 8);
    const std::size_t header_start = kMagicSize + 8;
    if (header_len > bytes.size() - header_start)
        throw Error(ErrorKind::Format, kind + " truncated: header length " + std::to_string(header_len) +
                                           " exceeds file size");
    Container c;
    try {
        c.header = nlohmann::json::parse(bytes.substr(header_start, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Format, kind + " header is not valid JSON: " + e.what());
    }
    if (!c.header.is_object()) throw Error(ErrorKind::Format, kind + " header is not an object");

    const std::string_view payload = bytes.substr(header_start + header_len);
    const nlohmann::json& entries = require_field(c.header, "tensors", what);
    if (!entries.is_array()) throw Error(ErrorKind::Format, kind + " field 'tensors' is not an array");
    std::uint64_t expected_offset = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string field = kind + " tensors[" + std::to_string(i) + "]";
        const nlohmann::json& e = entries[i];
        if (!e.is_object()) throw Error(ErrorKind::Format, field + " is not an object");
        const std::string name = require_string(e, "name", field.c_str());
        const std::uint64_t rows = require_uint(e, "rows", field.c_str());
        const std::uint64_t cols = require_uint(e, "cols", field.c_str());
        const std::uint64_t offset = require_uint(e, "byte_offset", field.c_str());
        if (offset != expected_offset)
            throw Error(ErrorKind::Format, field + " byte_offset " + std::to_string(offset) + ", expected " +
                                               std::to_string(expected_offset));
        if (rows != 0 && cols > (payload.size() / sizeof(double)) / rows)
            throw Error(ErrorKind::Format, kind + " truncated: tensor '" + name + "' exceeds payload");
        const std::uint64_t len = rows * cols * sizeof(double);
        if (offset + len > payload.size())
            throw Error(ErrorKind::Format, kind + " truncated: tensor '" + name + "' exceeds payload");
        std::vector<double> values(rows * cols);
        std::memcpy(values.data(), payload.data() + offset, len);
        c.names.push_back(name);
        c.tensors.emplace_back(rows, cols, std::move(values));
        expected_offset = offset + len;
    }
    if (expected_offset != payload.size())
        throw Error(ErrorKind::Format, kind + " has " + std::to_string(payload.size() - expected_offset) +
                                           " trailing payload bytes");
    c.header.erase("tensors");
    return c;
}

const nlohmann::json& require_field(const nlohmann::json& obj, const char* key, const char* what) {
    auto it = obj.find(key);
    if (it == obj.end()) throw Error(ErrorKind::Format, std::string(what) + " is missing field '" + key + "'");
    return *it;
}

std::string require_string(const nlohmann::json& obj, const char* key, const char* what) {
    const nlohmann::json& v = require_field(obj, key, what);
    if (!v.is_string()) throw Error(ErrorKind::Format, std::string(what) + " field '" + key + "' is not a string");
    return v.get<std::string>();
}

std::uint64_t require_uint(const nlohmann::json& obj, const char* key, const char* what) {
    const nlohmann::json& v = require_field(obj, key, what);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw Error(ErrorKind::Format, std::string(what) + " field '" + key + "' is not a non-negative integer");
    return v.get<std::uint64_t>();
}

double require_number(const nlohmann::json& obj, const char* key, const char* what) {
    const nlohmann::json& v = require_field(obj, key, what);
    if (!v.is_number()) throw Error(ErrorKind::Format, std::string(what) + " field '" + key + "' is not a number");
    return v.get<double>();
}

}  // namespace edgeprompt::detail
