#pragma once

#include "hetlab/fl/federation.hpp"
#include "hetlab/fl/model.hpp"

#include "json.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace hetlab::session {

using nlohmann::json;

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);
std::string sha256_hex(std::string_view bytes);

// Float32 little-endian packing. Values must already be float-representable
// (see fl::to_wire); anything else is a numeric error.
std::string pack_f32(const std::vector<double>& values);
std::vector<double> unpack_f32(std::string_view bytes);

// Field access that reports failures as "<json pointer>: <problem>".
class Reader {
public:
    Reader(const json& node, std::string pointer) : node_(node), pointer_(std::move(pointer)) {}

    const json& node() const { return node_; }
    const std::string& pointer() const { return pointer_; }

    bool has(const std::string& key) const;
    Reader at(const std::string& key) const;  // required member
    Reader at(std::size_t index) const;
    std::size_t size() const;  // requires an array

    const json& object() const;
    const json& array() const;
    std::string string() const;
    double number() const;  // finite
    std::int64_t integer() const;
    std::uint64_t unsigned_integer() const;
    bool boolean() const;

    std::string str(const std::string& key) const { return at(key).string(); }
    double num(const std::string& key) const { return at(key).number(); }
    std::int64_t int_(const std::string& key) const { return at(key).integer(); }

    [[noreturn]] void fail(const std::string& problem) const;

private:
    const json& node_;
    std::string pointer_;
};

json spec_to_json(const fl::ModelSpec& spec);
fl::ModelSpec spec_from_json(const Reader& r);

json params_to_json(const fl::ParamVector& params);
fl::ParamVector params_from_json(const Reader& r);

json metrics_to_json(const fl::RoundMetrics& m);
fl::RoundMetrics metrics_from_json(const Reader& r);

json snapshot_to_json(const fl::RoundSnapshot& s);
fl::RoundSnapshot snapshot_from_json(const Reader& r);

// Parses a document, turning syntax errors into Error(BadInput).
json parse_document(std::string_view text, const std::string& what);

// Writes `text` to `path` through a temporary file and an atomic rename.
void atomic_write(const std::string& path, std::string_view text);
std::string read_file(const std::string& path);

// Stable, diffable serialization: sorted keys, two-space indent, trailing newline.
std::string dump(const json& j);

}  // namespace hetlab::session
