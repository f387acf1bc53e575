#pragma once

#include "hetlab/types.hpp"

#include "json.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hetlab::fl {

struct DimensionRange {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const DimensionRange&) const = default;
};

// Shape is [D] for flat records or [H, W, C] for images (HWC order).
struct Manifest {
    std::vector<int> shape;
    std::vector<DimensionRange> ranges;
    std::vector<std::string> label_names;

    std::size_t dims() const;
    bool is_image() const { return shape.size() == 3; }
    void validate() const;
    bool operator==(const Manifest&) const = default;

    static Manifest uniform(std::vector<int> shape, DimensionRange range, std::vector<std::string> labels);
};

struct Dataset {
    RecordMatrix records;
    std::optional<std::vector<int>> labels;
    Manifest manifest;

    std::size_t size() const { return static_cast<std::size_t>(records.rows()); }
    bool has_labels() const { return labels.has_value(); }
    // Throws Error(BadInput) naming the first offending row (1-based) and column.
    void validate() const;
    Dataset subset(const RecordIds& ids) const;
};

nlohmann::json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j);

// CSV with a header row: feature columns followed by an optional `label`
// column. Violations report `row R, column C` with R counted from the first
// data row.
Dataset read_csv(std::istream& in, const Manifest& manifest);
void write_csv(std::ostream& out, const Dataset& data);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace hetlab::fl
