#include "hetlab/fl/dataset.hpp"

#include "hetlab/error.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace hetlab::fl {

std::size_t Manifest::dims() const {
    std::size_t d = shape.empty() ? 0 : 1;
    for (int s : shape) d *= static_cast<std::size_t>(s);
    return d;
}

void Manifest::validate() const {
    if (shape.size() != 1 && shape.size() != 3) throw bad_input("manifest: shape must be [D] or [H,W,C]");
    for (int s : shape)
        if (s < 1) throw bad_input("manifest: shape entries must be positive");
    if (ranges.size() != dims())
        throw bad_input("manifest: expected " + std::to_string(dims()) + " ranges, got " +
                        std::to_string(ranges.size()));
    for (std::size_t d = 0; d < ranges.size(); ++d)
        if (!(ranges[d].lo <= ranges[d].hi) || !std::isfinite(ranges[d].lo) || !std::isfinite(ranges[d].hi))
            throw bad_input("manifest: invalid range for dimension " + std::to_string(d));
}

Manifest Manifest::uniform(std::vector<int> shape, DimensionRange range, std::vector<std::string> labels) {
    Manifest m;
    m.shape = std::move(shape);
    m.ranges.assign(m.dims(), range);
    m.label_names = std::move(labels);
    return m;
}

void Dataset::validate() const {
    manifest.validate();
    if (records.rows() < 1) throw bad_input("dataset: at least one record is required");
    if (static_cast<std::size_t>(records.cols()) != manifest.dims())
        throw bad_input("dataset: record width " + std::to_string(records.cols()) +
                        " does not match manifest dims " + std::to_string(manifest.dims()));
    for (Eigen::Index r = 0; r < records.rows(); ++r)
        for (Eigen::Index c = 0; c < records.cols(); ++c) {
            const double v = records(r, c);
            const auto& range = manifest.ranges[static_cast<std::size_t>(c)];
            if (!std::isfinite(v) || v < range.lo || v > range.hi)
                throw bad_input("row " + std::to_string(r + 1) + ", column " + std::to_string(c + 1) + ": value " +
                                format_double(v) + " outside [" + format_double(range.lo) + ", " +
                                format_double(range.hi) + "]");
        }
    if (labels) {
        if (labels->size() != size()) throw bad_input("dataset: label count does not match record count");
        const int classes = static_cast<int>(manifest.label_names.size());
        for (std::size_t i = 0; i < labels->size(); ++i) {
            const int y = (*labels)[i];
            if (y < 0 || (classes > 0 && y >= classes))
                throw bad_input("row " + std::to_string(i + 1) + ": label " + std::to_string(y) + " out of range");
        }
    }
}

Dataset Dataset::subset(const RecordIds& ids) const {
    Dataset out;
    out.manifest = manifest;
    out.records.resize(static_cast<Eigen::Index>(ids.size()), records.cols());
    if (labels) out.labels.emplace();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.records.row(static_cast<Eigen::Index>(i)) = records.row(static_cast<Eigen::Index>(ids[i]));
        if (labels) out.labels->push_back((*labels)[ids[i]]);
    }
    return out;
}

nlohmann::json manifest_to_json(const Manifest& manifest) {
    nlohmann::json ranges = nlohmann::json::array();
    for (const auto& r : manifest.ranges) ranges.push_back({r.lo, r.hi});
    return {{"shape", manifest.shape}, {"ranges", ranges}, {"labels", manifest.label_names}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    try {
        m.shape = j.at("shape").get<std::vector<int>>();
        for (const auto& r : j.at("ranges")) {
            if (!r.is_array() || r.size() != 2) throw bad_input("manifest: each range must be [lo, hi]");
            m.ranges.push_back({r[0].get<double>(), r[1].get<double>()});
        }
        if (j.contains("labels")) m.label_names = j.at("labels").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw bad_input(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        out.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

Dataset read_csv(std::istream& in, const Manifest& manifest) {
    manifest.validate();
    std::string line;
    if (!std::getline(in, line)) throw bad_input("csv: missing header row");
    const auto header = split_fields(line);
    const std::size_t dims = manifest.dims();
    bool has_label = !header.empty() && header.back() == "label";
    const std::size_t feature_cols = header.size() - (has_label ? 1 : 0);
    if (feature_cols != dims)
        throw bad_input("csv: header has " + std::to_string(feature_cols) + " feature columns, manifest expects " +
                        std::to_string(dims));

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        const auto fields = split_fields(line);
        if (fields.size() != header.size())
            throw bad_input("csv: row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                            " columns, expected " + std::to_string(header.size()));
        for (std::size_t c = 0; c < feature_cols; ++c) {
            double v = 0.0;
            const auto f = fields[c];
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(v))
                throw bad_input("csv: row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                                ": '" + std::string(f) + "' is not a finite number");
            const auto& range = manifest.ranges[c];
            if (v < range.lo || v > range.hi)
                throw bad_input("csv: row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                                ": value " + std::string(f) + " outside [" + format_double(range.lo) + ", " +
                                format_double(range.hi) + "]");
            values.push_back(v);
        }
        if (has_label) {
            int y = 0;
            const auto f = fields.back();
            const auto res = std::from_chars(f.data(), f.data() + f.size(), y);
            const int classes = static_cast<int>(manifest.label_names.size());
            if (res.ec != std::errc() || res.ptr != f.data() + f.size() || y < 0 || (classes > 0 && y >= classes))
                throw bad_input("csv: row " + std::to_string(row) + ", column " + std::to_string(header.size()) +
                                ": invalid label '" + std::string(f) + "'");
            labels.push_back(y);
        }
    }
    if (row == 0) throw bad_input("csv: no records");

    Dataset data;
    data.manifest = manifest;
    data.records = Eigen::Map<RecordMatrix>(values.data(), static_cast<Eigen::Index>(row),
                                            static_cast<Eigen::Index>(dims));
    if (has_label) data.labels = std::move(labels);
    return data;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

void write_csv(std::ostream& out, const Dataset& data) {
    const auto cols = data.records.cols();
    for (Eigen::Index c = 0; c < cols; ++c) out << (c ? "," : "") << 'f' << c;
    if (data.labels) out << ",label";
    out << '\n';
    for (Eigen::Index r = 0; r < data.records.rows(); ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) out << (c ? "," : "") << format_double(data.records(r, c));
        if (data.labels) out << ',' << (*data.labels)[static_cast<std::size_t>(r)];
        out << '\n';
    }
}

}  // namespace hetlab::fl
