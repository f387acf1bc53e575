#include "hetlab/session/tracking.hpp"

#include "hetlab/analytics/views.hpp"
#include "hetlab/error.hpp"

#include <algorithm>
#include <iterator>

namespace hetlab::session {

TrackResult track(const Annotation& annotation, int round, const fl::Network& net, const fl::ParamVector& standalone,
                  const fl::ParamVector& federated, const RecordMatrix& records) {
    const auto cmp = analytics::compare_models(net, standalone, federated, records, round);
    TrackResult out;
    out.annotation_id = annotation.id;
    out.round = round;
    const auto& inconsistent = cmp.report.ids;
    for (auto id : annotation.record_ids) {
        if (id >= cmp.standalone.size()) throw bad_input("annotated record " + std::to_string(id) + " is out of range");
        TrackedRecord t;
        t.record_id = id;
        t.standalone_label = cmp.standalone[id];
        t.federated_label = cmp.federated[id];
        t.inconsistent = std::binary_search(inconsistent.begin(), inconsistent.end(), id);
        if (t.inconsistent) ++out.inconsistent_count;
        out.records.push_back(t);
    }
    return out;
}

CombineMode parse_combine_mode(const std::string& text) {
    if (text == "intersection") return CombineMode::Intersection;
    if (text == "union") return CombineMode::Union;
    throw bad_input("mode must be intersection or union, got '" + text + "'");
}

RecordIds set_combine(const std::vector<RecordIds>& operands, CombineMode mode) {
    if (operands.empty()) throw bad_input("set-combine needs at least one operand");
    auto sorted = [](RecordIds ids) {
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    };
    RecordIds acc = sorted(operands.front());
    for (std::size_t i = 1; i < operands.size(); ++i) {
        const auto next = sorted(operands[i]);
        RecordIds out;
        if (mode == CombineMode::Intersection)
            std::set_intersection(acc.begin(), acc.end(), next.begin(), next.end(), std::back_inserter(out));
        else
            std::set_union(acc.begin(), acc.end(), next.begin(), next.end(), std::back_inserter(out));
        acc = std::move(out);
    }
    return acc;
}

}  // namespace hetlab::session
