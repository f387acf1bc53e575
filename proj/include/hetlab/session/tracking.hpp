#pragma once

#include "hetlab/fl/model.hpp"
#include "hetlab/session/store.hpp"

namespace hetlab::session {

struct TrackedRecord {
    std::size_t record_id = 0;
    int standalone_label = 0;
    int federated_label = 0;
    bool inconsistent = false;
};

struct TrackResult {
    int annotation_id = 0;
    int round = 0;
    std::vector<TrackedRecord> records;
    std::size_t inconsistent_count = 0;
};

// Flags come from find-inconsistent over all local records at `round`, so they
// agree with that round's report by construction.
TrackResult track(const Annotation& annotation, int round, const fl::Network& net, const fl::ParamVector& standalone,
                  const fl::ParamVector& federated, const RecordMatrix& records);

enum class CombineMode { Intersection, Union };
CombineMode parse_combine_mode(const std::string& text);

// Sorted set intersection / union over the operands.
RecordIds set_combine(const std::vector<RecordIds>& operands, CombineMode mode);

}  // namespace hetlab::session
