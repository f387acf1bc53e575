#pragma once

#include "hetlab/fl/dataset.hpp"
#include "hetlab/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hetlab::analytics {

struct GenerationOptions {
    std::optional<std::size_t> sample_count;   // default: n
    std::optional<std::size_t> subspace_dims;  // default: smallest rank explaining >= 85% variance, capped at 8
    std::size_t strata_per_dim = 4;
    std::uint64_t seed = 0;
};

struct GeneratedInputs {
    RecordMatrix records;    // clipped into the manifest ranges
    RecordMatrix unclipped;  // back-projected samples before range interception
    std::size_t subspace_dims = 0;
    std::size_t occupied_strata = 0;
    std::vector<std::string> warnings;
};

// Smallest q whose leading principal components explain at least
// `threshold` of the total variance, capped at `cap`.
std::size_t explained_variance_rank(const RecordMatrix& records, double threshold = 0.85, std::size_t cap = 8);

// PCA subspace fit, equal-frequency stratification over the first min(q, 3)
// coordinates, proportional allocation, uniform sampling within each
// stratum's bounding box, back-projection and clipping.
GeneratedInputs generate_inputs(const RecordMatrix& records, const fl::Manifest& manifest,
                                const GenerationOptions& options);

}  // namespace hetlab::analytics
