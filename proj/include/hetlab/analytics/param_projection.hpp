#pragma once

#include "hetlab/fl/federation.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hetlab::analytics {

struct RandomizedOptions {
    std::size_t rank = 2;
    std::size_t oversampling = 10;
    std::size_t power_iterations = 2;
    std::uint64_t seed = 0;
};

// Top right singular vectors (cols(A) x rank) of A via a Gaussian range
// finder with power iterations followed by an exact SVD of the small
// projected matrix.
Eigen::MatrixXd randomized_right_basis(const Eigen::MatrixXd& matrix, const RandomizedOptions& options);

struct ParamTrajectory {
    int from = 1;
    int to = 1;
    std::string layer = "all";
    std::size_t dims = 0;
    Eigen::MatrixX2d federated;  // row r: round from + r
    Eigen::MatrixX2d local;
    Eigen::MatrixX2d basis;      // dims x 2
    // cosine between (local_i - fed_{i-1}) and (fed_i - fed_{i-1}); absent for
    // round 1 and for zero-length segments.
    std::vector<std::optional<double>> cosines;
};

// Parameters restricted to the tensors chosen by `selector`.
std::vector<double> restrict_parameters(const fl::ParamVector& params, const std::string& selector);

// `snapshots` must hold the whole run in round order (snapshot i has round i + 1).
ParamTrajectory project_parameters(std::span<const fl::RoundSnapshot> snapshots, int from, int to,
                                   const std::string& selector, const RandomizedOptions& options = {});

}  // namespace hetlab::analytics
