#pragma once

#include "hetlab/types.hpp"

#include <cstdint>
#include <vector>

namespace hetlab::analytics {

// Pairwise rank-based distances between the inconsistent records, where each
// rank is taken within the full context of all n records:
//   d_R(j, k) = r_j(k) * r_k(j)
// r_j(k) is the 1-based position of record k when the other n-1 records are
// sorted by Euclidean distance to record j (ties: smaller record index first).
struct RankDistanceMatrix {
    RecordIds ids;                     // inconsistent record ids, in matrix order
    std::size_t context_size = 0;      // n
    std::vector<std::int64_t> ranks;   // m*m, ranks[j*m + k] = r_j(k); diagonal 0
    std::vector<std::int64_t> values;  // m*m, d_R; diagonal 0

    std::size_t size() const { return ids.size(); }
    std::int64_t at(std::size_t j, std::size_t k) const { return values[j * ids.size() + k]; }
    std::int64_t rank(std::size_t j, std::size_t k) const { return ranks[j * ids.size() + k]; }
};

RankDistanceMatrix rank_distance_matrix(const RecordMatrix& records, const RecordIds& inconsistent);

// Agglomerative merge history. Leaves are 0..m-1 (matrix positions); merge t
// creates cluster id m + t. In each merge a < b.
struct Merge {
    std::size_t a = 0;
    std::size_t b = 0;
    double height = 0.0;
    std::size_t size = 0;
    bool operator==(const Merge&) const = default;
};

struct Dendrogram {
    std::size_t leaves = 0;
    std::vector<Merge> merges;

    // k clusters of leaf positions, each sorted; clusters ordered by their
    // smallest leaf. Requires 1 <= k <= leaves.
    std::vector<std::vector<std::size_t>> cut(std::size_t k) const;
};

// Average linkage over d_R. Linkage values are compared exactly as rationals;
// ties go to the pair with the smallest (cluster-a id, cluster-b id).
Dendrogram cluster_inconsistent(const RankDistanceMatrix& matrix);

// Average linkage over an arbitrary symmetric real matrix (m*m, row-major).
Dendrogram average_linkage(std::size_t m, const std::vector<double>& distances);

// Euclidean pairwise distances between the selected records.
std::vector<double> euclidean_matrix(const RecordMatrix& records, const RecordIds& ids);

// Pair-weighted mean of d_R over all within-cluster pairs of cut(k); 0 when
// every cluster is a singleton.
double within_cluster_mean(const Dendrogram& dendrogram, const RankDistanceMatrix& matrix, std::size_t k);

// Maximum-difference elbow: the k in [2, k_max] with the largest drop
// within_cluster_mean(k-1) - within_cluster_mean(k); ties go to the smaller k.
// The all-singleton cut k = m is never a candidate.
// Returns m when m < 3.
std::size_t recommend_cluster_count(const Dendrogram& dendrogram, const RankDistanceMatrix& matrix,
                                    std::size_t k_max);

inline constexpr std::size_t kDefaultClusterCount = 8;

}  // namespace hetlab::analytics
