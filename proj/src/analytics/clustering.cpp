#include "hetlab/analytics/clustering.hpp"

#include "hetlab/error.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace hetlab::analytics {

RankDistanceMatrix rank_distance_matrix(const RecordMatrix& records, const RecordIds& inconsistent) {
    const auto n = static_cast<std::size_t>(records.rows());
    const std::size_t m = inconsistent.size();
    if (m < 2) throw bad_input("rank-distance: at least two inconsistent records are required");
    {
        std::set<std::size_t> seen;
        for (auto id : inconsistent) {
            if (id >= n) throw bad_input("rank-distance: record id " + std::to_string(id) + " out of range");
            if (!seen.insert(id).second) throw bad_input("rank-distance: duplicate record id " + std::to_string(id));
        }
    }

    RankDistanceMatrix out;
    out.ids = inconsistent;
    out.context_size = n;
    out.ranks.assign(m * m, 0);
    out.values.assign(m * m, 0);

    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(n);
    std::vector<std::int64_t> position(n, 0);
    for (std::size_t j = 0; j < m; ++j) {
        const auto row_j = records.row(static_cast<Eigen::Index>(inconsistent[j]));
        order.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (i == inconsistent[j]) continue;
            order.emplace_back((records.row(static_cast<Eigen::Index>(i)) - row_j).squaredNorm(), i);
        }
        std::sort(order.begin(), order.end());
        for (std::size_t r = 0; r < order.size(); ++r) position[order[r].second] = static_cast<std::int64_t>(r + 1);
        for (std::size_t k = 0; k < m; ++k)
            if (k != j) out.ranks[j * m + k] = position[inconsistent[k]];
    }
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < m; ++k)
            if (j != k) out.values[j * m + k] = out.ranks[j * m + k] * out.ranks[k * m + j];
    return out;
}

std::vector<std::vector<std::size_t>> Dendrogram::cut(std::size_t k) const {
    if (k < 1 || k > leaves) throw bad_input("cut: cluster count " + std::to_string(k) + " outside [1, " +
                                             std::to_string(leaves) + "]");
    // Union-find over cluster ids; apply the first leaves - k merges.
    std::vector<std::size_t> parent(leaves + merges.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t t = 0; t + k < leaves; ++t) {
        const auto id = leaves + t;
        parent[find(merges[t].a)] = id;
        parent[find(merges[t].b)] = id;
    }
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::size_t> slot(parent.size(), static_cast<std::size_t>(-1));
    for (std::size_t leaf = 0; leaf < leaves; ++leaf) {
        const auto root = find(leaf);
        if (slot[root] == static_cast<std::size_t>(-1)) {
            slot[root] = clusters.size();
            clusters.emplace_back();
        }
        clusters[slot[root]].push_back(leaf);
    }
    return clusters;
}

namespace {

// Exact comparison of a/x < b/y for integer sums and positive pair counts.
struct ExactLinkage {
    using Sum = std::int64_t;
    static bool less(Sum a, std::int64_t x, Sum b, std::int64_t y) {
        return static_cast<__int128>(a) * y < static_cast<__int128>(b) * x;
    }
    static bool equal(Sum a, std::int64_t x, Sum b, std::int64_t y) {
        return static_cast<__int128>(a) * y == static_cast<__int128>(b) * x;
    }
};

struct RealLinkage {
    using Sum = double;
    static bool less(Sum a, std::int64_t x, Sum b, std::int64_t y) {
        return a / static_cast<double>(x) < b / static_cast<double>(y);
    }
    static bool equal(Sum a, std::int64_t x, Sum b, std::int64_t y) {
        return a / static_cast<double>(x) == b / static_cast<double>(y);
    }
};

// Generic average-linkage agglomeration with a cached nearest partner per
// active cluster. Sums of the original pairwise distances are maintained so
// the linkage of clusters A, B is sum(A, B) / (|A| |B|).
template <class Linkage>
Dendrogram agglomerate(std::size_t m, std::vector<typename Linkage::Sum> sums) {
    using Sum = typename Linkage::Sum;
    Dendrogram out;
    out.leaves = m;
    if (m < 2) return out;

    std::vector<std::size_t> cluster_id(m);
    std::iota(cluster_id.begin(), cluster_id.end(), std::size_t{0});
    std::vector<std::int64_t> size(m, 1);
    std::vector<bool> active(m, true);
    constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::vector<std::size_t> partner(m, none);

    // Strict ordering on candidate pairs: linkage, then (min id, max id).
    auto pair_less = [&](std::size_t x1, std::size_t y1, std::size_t x2, std::size_t y2) {
        const Sum s1 = sums[x1 * m + y1];
        const Sum s2 = sums[x2 * m + y2];
        const std::int64_t n1 = size[x1] * size[y1];
        const std::int64_t n2 = size[x2] * size[y2];
        if (Linkage::less(s1, n1, s2, n2)) return true;
        if (!Linkage::equal(s1, n1, s2, n2)) return false;
        const auto a1 = std::minmax(cluster_id[x1], cluster_id[y1]);
        const auto a2 = std::minmax(cluster_id[x2], cluster_id[y2]);
        return a1 < a2;
    };
    auto refresh = [&](std::size_t x) {
        partner[x] = none;
        for (std::size_t y = 0; y < m; ++y) {
            if (y == x || !active[y]) continue;
            if (partner[x] == none || pair_less(x, y, x, partner[x])) partner[x] = y;
        }
    };
    for (std::size_t x = 0; x < m; ++x) refresh(x);

    for (std::size_t t = 0; t + 1 < m; ++t) {
        std::size_t best = none;
        for (std::size_t x = 0; x < m; ++x) {
            if (!active[x] || partner[x] == none) continue;
            if (best == none || pair_less(x, partner[x], best, partner[best])) best = x;
        }
        std::size_t p = best;
        std::size_t q = partner[best];
        if (cluster_id[q] < cluster_id[p]) std::swap(p, q);

        Merge merge;
        merge.a = cluster_id[p];
        merge.b = cluster_id[q];
        merge.height = static_cast<double>(sums[p * m + q]) / static_cast<double>(size[p] * size[q]);
        merge.size = static_cast<std::size_t>(size[p] + size[q]);
        out.merges.push_back(merge);

        // The merged cluster lives in slot p.
        active[q] = false;
        for (std::size_t x = 0; x < m; ++x) {
            if (!active[x] || x == p) continue;
            sums[p * m + x] += sums[q * m + x];
            sums[x * m + p] = sums[p * m + x];
        }
        size[p] += size[q];
        cluster_id[p] = m + t;

        for (std::size_t x = 0; x < m; ++x) {
            if (!active[x] || x == p) continue;
            if (partner[x] == p || partner[x] == q) {
                refresh(x);
            } else if (pair_less(x, p, x, partner[x])) {
                partner[x] = p;
            }
        }
        refresh(p);
    }
    return out;
}

}  // namespace

Dendrogram cluster_inconsistent(const RankDistanceMatrix& matrix) {
    return agglomerate<ExactLinkage>(matrix.size(), matrix.values);
}

Dendrogram average_linkage(std::size_t m, const std::vector<double>& distances) {
    if (distances.size() != m * m) throw bad_input("average-linkage: matrix size mismatch");
    return agglomerate<RealLinkage>(m, distances);
}

std::vector<double> euclidean_matrix(const RecordMatrix& records, const RecordIds& ids) {
    const std::size_t m = ids.size();
    std::vector<double> out(m * m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = j + 1; k < m; ++k) {
            const double d = (records.row(static_cast<Eigen::Index>(ids[j])) -
                              records.row(static_cast<Eigen::Index>(ids[k])))
                                 .norm();
            out[j * m + k] = out[k * m + j] = d;
        }
    return out;
}

double within_cluster_mean(const Dendrogram& dendrogram, const RankDistanceMatrix& matrix, std::size_t k) {
    std::int64_t total = 0;
    std::int64_t pairs = 0;
    for (const auto& cluster : dendrogram.cut(k))
        for (std::size_t i = 0; i < cluster.size(); ++i)
            for (std::size_t j = i + 1; j < cluster.size(); ++j) {
                total += matrix.at(cluster[i], cluster[j]);
                ++pairs;
            }
    return pairs == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(pairs);
}

std::size_t recommend_cluster_count(const Dendrogram& dendrogram, const RankDistanceMatrix& matrix,
                                    std::size_t k_max) {
    const std::size_t m = dendrogram.leaves;
    if (m < 3) return m;
    if (k_max < 2 || k_max > m)
        throw bad_input("recommend-cluster-count: k-max must be in [2, " + std::to_string(m) + "]");
    std::size_t best_k = 2;
    double best_drop = 0.0;
    double previous = within_cluster_mean(dendrogram, matrix, 1);
    // k = m leaves no within-cluster pair, so it has no statistic to drop to
    for (std::size_t k = 2; k <= std::min(k_max, m - 1); ++k) {
        const double value = within_cluster_mean(dendrogram, matrix, k);
        const double drop = previous - value;
        if (k == 2 || drop > best_drop) {
            best_drop = drop;
            best_k = k;
        }
        previous = value;
    }
    return best_k;
}

}  // namespace hetlab::analytics
