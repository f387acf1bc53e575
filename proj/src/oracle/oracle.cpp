#include "hetlab/oracle/oracle.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hetlab::oracle {

std::vector<std::int64_t> rank_distance_matrix(const Matrix& records, const std::vector<std::size_t>& ids) {
    const auto n = static_cast<std::size_t>(records.rows());
    const std::size_t m = ids.size();
    auto dist = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < records.cols(); ++c) {
            const double d = records(static_cast<Eigen::Index>(a), c) - records(static_cast<Eigen::Index>(b), c);
            s += d * d;
        }
        return std::sqrt(s);
    };
    auto rank = [&](std::size_t j, std::size_t k) {
        const double reference = dist(j, k);
        std::int64_t r = 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == j || i == k) continue;
            const double d = dist(j, i);
            if (d < reference || (d == reference && i < k)) ++r;
        }
        return r;
    };
    std::vector<std::int64_t> out(m * m, 0);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
            if (a != b) out[a * m + b] = rank(ids[a], ids[b]) * rank(ids[b], ids[a]);
    return out;
}

namespace {

template <class T>
std::vector<OracleMerge> naive(std::size_t m, const std::vector<T>& d) {
    if (d.size() != m * m) throw std::invalid_argument("oracle: matrix size mismatch");
    struct Cluster {
        std::size_t id;
        std::vector<std::size_t> members;
    };
    std::vector<Cluster> active;
    for (std::size_t i = 0; i < m; ++i) active.push_back({i, {i}});
    std::vector<OracleMerge> merges;
    std::size_t next_id = m;
    while (active.size() > 1) {
        bool have = false;
        T best_sum{};
        std::int64_t best_pairs = 1;
        std::size_t best_a = 0, best_b = 0, best_x = 0, best_y = 0;
        for (std::size_t x = 0; x < active.size(); ++x)
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                T sum{};
                for (auto i : active[x].members)
                    for (auto j : active[y].members) sum += d[i * m + j];
                const auto pairs = static_cast<std::int64_t>(active[x].members.size() * active[y].members.size());
                const std::size_t a = std::min(active[x].id, active[y].id);
                const std::size_t b = std::max(active[x].id, active[y].id);
                bool better = false;
                if (!have) {
                    better = true;
                } else if constexpr (std::is_integral_v<T>) {
                    const auto lhs = static_cast<__int128>(sum) * best_pairs;
                    const auto rhs = static_cast<__int128>(best_sum) * pairs;
                    better = lhs < rhs || (lhs == rhs && std::pair(a, b) < std::pair(best_a, best_b));
                } else {
                    const double lhs = sum / static_cast<double>(pairs);
                    const double rhs = best_sum / static_cast<double>(best_pairs);
                    better = lhs < rhs || (lhs == rhs && std::pair(a, b) < std::pair(best_a, best_b));
                }
                if (better) {
                    have = true;
                    best_sum = sum;
                    best_pairs = pairs;
                    best_a = a;
                    best_b = b;
                    best_x = x;
                    best_y = y;
                }
            }
        OracleMerge merge{best_a, best_b, static_cast<double>(best_sum) / static_cast<double>(best_pairs), 0};
        Cluster joined{next_id++, active[best_x].members};
        joined.members.insert(joined.members.end(), active[best_y].members.begin(), active[best_y].members.end());
        merge.size = joined.members.size();
        merges.push_back(merge);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_y));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_x));
        active.push_back(std::move(joined));
    }
    return merges;
}

}  // namespace

std::vector<OracleMerge> naive_average_linkage(std::size_t m, const std::vector<std::int64_t>& distances) {
    return naive(m, distances);
}

std::vector<OracleMerge> naive_average_linkage(std::size_t m, const std::vector<double>& distances) {
    return naive(m, distances);
}

Matrix exact_right_singular_vectors(const Matrix& matrix, Eigen::Index components) {
    Eigen::JacobiSVD<Matrix> svd(matrix, Eigen::ComputeFullV);
    return svd.matrixV().leftCols(components);
}

Matrix exact_pca_basis(const Matrix& data, Eigen::Index components) {
    const Matrix centered = data.rowwise() - data.colwise().mean();
    return exact_right_singular_vectors(centered, components);
}

Eigen::VectorXd principal_angle_cosines(const Matrix& a, const Matrix& b) {
    const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(a.rows(), a.cols());
    const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
    Eigen::JacobiSVD<Matrix> svd(qa.transpose() * qb);
    return svd.singularValues();
}

std::vector<double> weighted_mean(const std::vector<std::vector<double>>& vectors, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<double> out(vectors.front().size(), 0.0);
    for (std::size_t k = 0; k < vectors.size(); ++k)
        for (std::size_t p = 0; p < out.size(); ++p) out[p] += (weights[k] / total) * vectors[k][p];
    return out;
}

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x, double h) {
    std::vector<double> grad(x.size());
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace hetlab::oracle
