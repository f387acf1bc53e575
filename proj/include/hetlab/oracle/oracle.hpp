#pragma once

// Brute-force reference computations. Deliberately independent of the
// analytics implementation: nothing here includes or calls hetlab::analytics.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

namespace hetlab::oracle {

using Matrix = Eigen::MatrixXd;

// r_j(k) = 1 + #{i != j : d(j,i) < d(j,k) or (d(j,i) == d(j,k) and i < k)},
// d_R(j,k) = r_j(k) r_k(j). Returns the m*m row-major matrix.
std::vector<std::int64_t> rank_distance_matrix(const Matrix& records, const std::vector<std::size_t>& ids);

struct OracleMerge {
    std::size_t a = 0;
    std::size_t b = 0;
    double height = 0.0;
    std::size_t size = 0;
};

// O(m^3) average linkage recomputing every cluster-pair average from the
// original integer distances; ties take the smallest (id a, id b).
std::vector<OracleMerge> naive_average_linkage(std::size_t m, const std::vector<std::int64_t>& distances);

// Same, with real distances and plain floating-point averages.
std::vector<OracleMerge> naive_average_linkage(std::size_t m, const std::vector<double>& distances);

// Leading right singular vectors of the column-centered data via full Jacobi SVD.
Matrix exact_pca_basis(const Matrix& data, Eigen::Index components);
// Leading right singular vectors of `matrix` itself (no centering).
Matrix exact_right_singular_vectors(const Matrix& matrix, Eigen::Index components);

// Cosines of the principal angles between the column spans of a and b.
Eigen::VectorXd principal_angle_cosines(const Matrix& a, const Matrix& b);

// sum_k (w_k / sum w) v_k, accumulated in index order.
std::vector<double> weighted_mean(const std::vector<std::vector<double>>& vectors, const std::vector<double>& weights);

// Central differences with step h.
std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x, double h);

}  // namespace hetlab::oracle
