#pragma once

#include "hetlab/types.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace hetlab::analytics {

enum class ProjectionMethod { Pca, Rpca, Cpca };
std::string_view to_string(ProjectionMethod method);

struct Projection2D {
    Eigen::MatrixX2d points;  // one row per projected record
    Eigen::MatrixX2d basis;   // D x 2, orthonormal columns
    Eigen::RowVectorXd center;
    ProjectionMethod method = ProjectionMethod::Pca;
    std::optional<double> alpha;
};

// Sample covariance (divisor max(n-1, 1)) of the selected rows around their own mean.
Eigen::MatrixXd covariance(const RecordMatrix& records, const RecordIds& ids);

// Top-2 eigenvectors of C_target - alpha * C_background; every record is
// projected after centering on the target mean.
Projection2D ccpca_project(const RecordMatrix& records, const RecordIds& target, const RecordIds& background,
                           double alpha);

// Plain PCA of `target`, projecting every record.
Projection2D pca_project(const RecordMatrix& records, const RecordIds& target);

// Between-set centroid distance squared over the mean within-set 2D variance.
// -infinity when the within-set variance vanishes.
double separation_score(const Projection2D& projection, const RecordIds& target, const RecordIds& background);

// Candidate contrast values: 0 followed by 40 log-spaced values over [1e-3, 1e3].
std::vector<double> alpha_grid();

// Grid search maximizing separation_score; ties go to the smallest alpha.
double recommend_alpha(const RecordMatrix& records, const RecordIds& target, const RecordIds& background);

struct DimensionWeights {
    Eigen::VectorXd first;
    Eigen::VectorXd second;
};

DimensionWeights dimension_weights(const Projection2D& projection);

inline constexpr double kDefaultAlpha = 10.0;

}  // namespace hetlab::analytics
