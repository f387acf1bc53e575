#include "hetlab/analytics/contrastive.hpp"

#include "hetlab/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace hetlab::analytics {

std::string_view to_string(ProjectionMethod method) {
    switch (method) {
        case ProjectionMethod::Pca: return "pca";
        case ProjectionMethod::Rpca: return "rpca";
        case ProjectionMethod::Cpca: return "cpca";
    }
    return "pca";
}

namespace {

Eigen::RowVectorXd row_mean(const RecordMatrix& records, const RecordIds& ids) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(records.cols());
    for (auto i : ids) mean += records.row(static_cast<Eigen::Index>(i));
    return mean / static_cast<double>(ids.size());
}

void check_ids(const RecordMatrix& records, const RecordIds& ids, const char* what) {
    if (ids.size() < 2) throw bad_input(std::string("ccpca: ") + what + " set needs at least two records");
    for (auto i : ids)
        if (i >= static_cast<std::size_t>(records.rows()))
            throw bad_input(std::string("ccpca: ") + what + " id " + std::to_string(i) + " out of range");
}

// Flip each basis column so its largest-magnitude entry is positive.
void canonical_signs(Eigen::MatrixX2d& basis) {
    for (int c = 0; c < 2; ++c) {
        Eigen::Index arg = 0;
        basis.col(c).cwiseAbs().maxCoeff(&arg);
        if (basis(arg, c) < 0.0) basis.col(c) = -basis.col(c);
    }
}

Projection2D project_with(const Eigen::MatrixXd& contrast, const RecordMatrix& records,
                          const Eigen::RowVectorXd& center) {
    if (contrast.rows() < 2) throw bad_input("ccpca: at least two dimensions are required");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(contrast);
    if (solver.info() != Eigen::Success) throw numeric_error("ccpca: eigen-decomposition failed");
    const Eigen::Index d = contrast.rows();
    Projection2D out;
    out.basis.resize(d, 2);
    out.basis.col(0) = solver.eigenvectors().col(d - 1);
    out.basis.col(1) = solver.eigenvectors().col(d - 2);
    canonical_signs(out.basis);
    out.center = center;
    out.points = (records.rowwise() - center) * out.basis;
    return out;
}

}  // namespace

Eigen::MatrixXd covariance(const RecordMatrix& records, const RecordIds& ids) {
    const Eigen::RowVectorXd mean = row_mean(records, ids);
    Eigen::MatrixXd centered(static_cast<Eigen::Index>(ids.size()), records.cols());
    for (std::size_t r = 0; r < ids.size(); ++r)
        centered.row(static_cast<Eigen::Index>(r)) = records.row(static_cast<Eigen::Index>(ids[r])) - mean;
    const double divisor = std::max<double>(static_cast<double>(ids.size()) - 1.0, 1.0);
    return (centered.transpose() * centered) / divisor;
}

Projection2D ccpca_project(const RecordMatrix& records, const RecordIds& target, const RecordIds& background,
                           double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw bad_input("ccpca: alpha must be a finite value >= 0");
    check_ids(records, target, "target");
    check_ids(records, background, "background");
    Eigen::MatrixXd contrast = covariance(records, target);
    if (alpha > 0.0) contrast -= alpha * covariance(records, background);
    auto out = project_with(contrast, records, row_mean(records, target));
    out.method = ProjectionMethod::Cpca;
    out.alpha = alpha;
    return out;
}

Projection2D pca_project(const RecordMatrix& records, const RecordIds& target) {
    check_ids(records, target, "target");
    auto out = project_with(covariance(records, target), records, row_mean(records, target));
    out.method = ProjectionMethod::Pca;
    return out;
}

double separation_score(const Projection2D& projection, const RecordIds& target, const RecordIds& background) {
    auto stats = [&](const RecordIds& ids) {
        Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
        for (auto i : ids) mean += projection.points.row(static_cast<Eigen::Index>(i));
        mean /= static_cast<double>(ids.size());
        double variance = 0.0;
        for (auto i : ids) variance += (projection.points.row(static_cast<Eigen::Index>(i)) - mean).squaredNorm();
        variance /= static_cast<double>(ids.size());
        return std::pair{mean, variance};
    };
    const auto [mean_t, var_t] = stats(target);
    const auto [mean_b, var_b] = stats(background);
    const double within = 0.5 * (var_t + var_b);
    if (!(within > 0.0)) return -std::numeric_limits<double>::infinity();
    return (mean_t - mean_b).squaredNorm() / within;
}

std::vector<double> alpha_grid() {
    std::vector<double> grid{0.0};
    constexpr int steps = 40;
    for (int i = 0; i < steps; ++i) grid.push_back(std::pow(10.0, -3.0 + 6.0 * i / (steps - 1)));
    return grid;
}

double recommend_alpha(const RecordMatrix& records, const RecordIds& target, const RecordIds& background) {
    if (target.empty() || background.empty()) throw bad_input("recommend-alpha: sets must be non-empty");
    double best_alpha = 0.0;
    double best_score = -std::numeric_limits<double>::infinity();
    bool first = true;
    for (double alpha : alpha_grid()) {
        const double score = separation_score(ccpca_project(records, target, background, alpha), target, background);
        if (first || score > best_score) {
            best_score = score;
            best_alpha = alpha;
            first = false;
        }
    }
    return best_alpha;
}

DimensionWeights dimension_weights(const Projection2D& projection) {
    return {projection.basis.col(0).cwiseAbs(), projection.basis.col(1).cwiseAbs()};
}

}  // namespace hetlab::analytics
