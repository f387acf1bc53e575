#pragma once

#include "hetlab/analytics/contrastive.hpp"
#include "hetlab/analytics/param_projection.hpp"
#include "hetlab/analytics/views.hpp"
#include "hetlab/api/analysis.hpp"
#include "hetlab/session/tracking.hpp"

namespace hetlab::api {

using session::json;

json points_json(const Eigen::MatrixX2d& points);
json hull_json(const std::vector<analytics::Point2>& hull);
json grid_json(const analytics::DensityGrid& grid);
json report_json(const analytics::InconsistencyReport& report);
json projection_json(const analytics::Projection2D& projection);
json cluster_json(const analytics::ClusterSummary& cluster);
json analysis_json(const Analysis& analysis);
json histogram_json(const analytics::Histogram& h);
json distribution_json(const analytics::DimensionDistribution& d);
json label_matrix_json(const analytics::LabelMatrix& lm);
json trajectory_json(const analytics::ParamTrajectory& t);
json metrics_json(const session::RunRecord& run);
json annotation_json(const session::Annotation& a);
json track_json(const session::TrackResult& t);
json matrix_json(const Eigen::MatrixXd& m);

// Throws Error(Numeric) naming the first non-finite number, so NaN and
// infinity never reach a response.
void require_finite(const json& j, const std::string& where = "");

}  // namespace hetlab::api
