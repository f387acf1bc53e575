#include "hetlab/api/json_views.hpp"

#include "hetlab/error.hpp"

#include <cmath>

namespace hetlab::api {

json points_json(const Eigen::MatrixX2d& points) {
    json out = json::array();
    for (Eigen::Index i = 0; i < points.rows(); ++i) out.push_back({points(i, 0), points(i, 1)});
    return out;
}

json hull_json(const std::vector<analytics::Point2>& hull) {
    json out = json::array();
    for (const auto& p : hull) out.push_back({p.x, p.y});
    return out;
}

json grid_json(const analytics::DensityGrid& grid) {
    return {{"size", grid.size},
            {"bounds",
             {{"min_x", grid.bounds.min_x},
              {"max_x", grid.bounds.max_x},
              {"min_y", grid.bounds.min_y},
              {"max_y", grid.bounds.max_y}}},
            {"counts", grid.counts}};
}

json report_json(const analytics::InconsistencyReport& report) {
    return {{"round", report.round},
            {"m", report.ids.size()},
            {"ids", report.ids},
            {"standalone_labels", report.standalone_labels},
            {"federated_labels", report.federated_labels}};
}

json projection_json(const analytics::Projection2D& p) {
    std::vector<double> first(p.basis.col(0).data(), p.basis.col(0).data() + p.basis.rows());
    std::vector<double> second(p.basis.col(1).data(), p.basis.col(1).data() + p.basis.rows());
    std::vector<double> center(p.center.data(), p.center.data() + p.center.size());
    return {{"method", analytics::to_string(p.method)},
            {"alpha", p.alpha ? json(*p.alpha) : json(nullptr)},
            {"basis", {first, second}},
            {"center", center},
            {"points", points_json(p.points)}};
}

json cluster_json(const analytics::ClusterSummary& c) {
    return {{"id", c.id},
            {"size", c.size()},
            {"members", c.members},
            {"federated_accuracy", c.federated_accuracy ? json(*c.federated_accuracy) : json(nullptr)},
            {"hull", hull_json(c.hull)}};
}

json analysis_json(const Analysis& a) {
    json clusters = json::array();
    for (const auto& c : a.overview.clusters) clusters.push_back(cluster_json(c));
    return {{"run", a.run_id},
            {"round", a.request.round},
            {"input_source", to_string(a.request.source)},
            {"n", a.records.rows()},
            {"labeled", a.labels.has_value()},
            {"k", a.k},
            {"alpha", a.alpha},
            {"defaults", {{"k", analytics::kDefaultClusterCount}, {"alpha", analytics::kDefaultAlpha}}},
            {"recommended",
             {{"k", a.recommended_k},
              {"k_max", a.k_max},
              {"alpha", a.recommended_alpha ? json(*a.recommended_alpha) : json(nullptr)}}},
            {"inconsistency", report_json(a.report())},
            {"clusters", clusters},
            {"density", grid_json(a.overview.density)},
            {"projection", projection_json(a.projection)},
            {"warnings", a.warnings}};
}

json histogram_json(const analytics::Histogram& h) {
    return {{"percent", h.percent}, {"count", h.count}, {"empty", h.empty}};
}

json distribution_json(const analytics::DimensionDistribution& d) {
    return {{"dim", d.dim},
            {"lo", d.lo},
            {"hi", d.hi},
            {"scale", d.scale == analytics::AxisScale::Linear ? "linear" : "log"},
            {"edges", d.edges},
            {"all", histogram_json(d.all)},
            {"inconsistent", histogram_json(d.inconsistent)},
            {"consistent", histogram_json(d.consistent)}};
}

json label_matrix_json(const analytics::LabelMatrix& lm) {
    json cells = json::array();
    for (const auto& c : lm.cells) {
        std::vector<analytics::Point2> scatter = c.scatter;
        cells.push_back({{"federated_label", c.federated_label},
                         {"true_label", c.true_label},
                         {"members", c.members},
                         {"cluster_count", c.cluster_count},
                         {"local_count", c.local_count},
                         {"scatter", hull_json(scatter)}});
    }
    json density = json::array();
    for (const auto& g : lm.column_density) density.push_back(grid_json(g));
    return {{"rows", lm.rows},
            {"columns", lm.columns},
            {"grid", lm.grid},
            {"bounds",
             {{"min_x", lm.bounds.min_x}, {"max_x", lm.bounds.max_x}, {"min_y", lm.bounds.min_y}, {"max_y", lm.bounds.max_y}}},
            {"cells", cells},
            {"column_density", density},
            {"cluster_hull", hull_json(lm.cluster_hull)}};
}

json trajectory_json(const analytics::ParamTrajectory& t) {
    json cosines = json::array();
    for (const auto& c : t.cosines) cosines.push_back(c ? json(*c) : json(nullptr));
    json rounds = json::array();
    for (int r = t.from; r <= t.to; ++r) rounds.push_back(r);
    return {{"from", t.from},
            {"to", t.to},
            {"rounds", rounds},
            {"layer", t.layer},
            {"dims", t.dims},
            {"federated", points_json(t.federated)},
            {"local", points_json(t.local)},
            {"cosines", cosines}};
}

json metrics_json(const session::RunRecord& run) {
    json rounds = json::array(), loss = json::array(), test = json::array(), total = json::array();
    for (const auto& s : run.snapshots) {
        rounds.push_back(s.round);
        loss.push_back(s.metrics.train_loss);
        test.push_back(s.metrics.test_accuracy);
        total.push_back(s.metrics.total_accuracy);
    }
    return {{"run", run.id}, {"round", rounds}, {"train_loss", loss}, {"test_acc", test}, {"total_acc", total}};
}

json annotation_json(const session::Annotation& a) {
    return {{"id", a.id},
            {"round", a.round},
            {"record_ids", a.record_ids},
            {"note", a.note},
            {"source_cluster", a.source_cluster ? json(*a.source_cluster) : json(nullptr)}};
}

json track_json(const session::TrackResult& t) {
    json records = json::array();
    for (const auto& r : t.records)
        records.push_back({{"record_id", r.record_id},
                           {"standalone_label", r.standalone_label},
                           {"federated_label", r.federated_label},
                           {"inconsistent", r.inconsistent}});
    return {{"annotation", t.annotation_id},
            {"round", t.round},
            {"inconsistent_count", t.inconsistent_count},
            {"records", records}};
}

json matrix_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(row);
    }
    return out;
}

void require_finite(const json& j, const std::string& where) {
    if (j.is_number_float()) {
        if (!std::isfinite(j.get<double>())) throw numeric_error("non-finite value at " + (where.empty() ? "/" : where));
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) require_finite(j[i], where + "/" + std::to_string(i));
    } else if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) require_finite(it.value(), where + "/" + it.key());
    }
}

}  // namespace hetlab::api
