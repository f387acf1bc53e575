#pragma once

#include "hetlab/analytics/clustering.hpp"
#include "hetlab/analytics/contrastive.hpp"
#include "hetlab/fl/dataset.hpp"
#include "hetlab/fl/federation.hpp"
#include "hetlab/fl/model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace hetlab::analytics {

struct InconsistencyReport {
    int round = 0;
    RecordIds ids;  // strictly increasing
    std::vector<int> standalone_labels;
    std::vector<int> federated_labels;

    std::size_t size() const { return ids.size(); }
};

struct ModelComparison {
    std::vector<int> standalone;  // prediction per record
    std::vector<int> federated;
    InconsistencyReport report;
};

ModelComparison compare_models(const fl::Network& net, const fl::ParamVector& standalone,
                               const fl::ParamVector& federated, const RecordMatrix& records, int round = 0);

InconsistencyReport find_inconsistent(const fl::Network& net, const fl::ParamVector& standalone,
                                      const fl::ParamVector& federated, const RecordMatrix& records, int round = 0);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    auto operator<=>(const Point2&) const = default;
};

// Andrew's monotone chain; counter-clockwise without collinear points,
// starting from the lowest-x (then lowest-y) vertex. One distinct point gives a
// single vertex, collinear input gives the two extreme points.
std::vector<Point2> convex_hull(std::vector<Point2> points);

struct GridBounds {
    double min_x = 0.0;
    double max_x = 0.0;
    double min_y = 0.0;
    double max_y = 0.0;
};

struct DensityGrid {
    std::size_t size = 0;
    GridBounds bounds;
    std::vector<std::size_t> counts;  // row-major, counts[gy * size + gx]
};

GridBounds bounds_of(const Eigen::MatrixX2d& points);
// Counts of the selected rows (all rows when `rows` is null).
DensityGrid density_grid(const Eigen::MatrixX2d& points, const GridBounds& bounds, std::size_t size,
                         const RecordIds* rows = nullptr);

enum class AxisScale { Linear, Log };

struct Histogram {
    std::vector<double> percent;
    std::size_t count = 0;
    bool empty = true;
};

struct DimensionDistribution {
    std::size_t dim = 0;
    double lo = 0.0;
    double hi = 0.0;
    AxisScale scale = AxisScale::Linear;
    std::vector<double> edges;  // bins + 1
    Histogram all;
    Histogram inconsistent;  // the cluster members when a cluster is given
    Histogram consistent;
};

// Percentage histograms over [lo, hi] of dimension `dim`. The axis scale is
// carried through for presentation only.
DimensionDistribution dimension_distribution(const RecordMatrix& records, const fl::DimensionRange& range,
                                             const RecordIds& inconsistent, const RecordIds* cluster,
                                             std::size_t dim, std::size_t bins, AxisScale scale);

struct ClusterSummary {
    std::size_t id = 0;
    RecordIds members;
    std::optional<double> federated_accuracy;
    std::vector<Point2> hull;

    std::size_t size() const { return members.size(); }
};

struct ClusterOverview {
    std::vector<ClusterSummary> clusters;  // size descending, then id
    DensityGrid density;                   // all records, shared by the glyphs
};

// Clusters of cut(k) mapped back to record ids (matrix order) with their
// federated accuracy, hull in projection space and the shared density grid.
ClusterOverview summarize_clusters(const Dendrogram& dendrogram, std::size_t k, const RecordIds& matrix_ids,
                                   const std::optional<std::vector<int>>& labels,
                                   const std::vector<int>& federated_predictions, const Projection2D& projection,
                                   std::size_t grid);

struct LabelCell {
    int federated_label = 0;
    int true_label = 0;
    RecordIds members;
    std::size_t cluster_count = 0;  // members inside the selected cluster
    std::size_t local_count = 0;    // all local records in the cell
    std::vector<Point2> scatter;
};

struct LabelMatrix {
    std::vector<int> rows;     // ground-truth labels first, then extra predicted labels
    std::vector<int> columns;  // ground-truth labels
    std::vector<LabelCell> cells;  // rows.size() x columns.size(), row-major
    std::vector<DensityGrid> column_density;
    GridBounds bounds;
    std::size_t grid = 0;
    std::vector<Point2> cluster_hull;

    const LabelCell& cell(int federated_label, int true_label) const;
};

LabelMatrix label_matrix(const std::vector<int>& labels, const std::vector<int>& federated_predictions,
                         const Projection2D& projection, const RecordIds& cluster_members, std::size_t grid);

struct MetricSeries {
    std::vector<double> train_loss;
    std::vector<double> test_accuracy;
    std::vector<double> total_accuracy;
};

MetricSeries round_metrics(std::span<const fl::RoundSnapshot> snapshots);

}  // namespace hetlab::analytics
