#include "hetlab/analytics/views.hpp"

#include "hetlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hetlab::analytics {

ModelComparison compare_models(const fl::Network& net, const fl::ParamVector& standalone,
                               const fl::ParamVector& federated, const RecordMatrix& records, int round) {
    ModelComparison out;
    out.standalone = net.predict(standalone, records);
    out.federated = net.predict(federated, records);
    out.report.round = round;
    for (std::size_t i = 0; i < out.standalone.size(); ++i) {
        if (out.standalone[i] == out.federated[i]) continue;
        out.report.ids.push_back(i);
        out.report.standalone_labels.push_back(out.standalone[i]);
        out.report.federated_labels.push_back(out.federated[i]);
    }
    return out;
}

InconsistencyReport find_inconsistent(const fl::Network& net, const fl::ParamVector& standalone,
                                      const fl::ParamVector& federated, const RecordMatrix& records, int round) {
    return compare_models(net, standalone, federated, records, round).report;
}

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::size_t cell_of(double v, double lo, double hi, std::size_t size) {
    if (!(hi > lo)) return 0;
    const double t = (v - lo) / (hi - lo) * static_cast<double>(size);
    if (!(t > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(t), size - 1);
}

Point2 point_of(const Eigen::MatrixX2d& points, std::size_t row) {
    return {points(static_cast<Eigen::Index>(row), 0), points(static_cast<Eigen::Index>(row), 1)};
}

}  // namespace

std::vector<Point2> convex_hull(std::vector<Point2> points) {
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    if (points.size() < 3) return points;
    std::vector<Point2> hull(2 * points.size());
    std::size_t k = 0;
    for (const auto& p : points) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
        const auto& p = points[i];
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    hull.resize(k - 1);
    return hull;
}

GridBounds bounds_of(const Eigen::MatrixX2d& points) {
    GridBounds b;
    if (points.rows() == 0) return b;
    b.min_x = points.col(0).minCoeff();
    b.max_x = points.col(0).maxCoeff();
    b.min_y = points.col(1).minCoeff();
    b.max_y = points.col(1).maxCoeff();
    return b;
}

DensityGrid density_grid(const Eigen::MatrixX2d& points, const GridBounds& bounds, std::size_t size,
                         const RecordIds* rows) {
    if (size < 1) throw bad_input("density grid size must be >= 1");
    DensityGrid g;
    g.size = size;
    g.bounds = bounds;
    g.counts.assign(size * size, 0);
    auto add = [&](std::size_t r) {
        const auto p = point_of(points, r);
        const auto gx = cell_of(p.x, bounds.min_x, bounds.max_x, size);
        const auto gy = cell_of(p.y, bounds.min_y, bounds.max_y, size);
        ++g.counts[gy * size + gx];
    };
    if (rows) {
        for (auto r : *rows) add(r);
    } else {
        for (Eigen::Index r = 0; r < points.rows(); ++r) add(static_cast<std::size_t>(r));
    }
    return g;
}

DimensionDistribution dimension_distribution(const RecordMatrix& records, const fl::DimensionRange& range,
                                             const RecordIds& inconsistent, const RecordIds* cluster,
                                             std::size_t dim, std::size_t bins, AxisScale scale) {
    if (dim >= static_cast<std::size_t>(records.cols()))
        throw bad_input("dimension-distribution: dimension " + std::to_string(dim) + " out of range");
    if (bins < 1) throw bad_input("dimension-distribution: bins must be >= 1");
    DimensionDistribution out;
    out.dim = dim;
    out.lo = range.lo;
    out.hi = range.hi;
    out.scale = scale;
    for (std::size_t b = 0; b <= bins; ++b)
        out.edges.push_back(range.lo + (range.hi - range.lo) * static_cast<double>(b) / static_cast<double>(bins));

    const auto n = static_cast<std::size_t>(records.rows());
    std::vector<bool> is_inconsistent(n, false);
    for (auto i : inconsistent) is_inconsistent.at(i) = true;

    auto histogram = [&](auto&& selected) {
        Histogram h;
        h.percent.assign(bins, 0.0);
        std::vector<std::size_t> counts(bins, 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (!selected(i)) continue;
            const double v = records(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(dim));
            ++counts[cell_of(v, range.lo, range.hi, bins)];
            ++h.count;
        }
        h.empty = h.count == 0;
        if (!h.empty)
            for (std::size_t b = 0; b < bins; ++b)
                h.percent[b] = 100.0 * static_cast<double>(counts[b]) / static_cast<double>(h.count);
        return h;
    };

    out.all = histogram([](std::size_t) { return true; });
    if (cluster) {
        std::vector<bool> in_cluster(n, false);
        for (auto i : *cluster) in_cluster.at(i) = true;
        out.inconsistent = histogram([&](std::size_t i) { return static_cast<bool>(in_cluster[i]); });
    } else {
        out.inconsistent = histogram([&](std::size_t i) { return static_cast<bool>(is_inconsistent[i]); });
    }
    out.consistent = histogram([&](std::size_t i) { return !is_inconsistent[i]; });
    return out;
}

ClusterOverview summarize_clusters(const Dendrogram& dendrogram, std::size_t k, const RecordIds& matrix_ids,
                                   const std::optional<std::vector<int>>& labels,
                                   const std::vector<int>& federated_predictions, const Projection2D& projection,
                                   std::size_t grid) {
    if (matrix_ids.size() != dendrogram.leaves) throw bad_input("summarize-clusters: id count mismatch");
    ClusterOverview out;
    out.density = density_grid(projection.points, bounds_of(projection.points), grid);
    if (dendrogram.leaves == 0) return out;
    if (k < 1 || k > dendrogram.leaves)
        throw bad_input("cluster count " + std::to_string(k) + " exceeds the " + std::to_string(dendrogram.leaves) +
                        " inconsistent records");
    const auto parts = dendrogram.cut(k);
    for (std::size_t c = 0; c < parts.size(); ++c) {
        ClusterSummary s;
        s.id = c;
        std::vector<Point2> pts;
        std::size_t correct = 0;
        for (auto leaf : parts[c]) {
            const auto id = matrix_ids[leaf];
            s.members.push_back(id);
            pts.push_back(point_of(projection.points, id));
            if (labels && (*labels)[id] == federated_predictions[id]) ++correct;
        }
        std::sort(s.members.begin(), s.members.end());
        if (labels) s.federated_accuracy = static_cast<double>(correct) / static_cast<double>(s.members.size());
        s.hull = convex_hull(std::move(pts));
        out.clusters.push_back(std::move(s));
    }
    std::stable_sort(out.clusters.begin(), out.clusters.end(), [](const ClusterSummary& a, const ClusterSummary& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a.id < b.id;
    });
    return out;
}

const LabelCell& LabelMatrix::cell(int federated_label, int true_label) const {
    const auto r = std::find(rows.begin(), rows.end(), federated_label);
    const auto c = std::find(columns.begin(), columns.end(), true_label);
    if (r == rows.end() || c == columns.end()) throw not_found("label-matrix: no such cell");
    return cells[static_cast<std::size_t>(r - rows.begin()) * columns.size() +
                 static_cast<std::size_t>(c - columns.begin())];
}

LabelMatrix label_matrix(const std::vector<int>& labels, const std::vector<int>& federated_predictions,
                         const Projection2D& projection, const RecordIds& cluster_members, std::size_t grid) {
    if (labels.size() != federated_predictions.size() ||
        labels.size() != static_cast<std::size_t>(projection.points.rows()))
        throw bad_input("label-matrix: labels, predictions and projection disagree in size");
    LabelMatrix out;
    out.grid = grid;
    const std::set<int> truth(labels.begin(), labels.end());
    out.columns.assign(truth.begin(), truth.end());
    out.rows = out.columns;
    const std::set<int> predicted(federated_predictions.begin(), federated_predictions.end());
    for (int p : predicted)
        if (!truth.contains(p)) out.rows.push_back(p);

    const std::set<std::size_t> in_cluster(cluster_members.begin(), cluster_members.end());
    out.cells.resize(out.rows.size() * out.columns.size());
    for (std::size_t r = 0; r < out.rows.size(); ++r)
        for (std::size_t c = 0; c < out.columns.size(); ++c) {
            auto& cell = out.cells[r * out.columns.size() + c];
            cell.federated_label = out.rows[r];
            cell.true_label = out.columns[c];
        }
    auto row_index = [&](int label) {
        return static_cast<std::size_t>(std::find(out.rows.begin(), out.rows.end(), label) - out.rows.begin());
    };
    auto col_index = [&](int label) {
        return static_cast<std::size_t>(std::find(out.columns.begin(), out.columns.end(), label) -
                                        out.columns.begin());
    };
    std::vector<RecordIds> per_column(out.columns.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& cell = out.cells[row_index(federated_predictions[i]) * out.columns.size() + col_index(labels[i])];
        cell.members.push_back(i);
        cell.scatter.push_back(point_of(projection.points, i));
        ++cell.local_count;
        if (in_cluster.contains(i)) ++cell.cluster_count;
        per_column[col_index(labels[i])].push_back(i);
    }
    out.bounds = bounds_of(projection.points);
    for (const auto& ids : per_column) out.column_density.push_back(density_grid(projection.points, out.bounds, grid, &ids));
    std::vector<Point2> hull_points;
    for (auto i : cluster_members) hull_points.push_back(point_of(projection.points, i));
    out.cluster_hull = convex_hull(std::move(hull_points));
    return out;
}

MetricSeries round_metrics(std::span<const fl::RoundSnapshot> snapshots) {
    MetricSeries out;
    for (const auto& s : snapshots) {
        out.train_loss.push_back(s.metrics.train_loss);
        out.test_accuracy.push_back(s.metrics.test_accuracy);
        out.total_accuracy.push_back(s.metrics.total_accuracy);
    }
    return out;
}

}  // namespace hetlab::analytics
