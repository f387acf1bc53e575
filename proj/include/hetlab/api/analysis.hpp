#pragma once

#include "hetlab/analytics/clustering.hpp"
#include "hetlab/analytics/contrastive.hpp"
#include "hetlab/analytics/views.hpp"
#include "hetlab/session/store.hpp"

#include <memory>
#include <optional>
#include <string>

namespace hetlab::api {

enum class InputSource { Local, GeneratedDense, GeneratedSparse };
InputSource parse_input_source(const std::string& text);
std::string_view to_string(InputSource source);

// What the analysis of one run may see: the run's federated snapshots, the
// analyzed client's own updates, stand-alone model and local dataset.
struct RunContext {
    session::RunRecord run;
    fl::Network net;
    fl::Dataset local;

    RunContext(session::RunRecord r, fl::Dataset d);
};

std::shared_ptr<const RunContext> load_context(const session::Store& store, const std::string& run_id);

struct AnalysisRequest {
    int round = 1;
    InputSource source = InputSource::Local;
    std::optional<std::size_t> k;  // default: min(8, m)
    std::optional<double> alpha;   // default: 10
    std::size_t grid = 10;
    std::uint64_t seed = 0;  // input generation
};

struct Analysis {
    std::string run_id;
    AnalysisRequest request;
    std::size_t k = 0;  // effective cluster count (0 when m == 0)
    double alpha = analytics::kDefaultAlpha;
    std::size_t recommended_k = 0;
    std::optional<double> recommended_alpha;
    std::size_t k_max = 0;

    RecordMatrix records;
    std::optional<std::vector<int>> labels;  // local source only
    fl::Manifest manifest;
    analytics::ModelComparison comparison;
    std::optional<analytics::RankDistanceMatrix> matrix;
    std::optional<analytics::Dendrogram> dendrogram;
    analytics::Projection2D projection;
    analytics::ClusterOverview overview;
    std::vector<std::string> warnings;

    const analytics::InconsistencyReport& report() const { return comparison.report; }
    std::size_t m() const { return comparison.report.ids.size(); }
    RecordIds consistent_ids() const;
    // Members of cluster `cid` (a ClusterSummary id); throws not-found.
    const RecordIds& cluster(std::size_t cid) const;
};

// Cluster-count search range for the elbow.
inline constexpr std::size_t kElbowMax = 10;

// find-inconsistent -> rank distances -> average linkage -> cut(k) ->
// ccPCA(inconsistent vs consistent, alpha) -> cluster summaries.
Analysis analyze(const RunContext& ctx, const AnalysisRequest& request);

}  // namespace hetlab::api
