#include "hetlab/api/analysis.hpp"

#include "hetlab/analytics/input_generation.hpp"
#include "hetlab/error.hpp"

#include <algorithm>
#include <numeric>

namespace hetlab::api {

InputSource parse_input_source(const std::string& text) {
    if (text == "local") return InputSource::Local;
    if (text == "generated-dense") return InputSource::GeneratedDense;
    if (text == "generated-sparse") return InputSource::GeneratedSparse;
    throw bad_input("input source must be local, generated-dense or generated-sparse, got '" + text + "'");
}

std::string_view to_string(InputSource source) {
    switch (source) {
        case InputSource::Local: return "local";
        case InputSource::GeneratedDense: return "generated-dense";
        case InputSource::GeneratedSparse: return "generated-sparse";
    }
    return "local";
}

RunContext::RunContext(session::RunRecord r, fl::Dataset d) : run(std::move(r)), net(run.spec), local(std::move(d)) {}

std::shared_ptr<const RunContext> load_context(const session::Store& store, const std::string& run_id) {
    auto run = store.load_run(run_id);
    auto data = store.load_dataset(run.analyzed().dataset_id);
    return std::make_shared<const RunContext>(std::move(run), std::move(data));
}

RecordIds Analysis::consistent_ids() const {
    RecordIds out;
    const auto& inc = report().ids;
    for (std::size_t i = 0; i < static_cast<std::size_t>(records.rows()); ++i)
        if (!std::binary_search(inc.begin(), inc.end(), i)) out.push_back(i);
    return out;
}

const RecordIds& Analysis::cluster(std::size_t cid) const {
    for (const auto& c : overview.clusters)
        if (c.id == cid) return c.members;
    throw not_found("cluster " + std::to_string(cid) + " does not exist in the current analysis (k = " +
                    std::to_string(k) + ")");
}

Analysis analyze(const RunContext& ctx, const AnalysisRequest& request) {
    const auto& snap = ctx.run.snapshot(request.round);
    if (request.grid < 1 || request.grid > 512) throw bad_input("grid size must be in [1, 512]");
    Analysis a;
    a.run_id = ctx.run.id;
    a.request = request;
    a.manifest = ctx.local.manifest;

    if (request.source == InputSource::Local) {
        a.records = ctx.local.records;
        a.labels = ctx.local.labels;
    } else {
        const std::size_t n = ctx.local.size();
        analytics::GenerationOptions opt;
        opt.sample_count = request.source == InputSource::GeneratedDense ? n : std::max<std::size_t>(1, n / 10);
        opt.seed = request.seed;
        auto gen = analytics::generate_inputs(ctx.local.records, ctx.local.manifest, opt);
        a.records = std::move(gen.records);
        a.warnings = std::move(gen.warnings);
    }
    const auto n = static_cast<std::size_t>(a.records.rows());
    if (n < 2) throw bad_input("analysis needs at least two records");

    a.comparison = analytics::compare_models(ctx.net, ctx.run.standalone, snap.federated, a.records, request.round);
    const std::size_t m = a.m();
    const auto& inconsistent = a.report().ids;

    if (request.k && (*request.k < 1 || *request.k > m))
        throw bad_input("cluster count " + std::to_string(*request.k) + " exceeds the " + std::to_string(m) +
                        " inconsistent records");
    if (request.alpha && !(*request.alpha >= 0.0)) throw bad_input("alpha must be >= 0");
    a.alpha = request.alpha.value_or(analytics::kDefaultAlpha);

    if (m >= 2) {
        a.matrix = analytics::rank_distance_matrix(a.records, inconsistent);
        a.dendrogram = analytics::cluster_inconsistent(*a.matrix);
        a.k_max = std::min(kElbowMax, m);
        a.recommended_k = analytics::recommend_cluster_count(*a.dendrogram, *a.matrix, a.k_max);
    } else {
        a.recommended_k = m;
        a.k_max = m;
    }
    a.k = request.k.value_or(std::min(analytics::kDefaultClusterCount, m));

    const auto consistent = a.consistent_ids();
    if (m >= 2 && consistent.size() >= 2) {
        a.projection = analytics::ccpca_project(a.records, inconsistent, consistent, a.alpha);
        a.recommended_alpha = analytics::recommend_alpha(a.records, inconsistent, consistent);
    } else {
        RecordIds all(n);
        std::iota(all.begin(), all.end(), 0);
        a.projection = analytics::pca_project(a.records, all);
        a.warnings.push_back("too few inconsistent or consistent records for ccPCA; showing plain PCA");
    }

    if (m == 0) {
        a.overview.density = analytics::density_grid(a.projection.points, analytics::bounds_of(a.projection.points),
                                                     request.grid);
    } else if (m == 1) {
        a.overview = analytics::summarize_clusters(analytics::Dendrogram{1, {}}, 1, inconsistent, a.labels,
                                                   a.comparison.federated, a.projection, request.grid);
    } else {
        a.overview = analytics::summarize_clusters(*a.dendrogram, a.k, inconsistent, a.labels, a.comparison.federated,
                                                   a.projection, request.grid);
    }
    return a;
}

}  // namespace hetlab::api
