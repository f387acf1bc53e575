#include "hetlab/cli/commands.hpp"

#include "hetlab/analytics/clustering.hpp"
#include "hetlab/analytics/param_projection.hpp"
#include "hetlab/api/json_views.hpp"
#include "hetlab/api/scenario.hpp"
#include "hetlab/api/service.hpp"
#include "hetlab/oracle/oracle.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hetlab::cli {

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadInput:
        case ErrorCode::NotFound:
        case ErrorCode::UnsupportedArchitecture: return 2;
        case ErrorCode::Numeric: return 3;
        case ErrorCode::Internal: return 1;
    }
    return 1;
}

namespace {

std::string round_name(int round) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "round_%03d", round);
    return buf;
}

json parse_bytes(const std::string& bytes) { return session::parse_document(bytes, "response"); }

api::ServiceOptions offline(const fs::path& dir, std::uint64_t seed) {
    api::ServiceOptions o;
    o.data_dir = dir;
    o.seed = seed;
    o.persist_session = false;
    o.background = false;
    return o;
}

json analyze_body(const AnalyzeOptions& o) {
    json body = {{"input_source", o.source}, {"grid", o.grid}};
    if (o.k) body["k"] = *o.k;
    if (o.alpha) body["alpha"] = *o.alpha;
    return body;
}

}  // namespace

json run_scenario(const fs::path& scenario, const fs::path& out) {
    const auto doc = session::parse_document(session::read_file(scenario), scenario.string());
    session::Store store(out);
    auto plan = api::plan_run(doc, store, scenario.parent_path(), true);
    auto run = api::execute_run(plan, store);
    session::atomic_write(out / "metrics.csv", api::metrics_csv(run));
    for (const auto& s : run.snapshots)
        session::atomic_write(out / "snapshots" / (round_name(s.round) + ".json"),
                              session::dump(session::snapshot_to_json(s)));
    const auto& last = run.snapshots.back().metrics;
    return {{"run", run.id},
            {"rounds", run.rounds},
            {"out", out.string()},
            {"final", session::metrics_to_json(last)}};
}

std::string resolve_run(const session::Store& store, const std::optional<std::string>& run) {
    if (run) return *run;
    const auto runs = store.list_runs();
    if (runs.size() == 1) return runs.front();
    if (runs.empty()) throw not_found("no runs in " + store.root().string());
    std::string list;
    for (const auto& r : runs) list += (list.empty() ? "" : ", ") + r;
    throw bad_input("several runs in " + store.root().string() + " (" + list + "); choose one with --run");
}

json analyze_run(const fs::path& dir, const AnalyzeOptions& options) {
    api::ApiService service(offline(dir, options.seed));
    session::Store store(dir);
    const auto run = resolve_run(store, options.run);
    const int round = options.round.value_or(store.load_run(run).rounds);
    auto out = parse_bytes(service.analyze(run, round, analyze_body(options)));
    auto a = service.current();
    if (a->labels) out["label_matrix"] = service.label_matrix(std::nullopt, std::nullopt);
    json rank = nullptr;
    if (a->matrix) {
        const auto& mtx = *a->matrix;
        json rows = json::array();
        for (std::size_t j = 0; j < mtx.size(); ++j) {
            json row = json::array();
            for (std::size_t k = 0; k < mtx.size(); ++k) row.push_back(mtx.at(j, k));
            rows.push_back(row);
        }
        rank = {{"ids", mtx.ids}, {"context_size", mtx.context_size}, {"values", rows}};
    }
    out["rank_matrix"] = rank;
    return out;
}

json export_fixtures(const fs::path& dir, const fs::path& out, const AnalyzeOptions& options) {
    api::ApiService service(offline(dir, options.seed));
    session::Store store(dir);
    const auto run_id = resolve_run(store, options.run);
    const auto run = store.load_run(run_id);
    const int round = options.round.value_or(run.rounds);

    json index = json::array();
    auto emit = [&](const std::string& name, const std::string& method, const std::string& path,
                    std::map<std::string, std::string> query = {}, std::string body = {}) {
        api::ApiRequest req;
        req.method = method;
        req.path = path;
        req.query = std::move(query);
        req.body = std::move(body);
        auto res = service.handle(req);
        session::atomic_write(out / (name + ".json"), res.body);
        json q = json::object();
        for (const auto& [k, v] : req.query) q[k] = v;
        index.push_back({{"file", name + ".json"}, {"method", method}, {"path", path}, {"query", q},
                         {"status", res.status}});
        return res;
    };

    const std::string base = "/v1/runs/" + run_id;
    emit("runs", "GET", "/v1/runs");
    emit("metrics", "GET", base + "/metrics");
    session::atomic_write(out / "metrics.csv", api::metrics_csv(run));
    emit("param_projection", "GET", base + "/param-projection");
    const auto analysis = emit("analyze_" + round_name(round), "POST",
                               base + "/rounds/" + std::to_string(round) + "/analyze",
                               {}, analyze_body(options).dump());
    if (analysis.status == 200) {
        auto a = service.current();
        if (a->labels) emit("label_matrix", "GET", "/v1/analysis/label-matrix");
        if (!a->overview.clusters.empty()) {
            const auto cid = std::to_string(a->overview.clusters.front().id);
            const std::string cbase = "/v1/analysis/cluster/" + cid;
            if (a->labels) emit("label_matrix_cluster_" + cid, "GET", "/v1/analysis/label-matrix", {{"cluster", cid}});
            emit("cluster_" + cid + "_dimensions_ccpca", "GET", cbase + "/dimensions", {{"entrance", "ccpca"}});
            emit("cluster_" + cid + "_dimensions_gradcam", "GET", cbase + "/dimensions", {{"entrance", "gradcam"}});
            emit("cluster_" + cid + "_distribution_dim0", "GET", cbase + "/distribution", {{"dim", "0"}});
        }
        if (a->m() > 0)
            emit("record_" + std::to_string(a->report().ids.front()), "GET",
                 "/v1/analysis/records/" + std::to_string(a->report().ids.front()));
    }
    session::atomic_write(out / "index.json", session::dump(index));
    return index;
}

RecordMatrix read_numeric_csv(const fs::path& path) {
    std::istringstream in(session::read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream cells(line);
        std::string cell;
        bool header = false;
        std::size_t col = 0;
        while (std::getline(cells, cell, ',')) {
            ++col;
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cell.size()) {
                if (rows.empty() && line_no == 1) {
                    header = true;
                    break;
                }
                throw bad_input(path.string() + ": row " + std::to_string(line_no) + ", column " + std::to_string(col) +
                                ": not a number");
            }
            row.push_back(v);
        }
        if (header) continue;
        if (!rows.empty() && row.size() != rows.front().size())
            throw bad_input(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                            " columns, expected " + std::to_string(rows.front().size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw bad_input(path.string() + ": no records");
    RecordMatrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

RecordIds parse_ids(const std::string& list, std::size_t n) {
    RecordIds ids;
    if (list.empty()) {
        for (std::size_t i = 0; i < n; ++i) ids.push_back(i);
        return ids;
    }
    std::stringstream in(list);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw bad_input("--ids: '" + item + "' is not a record index");
        if (v >= n) throw bad_input("--ids: record " + item + " out of range for " + std::to_string(n) + " records");
        ids.push_back(v);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw bad_input("--ids: duplicate record index");
    return ids;
}

namespace {

json square(const std::vector<std::int64_t>& values, std::size_t m) {
    json rows = json::array();
    for (std::size_t j = 0; j < m; ++j) {
        json row = json::array();
        for (std::size_t k = 0; k < m; ++k) row.push_back(values[j * m + k]);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

json oracle_rank_matrix(const RecordMatrix& records, const RecordIds& ids, bool check) {
    const auto values = oracle::rank_distance_matrix(records, ids);
    json out = {{"ids", ids}, {"context_size", records.rows()}, {"values", square(values, ids.size())}};
    if (check) {
        if (ids.size() < 2) throw bad_input("--check needs at least two ids");
        const auto lib = analytics::rank_distance_matrix(records, ids);
        const bool match = lib.values == values;
        out["check"] = {{"match", match}};
        if (!match) throw numeric_error("rank distance matrix differs from the library result");
    }
    return out;
}

json oracle_dendrogram(const RecordMatrix& records, const RecordIds& ids, bool check) {
    if (ids.size() < 2) throw bad_input("a dendrogram needs at least two ids");
    const auto values = oracle::rank_distance_matrix(records, ids);
    const auto merges = oracle::naive_average_linkage(ids.size(), values);
    json list = json::array();
    for (const auto& m : merges) list.push_back({{"a", m.a}, {"b", m.b}, {"height", m.height}, {"size", m.size}});
    json out = {{"ids", ids}, {"merges", list}};
    if (check) {
        const auto lib = analytics::cluster_inconsistent(analytics::rank_distance_matrix(records, ids));
        bool match = lib.merges.size() == merges.size();
        for (std::size_t t = 0; match && t < merges.size(); ++t) {
            const auto& x = lib.merges[t];
            const auto& y = merges[t];
            match = x.a == y.a && x.b == y.b && x.size == y.size &&
                    std::abs(x.height - y.height) <= 1e-9 * std::max(1.0, std::abs(y.height));
        }
        out["check"] = {{"match", match}};
        if (!match) throw numeric_error("dendrogram differs from the library result");
    }
    return out;
}

json oracle_exact_pca(const RecordMatrix& records, std::size_t components, bool check, std::uint64_t seed) {
    if (components < 1 || components > static_cast<std::size_t>(std::min(records.rows(), records.cols())))
        throw bad_input("--components must be in [1, min(rows, columns)]");
    const Eigen::MatrixXd data = records;
    const auto basis = oracle::exact_pca_basis(data, static_cast<Eigen::Index>(components));
    json out = {{"components", components}, {"basis", api::matrix_json(basis.transpose())}};
    if (check) {
        const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
        analytics::RandomizedOptions opt;
        opt.rank = components;
        opt.seed = seed;
        const auto approx = analytics::randomized_right_basis(centered, opt);
        const auto cosines = oracle::principal_angle_cosines(basis, approx);
        const double worst = cosines.minCoeff();
        out["check"] = {{"min_principal_cosine", worst}, {"match", worst >= 0.999}};
        if (worst < 0.999) throw numeric_error("randomized basis deviates from exact PCA (cosine " +
                                               std::to_string(worst) + ")");
    }
    return out;
}

}  // namespace hetlab::cli
