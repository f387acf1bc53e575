#include "hetlab/api/service.hpp"

#include "hetlab/analytics/grad_cam.hpp"
#include "hetlab/analytics/param_projection.hpp"
#include "hetlab/api/json_views.hpp"
#include "hetlab/error.hpp"
#include "hetlab/session/codec.hpp"
#include "hetlab/session/tracking.hpp"

#include <charconv>
#include <iostream>
#include <sstream>

namespace hetlab::api {

namespace {

json dataset_info_json(const session::DatasetInfo& info) {
    return {{"id", info.id},
            {"checksum", info.checksum},
            {"records", info.records},
            {"dims", info.dims},
            {"labeled", info.labeled}};
}

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        if (path[i] == '/') {
            ++i;
            continue;
        }
        auto j = path.find('/', i);
        if (j == std::string_view::npos) j = path.size();
        out.emplace_back(path.substr(i, j - i));
        i = j;
    }
    return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) throw bad_input(what + ": not a valid number '" + text + "'");
    return value;
}

template <typename T>
std::optional<T> query_number(const ApiRequest& r, const std::string& key) {
    auto it = r.query.find(key);
    if (it == r.query.end() || it->second.empty()) return std::nullopt;
    return parse_number<T>(it->second, key);
}

std::string query_string(const ApiRequest& r, const std::string& key, const std::string& fallback) {
    auto it = r.query.find(key);
    return it == r.query.end() || it->second.empty() ? fallback : it->second;
}

const json* member(const json& body, std::initializer_list<const char*> names) {
    for (const char* n : names)
        if (body.contains(n) && !body.at(n).is_null()) return &body.at(n);
    return nullptr;
}

json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    auto j = session::parse_document(body, "request body");
    if (!j.is_object()) throw bad_input("request body: expected a JSON object");
    return j;
}

}  // namespace

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::BadInput: return 400;
        case ErrorCode::NotFound: return 404;
        case ErrorCode::UnsupportedArchitecture: return 422;
        case ErrorCode::Numeric:
        case ErrorCode::Internal: return 500;
    }
    return 500;
}

ApiResponse error_response(ErrorCode code, const std::string& message) {
    json body = {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
    return {http_status(code), session::dump(body)};
}

ApiService::ApiService(ServiceOptions options) : options_(std::move(options)), store_(options_.data_dir) {
    session_ = store_.load_session();
    annotations_ = store_.load_annotations();
    if (options_.background) worker_ = std::thread([this] { worker_loop(); });
}

ApiService::~ApiService() {
    {
        std::lock_guard lock(queue_mutex_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

void ApiService::set_status(const std::string& id, Status status) {
    std::lock_guard lock(queue_mutex_);
    statuses_[id] = std::move(status);
}

void ApiService::worker_loop() {
    for (;;) {
        RunPlan plan;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) return;
            plan = std::move(queue_.front());
            queue_.pop_front();
            busy_ = true;
        }
        const auto id = plan.run_id();
        set_status(id, {"running", 0, plan.rounds, ""});
        try {
            auto run = train_run(plan, store_, [&](int r, int total) { set_status(id, {"running", r, total, ""}); });
            {
                std::lock_guard lock(mutex_);
                store_.save_run(run);
            }
            set_status(id, {"done", plan.rounds, plan.rounds, ""});
        } catch (const std::exception& e) {
            set_status(id, {"failed", 0, plan.rounds, e.what()});
        }
        {
            std::lock_guard lock(queue_mutex_);
            busy_ = false;
        }
        queue_cv_.notify_all();
    }
}

void ApiService::wait_idle() {
    std::unique_lock lock(queue_mutex_);
    queue_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

json ApiService::health() const {
    return {{"status", "ok"}, {"api", "v1"}, {"data_dir", options_.data_dir.string()}};
}

json ApiService::list_datasets() {
    std::lock_guard lock(mutex_);
    json out = json::array();
    for (const auto& id : store_.list_datasets()) out.push_back(dataset_info_json(store_.dataset_info(id)));
    return {{"datasets", out}};
}

json ApiService::upload_dataset(std::string_view csv, std::string_view manifest_text) {
    auto manifest = fl::manifest_from_json(session::parse_document(manifest_text, "manifest"));
    std::lock_guard lock(mutex_);
    return dataset_info_json(store_.put_dataset_csv(csv, manifest));
}

json ApiService::submit_run(const json& scenario) {
    RunPlan plan;
    {
        std::lock_guard lock(mutex_);
        plan = plan_run(scenario, store_, options_.data_dir, false);
    }
    const auto id = plan.run_id();
    bool exists;
    {
        std::lock_guard lock(mutex_);
        exists = store_.has_run(id);
    }
    if (!exists) {
        std::unique_lock lock(queue_mutex_);
        auto it = statuses_.find(id);
        const bool pending = it != statuses_.end() && it->second.state != "failed";
        if (!pending) {
            statuses_[id] = {"queued", 0, plan.rounds, ""};
            if (options_.background) {
                queue_.push_back(std::move(plan));
                lock.unlock();
                queue_cv_.notify_all();
            } else {
                lock.unlock();
                try {
                    auto run = train_run(plan, store_);
                    {
                        std::lock_guard write(mutex_);
                        store_.save_run(run);
                    }
                    set_status(id, {"done", run.rounds, run.rounds, ""});
                } catch (const std::exception& e) {
                    set_status(id, {"failed", 0, plan.rounds, e.what()});
                    throw;
                }
            }
        }
    }
    return run_status(id);
}

json ApiService::run_status(const std::string& id) {
    Status s;
    bool known = false;
    {
        std::lock_guard lock(queue_mutex_);
        auto it = statuses_.find(id);
        if (it != statuses_.end()) {
            s = it->second;
            known = true;
        }
    }
    if (!known) {
        std::lock_guard lock(mutex_);
        if (!store_.has_run(id)) throw not_found("run '" + id + "' does not exist");
        const auto run = store_.load_run(id);
        s = {"done", run.rounds, run.rounds, ""};
    }
    std::string label = s.state;
    if (s.state == "running") label = "round " + std::to_string(s.round) + "/" + std::to_string(s.total);
    json out = {{"id", id}, {"state", s.state}, {"status", label}, {"round", s.round}, {"rounds", s.total}};
    out["error"] = s.error.empty() ? json(nullptr) : json(s.error);
    return out;
}

json ApiService::list_runs() {
    std::vector<std::string> ids;
    {
        std::lock_guard lock(mutex_);
        ids = store_.list_runs();
    }
    {
        std::lock_guard lock(queue_mutex_);
        for (const auto& [id, s] : statuses_)
            if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    json out = json::array();
    for (const auto& id : ids) out.push_back(run_status(id));
    return {{"runs", out}};
}

std::shared_ptr<const RunContext> ApiService::context(const std::string& run) {
    {
        std::lock_guard lock(mutex_);
        auto it = contexts_.find(run);
        if (it != contexts_.end()) return it->second;
    }
    auto ctx = load_context(store_, run);
    std::lock_guard lock(mutex_);
    return contexts_.emplace(run, ctx).first->second;
}

json ApiService::metrics(const std::string& run) { return metrics_json(context(run)->run); }

json ApiService::param_projection(const std::string& run, std::optional<int> from, std::optional<int> to,
                                  const std::string& layer) {
    auto ctx = context(run);
    analytics::RandomizedOptions opt;
    opt.seed = options_.seed;
    auto t = analytics::project_parameters(ctx->run.snapshots, from.value_or(1), to.value_or(ctx->run.rounds), layer,
                                           opt);
    return trajectory_json(t);
}

std::string ApiService::analyze(const std::string& run, int round, const json& body) {
    AnalysisRequest req;
    req.round = round;
    req.seed = options_.seed;
    session::Reader r(body, "");
    if (auto* v = member(body, {"input_source", "input-source", "source"})) {
        if (!v->is_string()) throw bad_input("/input_source: expected a string");
        req.source = parse_input_source(v->get<std::string>());
    }
    if (auto* v = member(body, {"k"})) {
        if (!v->is_number_unsigned()) throw bad_input("/k: expected a positive integer");
        req.k = v->get<std::size_t>();
    }
    if (auto* v = member(body, {"alpha"})) {
        if (!v->is_number()) throw bad_input("/alpha: expected a number");
        req.alpha = v->get<double>();
    }
    if (auto* v = member(body, {"grid"})) {
        if (!v->is_number_unsigned()) throw bad_input("/grid: expected a positive integer");
        req.grid = v->get<std::size_t>();
    }

    std::ostringstream key;
    key << run << '|' << round << '|' << to_string(req.source) << '|' << (req.k ? std::to_string(*req.k) : "-") << '|'
        << (req.alpha ? json(*req.alpha).dump() : "-") << '|' << req.grid;

    auto ctx = context(run);
    std::shared_ptr<const Analysis> analysis;
    std::string bytes;
    {
        std::lock_guard lock(mutex_);
        auto it = cache_.find(key.str());
        if (it != cache_.end()) {
            analysis = it->second.analysis;
            bytes = it->second.bytes;
        }
    }
    if (!analysis) {
        analysis = std::make_shared<const Analysis>(api::analyze(*ctx, req));
        json out = analysis_json(*analysis);
        require_finite(out);
        bytes = session::dump(out);
    }

    std::lock_guard lock(mutex_);
    if (!cache_.count(key.str())) {
        cache_[key.str()] = {analysis, bytes};
        cache_order_.push_back(key.str());
        while (cache_order_.size() > options_.cache_limit) {
            cache_.erase(cache_order_.front());
            cache_order_.pop_front();
        }
    }
    current_ = analysis;
    const auto& dataset_id = ctx->run.analyzed().dataset_id;
    session_.run_id = run;
    session_.dataset_id = dataset_id;
    session_.dataset_checksum = store_.dataset_info(dataset_id).checksum;
    session_.selected_round = round;
    session_.k = req.k;
    session_.alpha = analysis->alpha;
    session_.input_source = std::string(to_string(req.source));
    if (options_.persist_session) store_.save_session(session_);
    return bytes;
}

std::shared_ptr<const Analysis> ApiService::current() {
    session::SessionState s;
    {
        std::lock_guard lock(mutex_);
        if (current_) return current_;
        s = session_;
    }
    if (!s.run_id || !s.selected_round)
        throw not_found("no analysis has been run; POST /v1/runs/{id}/rounds/{i}/analyze first");
    // Restore the persisted selection.
    json body = {{"input_source", s.input_source}, {"alpha", s.alpha}};
    if (s.k) body["k"] = *s.k;
    analyze(*s.run_id, *s.selected_round, body);
    std::lock_guard lock(mutex_);
    return current_;
}

json ApiService::cluster_dimensions(std::size_t cid, const std::string& entrance, std::optional<std::size_t> channel,
                                    const std::string& layer) {
    auto a = current();
    const auto& members = a->cluster(cid);
    if (entrance == "gradcam") {
        auto ctx = context(a->run_id);
        auto pair = analytics::grad_cam_pair(ctx->net, ctx->run.standalone,
                                             ctx->run.snapshot(a->request.round).federated, a->records, members,
                                             layer);
        return {{"entrance", "gradcam"},
                {"cluster", cid},
                {"layer", pair.layer},
                {"standalone", matrix_json(pair.standalone)},
                {"federated", matrix_json(pair.federated)}};
    }
    if (entrance != "ccpca") throw bad_input("entrance must be ccpca or gradcam, got '" + entrance + "'");
    if (members.size() < 2) throw bad_input("cluster " + std::to_string(cid) + " has a single member; ccPCA needs two");
    const auto background = a->consistent_ids();
    if (background.size() < 2) throw bad_input("ccPCA needs at least two consistent records as background");
    auto proj = analytics::ccpca_project(a->records, members, background, a->alpha);
    auto w = analytics::dimension_weights(proj);
    std::vector<double> first(w.first.data(), w.first.data() + w.first.size());
    std::vector<double> second(w.second.data(), w.second.data() + w.second.size());
    json out = {{"entrance", "ccpca"},
                {"cluster", cid},
                {"alpha", a->alpha},
                {"shape", a->manifest.shape},
                {"first", first},
                {"second", second}};
    if (a->manifest.is_image()) {
        const int h = a->manifest.shape[0], wd = a->manifest.shape[1], c = a->manifest.shape[2];
        const std::size_t ch = channel.value_or(0);
        if (ch >= static_cast<std::size_t>(c))
            throw bad_input("channel " + std::to_string(ch) + " out of range for " + std::to_string(c) + " channels");
        auto plane = [&](const Eigen::VectorXd& v) {
            json rows = json::array();
            for (int y = 0; y < h; ++y) {
                json row = json::array();
                for (int x = 0; x < wd; ++x) row.push_back(v((static_cast<Eigen::Index>(y) * wd + x) * c + ch));
                rows.push_back(row);
            }
            return rows;
        };
        out["channel"] = ch;
        out["maps"] = {{"first", plane(w.first)}, {"second", plane(w.second)}};
    } else if (channel) {
        throw bad_input("channel selection applies to image records only");
    }
    return out;
}

json ApiService::distribution(std::optional<std::size_t> cid, std::size_t dim, std::size_t bins,
                              const std::string& scale) {
    auto a = current();
    if (dim >= a->manifest.ranges.size())
        throw bad_input("dimension " + std::to_string(dim) + " out of range for " +
                        std::to_string(a->manifest.ranges.size()) + " dimensions");
    analytics::AxisScale s;
    if (scale == "linear") s = analytics::AxisScale::Linear;
    else if (scale == "log") s = analytics::AxisScale::Log;
    else throw bad_input("scale must be linear or log, got '" + scale + "'");
    const RecordIds* members = cid ? &a->cluster(*cid) : nullptr;
    return distribution_json(analytics::dimension_distribution(a->records, a->manifest.ranges[dim], a->report().ids,
                                                               members, dim, bins, s));
}

json ApiService::label_matrix(std::optional<std::size_t> grid, std::optional<std::size_t> cid) {
    auto a = current();
    if (!a->labels)
        throw bad_input("the label matrix needs ground-truth labels; the current analysis has none (source " +
                        std::string(to_string(a->request.source)) + ")");
    const std::size_t g = grid.value_or(a->request.grid);
    if (g < 1 || g > 512) throw bad_input("grid size must be in [1, 512]");
    RecordIds members;
    if (cid) members = a->cluster(*cid);
    return label_matrix_json(analytics::label_matrix(*a->labels, a->comparison.federated, a->projection, members, g));
}

json ApiService::record(std::size_t rid) {
    auto a = current();
    if (rid >= static_cast<std::size_t>(a->records.rows()))
        throw not_found("record " + std::to_string(rid) + " does not exist");
    std::vector<double> values(a->records.cols());
    for (Eigen::Index c = 0; c < a->records.cols(); ++c) values[c] = a->records(rid, c);
    const auto& inc = a->report().ids;
    return {{"id", rid},
            {"values", values},
            {"label", a->labels ? json((*a->labels)[rid]) : json(nullptr)},
            {"standalone_label", a->comparison.standalone[rid]},
            {"federated_label", a->comparison.federated[rid]},
            {"inconsistent", std::binary_search(inc.begin(), inc.end(), rid)},
            {"point", {a->projection.points(rid, 0), a->projection.points(rid, 1)}}};
}

json ApiService::create_annotation(const json& body) {
    std::optional<std::size_t> cid;
    if (auto* v = member(body, {"cluster", "source_cluster"})) {
        if (!v->is_number_unsigned()) throw bad_input("/cluster: expected a cluster id");
        cid = v->get<std::size_t>();
    }
    RecordIds ids;
    if (auto* v = member(body, {"record_ids"})) {
        session::Reader r(*v, "/record_ids");
        for (std::size_t i = 0; i < r.size(); ++i) ids.push_back(r.at(i).unsigned_integer());
    }
    std::shared_ptr<const Analysis> a;
    if (cid || !member(body, {"round"})) a = current();
    if (cid) {
        if (a->request.source != InputSource::Local)
            throw bad_input("annotations refer to local records; the current analysis uses generated inputs");
        if (!member(body, {"record_ids"})) ids = a->cluster(*cid);
    }
    int round = 0;
    if (auto* v = member(body, {"round"})) {
        if (!v->is_number_integer()) throw bad_input("/round: expected an integer");
        round = v->get<int>();
    } else {
        round = a->request.round;
    }
    std::string note;
    if (auto* v = member(body, {"note"})) {
        if (!v->is_string()) throw bad_input("/note: expected a string");
        note = v->get<std::string>();
    }
    std::string run;
    {
        std::lock_guard lock(mutex_);
        if (!session_.run_id) throw bad_input("no run is selected in the session");
        run = *session_.run_id;
    }
    auto ctx = context(run);
    if (round > ctx->run.rounds) throw bad_input("round " + std::to_string(round) + " exceeds the run's rounds");
    std::lock_guard lock(mutex_);
    const auto& created = annotations_.annotate(std::move(ids), std::move(note), round, cid, ctx->local.size());
    json out = annotation_json(created);
    store_.save_annotations(annotations_);
    return out;
}

json ApiService::list_annotations() {
    std::lock_guard lock(mutex_);
    json out = json::array();
    for (const auto& a : annotations_.annotations) out.push_back(annotation_json(a));
    return {{"annotations", out}};
}

void ApiService::delete_annotation(int id) {
    std::lock_guard lock(mutex_);
    annotations_.remove(id);
    store_.save_annotations(annotations_);
}

json ApiService::track(int id, std::optional<int> round) {
    session::Annotation ann;
    std::string run;
    int r;
    {
        std::lock_guard lock(mutex_);
        ann = annotations_.find(id);
        if (!session_.run_id) throw bad_input("no run is selected in the session");
        run = *session_.run_id;
        r = round.value_or(session_.selected_round.value_or(ann.round));
    }
    auto ctx = context(run);
    auto result = session::track(ann, r, ctx->net, ctx->run.standalone, ctx->run.snapshot(r).federated,
                                 ctx->local.records);
    return track_json(result);
}

json ApiService::combine(const std::vector<int>& ids, std::optional<std::size_t> cid, const std::string& mode) {
    const auto m = session::parse_combine_mode(mode);
    std::vector<RecordIds> operands;
    {
        std::lock_guard lock(mutex_);
        for (int id : ids) operands.push_back(annotations_.find(id).record_ids);
    }
    if (cid) {
        auto a = current();
        if (a->request.source != InputSource::Local)
            throw bad_input("annotations refer to local records; the current analysis uses generated inputs");
        operands.push_back(a->cluster(*cid));
    }
    if (operands.empty()) throw bad_input("combine needs at least one annotation or cluster");
    auto out = session::set_combine(operands, m);
    return {{"mode", mode}, {"annotations", ids}, {"cluster", cid ? json(*cid) : json(nullptr)},
            {"record_ids", out}, {"count", out.size()}};
}

json ApiService::session_state() {
    std::lock_guard lock(mutex_);
    auto out = session::session_to_json(session_);
    out["analysis_loaded"] = static_cast<bool>(current_);
    return out;
}

ApiResponse ApiService::handle(const ApiRequest& req) {
    try {
        auto seg = split_path(req.path);
        if (seg.empty() || seg[0] != "v1") throw not_found("unknown path " + req.path + " (the API lives under /v1)");
        seg.erase(seg.begin());
        const auto& method = req.method;
        const std::size_t n = seg.size();
        auto is = [&](std::initializer_list<const char*> parts) {
            if (parts.size() != n) return false;
            std::size_t i = 0;
            for (const char* p : parts) {
                if (*p != '*' && seg[i] != p) return false;
                ++i;
            }
            return true;
        };
        auto index = [&](std::size_t i, const char* what) { return parse_number<std::size_t>(seg[i], what); };

        std::optional<json> out;
        if (method == "GET" && is({"health"})) out = health();
        else if (method == "GET" && is({"session"})) out = session_state();
        else if (method == "GET" && is({"datasets"})) out = list_datasets();
        else if (method == "POST" && is({"datasets"})) {
            auto csv = req.files.find("csv");
            auto manifest = req.files.find("manifest");
            if (csv != req.files.end() && manifest != req.files.end()) {
                out = upload_dataset(csv->second, manifest->second);
            } else {
                auto body = parse_body(req.body);
                session::Reader r(body, "");
                out = upload_dataset(r.str("csv"), r.at("manifest").object().dump());
            }
        } else if (method == "GET" && is({"runs"})) out = list_runs();
        else if (method == "POST" && is({"runs"})) out = submit_run(parse_body(req.body));
        else if (method == "GET" && is({"runs", "*", "status"})) out = run_status(seg[1]);
        else if (method == "GET" && is({"runs", "*", "metrics"})) out = metrics(seg[1]);
        else if (method == "GET" && is({"runs", "*", "param-projection"}))
            out = param_projection(seg[1], query_number<int>(req, "from"), query_number<int>(req, "to"),
                                   query_string(req, "layer", "all"));
        else if (method == "POST" && is({"runs", "*", "rounds", "*", "analyze"})) {
            const auto bytes = analyze(seg[1], parse_number<int>(seg[3], "round"), parse_body(req.body));
            return {200, bytes};
        } else if (method == "GET" && is({"analysis"})) {
            auto a = current();
            json j = analysis_json(*a);
            out = j;
        } else if (method == "GET" && is({"analysis", "cluster", "*", "dimensions"}))
            out = cluster_dimensions(index(2, "cluster"), query_string(req, "entrance", "ccpca"),
                                     query_number<std::size_t>(req, "channel"), query_string(req, "layer", ""));
        else if (method == "GET" && is({"analysis", "cluster", "*", "distribution"}))
            out = distribution(index(2, "cluster"), query_number<std::size_t>(req, "dim").value_or(0),
                               query_number<std::size_t>(req, "bins").value_or(20),
                               query_string(req, "scale", "linear"));
        else if (method == "GET" && is({"analysis", "distribution"}))
            out = distribution(std::nullopt, query_number<std::size_t>(req, "dim").value_or(0),
                               query_number<std::size_t>(req, "bins").value_or(20),
                               query_string(req, "scale", "linear"));
        else if (method == "GET" && is({"analysis", "label-matrix"}))
            out = label_matrix(query_number<std::size_t>(req, "grid"), query_number<std::size_t>(req, "cluster"));
        else if (method == "GET" && is({"analysis", "records", "*"})) out = record(index(2, "record"));
        else if (method == "GET" && is({"annotations"})) out = list_annotations();
        else if (method == "POST" && is({"annotations"})) out = create_annotation(parse_body(req.body));
        else if (method == "GET" && is({"annotations", "combine"})) {
            std::vector<int> ids;
            std::string list = query_string(req, "ids", "");
            std::size_t i = 0;
            while (i < list.size()) {
                auto j = list.find(',', i);
                if (j == std::string::npos) j = list.size();
                ids.push_back(parse_number<int>(list.substr(i, j - i), "ids"));
                i = j + 1;
            }
            out = combine(ids, query_number<std::size_t>(req, "cluster"), query_string(req, "mode", "intersection"));
        } else if (method == "DELETE" && is({"annotations", "*"})) {
            const int id = parse_number<int>(seg[1], "annotation");
            delete_annotation(id);
            out = json{{"deleted", id}};
        } else if (method == "GET" && is({"annotations", "*", "track"}))
            out = track(parse_number<int>(seg[1], "annotation"), query_number<int>(req, "round"));
        else
            throw not_found("no route for " + method + " " + req.path);

        require_finite(*out);
        return {200, session::dump(*out)};
    } catch (const Error& e) {
        return error_response(e.code(), e.what());
    } catch (const std::exception& e) {
        return error_response(ErrorCode::Internal, e.what());
    }
}

}  // namespace hetlab::api
