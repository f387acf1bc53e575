#pragma once

#include "hetlab/api/analysis.hpp"
#include "hetlab/api/scenario.hpp"
#include "hetlab/error.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace hetlab::api {

struct ApiRequest {
    std::string method = "GET";
    std::string path;  // including the /v1 prefix
    std::map<std::string, std::string> query;
    std::string body;
    std::map<std::string, std::string> files;  // multipart parts by field name
};

struct ApiResponse {
    int status = 200;
    std::string body;
};

int http_status(ErrorCode code);
ApiResponse error_response(ErrorCode code, const std::string& message);

struct ServiceOptions {
    std::filesystem::path data_dir;
    std::uint64_t seed = 0;
    bool persist_session = true;
    bool background = true;  // false: POST /runs trains before returning
    std::size_t cache_limit = 32;
};

// Transport-free implementation of the /v1 API. Every method is safe to call
// from several threads; writes to the store go through one lock.
class ApiService {
public:
    explicit ApiService(ServiceOptions options);
    ~ApiService();
    ApiService(const ApiService&) = delete;
    ApiService& operator=(const ApiService&) = delete;

    ApiResponse handle(const ApiRequest& request);

    json health() const;
    json list_datasets();
    json upload_dataset(std::string_view csv, std::string_view manifest);
    json submit_run(const json& scenario);
    json run_status(const std::string& id);
    json list_runs();
    json metrics(const std::string& run);
    json param_projection(const std::string& run, std::optional<int> from, std::optional<int> to,
                          const std::string& layer);
    // Serialized bytes; repeated identical requests return the cached string.
    std::string analyze(const std::string& run, int round, const json& body);
    json cluster_dimensions(std::size_t cid, const std::string& entrance, std::optional<std::size_t> channel,
                            const std::string& layer);
    json distribution(std::optional<std::size_t> cid, std::size_t dim, std::size_t bins, const std::string& scale);
    json label_matrix(std::optional<std::size_t> grid, std::optional<std::size_t> cid);
    json record(std::size_t rid);
    json create_annotation(const json& body);
    json list_annotations();
    void delete_annotation(int id);
    json track(int id, std::optional<int> round);
    json combine(const std::vector<int>& ids, std::optional<std::size_t> cid, const std::string& mode);
    json session_state();

    // Blocks until the training queue is empty and idle.
    void wait_idle();

    // The selected analysis, restored from the session file when needed.
    std::shared_ptr<const Analysis> current();

private:
    struct Status {
        std::string state = "queued";
        int round = 0;
        int total = 0;
        std::string error;
    };
    struct Cached {
        std::shared_ptr<const Analysis> analysis;
        std::string bytes;
    };

    std::shared_ptr<const RunContext> context(const std::string& run);
    void worker_loop();
    void set_status(const std::string& id, Status status);

    ServiceOptions options_;
    session::Store store_;

    std::mutex mutex_;  // store writes, caches, session and annotations
    std::map<std::string, std::shared_ptr<const RunContext>> contexts_;
    std::map<std::string, Cached> cache_;
    std::deque<std::string> cache_order_;
    std::shared_ptr<const Analysis> current_;
    session::SessionState session_;
    session::AnnotationBook annotations_;

    std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<RunPlan> queue_;
    std::map<std::string, Status> statuses_;
    bool busy_ = false;
    bool stopping_ = false;
    std::thread worker_;
};

}  // namespace hetlab::api
