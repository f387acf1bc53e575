#pragma once

#include "hetlab/fl/federation.hpp"
#include "hetlab/session/store.hpp"

#include <filesystem>
#include <functional>
#include <string>

namespace hetlab::api {

using session::json;

// Gaussian blobs around per-class prototypes drawn from `prototype_seed`;
// clients sharing that seed share the class structure.
struct BlobSpec {
    std::vector<int> shape{8, 8, 1};
    int classes = 4;
    int records = 1000;
    double noise = 0.15;
    double lo = 0.0;
    double hi = 1.0;
    std::uint64_t prototype_seed = 1;
    std::uint64_t seed = 1;
};

fl::Dataset make_blobs(const BlobSpec& spec);

// Heterogeneity injections applied to one client's data before training.
struct LabelFlip {
    int from = 0;
    int to = 1;
    double fraction = 1.0;
    std::size_t client = 0;
    std::optional<std::pair<int, int>> phase_rounds;  // inclusive; absent means every round
};
struct ClassDrop {
    int label = 0;
    std::size_t client = 0;
};
struct Imbalance {
    int label = 0;
    std::size_t client = 0;
    double keep_fraction = 1.0;
};

// A fully resolved run: stored clients reference datasets already in the store.
struct RunPlan {
    fl::ModelSpec spec;
    std::vector<session::StoredClient> clients;
    std::size_t analyzed_client = 0;
    int rounds = 1;
    int standalone_epochs = 0;
    json request = json::object();  // the originating document, kept in the run file

    // Content-derived id: identical plans give identical ids.
    std::string run_id() const;
};

// Dataset references in a scenario are resolved relative to `base_dir`
// ({"csv": path, "manifest": path}), by stored id ({"dataset": id}), or
// generated ({"synthetic": {...}}). File references are refused when
// `allow_files` is false (the HTTP entry point).
RunPlan plan_run(const json& scenario, session::Store& store, const std::filesystem::path& base_dir,
                 bool allow_files);

// Trains the federation and the stand-alone model; execute_run also persists the run.
using ProgressCallback = std::function<void(int round, int total)>;
session::RunRecord train_run(const RunPlan& plan, const session::Store& store, const ProgressCallback& progress = {});
session::RunRecord execute_run(const RunPlan& plan, session::Store& store, const ProgressCallback& progress = {});

// Round metrics as CSV: round,train_loss,test_acc,total_acc
std::string metrics_csv(const session::RunRecord& run);

}  // namespace hetlab::api
